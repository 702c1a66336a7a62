import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfilter import cli, states
from qfilter.config import FAMILIES, config_from_dict, emit_config, parse_config
from qfilter.errors import ConfigError

MINIMAL = {
    "state": {"family": "coherent", "alpha_re": 2.0},
    "params": {"omega": 1.0, "mu": 0.5},
    "grid": {"t_max": 1.0, "n_steps": 1000},
}


def cfg_text(**changes):
    d = json.loads(json.dumps(MINIMAL))
    for key, value in changes.items():
        d[key] = value
    return json.dumps(d)


def test_minimal_config_fills_defaults():
    cfg = parse_config(cfg_text())
    assert cfg.mode == "diffusive"
    assert cfg.seed == 0 and cfg.measure == "physical" and cfg.scheme == "exponential"
    assert cfg.params.dim == "auto"
    assert cfg.resolved_dim() == states.auto_dim(states.Coherent(2.0))
    assert cfg.tolerances["mean_n"] == 0.01


def test_rho_without_theta_names_theta():
    text = cfg_text(state={"family": "squeezed_coherent", "alpha_re": 1.0, "rho": 0.5})
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == "state.theta"
    assert "theta" in str(info.value)


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"colour": "red"}, "colour"),
        ({"state": {"family": "coherent", "alpha": 1}}, "state.alpha"),
        ({"params": {"omega": 1.0}}, "params.mu"),
        ({"grid": {"t_max": 1.0, "n_steps": 0}}, "grid.n_steps"),
        ({"params": {"omega": 1.0, "mu": -1.0}}, "params.mu"),
        ({"mode": "plot"}, "mode"),
        ({"state": {"family": "cat_odd"}}, "state.alpha_re"),
        ({"state": {"family": "coherent", "rho": 0.1, "theta": 0.0}}, "state.rho"),
        ({"tolerances": {"mean_q": 0.1}}, "tolerances.mean_q"),
        ({"seed": -1}, "seed"),
    ],
)
def test_field_level_errors(changes, field):
    with pytest.raises(ConfigError) as info:
        parse_config(cfg_text(**changes))
    assert info.value.field == field


def test_non_finite_number_rejected():
    d = json.loads(cfg_text())
    d["params"]["omega"] = math.inf
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_malformed_json():
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_missing_section_named():
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps({"state": {"family": "vacuum"}, "params": {"omega": 1, "mu": 1}}))
    assert info.value.field == "grid"


finite = st.floats(-5, 5, allow_nan=False)


@st.composite
def configs(draw):
    family = draw(st.sampled_from(FAMILIES))
    state = {"family": family}
    if family in ("coherent", "cat_even", "cat_odd", "squeezed_coherent"):
        state["alpha_re"] = draw(st.floats(0.1, 3))
        state["alpha_im"] = draw(finite)
    if family.startswith("squeezed"):
        state["rho"] = draw(st.floats(0, 1.5))
        state["theta"] = draw(finite)
    return {
        "mode": draw(st.sampled_from(["diffusive", "counting", "compare", "ensemble", "survival", "lindblad"])),
        "state": state,
        "params": {"omega": draw(finite), "mu": draw(st.floats(0, 2)), "dim": draw(st.one_of(st.just("auto"), st.integers(2, 300)))},
        "grid": {"t_max": draw(st.floats(0.01, 100)), "n_steps": draw(st.integers(1000, 10**6))},
        "seed": draw(st.integers(0, 2**63)),
        "n_trajectories": draw(st.integers(1, 10**5)),
        "record_stride": draw(st.integers(1, 1000)),
        "tolerances": {"dx": draw(st.floats(1e-9, 1.0))},
    }


@settings(max_examples=100, deadline=None)
@given(configs())
def test_emit_parse_round_trip(d):
    cfg = config_from_dict(d)
    text = emit_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert emit_config(again) == text


# -- execution -----------------------------------------------------------------


def write_config(tmp_path, **changes):
    path = tmp_path / "cfg.json"
    path.write_text(cfg_text(**changes))
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [list(map(float, ln.split(","))) for ln in lines[1:]]


def test_run_writes_series_and_metadata(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", write_config(tmp_path, record_stride=100), "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out / "series.csv")
    assert header == ["t", "meanX", "meanY", "meanN", "dX", "dY", "norm2log", "jump"]
    assert len(rows) == 11
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["dim"] == states.auto_dim(states.Coherent(2.0))
    assert meta["dim_source"] == "auto"
    assert "Philox" in meta["generator"]
    assert meta["seed"] == 0 and meta["tool_version"]
    assert parse_config((out / "config.json").read_text()) == parse_config(cfg_text(record_stride=100))


def test_csv_uses_17_significant_digits(tmp_path):
    out = tmp_path / "out"
    cli.main(["run", "--config", write_config(tmp_path, record_stride=500), "--out", str(out)])
    row = (out / "series.csv").read_text().splitlines()[2].split(",")
    assert float(row[1]) == float("%.17g" % float(row[1]))
    assert len(row[1].lstrip("-").replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_outputs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, record_stride=50)
    for name in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--seed", "5", "--out", str(tmp_path / name)]) == 0
    for f in ("series.csv", "metadata.json", "config.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path, state={"family": "cat_even", "alpha_re": 1.0}, record_stride=100)
    cli.main(["run", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    cli.main(["run", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "series.csv").read_bytes() != (tmp_path / "b" / "series.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "metadata.json").read_text())["seed"] == 2


def test_compare_coherent_benchmark_passes(tmp_path):
    grid = {"t_max": 4.0, "n_steps": 4000}
    out = tmp_path / "out"
    assert cli.main(["compare", "--config", write_config(tmp_path, grid=grid, record_stride=100), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"]
    assert all(v <= 1e-2 for v in report["max_dev"].values())
    assert (out / "oracle.csv").exists()


def test_compare_tolerance_exceedance_exits_1(tmp_path):
    cfg = write_config(tmp_path, scheme="euler", tolerances={"mean_n": 1e-9})
    assert cli.main(["compare", "--config", cfg, "--out", str(tmp_path / "out")]) == 1
    assert not json.loads((tmp_path / "out" / "report.json").read_text())["passed"]


def test_malformed_config_exits_2_without_output(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"state": {"family": "coherent"}, "params": {"omega": 1}}')
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    assert cli.main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == 2
    assert not out.exists()


def test_too_coarse_grid_exits_2_without_output(tmp_path):
    cfg = write_config(tmp_path, grid={"t_max": 1.0, "n_steps": 10})
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_explicit_dim_too_small_exits_2(tmp_path):
    cfg = write_config(tmp_path, params={"omega": 1.0, "mu": 0.5, "dim": 6})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert not (tmp_path / "out").exists()


def test_run_refuses_ensemble_mode(tmp_path):
    assert cli.main(["run", "--config", write_config(tmp_path, mode="ensemble")]) == 2


def test_output_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--config", write_config(tmp_path, record_stride=500)]) == 0
    assert (tmp_path / "env" / "series.csv").exists()


def test_counting_run_marks_jumps(tmp_path):
    cfg = write_config(
        tmp_path,
        mode="counting",
        state={"family": "coherent", "alpha_re": 1.5},
        params={"omega": 1.0, "mu": 1.0},
        grid={"t_max": 5.0, "n_steps": 2500},
        record_stride=10,
    )
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    _, rows = read_csv(out / "series.csv")
    marked = sum(r[7] for r in rows)
    meta = json.loads((out / "metadata.json").read_text())
    # a row marks every count since the previous recorded row
    rows_hit = {math.ceil(round(t / 0.002) / 10) for t in meta["jump_times"]}
    assert marked == len(rows_hit)
    assert marked >= 1


def test_survival_odd_cat(tmp_path):
    cfg = write_config(
        tmp_path,
        state={"family": "cat_odd", "alpha_re": 1.0},
        params={"omega": 1.0, "mu": 1.0},
        grid={"t_max": 4.0, "n_steps": 800},
        n_trajectories=2000,
        record_stride=100,
    )
    out = tmp_path / "out"
    assert cli.main(["survival", "--config", cfg, "--out", str(out)]) == 0
    header, rows = read_csv(out / "survival.csv")
    assert header == ["t", "P_exact", "P_mc", "P_mc_se"]
    assert rows[0][1] == 1.0
    for t, exact, mc, se in rows[1:]:
        assert abs(mc - exact) <= 4 * max(se, 1e-3)


def test_lindblad_subcommand(tmp_path):
    cfg = write_config(tmp_path, grid={"t_max": 1.0, "n_steps": 100}, record_stride=25)
    out = tmp_path / "out"
    assert cli.main(["lindblad", "--config", cfg, "--out", str(out)]) == 0
    header, rows = read_csv(out / "lindblad.csv")
    assert header == ["t", "meanX", "meanY", "meanN", "trace", "priorX", "priorY", "priorN"]
    for r in rows:
        assert abs(r[4] - 1) <= 1e-8
        assert abs(r[3] - r[7]) <= 1e-6


def test_ensemble_subcommand(tmp_path):
    cfg = write_config(tmp_path, n_trajectories=120, grid={"t_max": 0.5, "n_steps": 100}, record_stride=50)
    out = tmp_path / "out"
    assert cli.main(["ensemble", "--config", cfg, "--out", str(out)]) == 0
    header, rows = read_csv(out / "ensemble.csv")
    assert header == ["t", "meanX", "seX", "meanY", "seY", "meanN", "seN"]
    assert len(rows) == 3
