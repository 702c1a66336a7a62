"""Command-line driver.

    qfilter run      --config cfg.json [--seed N] [--out DIR]
    qfilter ensemble --config cfg.json
    qfilter compare  --config cfg.json
    qfilter survival --config cfg.json
    qfilter lindblad --config cfg.json
    qfilter selftest [--out DIR]

``run`` executes the config's ``mode`` (diffusive, counting or analytic);
the other subcommands select their mode directly. Outputs go to ``--out``,
else ``$QFILTER_OUT``, else the config's ``output``. All files are computed
in memory first, so a failed run leaves no partial output.

Exit codes: 0 success, 1 tolerance exceedance, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, analytic, fock, lindblad, noise, sde, states
from .config import RunConfig, config_to_dict, emit_config, parse_config
from .errors import ConfigError, GridError, QFilterError, TruncationError

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SERIES_COLUMNS = ("t", "meanX", "meanY", "meanN", "dX", "dY", "norm2log", "jump")
RUN_MODES = ("diffusive", "counting", "analytic")
OUT_ENV = "QFILTER_OUT"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def csv_text(columns, rows) -> str:
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in zip(*rows))
    return "\n".join(lines) + "\n"


def _series_csv(t, mx, my, mn, dx, dy, nlog, jumps) -> str:
    return csv_text(SERIES_COLUMNS, (t, mx, my, mn, dx, dy, nlog, np.asarray(jumps, dtype=int)))


def _json(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _metadata(cfg: RunConfig, mode: str, dim: int, tail: float, files, extra=None) -> dict:
    meta = {
        "tool": "qfilter",
        "tool_version": __version__,
        "mode": mode,
        "config": config_to_dict(cfg),
        "seed": cfg.seed,
        "generator": noise.GENERATOR_NAME,
        "stream_policy": "trajectory i uses stream_id = i",
        "dim": dim,
        "dim_source": "auto" if cfg.params.dim == "auto" else "explicit",
        "tail_mass": tail,
        "files": sorted(files),
    }
    if extra:
        meta.update(extra)
    return meta


# -- mode implementations: each returns (files, exit_code, extra_metadata) -----


def _diffusive(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    tr = sde.run_diffusive(
        cfg.initial_state(), params, grid, noise.wiener_path(grid, cfg.seed), measure=cfg.measure, scheme=cfg.scheme
    )
    s = slice(None, None, cfg.record_stride)
    text = _series_csv(tr.times[s], tr.mean_x[s], tr.mean_y[s], tr.mean_n[s], tr.dx[s], tr.dy[s], tr.norm2_log[s], tr.jumps[s])
    return {"series.csv": text}, EXIT_OK, {"tail_mass": float(tr.tail_mass.max()), "renormalizations": len(tr.renorm_log)}


def _counting(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    tr = sde.run_counting(cfg.initial_state(), params, grid, noise.UniformStream(cfg.seed, 0))
    s = slice(None, None, cfg.record_stride)
    jumps = tr.jumps.copy()
    if cfg.record_stride > 1:
        # mark a recorded row if any count happened since the previous row
        idx = np.arange(grid.n_steps + 1)[s]
        counts = np.concatenate([[0], np.cumsum(tr.record)])
        jumps = np.concatenate([[False], np.diff(counts[idx]) > 0])
    else:
        jumps = jumps[s]
    text = _series_csv(tr.times[s], tr.mean_x[s], tr.mean_y[s], tr.mean_n[s], tr.dx[s], tr.dy[s], tr.norm2_log[s], jumps)
    return {"series.csv": text}, EXIT_OK, {"tail_mass": float(tr.tail_mass.max()), "jump_times": tr.jump_times}


def _analytic(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    state = cfg.initial_state()
    path = noise.wiener_path(grid, cfg.seed)
    ser = analytic.diffusive_series(state, params, path, params.dim, cfg.record_stride)
    nlog = np.log(np.sum(np.abs(ser["states"]) ** 2, axis=1))
    tail = float(np.max(np.sum(np.abs(ser["states"][:, -2:]) ** 2, axis=1) / np.exp(nlog)))
    text = _series_csv(ser["t"], ser["mean_x"], ser["mean_y"], ser["mean_n"], ser["dx"], ser["dy"], nlog, np.zeros(len(nlog)))
    return {"series.csv": text}, EXIT_OK, {"tail_mass": tail, "path": "reference Wiener path from seed"}


def _compare(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    state = cfg.initial_state()
    tr = sde.run_diffusive(state, params, grid, noise.wiener_path(grid, cfg.seed), measure=cfg.measure, scheme=cfg.scheme)
    ser = analytic.diffusive_series(state, params, tr.record, params.dim, 1)
    report = sde.compare_to_analytic(tr, ser, cfg.tolerances)
    s = slice(None, None, cfg.record_stride)
    files = {
        "series.csv": _series_csv(
            tr.times[s], tr.mean_x[s], tr.mean_y[s], tr.mean_n[s], tr.dx[s], tr.dy[s], tr.norm2_log[s], tr.jumps[s]
        ),
        "oracle.csv": csv_text(
            ("t", "meanX", "meanY", "meanN", "dX", "dY"),
            (ser["t"][s], ser["mean_x"][s], ser["mean_y"][s], ser["mean_n"][s], ser["dx"][s], ser["dy"][s]),
        ),
        "report.json": _json(report.to_dict()),
    }
    return files, EXIT_OK if report.passed else EXIT_TOLERANCE, {"tail_mass": float(tr.tail_mass.max())}


def _ensemble(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    state = cfg.initial_state()
    if cfg.observation == "diffusive":
        ens = sde.run_diffusive_ensemble(
            state, params, grid, cfg.seed, cfg.n_trajectories, measure=cfg.measure, scheme=cfg.scheme, stride=cfg.record_stride
        )
    else:
        ens = sde.run_counting_ensemble(state, params, grid, cfg.seed, cfg.n_trajectories, stride=cfg.record_stride)
    if cfg.n_trajectories >= lindblad.MIN_TRAJECTORIES:
        avg = lindblad.ensemble_average(ens)
        mean, se = avg.mean, avg.stderr
    else:
        mean = {k: ens.stats[k].mean(axis=0) for k in ("mean_n", "mean_x", "mean_y")}
        se = {k: np.full_like(v, np.nan) for k, v in mean.items()}
    cols = ("t", "meanX", "seX", "meanY", "seY", "meanN", "seN")
    text = csv_text(cols, (ens.times, mean["mean_x"], se["mean_x"], mean["mean_y"], se["mean_y"], mean["mean_n"], se["mean_n"]))
    return {"ensemble.csv": text}, EXIT_OK, {"observation": cfg.observation, "n_trajectories": cfg.n_trajectories}


def _survival(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    state = cfg.initial_state()
    ens = sde.run_counting_ensemble(state, params, grid, cfg.seed, cfg.n_trajectories, stride=grid.n_steps)
    t = grid.times[:: cfg.record_stride]
    exact = np.array([analytic.survival_probability(state, params, x) for x in t])
    freq = np.array([ens.zero_count_fraction(x) for x in t])
    text = csv_text(("t", "P_exact", "P_mc", "P_mc_se"), (t, exact, freq[:, 0], freq[:, 1]))
    return {"survival.csv": text}, EXIT_OK, {"n_trajectories": cfg.n_trajectories, "min_counts": ens.min_counts()}


def _lindblad(cfg: RunConfig):
    params, grid = cfg.model(), cfg.time_grid()
    state = cfg.initial_state()
    rho0 = lindblad.density_from_state(states.build_initial(state, params.dim))
    sol = lindblad.integrate_master(rho0, params, grid, stride=cfg.record_stride)
    prior = analytic.apriori_means(state, params, sol.times)
    trace = np.real(np.trace(sol.rhos, axis1=1, axis2=2))
    cols = ("t", "meanX", "meanY", "meanN", "trace", "priorX", "priorY", "priorN")
    text = csv_text(cols, (sol.times, sol.mean_x, sol.mean_y, sol.mean_n, trace, prior[1], prior[2], prior[0]))
    tail = float(np.max(np.real(sol.rhos[:, -1, -1] + sol.rhos[:, -2, -2])))
    return {"lindblad.csv": text}, EXIT_OK, {"tail_mass": tail, "rk4_substeps": sol.substeps}


MODE_RUNNERS = {
    "diffusive": _diffusive,
    "counting": _counting,
    "analytic": _analytic,
    "compare": _compare,
    "ensemble": _ensemble,
    "survival": _survival,
    "lindblad": _lindblad,
}


def _write(out_dir: Path, files: dict[str, str]):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        tmp = out_dir / f".{name}.tmp"
        tmp.write_text(text)
        tmp.replace(out_dir / name)


def execute(cfg: RunConfig, out_dir: str | Path | None = None, mode: str | None = None) -> int:
    """Run one configured job and write its outputs. Returns the exit code."""
    mode = mode or cfg.mode
    out_dir = Path(out_dir or os.environ.get(OUT_ENV) or cfg.output)
    try:
        dim = cfg.resolved_dim()
        files, code, extra = MODE_RUNNERS[mode](cfg)
    except (ConfigError, GridError, TruncationError) as exc:
        _report_error("configuration error", exc)
        return EXIT_CONFIG
    except QFilterError as exc:
        _report_error("numerical failure", exc)
        return EXIT_NUMERICAL
    tail = extra.pop("tail_mass", None)
    if tail is None:
        tail = fock.relative_tail_mass(states.build_initial(cfg.initial_state(), dim))
    meta = _metadata(cfg, mode, dim, tail, [*files, "metadata.json", "config.json"], extra)
    files["metadata.json"] = _json(meta)
    files["config.json"] = emit_config(cfg)
    _write(out_dir, files)
    return code


def _report_error(kind: str, exc: Exception):
    where = getattr(exc, "field", None)
    suffix = f" [field: {where}]" if where else ""
    print(f"qfilter: {kind}: {exc}{suffix}", file=sys.stderr)


def _load(path: str, seed: int | None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    return cfg


def _selftest(out: str | None) -> int:
    results = acceptance.run_all(echo=print)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} acceptance checks passed")
    if out:
        report = {r.name: {"passed": r.passed, "seconds": r.seconds, "details": r.details} for r in results}
        _write(Path(out), {"selftest.json": _json(report)})
    return EXIT_OK if passed == len(results) else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfilter", description="Quantum filtering of a damped oscillator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "single trajectory (mode diffusive, counting or analytic)"),
        ("ensemble", "ensemble-averaged posterior means"),
        ("compare", "numerical trajectory vs closed form on the same record"),
        ("survival", "exact and Monte-Carlo no-count probability"),
        ("lindblad", "master-equation integration"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--out", default=None, help="also write selftest.json here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return _selftest(args.out)
    try:
        cfg = _load(args.config, args.seed)
        mode = cfg.mode if args.command == "run" else args.command
        if args.command == "run" and mode not in RUN_MODES:
            raise ConfigError(f"'run' executes modes {RUN_MODES}; use the '{mode}' subcommand", field="mode")
    except ConfigError as exc:
        _report_error("configuration error", exc)
        return EXIT_CONFIG
    return execute(cfg, args.out, mode)


if __name__ == "__main__":
    sys.exit(main())
