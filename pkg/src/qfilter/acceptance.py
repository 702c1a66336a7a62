"""End-to-end validation suite.

Each check returns a :class:`CheckResult` with the measured quantities, so
the same functions back both ``qfilter selftest`` and the test suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import analytic, fock, lindblad, noise, sde, states
from .fock import ModelParams
from .states import CatEven, CatOdd, Coherent, SqueezedCoherent, SqueezeParams

BENCH = ModelParams(omega=1.0, mu=0.5)
BENCH_ALPHA = 2.0
BENCH_SQUEEZE = SqueezeParams(0.5, np.pi / 4)
SIGMA = 3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name} ({self.seconds:.1f}s)"


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, details = fn()
    return CheckResult(name, bool(passed), details, time.perf_counter() - t0)


def _within_sigma(values: np.ndarray, target) -> tuple[np.ndarray, np.ndarray]:
    mean, se = lindblad.jackknife_mean(values)
    return np.abs(mean - target) / se, se


# -- individual checks ---------------------------------------------------------


def coherent_benchmark(seeds=(1, 2), tol: float = 1e-2, max_seconds: float = 10.0) -> CheckResult:
    """Coherent posterior means against the deterministic closed forms, two seeds."""

    def run():
        grid = noise.TimeGrid(4.0, 4000)
        d, series = {}, []
        t0 = time.perf_counter()
        for seed in seeds:
            tr = sde.run_diffusive(Coherent(BENCH_ALPHA), BENCH, grid, noise.wiener_path(grid, seed))
            a = analytic.alpha_decay(BENCH_ALPHA, BENCH, tr.times)
            n = analytic.apriori_means(Coherent(BENCH_ALPHA), BENCH, tr.times)[0]
            d[f"seed{seed}"] = {
                "max_dev_n": float(np.abs(tr.mean_n - n).max()),
                "max_dev_x": float(np.abs(tr.mean_x - a.real).max()),
                "max_dev_y": float(np.abs(tr.mean_y - a.imag).max()),
            }
            series.append(tr)
        elapsed = (time.perf_counter() - t0) / len(seeds)
        d["seed_spread_x"] = float(np.abs(series[0].mean_x - series[1].mean_x).max())
        d["seed_spread_y"] = float(np.abs(series[0].mean_y - series[1].mean_y).max())
        d["seconds_per_run"] = elapsed
        devs = [v for s in seeds for v in d[f"seed{s}"].values()]
        ok = max(devs) <= tol and d["seed_spread_x"] <= tol and d["seed_spread_y"] <= tol and elapsed <= max_seconds
        return ok, d

    return _timed("coherent diffusive benchmark", run)


def squeezed_benchmark(seeds=(1, 2), tol: float = 1e-2, closed_tol: float = 1e-6) -> CheckResult:
    """Squeezed quadrature uncertainties from trajectories, plus the unobserved limit."""

    def run():
        grid = noise.TimeGrid(2 / BENCH.mu, 4000)
        state = SqueezedCoherent(BENCH_SQUEEZE, 1.0)
        d = {}
        ok = True
        for seed in seeds:
            tr = sde.run_diffusive(state, BENCH, grid, noise.wiener_path(grid, seed))
            dx, dy = analytic.squeezed_uncertainties(BENCH_SQUEEZE, BENCH, tr.times)
            px, py = analytic.squeezed_uncertainties_sum_phase(BENCH_SQUEEZE, BENCH, tr.times)
            d[f"seed{seed}"] = {
                "max_dev_dx": float(np.abs(tr.dx - dx).max()),
                "max_dev_dy": float(np.abs(tr.dy - dy).max()),
                "max_dev_dy_plus_sign_variant": float(np.abs(tr.dy - py).max()),
            }
            ok &= d[f"seed{seed}"]["max_dev_dx"] <= tol and d[f"seed{seed}"]["max_dev_dy"] <= tol
        # closed system: assemble the state on a dummy path and read it out
        closed = ModelParams(BENCH.omega, 0.0)
        path = noise.wiener_path(grid, 0)
        coeff = analytic.squeezed_coeff_series(BENCH_SQUEEZE, 1.0, closed, path)
        dim = states.auto_dim(state)
        idx = np.arange(0, grid.n_steps + 1, 100)
        phis = np.array(
            [
                analytic.squeezed_diffusive_state(
                    analytic.DiffusiveCoefficients(
                        coeff["t"][k], coeff["alpha_t"][k], coeff["rho_t"][k], coeff["theta_t"][k], coeff["logG_t"][k], 0j
                    ),
                    dim,
                )
                for k in idx
            ]
        )
        ro = fock.readout(phis)
        ux, uy = analytic.unobserved_squeezed_uncertainties(BENCH_SQUEEZE, BENCH.omega, grid.times[idx])
        d["closed_system_max_dev"] = float(max(np.abs(ro["dx"] - ux).max(), np.abs(ro["dy"] - uy).max()))
        ok &= d["closed_system_max_dev"] <= closed_tol
        return ok, d

    return _timed("squeezed coherent uncertainties", run)


def _fidelity_case(state, t_max, n_steps, seed):
    grid = noise.TimeGrid(t_max, n_steps)
    tr = sde.run_diffusive(state, BENCH, grid, noise.wiener_path(grid, seed), keep_states=True)
    ref = analytic.diffusive_state_series(state, BENCH, tr.record, tr.dim)
    return sde.min_fidelity(tr.states, ref)


def same_path_fidelity(seed: int = 3, tol: float = 1e-3) -> CheckResult:
    """Numerical vs closed-form state on the identical record."""

    def run():
        cases = {
            "coherent": (Coherent(BENCH_ALPHA), 4.0, 4000),
            "squeezed_coherent": (SqueezedCoherent(BENCH_SQUEEZE, 1.0), 4.0, 4000),
            "cat_even_alpha3": (CatEven(3.0), 0.1 / BENCH.mu, 200),
        }
        d = {k: _fidelity_case(s, t, n, seed) for k, (s, t, n) in cases.items()}
        return all(v >= 1 - tol for v in d.values()), {f"min_fidelity_{k}": v for k, v in d.items()}

    return _timed("same-path state fidelity", run)


def counting_statistics(n_traj: int = 10_000, seed: int = 77) -> CheckResult:
    """Zero-count frequencies at t = 2/mu and certain counting for the odd cat."""

    def run():
        params = ModelParams(1.0, 1.0)
        grid = noise.TimeGrid(20 / params.mu, 4000)
        t_check = 2 / params.mu
        d, ok = {}, True
        for name, state in (("coherent", Coherent(1.0)), ("cat_even", CatEven(1.0)), ("cat_odd", CatOdd(1.0))):
            ens = sde.run_counting_ensemble(state, params, grid, seed, n_traj, stride=grid.n_steps)
            p, se = ens.zero_count_fraction(t_check)
            target = analytic.survival_probability(state, params, t_check)
            z = abs(p - target) / se
            d[name] = {"frequency": p, "binomial_se": se, "target": target, "z": z, "min_counts_by_20_over_mu": ens.min_counts()}
            ok &= z <= SIGMA
        ok &= d["cat_odd"]["min_counts_by_20_over_mu"] >= 1
        return ok, d

    return _timed("counting zero-count statistics", run)


def postjump_flip(alpha: complex = 2.0, n_jumps: int = 3, seed: int = 5, tol: float = 1e-6) -> CheckResult:
    """State after the first count of an even cat is the odd cat at alpha(t0)."""

    def run():
        params = ModelParams(1.0, 1.0)
        grid = noise.TimeGrid(4.0, 2000)
        dim = 48
        fids, times = [], []
        stream_id = 0
        while len(fids) < n_jumps:
            tr = sde.run_counting(CatEven(alpha), params, grid, noise.UniformStream(seed, stream_id), dim=dim, keep_states=True)
            stream_id += 1
            if not tr.jump_times:
                continue
            k = grid.index(tr.jump_times[0])
            target = analytic.cat_jump_target(alpha, "even", params, tr.jump_times[0], dim)
            fids.append(fock.fidelity(tr.states[k], target))
            times.append(tr.jump_times[0])
        return min(fids) >= 1 - tol, {"jump_times": times, "fidelities": fids}

    return _timed("post-count cat parity flip", run)


def unraveling_consistency(n_traj: int = 10_000, seed: int = 2024) -> CheckResult:
    """Averaged diffusive posterior means vs master equation and closed forms."""

    def run():
        grid = noise.TimeGrid(2 / BENCH.mu, 2000)
        t_check = np.array([0.5, 1.0, 2.0]) / BENCH.mu
        d, ok = {}, True
        for name, state in (("cat_even", CatEven(1.5)), ("squeezed_coherent", SqueezedCoherent(BENCH_SQUEEZE, 1.0))):
            ens = sde.run_diffusive_ensemble(state, BENCH, grid, seed, n_traj, stride=250)
            sel = [int(np.argmin(np.abs(ens.times - t))) for t in t_check]
            dim = states.auto_dim(state)
            mgrid = noise.TimeGrid(2 / BENCH.mu, 400)
            sol = lindblad.integrate_master(lindblad.density_from_state(states.build_initial(state, dim)), BENCH, mgrid)
            msel = [mgrid.index(t) for t in t_check]
            prior = analytic.apriori_means(state, BENCH, t_check)
            master = (sol.mean_n[msel], sol.mean_x[msel], sol.mean_y[msel])
            d[name] = {}
            for i, key in enumerate(("mean_n", "mean_x", "mean_y")):
                vals = ens.stats[key][:, sel]
                z_closed, se = _within_sigma(vals, prior[i])
                z_master, _ = _within_sigma(vals, master[i])
                d[name][key] = {"z_closed_form": z_closed.tolist(), "z_master": z_master.tolist(), "se": se.tolist()}
                ok &= bool(np.all(z_closed <= SIGMA) and np.all(z_master <= SIGMA))
        return ok, d

    return _timed("unraveling consistency", run)


def martingale(n_traj: int = 10_000, seed: int = 5) -> CheckResult:
    """Mean squared norm of the linear filters stays at one under the reference measure."""

    def run():
        grid = noise.TimeGrid(1.0, 1000)
        state = Coherent(1.0)
        d, ok = {}, True
        ens = sde.run_diffusive_ensemble(state, BENCH, grid, seed, n_traj, measure="reference", stride=grid.n_steps)
        z, se = _within_sigma(np.exp(ens.stats["norm2_log"][:, -1]), 1.0)
        d["diffusive"] = {"z": float(z), "se": float(se)}
        ok &= z <= SIGMA
        # the unit-intensity reference process is the compensator when mu = 1
        for label, mu, rate in (("counting_mu1_unit_rate", 1.0, 1.0), ("counting_mu0.5_rate_mu", 0.5, 0.5)):
            counts = noise.poisson_batch(grid, seed, range(n_traj), rate=rate)
            out = sde.run_counting_linear(state, ModelParams(1.0, mu), grid, counts)
            z, se = _within_sigma(np.exp(out["norm2_log"][:, -1]), 1.0)
            d[label] = {"z": float(z), "se": float(se)}
            ok &= z <= SIGMA
        return ok, d

    return _timed("martingale property", run)


def operator_identities(seed: int = 0) -> CheckResult:
    """Squeeze-transformation identities, dual construction, round-trip and long-time survival."""

    def run():
        d, ok = {}, True
        for rho, theta in ((0.25, 0.3), (0.5, np.pi / 4), (1.0, -1.2)):
            xi = SqueezeParams(rho, theta)
            res = states.transformation_residuals(xi, 64)
            gap = states.squeeze_selftest(xi, 64)
            d[f"rho={rho}"] = {"residuals": res.residuals, "dual_construction_gap": gap}
            ok &= res.max() <= 1e-6 and gap <= 1e-8
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(200):
            xi = SqueezeParams(rng.uniform(0, 1.5), rng.uniform(-np.pi, np.pi))
            a = complex(*rng.normal(size=2) * 2)
            worst = max(worst, abs(states.beta_to_alpha(xi, states.alpha_to_beta(xi, a)) - a))
        d["roundtrip_max_error"] = worst
        ok &= worst <= 1e-12
        for alpha in (1.0, 0.6 + 0.8j):
            state = SqueezedCoherent(BENCH_SQUEEZE, alpha)
            g2 = analytic.survival_probability(state, BENCH, 50 / BENCH.mu)
            limit = analytic.vacuum_probability(BENCH_SQUEEZE, alpha)
            numeric = fock.norm2(analytic.nocount_evolve(state, BENCH, 50 / BENCH.mu))
            d[f"vacuum_limit_alpha={alpha}"] = {
                "G2": g2,
                "numerical_norm2": numeric,
                "limit": limit,
                "conjugate_phase_limit": analytic.vacuum_probability_conjugate_phase(BENCH_SQUEEZE, alpha),
                "abs_dev": abs(g2 - limit),
            }
            ok &= abs(g2 - limit) <= 1e-6 and abs(numeric - limit) <= 1e-6
        return ok, d

    return _timed("operator identities", run)


def convergence(n_paths: int = 64, seed: int = 11, factors=(8, 4, 2, 1)) -> CheckResult:
    """Strong same-path state error of the coherent benchmark under grid refinement.

    A fine path with ``dt = 2.5e-4`` is aggregated to ``dt = 2e-3 .. 2.5e-4``.
    The error is ``max_t ||phi_num - phi_exact|| / ||phi_exact||`` over the
    coarsest grid times, averaged over independent paths.
    """

    def run():
        fine = noise.TimeGrid(4.0, 16000)
        state = Coherent(BENCH_ALPHA)
        paths = [noise.wiener_path(fine, seed, s) for s in range(n_paths)]
        d = {}
        for scheme in ("exponential", "euler"):
            errs = []
            for f in factors:
                coarse = [p.coarsen(f) for p in paths]
                stride = max(factors) // f
                b = sde.run_diffusive_batch(
                    state, BENCH, coarse[0].grid, np.stack([p.dW for p in coarse]), scheme=scheme, stride=stride, keep_states=True
                )
                e = [
                    sde.state_error(b["states"][i], analytic.diffusive_state_series(state, BENCH, coarse[i], b["dim"], stride))
                    for i in range(n_paths)
                ]
                errs.append(float(np.mean(e)))
            d[scheme] = {
                "dt": [fine.dt * f for f in factors],
                "mean_max_state_error": errs,
                "ratios": [errs[i] / errs[i + 1] for i in range(len(errs) - 1)],
            }
        e = d["exponential"]["mean_max_state_error"]
        return all(e[i + 1] < e[i] for i in range(len(e) - 1)), d

    return _timed("convergence under refinement", run)


CHECKS = (
    coherent_benchmark,
    squeezed_benchmark,
    same_path_fidelity,
    counting_statistics,
    postjump_flip,
    unraveling_consistency,
    martingale,
    operator_identities,
    convergence,
)


def run_all(echo=None) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        r = check()
        if echo:
            echo(r.line())
        results.append(r)
    return results
