"""Trajectory integrators for diffusive and counting observation.

The diffusive filter propagates the unnormalized state

    d phi = -K phi dt + sqrt(mu) a phi dW,    K = iH + (mu/2) n,

and all posterior statistics are ratios, so the state may be rescaled at will.
Rescalings are logged so the unnormalized norm can always be recovered.

Two probability measures drive the diffusive record:

* ``"reference"``: ``dW`` is a standard complex Wiener path. Expectations of
  ``||phi||^2``-weighted quantities are physical; plain averages are not.
* ``"physical"``: the record is ``dW = dV + sqrt(mu) <a^dag> dt``, where
  ``dV`` is the seeded innovation path. Plain ensemble averages of
  posterior means then reproduce the master equation.

Counting trajectories use the norm-threshold Monte-Carlo wave-function
procedure with the exact (diagonal) no-count propagator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fock, states
from .errors import ConfigError, DegenerateStateError, GridError, OverflowDiagnosticError
from .fock import ModelParams
from .noise import NoisePath, TimeGrid, UniformStream, wiener_increments
from .states import InitialState

MAX_MU_DT = 0.01
_GUARD_SLACK = 1 + 1e-9  # grids built as t/0.01 should pass
RENORM_LOW = 1e-6
RENORM_HIGH = 1e6
SCHEMES = ("exponential", "euler")
MEASURES = ("physical", "reference")
BATCH_CHUNK = 1000
OBSERVABLES = ("mean_x", "mean_y", "mean_n", "dx", "dy")


def _check_grid(params: ModelParams, grid: TimeGrid):
    if params.mu * grid.dt > MAX_MU_DT * _GUARD_SLACK:
        raise ConfigError(f"mu*dt = {params.mu * grid.dt:.3g} exceeds {MAX_MU_DT}", field="grid.n_steps")


def _check_scheme(scheme: str):
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {SCHEMES}", field="scheme")


def _check_measure(measure: str):
    if measure not in MEASURES:
        raise ConfigError(f"unknown measure {measure!r}; choose from {MEASURES}", field="measure")


def _record_indices(n_steps: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


@dataclass
class Trajectory:
    """Recorded posterior statistics of one trajectory.

    ``norm2_log`` is ``log ||phi||^2`` of the unrescaled linear state. For
    counting runs the state is renormalized at each count, and the log of
    each such rescaling is included, so ``norm2_log`` is the log-likelihood
    density of the count record.
    """

    times: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    mean_n: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    norm2_log: np.ndarray
    jumps: np.ndarray
    tail_mass: np.ndarray
    dim: int
    jump_times: list[float] = field(default_factory=list)
    renorm_log: list[tuple[float, float]] = field(default_factory=list)
    record: NoisePath | np.ndarray | None = None
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def series(self) -> dict[str, np.ndarray]:
        return {"t": self.times, **{k: getattr(self, k) for k in OBSERVABLES}}


# -- diffusive ---------------------------------------------------------------


def step_diffusive(phi: np.ndarray, params: ModelParams, dW: complex, dt: float, scheme: str = "euler") -> np.ndarray:
    """Advance the linear diffusive equation by one step.

    ``"euler"`` is the plain Euler-Maruyama update
    ``phi - K phi dt + sqrt(mu) dW a phi``. ``"exponential"`` applies the
    drift exactly: ``exp(-K dt) (phi + sqrt(mu) dW a phi)``. Works on a
    single state or on a batch of shape ``(M, dim)`` with ``dW`` of shape
    ``(M,)``.
    """
    _check_scheme(scheme)
    kdiag = fock.k_diagonal(params, phi.shape[-1])
    dW = np.asarray(dW)[..., None] if np.ndim(dW) else dW
    with np.errstate(over="ignore", invalid="ignore"):
        kick = np.sqrt(params.mu) * dW * fock.apply_a(phi)
        if scheme == "euler":
            out = phi - kdiag * phi * dt + kick
        else:
            out = np.exp(-kdiag * dt) * (phi + kick)
    if not np.all(np.isfinite(out)):
        raise OverflowDiagnosticError("non-finite amplitudes; rescale the state before stepping")
    return out


def _diffusive_batch(
    phi0: np.ndarray,
    params: ModelParams,
    grid: TimeGrid,
    noise: np.ndarray,
    measure: str,
    scheme: str,
    stride: int = 1,
    keep_states: bool = False,
):
    """Integrate ``M`` trajectories at once; ``noise`` has shape ``(M, n_steps)``."""
    m, dim = noise.shape[0], phi0.shape[-1]
    dt = grid.dt
    kdiag = fock.k_diagonal(params, dim)
    prop = np.exp(-kdiag * dt)
    sq = np.sqrt(params.mu)
    idx = _record_indices(grid.n_steps, stride)
    n_rec = len(idx)
    out = {k: np.empty((m, n_rec)) for k in (*OBSERVABLES, "norm2_log", "tail_mass")}
    kept = np.empty((m, n_rec, dim), dtype=complex) if keep_states else None
    record = np.empty_like(noise)
    renorms: list[tuple[int, int, float]] = []
    phi = np.tile(np.asarray(phi0, dtype=complex), (m, 1))
    log_scale = np.zeros(m)
    physical = measure == "physical"
    r = 0

    def store(k_rec):
        n2 = np.sum(np.abs(phi) ** 2, axis=1)
        ro = fock.readout(phi)
        for key in OBSERVABLES:
            out[key][:, k_rec] = ro[key]
        out["norm2_log"][:, k_rec] = np.log(n2) + log_scale
        out["tail_mass"][:, k_rec] = np.sum(np.abs(phi[:, -2:]) ** 2, axis=1) / n2
        if keep_states:
            kept[:, k_rec] = phi * np.exp(0.5 * log_scale)[:, None]

    for k in range(grid.n_steps):
        if idx[r] == k:
            store(r)
            r += 1
        aphi = fock.apply_a(phi)
        if physical:
            n2 = np.sum(np.abs(phi) ** 2, axis=1)
            mean_a = np.sum(phi.conj() * aphi, axis=1) / n2
            dW = noise[:, k] + sq * np.conj(mean_a) * dt
        else:
            dW = noise[:, k]
        record[:, k] = dW
        if scheme == "exponential":
            phi = prop * (phi + sq * dW[:, None] * aphi)
        else:
            phi = phi - kdiag * phi * dt + sq * dW[:, None] * aphi
        n2 = np.sum(np.abs(phi) ** 2, axis=1)
        if not np.all(np.isfinite(n2)) or np.any(n2 <= 0):
            bad = int(np.flatnonzero(~(np.isfinite(n2) & (n2 > 0)))[0])
            raise OverflowDiagnosticError(
                f"trajectory {bad} lost its norm at t={(k + 1) * dt:.6g} despite rescaling"
            )
        off = (n2 < RENORM_LOW) | (n2 > RENORM_HIGH)
        if np.any(off):
            for j in np.flatnonzero(off):
                renorms.append((j, k + 1, float(np.log(n2[j]))))
            phi[off] /= np.sqrt(n2[off])[:, None]
            log_scale[off] += np.log(n2[off])
    store(r)
    return idx, out, kept, record, renorms


def _dim_for(initial: InitialState, params: ModelParams, dim: int | None) -> int:
    return dim or params.dim or states.auto_dim(initial)


def run_diffusive(
    initial: InitialState,
    params: ModelParams,
    grid: TimeGrid,
    path: NoisePath,
    *,
    measure: str = "physical",
    scheme: str = "exponential",
    dim: int | None = None,
    keep_states: bool = False,
    check_grid: bool = True,
) -> Trajectory:
    """Integrate one diffusive trajectory driven by ``path``.

    Under ``measure="physical"`` the path is the innovation and the realized
    record is returned in ``Trajectory.record``; closed-form comparisons
    must use that record.
    """
    if path.grid != grid:
        raise GridError("noise path was generated on a different grid")
    _check_scheme(scheme)
    _check_measure(measure)
    if check_grid:
        _check_grid(params, grid)
    dim = _dim_for(initial, params, dim)
    phi0 = states.build_initial(initial, dim)
    idx, out, kept, record, renorms = _diffusive_batch(
        phi0, params, grid, path.dW[None, :], measure, scheme, keep_states=keep_states
    )
    return Trajectory(
        times=grid.times[idx],
        **{k: out[k][0] for k in (*OBSERVABLES, "norm2_log", "tail_mass")},
        jumps=np.zeros(len(idx), dtype=bool),
        dim=dim,
        renorm_log=[(float(grid.times[k]), lg) for _, k, lg in renorms],
        record=NoisePath(grid, record[0], path.seed, path.stream_id, kind=f"record:{measure}"),
        states=kept[0] if keep_states else None,
        meta={"measure": measure, "scheme": scheme},
    )


def run_diffusive_batch(
    initial: InitialState,
    params: ModelParams,
    grid: TimeGrid,
    noise: np.ndarray,
    *,
    measure: str = "reference",
    scheme: str = "exponential",
    stride: int = 1,
    dim: int | None = None,
    keep_states: bool = False,
) -> dict:
    """Several trajectories on caller-supplied increments of shape ``(M, n_steps)``.

    Returns the recorded times, per-trajectory statistics, the realized
    records and (optionally) the unrescaled states at the recorded times.
    """
    _check_scheme(scheme)
    _check_measure(measure)
    dim = _dim_for(initial, params, dim)
    phi0 = states.build_initial(initial, dim)
    idx, out, kept, record, _ = _diffusive_batch(phi0, params, grid, np.atleast_2d(noise), measure, scheme, stride, keep_states)
    return {"t": grid.times[idx], "stats": out, "states": kept, "record": record, "dim": dim}


@dataclass
class EnsembleResult:
    """Per-trajectory statistics at the recorded times, shape ``(M, n_rec)``."""

    times: np.ndarray
    stats: dict[str, np.ndarray]
    stream_ids: np.ndarray
    dim: int
    meta: dict = field(default_factory=dict)


def run_diffusive_ensemble(
    initial: InitialState,
    params: ModelParams,
    grid: TimeGrid,
    seed: int,
    n_trajectories: int,
    *,
    measure: str = "physical",
    scheme: str = "exponential",
    stride: int = 1,
    dim: int | None = None,
    chunk: int = BATCH_CHUNK,
    check_grid: bool = True,
) -> EnsembleResult:
    """Trajectories ``0 .. n-1``, each on its own noise stream ``stream_id = index``."""
    _check_scheme(scheme)
    _check_measure(measure)
    if check_grid:
        _check_grid(params, grid)
    dim = _dim_for(initial, params, dim)
    phi0 = states.build_initial(initial, dim)
    ids = np.arange(n_trajectories)
    parts = []
    for lo in range(0, n_trajectories, chunk):
        noise = np.stack([wiener_increments(grid, seed, s) for s in ids[lo : lo + chunk]])
        idx, out, _, _, _ = _diffusive_batch(phi0, params, grid, noise, measure, scheme, stride)
        parts.append(out)
    stats = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    return EnsembleResult(grid.times[idx], stats, ids, dim, {"measure": measure, "scheme": scheme, "seed": seed})


# -- counting ----------------------------------------------------------------


def _nocount_tables(params: ModelParams, grid: TimeGrid, dim: int):
    """``exp(-K j dt)`` for ``j = 0 .. n_steps`` and its squared modulus."""
    j = np.arange(grid.n_steps + 1)[:, None]
    kdiag = fock.k_diagonal(params, dim)
    prop = np.exp(-kdiag[None, :] * (j * grid.dt))
    return prop, np.exp(-params.mu * np.arange(dim)[None, :] * (j * grid.dt))


def _check_jump_rate(initial_phi: np.ndarray, params: ModelParams, grid: TimeGrid):
    mean_n = float(fock.readout(initial_phi)["mean_n"])
    if params.mu * mean_n * grid.dt > MAX_MU_DT * _GUARD_SLACK:
        raise ConfigError(
            f"mu*<n>*dt = {params.mu * mean_n * grid.dt:.3g} exceeds {MAX_MU_DT}; jumps may cluster within a step",
            field="grid.n_steps",
        )


def _counting_core(phi0, params, grid, stream: UniformStream, rec_idx, tables, keep_states):
    prop, decay = tables
    n = grid.n_steps
    psi = fock.normalize(phi0)
    k0 = 0
    log_acc = 0.0
    u = stream.draw()
    jump_idx: list[int] = []
    rows = np.empty((len(rec_idx), psi.shape[0]), dtype=complex)
    row_log = np.zeros(len(rec_idx))
    r = 0
    while True:
        w = np.abs(psi) ** 2
        surv = decay[1 : n - k0 + 1] @ w
        below = np.flatnonzero(surv < u)
        k_end = k0 + 1 + int(below[0]) if below.size else None
        stop = n if k_end is None else k_end - 1
        while r < len(rec_idx) and rec_idx[r] <= stop:
            rows[r] = prop[rec_idx[r] - k0] * psi
            row_log[r] = log_acc
            r += 1
        if k_end is None:
            break
        # jump at grid point k_end: record the post-count state there
        pre = prop[k_end - k0] * psi
        aphi = fock.apply_a(pre)
        n2 = fock.norm2(aphi)
        if not n2 > 0:
            raise DegenerateStateError("count drawn on a state with <n> = 0")
        log_acc += np.log(n2)
        psi = aphi / np.sqrt(n2)
        jump_idx.append(k_end)
        k0 = k_end
        u = stream.draw()
        if k0 == n:
            while r < len(rec_idx):
                rows[r] = psi
                row_log[r] = log_acc
                r += 1
            break
    return rows, row_log, jump_idx


def _counting_trajectory(rows, row_log, jump_idx, rec_idx, grid, dim, keep_states) -> Trajectory:
    ro = fock.readout(rows)
    jumps = np.isin(rec_idx, jump_idx)
    n2 = ro["norm2"]
    return Trajectory(
        times=grid.times[rec_idx],
        mean_x=ro["mean_x"],
        mean_y=ro["mean_y"],
        mean_n=ro["mean_n"],
        dx=ro["dx"],
        dy=ro["dy"],
        norm2_log=np.log(n2) + row_log,
        jumps=jumps,
        tail_mass=np.sum(np.abs(rows[:, -2:]) ** 2, axis=1) / n2,
        dim=dim,
        jump_times=[float(grid.times[k]) for k in jump_idx],
        renorm_log=[(float(grid.times[k]), 0.0) for k in jump_idx],
        record=np.isin(np.arange(1, grid.n_steps + 1), jump_idx),
        states=rows if keep_states else None,
        meta={"mode": "counting"},
    )


def run_counting(
    initial: InitialState,
    params: ModelParams,
    grid: TimeGrid,
    stream: UniformStream,
    *,
    dim: int | None = None,
    keep_states: bool = False,
    check_grid: bool = True,
) -> Trajectory:
    """One Monte-Carlo wave-function trajectory.

    Between counts the exact no-count propagator is applied; a count is
    placed at the first grid point where the squared norm falls below the
    current uniform threshold, after which ``a`` is applied, the state is
    renormalized and a fresh threshold is drawn. ``record`` holds the count
    indicator of each step.
    """
    dim = _dim_for(initial, params, dim)
    phi0 = states.build_initial(initial, dim)
    if check_grid:
        _check_grid(params, grid)
        _check_jump_rate(phi0, params, grid)
    rec_idx = np.arange(grid.n_steps + 1)
    tables = _nocount_tables(params, grid, dim)
    rows, row_log, jump_idx = _counting_core(phi0, params, grid, stream, rec_idx, tables, keep_states)
    traj = _counting_trajectory(rows, row_log, jump_idx, rec_idx, grid, dim, keep_states)
    traj.meta["stream_id"] = stream.stream_id
    return traj


@dataclass
class CountingEnsemble:
    """Counting ensemble: recorded statistics plus all count times."""

    times: np.ndarray
    stats: dict[str, np.ndarray]
    jump_times: list[np.ndarray]
    stream_ids: np.ndarray
    dim: int
    meta: dict = field(default_factory=dict)

    def zero_count_fraction(self, t: float) -> tuple[float, float]:
        """Fraction of trajectories without a count in ``[0, t]`` and its binomial error."""
        n = len(self.jump_times)
        k = sum(1 for jt in self.jump_times if jt.size == 0 or jt[0] > t + 1e-12)
        p = k / n
        return p, float(np.sqrt(p * (1 - p) / n))

    def min_counts(self) -> int:
        return min(jt.size for jt in self.jump_times)


def run_counting_ensemble(
    initial: InitialState,
    params: ModelParams,
    grid: TimeGrid,
    seed: int,
    n_trajectories: int,
    *,
    stride: int = 1,
    dim: int | None = None,
    check_grid: bool = True,
) -> CountingEnsemble:
    dim = _dim_for(initial, params, dim)
    phi0 = states.build_initial(initial, dim)
    if check_grid:
        _check_grid(params, grid)
        _check_jump_rate(phi0, params, grid)
    rec_idx = _record_indices(grid.n_steps, stride)
    tables = _nocount_tables(params, grid, dim)
    stats = {k: np.empty((n_trajectories, len(rec_idx))) for k in (*OBSERVABLES, "norm2_log")}
    all_jumps = []
    for i in range(n_trajectories):
        rows, row_log, jump_idx = _counting_core(phi0, params, grid, UniformStream(seed, i), rec_idx, tables, False)
        ro = fock.readout(rows)
        for key in OBSERVABLES:
            stats[key][i] = ro[key]
        stats["norm2_log"][i] = np.log(ro["norm2"]) + row_log
        all_jumps.append(grid.times[np.array(jump_idx, dtype=int)])
    return CountingEnsemble(grid.times[rec_idx], stats, all_jumps, np.arange(n_trajectories), dim, {"seed": seed})


def run_counting_linear(
    initial: InitialState,
    params: ModelParams,
    grid: TimeGrid,
    counts: np.ndarray,
    *,
    dim: int | None = None,
    scheme: str = "exponential",
) -> dict[str, np.ndarray]:
    """Linear counting filter driven by reference count indicators.

    ``d phi = -(K - mu/2) phi dt + (a - 1) phi dN``; a count replaces
    ``phi`` by ``a phi``. ``counts`` is a boolean array of shape
    ``(n_steps,)`` or ``(M, n_steps)``. Returns the final states and
    ``log ||phi(t_k)||^2`` at every grid point, shape ``(M, n_steps + 1)``.
    """
    _check_scheme(scheme)
    counts = np.atleast_2d(np.asarray(counts, dtype=bool))
    if counts.shape[1] != grid.n_steps:
        raise GridError(f"count path has {counts.shape[1]} steps for a {grid.n_steps}-step grid")
    dim = _dim_for(initial, params, dim)
    phi = np.tile(states.build_initial(initial, dim), (counts.shape[0], 1))
    gen = fock.k_diagonal(params, dim) - 0.5 * params.mu
    prop = np.exp(-gen * grid.dt)
    log_scale = np.zeros(counts.shape[0])
    norm_log = np.empty((counts.shape[0], grid.n_steps + 1))
    norm_log[:, 0] = np.log(np.sum(np.abs(phi) ** 2, axis=1))
    for k in range(grid.n_steps):
        dn = counts[:, k][:, None]
        if scheme == "exponential":
            phi = prop * np.where(dn, fock.apply_a(phi), phi)
        else:
            phi = phi - gen * phi * grid.dt + np.where(dn, fock.apply_a(phi) - phi, 0)
        n2 = np.sum(np.abs(phi) ** 2, axis=1)
        ok = n2 > 0
        lg = np.full_like(n2, -np.inf)
        lg[ok] = np.log(n2[ok])
        norm_log[:, k + 1] = lg + log_scale
        off = ok & ((n2 < RENORM_LOW) | (n2 > RENORM_HIGH))
        phi[off] /= np.sqrt(n2[off])[:, None]
        log_scale[off] += np.log(n2[off])
    return {"states": phi * np.exp(0.5 * log_scale)[:, None], "norm2_log": norm_log}


# -- comparison --------------------------------------------------------------


@dataclass
class ErrorReport:
    max_dev: dict[str, float]
    rms_dev: dict[str, float]
    tolerances: dict[str, float]

    @property
    def exceeded(self) -> dict[str, bool]:
        return {k: self.max_dev[k] > tol for k, tol in self.tolerances.items() if k in self.max_dev}

    @property
    def passed(self) -> bool:
        return not any(self.exceeded.values())

    def to_dict(self) -> dict:
        return {
            "max_dev": self.max_dev,
            "rms_dev": self.rms_dev,
            "tolerances": self.tolerances,
            "exceeded": self.exceeded,
            "passed": self.passed,
        }


def compare_to_analytic(traj, oracle: dict, tolerances: dict[str, float] | None = None) -> ErrorReport:
    """Max and RMS deviations of each observable present in both series.

    ``traj`` is a :class:`Trajectory` or a series dict with key ``"t"``.
    """
    series = traj.series() if isinstance(traj, Trajectory) else traj
    t_num, t_ref = np.asarray(series["t"]), np.asarray(oracle["t"])
    if t_num.shape != t_ref.shape or not np.allclose(t_num, t_ref, rtol=0, atol=1e-12):
        raise GridError("trajectory and oracle are sampled on different grids")
    tolerances = dict(tolerances or {k: 1e-2 for k in OBSERVABLES})
    max_dev, rms_dev = {}, {}
    for key in OBSERVABLES:
        if key in series and key in oracle:
            d = np.abs(np.asarray(series[key]) - np.asarray(oracle[key]))
            max_dev[key] = float(d.max())
            rms_dev[key] = float(np.sqrt(np.mean(d**2)))
    return ErrorReport(max_dev, rms_dev, tolerances)


def state_error(numerical: np.ndarray, reference: np.ndarray) -> float:
    """``max_t ||phi_num(t) - phi_ref(t)|| / ||phi_ref(t)||`` over aligned state series."""
    if numerical.shape != reference.shape:
        raise GridError(f"state series shapes differ: {numerical.shape} vs {reference.shape}")
    num = np.linalg.norm(numerical - reference, axis=-1)
    return float(np.max(num / np.linalg.norm(reference, axis=-1)))


def min_fidelity(numerical: np.ndarray, reference: np.ndarray) -> float:
    """Smallest fidelity between normalized states over aligned series."""
    ov = np.abs(np.sum(numerical.conj() * reference, axis=-1)) ** 2
    n1 = np.sum(np.abs(numerical) ** 2, axis=-1)
    n2 = np.sum(np.abs(reference) ** 2, axis=-1)
    return float(np.min(ov / (n1 * n2)))
