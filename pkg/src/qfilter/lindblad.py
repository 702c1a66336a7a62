"""Non-selective dynamics: the Lindblad master equation and ensemble averages.

Density matrices are plain ``(dim, dim)`` complex arrays. The generator is

    d rho/dt = -i[H, rho] + mu (a rho a^dag - (n rho + rho n)/2),

evaluated entrywise (H and n are diagonal), so no superoperator is formed.
On the truncated space ``a^dag a`` is exactly ``diag(0 .. dim-1)``, so the
trace is preserved to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fock
from .errors import GridError, IntegratorFailure
from .fock import ModelParams
from .noise import TimeGrid

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
EIGEN_TOL = 1e-8
STABILITY_STEP = 0.1
MIN_TRAJECTORIES = 100
MAX_MU_DT = 0.01


def density_from_state(phi: np.ndarray) -> np.ndarray:
    phi = fock.normalize(phi)
    return np.outer(phi, phi.conj())


def check_density(rho: np.ndarray, t: float | None = None, eigen: bool = True):
    """Raise :class:`IntegratorFailure` if ``rho`` is not a valid density matrix."""
    at = "" if t is None else f" at t={t:.6g}"
    herm = float(np.abs(rho - rho.conj().T).max())
    if herm > HERMITIAN_TOL:
        raise IntegratorFailure(f"Hermiticity defect {herm:.2e}{at}")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise IntegratorFailure(f"trace drifted to {tr.real:.12f}{at}")
    if eigen:
        lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
        if lo < -EIGEN_TOL:
            raise IntegratorFailure(f"negative eigenvalue {lo:.2e}{at}")


def lindblad_rhs(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    dim = rho.shape[0]
    n = np.arange(dim, dtype=float)
    energy = params.omega * (n + 0.5)
    out = -1j * (energy[:, None] - energy[None, :]) * rho
    out -= 0.5 * params.mu * (n[:, None] + n[None, :]) * rho
    s = np.sqrt(n[1:])
    out[:-1, :-1] += params.mu * s[:, None] * s[None, :] * rho[1:, 1:]
    return out


def _substeps(params: ModelParams, dim: int, dt: float) -> int:
    # largest generator eigenvalue modulus is bounded by the diagonal spread
    rate = abs(params.omega) * (dim - 1) + params.mu * (dim - 1)
    return max(1, int(np.ceil(rate * dt / STABILITY_STEP)))


def _rk4(rho, params, h):
    k1 = lindblad_rhs(rho, params)
    k2 = lindblad_rhs(rho + 0.5 * h * k1, params)
    k3 = lindblad_rhs(rho + 0.5 * h * k2, params)
    k4 = lindblad_rhs(rho + h * k3, params)
    return rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def master_means(rho: np.ndarray) -> tuple[float, float, float]:
    """``(<n>, <X>, <Y>)`` of a density matrix."""
    dim = rho.shape[0]
    mean_n = float(np.real(np.sum(np.arange(dim) * np.diag(rho))))
    mean_a = complex(np.sum(np.sqrt(np.arange(1, dim)) * np.diag(rho, k=-1)))
    return mean_n, mean_a.real, mean_a.imag


@dataclass
class MasterSolution:
    times: np.ndarray
    rhos: np.ndarray
    mean_n: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    substeps: int


def integrate_master(
    rho0: np.ndarray, params: ModelParams, grid: TimeGrid, stride: int = 1, check_every: int | None = None
) -> MasterSolution:
    """Classical fourth-order Runge-Kutta integration of the master equation.

    Each grid step is split into enough substeps that the stiffest mode
    moves at most 0.1 per substep. ``rho`` is re-Hermitized after every
    substep and its invariants are checked at the recorded times.
    """
    if params.mu * grid.dt > MAX_MU_DT * (1 + 1e-9):
        raise GridError(f"mu*dt = {params.mu * grid.dt:.3g} exceeds {MAX_MU_DT}")
    rho = np.array(rho0, dtype=complex)
    check_density(rho, 0.0)
    dim = rho.shape[0]
    sub = _substeps(params, dim, grid.dt)
    h = grid.dt / sub
    idx = np.arange(0, grid.n_steps + 1, stride)
    check_every = check_every or stride
    rhos = np.empty((len(idx), dim, dim), dtype=complex)
    rhos[0] = rho
    r = 1
    for k in range(1, grid.n_steps + 1):
        for _ in range(sub):
            rho = _rk4(rho, params, h)
            rho = 0.5 * (rho + rho.conj().T)
        if not np.all(np.isfinite(rho)):
            raise IntegratorFailure(f"non-finite density matrix at t={k * grid.dt:.6g}")
        if k % check_every == 0:
            check_density(rho, k * grid.dt)
        if r < len(idx) and idx[r] == k:
            rhos[r] = rho
            r += 1
    means = np.array([master_means(m) for m in rhos])
    return MasterSolution(grid.times[idx], rhos, means[:, 0], means[:, 1], means[:, 2], sub)


# -- ensembles -----------------------------------------------------------------


def jackknife_mean(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean over axis 0 and its leave-one-out jackknife standard error."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    total = values.sum(axis=0)
    loo = (total[None] - values) / (n - 1)
    mean = total / n
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return mean, se


@dataclass
class EnsembleAverage:
    times: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    n_trajectories: int


def ensemble_average(ensemble, keys=("mean_n", "mean_x", "mean_y")) -> EnsembleAverage:
    """Trajectory-averaged posterior means with jackknife errors.

    ``ensemble`` is an ensemble result (``.times`` and ``.stats``) or a list
    of trajectories sharing one time grid.
    """
    if isinstance(ensemble, (list, tuple)):
        times = ensemble[0].times
        for tr in ensemble[1:]:
            if tr.times.shape != times.shape or not np.allclose(tr.times, times, rtol=0, atol=1e-12):
                raise GridError("trajectories do not share a time grid")
        stats = {k: np.stack([getattr(tr, k) for tr in ensemble]) for k in keys}
    else:
        times, stats = ensemble.times, ensemble.stats
    n = next(iter(stats.values())).shape[0]
    if n < MIN_TRAJECTORIES:
        raise ValueError(f"ensemble of {n} trajectories; need at least {MIN_TRAJECTORIES}")
    mean, se = {}, {}
    for k in keys:
        mean[k], se[k] = jackknife_mean(stats[k])
    return EnsembleAverage(np.asarray(times), mean, se, n)
