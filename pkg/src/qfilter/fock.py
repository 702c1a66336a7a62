"""Truncated Fock-space algebra for a single bosonic mode.

States are complex 1-D numpy arrays of length ``dim`` holding the amplitudes
``<k|phi>`` for ``k = 0 .. dim-1``; operators are dense ``dim x dim`` complex
arrays. States are allowed to be unnormalized: every posterior quantity is
computed as a ratio ``<phi|Z|phi> / <phi|phi>``.

hbar is fixed to 1, so ``H = omega * (n + 1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateStateError,
    DimensionMismatchError,
    InvalidDimensionError,
    NumericalInconsistencyError,
)

HBAR = 1.0
NORMALIZED_TOL = 1e-10
TAIL_MASS_TOL = 1e-10
VARIANCE_CLAMP = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the damped oscillator.

    Attributes:
        omega: angular frequency.
        mu: damping / measurement coupling rate, ``mu >= 0``.
        dim: Fock truncation, or ``None`` to size it from the initial state.
    """

    omega: float
    mu: float
    dim: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise ValueError("mu must be finite and non-negative")
        if self.dim is not None:
            _check_dim(self.dim)


def _check_dim(dim) -> int:
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"Fock dimension must be an integer >= 2, got {dim!r}")
    return int(dim)


def make_ladder(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Return the truncated annihilation and creation matrices ``(a, a_dag)``."""
    dim = _check_dim(dim)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return a, a.conj().T.copy()


def number_op(dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def identity(dim: int) -> np.ndarray:
    return np.eye(_check_dim(dim), dtype=complex)


def make_quadratures(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``X = (a + a_dag)/2`` and ``Y = (a - a_dag)/(2i)``."""
    a, ad = make_ladder(dim)
    return 0.5 * (a + ad), (a - ad) / 2j


def hamiltonian(params: ModelParams, dim: int) -> np.ndarray:
    return params.omega * (number_op(dim) + 0.5 * identity(dim)) / HBAR


def k_diagonal(params: ModelParams, dim: int) -> np.ndarray:
    """Diagonal of ``K = iH + (mu/2) n``; K is diagonal in the Fock basis."""
    n = np.arange(_check_dim(dim), dtype=float)
    return 1j * params.omega * (n + 0.5) + 0.5 * params.mu * n


def fock_state(k: int, dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    if not 0 <= k < dim:
        raise InvalidDimensionError(f"Fock level {k} outside 0..{dim - 1}")
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return v


# -- vector algebra ---------------------------------------------------------


def _same_dim(u, v):
    if u.shape[-1] != v.shape[-1]:
        raise DimensionMismatchError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")


def inner(u: np.ndarray, v: np.ndarray) -> complex:
    """``<u|v>``, conjugate-linear in ``u``."""
    _same_dim(u, v)
    return complex(np.vdot(u, v))


def norm2(u: np.ndarray) -> float:
    return float(np.vdot(u, u).real)


def scale_add(c: complex, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``c*u + v``."""
    _same_dim(u, v)
    return c * u + v


def tail_mass(phi: np.ndarray, levels: int = 2) -> float:
    """Unnormalized weight on the top ``levels`` Fock levels."""
    return float(np.sum(np.abs(phi[..., -levels:]) ** 2))


def relative_tail_mass(phi: np.ndarray, levels: int = 2) -> float:
    n2 = norm2(phi)
    if n2 <= 0:
        raise DegenerateStateError("zero-norm state has no tail mass ratio")
    return tail_mass(phi, levels) / n2


def normalize(phi: np.ndarray) -> np.ndarray:
    n2 = norm2(phi)
    if not n2 > 0:
        raise DegenerateStateError("cannot normalize a zero-norm state")
    return phi / np.sqrt(n2)


def is_normalized(phi: np.ndarray, tol: float = NORMALIZED_TOL) -> bool:
    return abs(norm2(phi) - 1.0) <= tol


def fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """``|<u|v>|^2 / (<u|u><v|v>)`` for possibly unnormalized states."""
    _same_dim(u, v)
    nu, nv = norm2(u), norm2(v)
    if nu <= 0 or nv <= 0:
        raise DegenerateStateError("fidelity undefined for a zero-norm state")
    return abs(np.vdot(u, v)) ** 2 / (nu * nv)


# -- posterior statistics ----------------------------------------------------


def expectation(Z: np.ndarray, phi: np.ndarray) -> complex:
    """Posterior mean ``<phi|Z|phi> / <phi|phi>`` of operator ``Z``."""
    if Z.shape != (phi.shape[0], phi.shape[0]):
        raise DimensionMismatchError(f"operator {Z.shape} does not act on dim {phi.shape[0]}")
    n2 = norm2(phi)
    if not n2 > 0:
        raise DegenerateStateError("expectation of a zero-norm state")
    return complex(np.vdot(phi, Z @ phi) / n2)


def _checked_sqrt(var):
    var = np.asarray(var, dtype=float)
    if np.any(var < -VARIANCE_CLAMP):
        raise NumericalInconsistencyError(f"negative variance {var.min():.3e}")
    return np.sqrt(np.clip(var, 0.0, None))


def uncertainty(Z: np.ndarray, phi: np.ndarray) -> float:
    """Standard deviation ``sqrt(<Z^2> - <Z>^2)`` of a Hermitian operator."""
    mean = expectation(Z, phi).real
    second = expectation(Z @ Z, phi).real
    return float(_checked_sqrt(second - mean**2))


# Fast batched readout used by the trajectory engines. Works on arrays of shape
# (..., dim) without forming matrices, so results do not depend on BLAS
# threading.


def apply_a(phi: np.ndarray) -> np.ndarray:
    dim = phi.shape[-1]
    out = np.zeros_like(phi)
    out[..., :-1] = np.sqrt(np.arange(1, dim)) * phi[..., 1:]
    return out


def apply_adag(phi: np.ndarray) -> np.ndarray:
    dim = phi.shape[-1]
    out = np.zeros_like(phi)
    out[..., 1:] = np.sqrt(np.arange(1, dim)) * phi[..., :-1]
    return out


def readout(phi: np.ndarray) -> dict[str, np.ndarray]:
    """Posterior ``<X>, <Y>, <n>, dX, dY`` and ``<a>`` for a batch of states.

    Matches ``expectation`` / ``uncertainty`` with the truncated X, Y
    matrices exactly (up to round-off), including the truncation defect.
    """
    dim = phi.shape[-1]
    n2 = np.sum(np.abs(phi) ** 2, axis=-1)
    if np.any(~(n2 > 0)):
        raise DegenerateStateError("readout of a zero-norm state")
    aphi = apply_a(phi)
    adphi = apply_adag(phi)
    mean_a = np.sum(phi.conj() * aphi, axis=-1) / n2
    mean_n = np.sum(np.arange(dim) * np.abs(phi) ** 2, axis=-1) / n2
    xphi = 0.5 * (aphi + adphi)
    yphi = (aphi - adphi) / 2j
    x2 = np.sum(np.abs(xphi) ** 2, axis=-1) / n2
    y2 = np.sum(np.abs(yphi) ** 2, axis=-1) / n2
    mx, my = mean_a.real, mean_a.imag
    return {
        "mean_a": mean_a,
        "mean_x": mx,
        "mean_y": my,
        "mean_n": mean_n,
        "dx": _checked_sqrt(x2 - mx**2),
        "dy": _checked_sqrt(y2 - my**2),
        "norm2": n2,
    }
