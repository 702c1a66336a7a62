"""Initial-state families, displacement and squeeze operators.

Conventions: ``xi = rho * exp(i theta)``,
``S(xi) = exp(xi* a^2 / 2 - xi a_dag^2 / 2)``, ``D(alpha) = exp(alpha a_dag - alpha* a)``
and the squeezed coherent state is ``S(xi) D(alpha) |0> = S(xi) |alpha>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fock
from .errors import TruncationError, UndefinedStateError

# Auto-sizing rule for coherent and cat states: dim >= |a|^2 + 10|a| + 20.
COHERENT_DIM_QUADRATIC = 1.0
COHERENT_DIM_LINEAR = 10.0
COHERENT_DIM_OFFSET = 20.0
# Squeezed families start from 26 / (-ln tanh rho) levels plus the coherent
# rule applied to |alpha| e^rho, then grow in steps of DIM_STEP until the
# tail-mass check passes.
SQUEEZE_DIM_DECADES = 26.0
DIM_STEP = 8
MAX_DIM = 1024

SQUEEZE_SELFTEST_TOL = 1e-8
# Column tail allowed when sizing a working space for operator identities.
WORK_TAIL_TOL = 1e-14


def _wrap_phase(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    t = math.remainder(theta, 2 * math.pi)
    return math.pi if t == -math.pi else t


@dataclass(frozen=True)
class SqueezeParams:
    rho: float
    theta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise ValueError(f"squeeze magnitude must be >= 0, got {self.rho}")
        object.__setattr__(self, "theta", _wrap_phase(float(self.theta)))

    @property
    def xi(self) -> complex:
        return self.rho * np.exp(1j * self.theta)

    @property
    def gamma(self) -> complex:
        """``exp(i theta) tanh(rho)``, the normal-ordering coefficient."""
        return np.exp(1j * self.theta) * np.tanh(self.rho)


# -- initial-state tagged union ---------------------------------------------


@dataclass(frozen=True)
class Vacuum:
    family = "vacuum"


@dataclass(frozen=True)
class Coherent:
    alpha: complex
    family = "coherent"


@dataclass(frozen=True)
class CatEven:
    alpha: complex
    family = "cat_even"


@dataclass(frozen=True)
class CatOdd:
    alpha: complex
    family = "cat_odd"

    def __post_init__(self):
        if self.alpha == 0:
            raise UndefinedStateError("odd cat state is undefined at alpha = 0")


@dataclass(frozen=True)
class SqueezedVacuum:
    squeeze: SqueezeParams
    family = "squeezed_vacuum"


@dataclass(frozen=True)
class SqueezedCoherent:
    squeeze: SqueezeParams
    alpha: complex
    family = "squeezed_coherent"


InitialState = Vacuum | Coherent | CatEven | CatOdd | SqueezedVacuum | SqueezedCoherent


def state_alpha(state: InitialState) -> complex:
    return complex(getattr(state, "alpha", 0.0))


def state_squeeze(state: InitialState) -> SqueezeParams:
    return getattr(state, "squeeze", SqueezeParams(0.0, 0.0))


# -- amplitudes ----------------------------------------------------------------


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """``exp(-|a|^2/2) a^k / sqrt(k!)`` by stable recursion, no tail check."""
    amps = np.empty(dim, dtype=complex)
    amps[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for k in range(1, dim):
        amps[k] = amps[k - 1] * alpha / np.sqrt(k)
    return amps


def gaussian_amplitudes(z: complex, b: complex, c: complex, dim: int) -> np.ndarray:
    """Fock amplitudes of ``c * exp(-z a_dag^2 / 2 + b a_dag) |0>``.

    Uses ``a psi = (b - z a_dag) psi``, i.e.
    ``sqrt(k+1) psi[k+1] = b psi[k] - z sqrt(k) psi[k-1]``.
    """
    psi = np.zeros(dim, dtype=complex)
    psi[0] = c
    if dim > 1:
        psi[1] = b * c
    for k in range(1, dim - 1):
        psi[k + 1] = (b * psi[k] - z * np.sqrt(k) * psi[k - 1]) / np.sqrt(k + 1)
    return psi


def squeezed_coherent_amplitudes(xi: SqueezeParams, alpha: complex, dim: int) -> np.ndarray:
    """Direct amplitudes of ``S(xi)|alpha>`` (independent of any matrix exponential)."""
    ch = np.cosh(xi.rho)
    g = xi.gamma
    c = ch**-0.5 * np.exp(0.5 * np.conj(g) * alpha**2 - 0.5 * abs(alpha) ** 2)
    return gaussian_amplitudes(g, alpha / ch, c, dim)


# -- dimension sizing ----------------------------------------------------------


def coherent_dim_rule(alpha: complex) -> int:
    r = abs(alpha)
    return max(8, math.ceil(COHERENT_DIM_QUADRATIC * r * r + COHERENT_DIM_LINEAR * r + COHERENT_DIM_OFFSET))


def _squeeze_dim_start(xi: SqueezeParams, alpha: complex) -> int:
    t = np.tanh(xi.rho)
    base = 0 if t == 0 else math.ceil(SQUEEZE_DIM_DECADES / -math.log(t))
    return base + coherent_dim_rule(abs(alpha) * math.exp(xi.rho))


def _family_amplitudes(state: InitialState, dim: int) -> np.ndarray:
    alpha = state_alpha(state)
    if isinstance(state, (SqueezedVacuum, SqueezedCoherent)):
        return squeezed_coherent_amplitudes(state.squeeze, alpha, dim)
    return coherent_amplitudes(alpha, dim)


def auto_dim(state: InitialState) -> int:
    """Smallest dimension at or above the family sizing rule that passes the tail check."""
    if isinstance(state, Vacuum):
        return 8
    if isinstance(state, (SqueezedVacuum, SqueezedCoherent)):
        dim = _squeeze_dim_start(state.squeeze, state_alpha(state))
    else:
        dim = coherent_dim_rule(state_alpha(state))
    dim = DIM_STEP * math.ceil(dim / DIM_STEP)
    while dim <= MAX_DIM:
        if fock.tail_mass(_family_amplitudes(state, dim)) <= fock.TAIL_MASS_TOL / 10:
            return dim
        dim += DIM_STEP
    raise TruncationError(f"{state} needs more than {MAX_DIM} Fock levels")


def _required_dim(state: InitialState) -> int | None:
    try:
        return auto_dim(state)
    except TruncationError:
        return None


def _verify(phi: np.ndarray, state: InitialState) -> np.ndarray:
    tm = fock.tail_mass(phi)
    if tm > fock.TAIL_MASS_TOL or not fock.is_normalized(phi):
        need = _required_dim(state)
        raise TruncationError(
            f"dim={phi.shape[0]} too small for {state}: tail mass {tm:.2e}; use dim >= {need}",
            required_dim=need,
        )
    return phi


# -- public constructors -----------------------------------------------------


def coherent(alpha: complex, dim: int | None = None) -> np.ndarray:
    """Coherent state ``|alpha>`` truncated to ``dim`` levels.

    With ``dim=None`` the dimension comes from :func:`coherent_dim_rule`.
    Raises :class:`TruncationError` (naming the required dim) if the top two
    levels carry more than 1e-10 of the weight.
    """
    if dim is None:
        dim = auto_dim(Coherent(alpha))
    dim = fock._check_dim(dim)
    return _verify(coherent_amplitudes(complex(alpha), dim), Coherent(alpha))


def displacement(alpha: complex, dim: int) -> np.ndarray:
    """``D(alpha)`` as the matrix exponential of the truncated generator.

    Kept for cross-checks; coherent states are built from amplitudes.
    """
    a, ad = fock.make_ladder(dim)
    return scipy.linalg.expm(alpha * ad - np.conj(alpha) * a)


def squeeze_normal_ordered(xi: SqueezeParams, dim: int) -> np.ndarray:
    """``S(xi)`` from its normal-ordered factorization.

    ``cosh(rho)^-1/2 exp(-G a_dag^2/2) exp(-ln cosh(rho) n) exp(G* a^2/2)``
    with ``G = e^{i theta} tanh rho``. All three factors are exact on the
    truncated space (the outer ones are nilpotent polynomials and only
    visit levels below ``min(m, k)``), so every returned entry equals the
    corresponding entry of the infinite-dimensional operator.
    """
    dim = fock._check_dim(dim)
    g = xi.gamma
    ch = np.cosh(xi.rho)
    right = _pair_exponential(0.5 * np.conj(g), dim)
    left = _pair_exponential(-0.5 * g, dim).T
    middle = ch ** (-np.arange(dim, dtype=float))
    return ch**-0.5 * (left * middle) @ right


def _pair_exponential(c: complex, dim: int) -> np.ndarray:
    """``exp(c a^2)`` on ``dim`` levels (upper triangular, exact).

    Entry ``(m, m + 2j)`` is ``c^j / j! * sqrt((m + 2j)! / m!)``.
    """
    out = np.eye(dim, dtype=complex)
    if c == 0:
        return out
    diag = np.ones(dim, dtype=complex)
    for j in range(1, (dim + 1) // 2):
        rows = np.arange(dim - 2 * j)
        # entry (m, m + 2j) from entry (m, m + 2j - 2)
        diag = diag[: dim - 2 * j] * c * np.sqrt((rows + 2 * j) * (rows + 2 * j - 1.0)) / j
        out[rows, rows + 2 * j] = diag
    return out


def squeeze_expm(xi: SqueezeParams, dim: int) -> np.ndarray:
    a, ad = fock.make_ladder(dim)
    return scipy.linalg.expm(0.5 * np.conj(xi.xi) * (a @ a) - 0.5 * xi.xi * (ad @ ad))


def squeeze_selftest(xi: SqueezeParams, dim: int, tol: float = SQUEEZE_SELFTEST_TOL) -> float:
    """Max entrywise gap between the two constructions on block ``0..dim/2``.

    The exponential is evaluated on a padded working space grown until the
    block has converged, then cropped.
    """
    block = dim // 2 + 1
    ref = squeeze_normal_ordered(xi, dim)[:block, :block]
    work = dim
    gap = np.inf
    while work <= MAX_DIM:
        gap = float(np.abs(squeeze_expm(xi, work)[:block, :block] - ref).max())
        if gap <= tol:
            return gap
        work = int(work * 1.5) + DIM_STEP
    raise TruncationError(
        f"squeeze constructions disagree by {gap:.2e} on block 0..{block - 1} "
        f"(rho={xi.rho}); working space would exceed {MAX_DIM}"
    )


def squeeze(xi: SqueezeParams, dim: int, selftest: bool = True) -> np.ndarray:
    """Squeeze operator ``S(xi)`` on ``dim`` levels.

    The returned matrix is the normal-ordered construction. With
    ``selftest`` (the default) it is first checked against the matrix
    exponential to 1e-8 on the lower half-block; a failure raises
    :class:`TruncationError`.
    """
    if selftest:
        squeeze_selftest(xi, dim)
    return squeeze_normal_ordered(xi, dim)


def work_dim_for_block(xi: SqueezeParams, block: int, start: int) -> int:
    """Working dimension in which the first ``block`` columns of ``S(xi)`` have converged."""
    work = max(start, block + DIM_STEP)
    while work <= MAX_DIM:
        s = squeeze_normal_ordered(xi, work)
        if np.sum(np.abs(s[-2:, :block]) ** 2, axis=0).max() <= WORK_TAIL_TOL:
            return work
        work = int(work * 1.5) + DIM_STEP
    raise TruncationError(f"no working space up to {MAX_DIM} resolves block {block} at rho={xi.rho}")


def _lower_twice(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    n = np.arange(v.shape[0] - 2)
    out[:-2] = np.sqrt((n + 1) * (n + 2)) * v[2:]
    return out


def _raise_twice(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    n = np.arange(v.shape[0] - 2)
    out[2:] = np.sqrt((n + 1) * (n + 2)) * v[:-2]
    return out


def _apply_series(step, coeff: complex, v: np.ndarray) -> np.ndarray:
    """``exp(coeff * M) v`` for a nilpotent ``M`` given as the map ``step``."""
    out = v.copy()
    term = v
    for j in range(1, v.shape[0]):
        term = coeff * step(term) / j
        if not term.any():
            break
        out = out + term
    return out


def apply_squeeze(xi: SqueezeParams, phi: np.ndarray) -> np.ndarray:
    """``S(xi) phi`` on ``len(phi)`` levels, equal to ``squeeze_normal_ordered(xi, dim) @ phi``.

    The three normal-ordered factors act on the vector directly. Entries of
    the operator are exact, so the only truncation error comes from weight
    of ``phi`` itself near the top level.
    """
    if xi.rho == 0:
        return phi.copy()
    phi = np.asarray(phi, dtype=complex)
    g = xi.gamma
    ch = np.cosh(xi.rho)
    v = _apply_series(_lower_twice, 0.5 * np.conj(g), phi)
    v = v * ch ** (-np.arange(phi.shape[0], dtype=float))
    return ch**-0.5 * _apply_series(_raise_twice, -0.5 * g, v)


def build_initial(state: InitialState, dim: int | None = None) -> np.ndarray:
    """Normalized Fock vector for any initial-state family."""
    if dim is None:
        dim = auto_dim(state)
    dim = fock._check_dim(dim)
    alpha = state_alpha(state)
    if isinstance(state, Vacuum):
        phi = fock.fock_state(0, dim)
    elif isinstance(state, Coherent):
        phi = coherent_amplitudes(alpha, dim)
    elif isinstance(state, (CatEven, CatOdd)):
        sign = 1.0 if isinstance(state, CatEven) else -1.0
        norm = np.sqrt(2 * (1 + sign * np.exp(-2 * abs(alpha) ** 2)))
        if norm == 0:
            raise UndefinedStateError("odd cat state is undefined at alpha = 0")
        phi = (coherent_amplitudes(alpha, dim) + sign * coherent_amplitudes(-alpha, dim)) / norm
    elif isinstance(state, (SqueezedVacuum, SqueezedCoherent)):
        pad = coherent_dim_rule(alpha)
        phi = apply_squeeze(state.squeeze, coherent_amplitudes(alpha, dim + pad))[:dim]
    else:
        raise TypeError(f"unknown initial state {state!r}")
    return _verify(phi, state)


# -- alpha <-> beta convention -------------------------------------------------


def alpha_to_beta(xi: SqueezeParams, alpha: complex) -> complex:
    """Map ``S(xi)D(alpha)|0>`` to the equivalent ``D(beta)S(xi)|0>``."""
    return alpha * np.cosh(xi.rho) - np.conj(alpha) * np.exp(1j * xi.theta) * np.sinh(xi.rho)


def beta_to_alpha(xi: SqueezeParams, beta: complex) -> complex:
    return beta * np.cosh(xi.rho) + np.conj(beta) * np.exp(1j * xi.theta) * np.sinh(xi.rho)


alpha_beta_convert = alpha_to_beta


# -- operator identities -------------------------------------------------------


@dataclass
class IdentityResiduals:
    """Spectral-norm residuals of the unitary-transformation identities."""

    block: int
    work_dim: int
    residuals: dict[str, float] = field(default_factory=dict)

    def max(self) -> float:
        return max(self.residuals.values())


def transformation_residuals(xi: SqueezeParams, dim: int) -> IdentityResiduals:
    """Check the four ``S^dag (.) S`` identities on the block ``0..dim/2``.

    Operators are built on a working space large enough that the block has
    converged, then cropped.
    """
    block = dim // 2 + 1
    work = work_dim_for_block(xi, block, dim)
    s = squeeze_normal_ordered(xi, work)
    sd = s.conj().T
    a, ad = fock.make_ladder(work)
    n = ad @ a
    one = np.eye(work)
    ch, sh = np.cosh(xi.rho), np.sinh(xi.rho)
    e = np.exp(1j * xi.theta)
    expected = {
        "a": a * ch - ad * e * sh,
        "a_dag": ad * ch - a * np.conj(e) * sh,
        "a_dag^2": (ad @ ad) * ch**2 - (2 * n + one) * np.conj(e) * sh * ch + (a @ a) * np.conj(e) ** 2 * sh**2,
        # the two truncated operators differ only at the top level
        "n": n * ch**2 + (n + one) * sh**2 - ((a @ a) * np.conj(e) + (ad @ ad) * e) * sh * ch,
    }
    ops = {"a": a, "a_dag": ad, "a_dag^2": ad @ ad, "n": n}
    out = IdentityResiduals(block=block, work_dim=work)
    for name, op in ops.items():
        diff = (sd @ op @ s - expected[name])[:block, :block]
        out.residuals[name] = float(np.linalg.norm(diff, 2))
    return out


def squeezed_eigen_residual(xi: SqueezeParams, alpha: complex, dim: int, sign: int = +1) -> float:
    """``||(a cosh rho + sign * a_dag e^{i theta} sinh rho - alpha)|xi,alpha>||``.

    ``sign=+1`` is the convention under which the residual vanishes.
    """
    phi = build_initial(SqueezedCoherent(xi, alpha), dim)
    g2 = sign * np.exp(1j * xi.theta) * np.sinh(xi.rho)
    r = fock.apply_a(phi) * np.cosh(xi.rho) + g2 * fock.apply_adag(phi) - alpha * phi
    # the top level of a_dag phi is cut by truncation
    return float(np.linalg.norm(r[:-1]))
