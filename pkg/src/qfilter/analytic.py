"""Closed-form posterior and prior solutions of the oscillator filter.

Everything here is a pure function of the model parameters, the initial
state, the time and (for the diffusive scheme) a recorded noise path. These
functions are the oracle the stochastic integrators are checked against.

Stochastic integrals are left-point (Ito) sums on the path grid:
``int_0^{t_k} f(s) dW(s) -> sum_{j<k} f(t_j) dW_j``.

Where a closed form admits a plausible sign or phase variant, the variant
is kept as a separate helper (``*_sum_phase``, ``*_rotated_phase``,
``*_conjugate_phase``) so tests can show it disagrees with brute-force
expectations on assembled states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fock, states
from .errors import NoJumpPossibleError
from .fock import ModelParams
from .noise import NoisePath
from .states import (
    CatEven,
    CatOdd,
    Coherent,
    InitialState,
    SqueezedCoherent,
    SqueezedVacuum,
    SqueezeParams,
    Vacuum,
)

ARCTANH_CLAMP = 1.0 - 1e-15


def _decay_rate(params: ModelParams) -> complex:
    return 1j * params.omega + 0.5 * params.mu


def _arctanh(x):
    x = np.clip(x, -ARCTANH_CLAMP, ARCTANH_CLAMP)
    return 0.5 * np.log((1 + x) / (1 - x))


def _left_sums(values: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """Cumulative Ito sums: ``out[k] = sum_{j<k} values[j] * dW[j]``, ``out[0] = 0``."""
    out = np.zeros(dW.shape[0] + 1, dtype=complex)
    np.cumsum(values[: dW.shape[0]] * dW, out=out[1:])
    return out


def alpha_decay(alpha0: complex, params: ModelParams, t) -> complex:
    """Coherent amplitude ``alpha exp(-(i omega + mu/2) t)``."""
    return alpha0 * np.exp(-_decay_rate(params) * np.asarray(t))


# -- coherent and cat states, diffusive observation ---------------------------


@dataclass(frozen=True)
class DiffusiveCoefficients:
    """Parameters of a preserved Gaussian posterior ``G S(xi(t)) |alpha(t)>``.

    For coherent and cat solutions ``rho_t = 0`` and ``chi_t`` holds the
    stochastic integral ``sqrt(mu) int alpha(s) dW(s)``.
    """

    t: float
    alpha_t: complex
    rho_t: float
    theta_t: float
    logG_t: complex
    chi_t: complex

    @property
    def squeeze(self) -> SqueezeParams:
        return SqueezeParams(self.rho_t, self.theta_t)


def coherent_chi_series(alpha0: complex, params: ModelParams, path: NoisePath) -> np.ndarray:
    """``chi(t_k) = sqrt(mu) sum_{j<k} alpha(t_j) dW_j`` at every grid point."""
    a = alpha_decay(alpha0, params, path.grid.times)
    return np.sqrt(params.mu) * _left_sums(a, path.dW)


def coherent_coeffs(alpha0: complex, params: ModelParams, path: NoisePath, t: float) -> DiffusiveCoefficients:
    k = path.grid.index(t)
    tk = path.grid.times[k]
    chi = coherent_chi_series(alpha0, params, path)[k]
    log_g = -0.5j * params.omega * tk + 0.5 * abs(alpha0) ** 2 * np.expm1(-params.mu * tk) + chi
    return DiffusiveCoefficients(tk, complex(alpha_decay(alpha0, params, tk)), 0.0, 0.0, complex(log_g), complex(chi))


def coherent_diffusive(alpha0: complex, params: ModelParams, path: NoisePath, t: float, dim: int | None = None) -> np.ndarray:
    """Unnormalized posterior ``g(t)|alpha(t)>`` for an initial coherent state."""
    c = coherent_coeffs(alpha0, params, path, t)
    dim = dim or params.dim or states.auto_dim(Coherent(alpha0))
    return np.exp(c.logG_t) * states.coherent_amplitudes(c.alpha_t, dim)


def _cat_sign(parity) -> float:
    if parity in (+1, "even", "+"):
        return 1.0
    if parity in (-1, "odd", "-"):
        return -1.0
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def cat_diffusive(alpha0: complex, parity, params: ModelParams, path: NoisePath, t: float, dim: int | None = None) -> np.ndarray:
    """Exact two-branch posterior ``kappa (e^chi |a(t)> +- e^-chi |-a(t)>)``.

    The branch overlap is kept; nothing is approximated.
    """
    sign = _cat_sign(parity)
    c = coherent_coeffs(alpha0, params, path, t)
    dim = dim or params.dim or states.auto_dim(CatEven(alpha0))
    norm = np.sqrt(2 * (1 + sign * np.exp(-2 * abs(alpha0) ** 2)))
    log_kappa = c.logG_t - c.chi_t - np.log(norm)
    plus = states.coherent_amplitudes(c.alpha_t, dim)
    minus = states.coherent_amplitudes(-c.alpha_t, dim)
    return np.exp(log_kappa + c.chi_t) * plus + sign * np.exp(log_kappa - c.chi_t) * minus


def cat_posterior_stats(alpha0: complex, params: ModelParams, chi: complex, t: float):
    """Even-cat posterior ``(<X>, <Y>, dX, dY)`` with the branch overlap neglected.

    Valid for ``|alpha| >> 1`` and ``t << 1/mu``; evaluated unconditionally.
    """
    a = alpha_decay(alpha0, params, t)
    th = np.tanh(2 * np.real(chi))
    mx, my = a.real * th, a.imag * th
    dx = np.sqrt(0.25 + a.real**2 * (1 - th**2))
    dy = np.sqrt(0.25 + a.imag**2 * (1 - th**2))
    return float(mx), float(my), float(dx), float(dy)


# -- squeezed coherent state, diffusive observation ----------------------------


def squeezed_coeff_series(xi0: SqueezeParams, alpha0: complex, params: ModelParams, path: NoisePath) -> dict[str, np.ndarray]:
    """All Gaussian coefficients at every grid point of ``path``.

    ``alpha(t)`` contains the Ito integral of ``exp(-(i omega + mu/2) s) dW``;
    ``log G`` contains both its stochastic and its ordinary integral.
    """
    t = path.grid.times
    dt = path.grid.dt
    lam = _decay_rate(params)
    mu = params.mu
    rho, theta = xi0.rho, xi0.theta
    theta_t = theta - 2 * params.omega * t
    rho_t = _arctanh(np.exp(-mu * t) * np.tanh(rho))
    ch, ch_t, sh_t = np.cosh(rho), np.cosh(rho_t), np.sinh(rho_t)
    drive = _left_sums(np.exp(-lam * t), path.dW)
    alpha_t = np.exp(-lam * t) * (ch_t / ch) * (alpha0 - np.sqrt(mu) * np.exp(1j * theta) * np.sinh(rho) * drive)
    stoch = np.sqrt(mu) * _left_sums(alpha_t * ch_t, path.dW)
    ordinary = np.zeros_like(stoch)
    np.cumsum((mu * np.exp(-1j * theta_t) * alpha_t**2 * sh_t * ch_t)[:-1] * dt, out=ordinary[1:])
    log_g = (
        0.5 * np.log(ch_t / ch)
        - 0.5j * params.omega * t
        + 0.5 * (np.abs(alpha_t) ** 2 - abs(alpha0) ** 2)
        + stoch
        + ordinary
    )
    return {"t": t, "alpha_t": alpha_t, "rho_t": rho_t, "theta_t": theta_t, "logG_t": log_g, "chi_t": stoch}


def squeezed_coeffs(xi0: SqueezeParams, alpha0: complex, params: ModelParams, path: NoisePath, t: float) -> DiffusiveCoefficients:
    k = path.grid.index(t)
    s = squeezed_coeff_series(xi0, alpha0, params, path)
    return DiffusiveCoefficients(
        float(s["t"][k]),
        complex(s["alpha_t"][k]),
        float(s["rho_t"][k]),
        float(s["theta_t"][k]),
        complex(s["logG_t"][k]),
        complex(s["chi_t"][k]),
    )


def squeezed_diffusive_state(coeffs: DiffusiveCoefficients, dim: int) -> np.ndarray:
    """Assemble ``G S(xi(t)) |alpha(t)>`` on ``dim`` levels."""
    pad = states.coherent_dim_rule(coeffs.alpha_t)
    coh = states.coherent_amplitudes(coeffs.alpha_t, dim + pad)
    phi = states.apply_squeeze(coeffs.squeeze, coh)[:dim]
    return np.exp(coeffs.logG_t) * phi


def squeezed_posterior_means(coeffs: DiffusiveCoefficients) -> tuple[float, float]:
    a, r, th = coeffs.alpha_t, coeffs.rho_t, coeffs.theta_t
    mx = np.real(a * np.cosh(r) - np.conj(a) * np.exp(1j * th) * np.sinh(r))
    my = np.imag(a * np.cosh(r) + a * np.exp(-1j * th) * np.sinh(r))
    return float(mx), float(my)


def squeezed_uncertainties(xi0: SqueezeParams, params: ModelParams, t):
    """Posterior ``(dX, dY)`` for an initial squeezed coherent state.

    Both quadratures use the rotated phase ``theta - 2 omega t``; the
    result is independent of the noise and of ``alpha``.
    """
    t = np.asarray(t, dtype=float)
    tt = np.exp(-params.mu * t) * np.tanh(xi0.rho)
    c = np.cos(xi0.theta - 2 * params.omega * t)
    f = 2 * tt / (1 - tt**2)
    dx = 0.5 * np.sqrt(1 + f * (tt - c))
    dy = 0.5 * np.sqrt(1 + f * (tt + c))
    return dx, dy


def squeezed_uncertainties_sum_phase(xi0: SqueezeParams, params: ModelParams, t):
    """Variant whose dY carries ``cos(theta + 2 omega t)``.

    Disagrees with brute force in general; agrees with
    :func:`squeezed_uncertainties` when ``omega t`` is a multiple of pi/2.
    """
    t = np.asarray(t, dtype=float)
    tt = np.exp(-params.mu * t) * np.tanh(xi0.rho)
    f = 2 * tt / (1 - tt**2)
    dx = 0.5 * np.sqrt(1 + f * (tt - np.cos(xi0.theta - 2 * params.omega * t)))
    dy = 0.5 * np.sqrt(1 + f * (tt + np.cos(xi0.theta + 2 * params.omega * t)))
    return dx, dy


def unobserved_squeezed_uncertainties(xi0: SqueezeParams, omega: float, t):
    """Closed-system (mu = 0) quadrature uncertainties."""
    t = np.asarray(t, dtype=float)
    sh, ch = np.sinh(xi0.rho), np.cosh(xi0.rho)
    c = np.cos(xi0.theta - 2 * omega * t)
    return 0.5 * np.sqrt(1 + 2 * sh * (sh - ch * c)), 0.5 * np.sqrt(1 + 2 * sh * (sh + ch * c))


def squeezing_window(xi0: SqueezeParams, params: ModelParams, t) -> str | None:
    """``'X'`` or ``'Y'`` if that quadrature is squeezed below 1/2 at ``t``."""
    c = np.cos(xi0.theta - 2 * params.omega * t)
    tt = np.exp(-params.mu * t) * np.tanh(xi0.rho)
    if c > tt:
        return "X"
    if c < -tt:
        return "Y"
    return None


# -- counting observation -----------------------------------------------------


def nocount_propagator(params: ModelParams, dim: int, t: float) -> np.ndarray:
    """Diagonal of ``exp(-K t)`` including the zero-point phase."""
    return np.exp(-fock.k_diagonal(params, dim) * t)


def nocount_evolve(initial: InitialState, params: ModelParams, t: float, dim: int | None = None) -> np.ndarray:
    """Unnormalized state after no counts up to ``t``."""
    dim = dim or params.dim or states.auto_dim(initial)
    return nocount_propagator(params, dim, t) * states.build_initial(initial, dim)


def nocount_squeezed_coeffs(xi0: SqueezeParams, alpha0: complex, params: ModelParams, t: float) -> DiffusiveCoefficients:
    """Gaussian coefficients of the no-count state from ``|xi, alpha>``.

    The alpha-squared exponent carries the initial phase ``exp(-i theta)``.
    """
    mu = params.mu
    rho, theta = xi0.rho, xi0.theta
    tt = np.exp(-mu * t) * np.tanh(rho)
    rho_t = float(_arctanh(tt))
    ch, ch_t = np.cosh(rho), np.cosh(rho_t)
    alpha_t = (ch_t / ch) * np.exp(-_decay_rate(params) * t) * alpha0
    e2 = np.exp(-2 * mu * t)
    c = ch**2 - np.sinh(rho) ** 2 * e2
    expo = 0.5 * alpha0**2 * np.exp(-1j * theta) * np.sinh(rho) * ch * (-np.expm1(-2 * mu * t)) / c
    log_g = -0.5j * params.omega * t + 0.5 * (abs(alpha_t) ** 2 - abs(alpha0) ** 2) + 0.5 * np.log(ch_t / ch) + expo
    return DiffusiveCoefficients(t, complex(alpha_t), rho_t, theta - 2 * params.omega * t, complex(log_g), 0.0)


def nocount_squeezed_exponent_rotated_phase(xi0: SqueezeParams, alpha0: complex, params: ModelParams, t: float) -> complex:
    """Variant alpha-squared exponent using the rotated phase ``exp(-i theta(t))``."""
    rho = xi0.rho
    e2 = np.exp(-2 * params.mu * t)
    c = np.cosh(rho) ** 2 - np.sinh(rho) ** 2 * e2
    theta_t = xi0.theta - 2 * params.omega * t
    return 0.5 * alpha0**2 * np.exp(-1j * theta_t) / np.tanh(rho) * (c - 1) / c


def vacuum_probability(xi: SqueezeParams, alpha: complex) -> float:
    """``|<0|S(xi)|alpha>|^2``, the long-time survival probability."""
    return float(
        np.exp(-abs(alpha) ** 2) / np.cosh(xi.rho) * np.exp(np.real(np.exp(-1j * xi.theta) * alpha**2) * np.tanh(xi.rho))
    )


def vacuum_probability_conjugate_phase(xi: SqueezeParams, alpha: complex) -> float:
    """Variant limit with ``Re(e^{+i theta} alpha^2)``; equal to
    :func:`vacuum_probability` only when ``Im(alpha^2) sin(theta) = 0``."""
    return float(
        np.exp(-abs(alpha) ** 2) / np.cosh(xi.rho) * np.exp(np.real(np.exp(1j * xi.theta) * alpha**2) * np.tanh(xi.rho))
    )


def _log_cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2 * x)) - np.log(2)


def survival_probability(initial: InitialState, params: ModelParams, t) -> float:
    """Probability of no counts in ``[0, t]``."""
    mu = params.mu
    t = float(t)
    if isinstance(initial, Vacuum):
        return 1.0
    if isinstance(initial, Coherent):
        return float(np.exp(-abs(initial.alpha) ** 2 * -np.expm1(-mu * t)))
    if isinstance(initial, CatEven):
        x0 = abs(initial.alpha) ** 2
        return float(np.exp(_log_cosh(x0 * np.exp(-mu * t)) - _log_cosh(x0)))
    if isinstance(initial, CatOdd):
        x0 = abs(initial.alpha) ** 2
        xt = x0 * np.exp(-mu * t)
        # sinh(xt)/sinh(x0) written to survive large x0
        return float(np.exp(xt - x0) * -np.expm1(-2 * xt) / -np.expm1(-2 * x0))
    if isinstance(initial, (SqueezedVacuum, SqueezedCoherent)):
        c = nocount_squeezed_coeffs(initial.squeeze, states.state_alpha(initial), params, t)
        return float(np.exp(2 * c.logG_t.real))
    raise NotImplementedError(f"no closed-form survival probability for {initial!r}")


def cat_counting_stats(alpha0: complex, parity, params: ModelParams, t):
    """No-count cat posterior ``(<n>, dX, dY)``; posterior quadrature means vanish."""
    sign = _cat_sign(parity)
    t = np.asarray(t, dtype=float)
    x = abs(alpha0) ** 2 * np.exp(-params.mu * t)
    a = alpha_decay(alpha0, params, t)
    re2, im2 = np.real(a) ** 2, np.imag(a) ** 2
    e = np.exp(-2 * x)
    if sign > 0:
        mean_n = x * np.tanh(x)
        den = 1 + e
        num_x = 1 + 4 * re2 + (1 - 4 * im2) * e
        num_y = 1 + 4 * im2 + (1 - 4 * re2) * e
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            mean_n = np.where(x > 0, x / np.tanh(x), 1.0)
        den = -np.expm1(-2 * x)
        # 1 - (1 - 4c) e with the cancellation taken out analytically
        num_x = den + 4 * re2 + 4 * im2 * e
        num_y = den + 4 * im2 + 4 * re2 * e
    dx = np.sqrt(num_x) / (2 * np.sqrt(den))
    dy = np.sqrt(num_y) / (2 * np.sqrt(den))
    return mean_n, dx, dy


def postjump_state(phi: np.ndarray) -> np.ndarray:
    """Normalized ``a|phi>`` after a registered count."""
    aphi = fock.apply_a(phi)
    n2 = fock.norm2(aphi)
    if not n2 > 0:
        raise NoJumpPossibleError("state has <n> = 0; no count can occur")
    return aphi / np.sqrt(n2)


def cat_jump_target(alpha0: complex, parity, params: ModelParams, t0: float, dim: int) -> np.ndarray:
    """Closed-form state right after a first count at ``t0`` from a cat state.

    An even cat flips to the odd cat at ``alpha(t0)`` and vice versa; the
    overall phase is ``exp(-3i omega t0 / 2) alpha/|alpha|``.
    """
    sign = _cat_sign(parity)
    a = alpha_decay(alpha0, params, t0)
    norm = np.sqrt(2 - 2 * sign * np.exp(-2 * abs(a) ** 2))
    phase = np.exp(-1.5j * params.omega * t0) * alpha0 / abs(alpha0)
    return phase * (states.coherent_amplitudes(a, dim) - sign * states.coherent_amplitudes(-a, dim)) / norm


# -- a priori (non-selective) means -------------------------------------------


def initial_means(initial: InitialState) -> tuple[float, complex]:
    """``(<n>, <a>)`` of the initial state."""
    alpha = states.state_alpha(initial)
    x = abs(alpha) ** 2
    if isinstance(initial, Vacuum):
        return 0.0, 0j
    if isinstance(initial, Coherent):
        return x, alpha
    if isinstance(initial, CatEven):
        return x * np.tanh(x), 0j
    if isinstance(initial, CatOdd):
        return x / np.tanh(x), 0j
    if isinstance(initial, (SqueezedVacuum, SqueezedCoherent)):
        beta = states.alpha_to_beta(initial.squeeze, alpha)
        return abs(beta) ** 2 + np.sinh(initial.squeeze.rho) ** 2, complex(beta)
    raise NotImplementedError(f"no closed-form means for {initial!r}")


def apriori_means(initial: InitialState, params: ModelParams, t):
    """Prior ``(<n>, <X>, <Y>)``: ``<n>`` decays at rate mu, ``<a>`` rotates and decays at mu/2."""
    n0, a0 = initial_means(initial)
    t = np.asarray(t, dtype=float)
    a = a0 * np.exp(-_decay_rate(params) * t)
    return n0 * np.exp(-params.mu * t), np.real(a), np.imag(a)


# -- oracle series ------------------------------------------------------------


def diffusive_state(initial: InitialState, params: ModelParams, path: NoisePath, t: float, dim: int) -> np.ndarray:
    """Closed-form unnormalized posterior for any family on a recorded path."""
    alpha = states.state_alpha(initial)
    if isinstance(initial, (Vacuum, Coherent)):
        return coherent_diffusive(alpha, params, path, t, dim)
    if isinstance(initial, CatEven):
        return cat_diffusive(alpha, "even", params, path, t, dim)
    if isinstance(initial, CatOdd):
        return cat_diffusive(alpha, "odd", params, path, t, dim)
    c = squeezed_coeffs(initial.squeeze, alpha, params, path, t)
    return squeezed_diffusive_state(c, dim)


def _coherent_rows(alphas: np.ndarray, dim: int) -> np.ndarray:
    """Coherent amplitudes for many ``alpha`` at once, shape ``(len(alphas), dim)``."""
    rows = np.empty((alphas.shape[0], dim), dtype=complex)
    rows[:, 0] = np.exp(-0.5 * np.abs(alphas) ** 2)
    for n in range(1, dim):
        rows[:, n] = rows[:, n - 1] * alphas / np.sqrt(n)
    return rows


def coherent_state_series(initial: InitialState, params: ModelParams, path: NoisePath, dim: int) -> np.ndarray:
    """Closed-form unnormalized states at every grid point for coherent and cat starts."""
    alpha = states.state_alpha(initial)
    t = path.grid.times
    a_t = alpha_decay(alpha, params, t)
    chi = coherent_chi_series(alpha, params, path)
    base = -0.5j * params.omega * t + 0.5 * abs(alpha) ** 2 * np.expm1(-params.mu * t)
    if isinstance(initial, (Vacuum, Coherent)):
        return np.exp(base + chi)[:, None] * _coherent_rows(a_t, dim)
    sign = 1.0 if isinstance(initial, CatEven) else -1.0
    log_k = base - np.log(np.sqrt(2 * (1 + sign * np.exp(-2 * abs(alpha) ** 2))))
    return np.exp(log_k + chi)[:, None] * _coherent_rows(a_t, dim) + sign * np.exp(log_k - chi)[:, None] * _coherent_rows(
        -a_t, dim
    )


def diffusive_state_series(initial: InitialState, params: ModelParams, path: NoisePath, dim: int, stride: int = 1):
    """Closed-form states at grid points ``0, stride, 2 stride, ...``."""
    idx = np.arange(0, path.grid.n_steps + 1, stride)
    if isinstance(initial, (Vacuum, Coherent, CatEven, CatOdd)):
        return coherent_state_series(initial, params, path, dim)[idx]
    s = squeezed_coeff_series(initial.squeeze, states.state_alpha(initial), params, path)
    rows = []
    for k in idx:
        c = DiffusiveCoefficients(s["t"][k], s["alpha_t"][k], s["rho_t"][k], s["theta_t"][k], s["logG_t"][k], s["chi_t"][k])
        rows.append(squeezed_diffusive_state(c, dim))
    return np.array(rows)


def diffusive_series(initial: InitialState, params: ModelParams, path: NoisePath, dim: int, stride: int = 1):
    """Posterior statistics of the closed-form state at every ``stride``-th grid point."""
    phis = diffusive_state_series(initial, params, path, dim, stride)
    r = fock.readout(phis)
    out = {"t": path.grid.times[::stride]}
    out.update({k: r[k] for k in ("mean_x", "mean_y", "mean_n", "dx", "dy")})
    out["states"] = phis
    return out
