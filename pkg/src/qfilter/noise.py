"""Seeded noise streams: complex Wiener increments, reference Poisson paths
and jump thresholds.

Every stream is an independent counter-based Philox generator keyed by
``SeedSequence(seed, spawn_key=(stream_id, purpose))``. A trajectory's noise
therefore depends only on ``(seed, stream_id)``, never on execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridError

GENERATOR_NAME = "numpy.random.Philox (4x64, counter-based); key = SeedSequence(seed, spawn_key=(stream_id, purpose))"

PURPOSE_WIENER = 0
PURPOSE_POISSON = 1
PURPOSE_UNIFORM = 2

MAX_JUMP_PROBABILITY = 0.01


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise GridError(f"t_max must be positive, got {self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise GridError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index(self, t: float, rtol: float = 1e-9) -> int:
        """Grid index of time ``t``; raises :class:`GridError` off the grid."""
        k = round(t / self.dt)
        if not 0 <= k <= self.n_steps or abs(k * self.dt - t) > rtol * max(1.0, abs(t)):
            raise GridError(f"t={t} is not on the grid (dt={self.dt}, t_max={self.t_max})")
        return int(k)

    def coarsen(self, factor: int) -> "TimeGrid":
        if self.n_steps % factor:
            raise GridError(f"{self.n_steps} steps cannot be coarsened by {factor}")
        return TimeGrid(self.t_max, self.n_steps // factor)


def stream_rng(seed: int, stream_id: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoisePath:
    """Complex increments ``dW = dW1 + i dW2`` on a grid.

    ``dW[k]`` is the increment over ``[t_k, t_{k+1})``.
    """

    grid: TimeGrid
    dW: np.ndarray
    seed: int | None = None
    stream_id: int | None = None
    kind: str = "wiener"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dW.shape != (self.grid.n_steps,):
            raise GridError(f"path has {self.dW.shape} increments for {self.grid.n_steps} steps")

    def coarsen(self, factor: int) -> "NoisePath":
        """Same Brownian path sampled on a grid ``factor`` times coarser."""
        g = self.grid.coarsen(factor)
        dW = self.dW.reshape(g.n_steps, factor).sum(axis=1)
        return NoisePath(g, dW, self.seed, self.stream_id, self.kind)


def wiener_increments(grid: TimeGrid, seed: int, stream_id: int) -> np.ndarray:
    rng = stream_rng(seed, stream_id, PURPOSE_WIENER)
    z = rng.standard_normal((grid.n_steps, 2))
    return np.sqrt(grid.dt / 2) * (z[:, 0] + 1j * z[:, 1])


def wiener_path(grid: TimeGrid, seed: int, stream_id: int = 0) -> NoisePath:
    """Complex Wiener path with ``Var(Re dW) = Var(Im dW) = dt/2``."""
    return NoisePath(grid, wiener_increments(grid, seed, stream_id), seed, stream_id)


def wiener_batch(grid: TimeGrid, seed: int, stream_ids) -> np.ndarray:
    """Increments for several streams, shape ``(len(stream_ids), n_steps)``."""
    return np.stack([wiener_increments(grid, seed, s) for s in stream_ids])


def _check_jump_probability(grid: TimeGrid, rate: float) -> float:
    p = rate * grid.dt
    if not rate > 0 or p > MAX_JUMP_PROBABILITY:
        raise ConfigError(
            f"reference Poisson path needs 0 < rate*dt <= {MAX_JUMP_PROBABILITY}, got rate={rate}, dt={grid.dt}",
            field="grid.n_steps",
        )
    return p


def poisson_path(grid: TimeGrid, seed: int, stream_id: int = 0, rate: float = 1.0) -> np.ndarray:
    """Boolean jump indicators: each step jumps with probability ``rate * dt``."""
    p = _check_jump_probability(grid, rate)
    rng = stream_rng(seed, stream_id, PURPOSE_POISSON)
    return rng.random(grid.n_steps) < p


def poisson_batch(grid: TimeGrid, seed: int, stream_ids, rate: float = 1.0) -> np.ndarray:
    return np.stack([poisson_path(grid, seed, s, rate) for s in stream_ids])


class UniformStream:
    """Jump-threshold draws in the open interval (0, 1)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed
        self.stream_id = stream_id
        self._rng = stream_rng(seed, stream_id, PURPOSE_UNIFORM)

    def draw(self) -> float:
        while True:
            u = self._rng.random()
            if u > 0.0:
                return u


def uniform_draw(stream: UniformStream) -> float:
    return stream.draw()
