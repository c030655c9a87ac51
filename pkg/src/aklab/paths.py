"""Brownian trajectories on refinable grids and the Cameron-Martin shift algebra.

Uniform grids with ``n = m * 2**L`` steps (``m`` odd) are filled by a
Brownian-bridge level construction: level 0 draws the ``m`` coarse
increments, level ``l`` fills the midpoints of the level ``l-1`` intervals.
Each level reads its own counter-based stream keyed by
``(seed, m, level)``, so doubling ``n`` keeps every existing node value
bit-identical and only adds midpoints.

Deterministic integrals use the composite trapezoid rule on grid nodes and
stochastic integrals use left-endpoint sums.  All shift/exponential
endpoints must be grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .functions import DeterministicFn

NODE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Grid:
    """Increasing time nodes starting at 0."""

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float).copy()
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if nodes[-1] > 1.0 + NODE_TOL:
            raise ValueError("grid must lie in [0, 1]")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return self.nodes.size - 1

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def mesh(self) -> float:
        return float(np.max(self.steps))

    @property
    def is_uniform(self) -> bool:
        d = self.steps
        return bool(np.allclose(d, self.t_end / self.n, rtol=1e-12, atol=0.0))

    def index_of(self, t: float) -> int:
        """Index of node ``t``; raises ``ValueError`` when ``t`` is not a node."""
        i = int(np.searchsorted(self.nodes, t - NODE_TOL))
        if i < self.nodes.size and abs(self.nodes[i] - t) <= NODE_TOL:
            return i
        raise ValueError(f"time {t!r} is not a grid node")

    def contains(self, t: float) -> bool:
        try:
            self.index_of(t)
        except ValueError:
            return False
        return True

    def refine(self, k: int) -> "Grid":
        """Split every interval into ``k`` equal pieces."""
        if k < 1:
            raise ValueError("refinement factor must be >= 1")
        frac = np.arange(k) / k
        inner = (self.nodes[:-1, None] + frac[None, :] * self.steps[:, None]).ravel()
        return Grid(np.append(inner, self.nodes[-1]))

    def coarsen_index(self, other: "Grid") -> np.ndarray:
        """Indices into ``self.nodes`` of every node of the coarser ``other``."""
        idx = np.searchsorted(self.nodes, other.nodes - NODE_TOL)
        idx = np.clip(idx, 0, self.n)
        if not np.allclose(self.nodes[idx], other.nodes, atol=NODE_TOL, rtol=0):
            raise ValueError("grid is not nested in this grid")
        return idx

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.nodes, other.nodes)

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, t_end={self.t_end:g}, mesh={self.mesh:g})"


def make_grid(n: int, t_end: float = 1.0) -> Grid:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not (0.0 < t_end <= 1.0):
        raise ValueError(f"t_end must lie in (0, 1], got {t_end!r}")
    nodes = np.arange(int(n) + 1) * (t_end / int(n))
    nodes[-1] = t_end
    return Grid(nodes)


def dyadic_split(n: int) -> tuple[int, int]:
    """Write ``n = m * 2**L`` with ``m`` odd."""
    level = 0
    while n % 2 == 0:
        n //= 2
        level += 1
    return n, level


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: Grid
    values: np.ndarray
    seed: int
    path_index: int

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise ValueError("values must align with grid nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def with_values(self, values: np.ndarray) -> "BrownianPath":
        return BrownianPath(self.grid, values, self.seed, self.path_index)


# sampling ----------------------------------------------------------------------


def brownian_matrix(grid: Grid, seed: int, n_paths: int, start: int = 0) -> np.ndarray:
    """Brownian values for paths ``start .. start+n_paths-1``, shape ``(P, n+1)``.

    Row ``p`` equals ``sample_brownian(grid, seed, start + p).values`` exactly.
    """
    if n_paths < 0:
        raise ValueError("n_paths must be non-negative")
    if not grid.is_uniform:
        z = rng.normals(seed, rng.BROWNIAN_IRREGULAR, grid.n, 0, grid.n, start, n_paths)
        w = np.zeros((n_paths, grid.n + 1))
        np.cumsum(z * np.sqrt(grid.steps), axis=1, out=w[:, 1:])
        return w
    m, levels = dyadic_split(grid.n)
    T = grid.t_end
    z = rng.normals(seed, rng.BROWNIAN, m, 0, m, start, n_paths)
    w = np.zeros((n_paths, m + 1))
    np.cumsum(z * np.sqrt(T / m), axis=1, out=w[:, 1:])
    for level in range(1, levels + 1):
        n_mid = m * 2 ** (level - 1)
        h = T / n_mid
        z = rng.normals(seed, rng.BROWNIAN, m, level, n_mid, start, n_paths)
        mid = 0.5 * (w[:, :-1] + w[:, 1:]) + np.sqrt(h / 4.0) * z
        out = np.empty((n_paths, 2 * n_mid + 1))
        out[:, 0::2] = w
        out[:, 1::2] = mid
        w = out
    return w


def sample_brownian(grid: Grid, seed: int, path_index: int) -> BrownianPath:
    values = brownian_matrix(grid, seed, 1, start=path_index)[0]
    return BrownianPath(grid, values, int(seed), int(path_index))


# quadrature --------------------------------------------------------------------


def cumulative_trapezoid(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Cumulative trapezoid along the last axis, starting at 0."""
    values = np.asarray(values, dtype=float)
    pieces = 0.5 * (values[..., 1:] + values[..., :-1]) * grid.steps
    out = np.zeros(values.shape)
    np.cumsum(pieces, axis=-1, out=out[..., 1:])
    return out


def cumulative_ito(integrand_left: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Cumulative left-endpoint sums ``sum_j g(t_{j-1}) (W_j - W_{j-1})``.

    ``integrand_left`` holds the integrand at every node; the last node is
    never used.
    """
    dw = np.diff(w, axis=-1)
    out = np.zeros(np.broadcast_shapes(np.shape(w), np.shape(integrand_left)))
    np.cumsum(np.asarray(integrand_left)[..., :-1] * dw, axis=-1, out=out[..., 1:])
    return out


def _interval(grid: Grid, u: float, v: float) -> tuple[int, int]:
    if u > v:
        raise ValueError(f"need u <= v, got u={u!r}, v={v!r}")
    return grid.index_of(u), grid.index_of(v)


def wiener_integral(g: DeterministicFn, path: BrownianPath) -> float:
    """Left-endpoint Riemann-Stieltjes sum of ``g`` against the path."""
    gl = g(path.grid.nodes[:-1])
    return float(np.dot(gl, path.increments))


def shift_offsets(grid: Grid, sigma: DeterministicFn, u: float, v: float) -> np.ndarray:
    """``int_u^{(s ^ v) v u} sigma`` at every node ``s``."""
    iu, iv = _interval(grid, u, v)
    cum = cumulative_trapezoid(sigma(grid.nodes), grid)
    clipped = np.clip(np.arange(grid.n + 1), iu, iv)
    return cum[clipped] - cum[iu]


def shift_path(path: BrownianPath, sigma: DeterministicFn, u: float, v: float) -> BrownianPath:
    """Translate the path by ``-int_u^{(. ^ v) v u} sigma(s) ds``."""
    return path.with_values(path.values - shift_offsets(path.grid, sigma, u, v))


def translate(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Node-wise Cameron-Martin translation ``w + h`` (``h[0]`` must be 0)."""
    h = np.asarray(h, dtype=float)
    if h[..., 0].any():
        raise ValueError("translation path must start at 0")
    return np.asarray(w) + h


def log_stochastic_exponential(
    w: np.ndarray, grid: Grid, sigma: DeterministicFn, u: float, v: float
) -> np.ndarray:
    iu, iv = _interval(grid, u, v)
    s = sigma(grid.nodes)
    dw = np.diff(np.asarray(w)[..., iu : iv + 1], axis=-1)
    stoch = np.sum(s[iu:iv] * dw, axis=-1)
    quad = np.sum(0.5 * (s[iu:iv] ** 2 + s[iu + 1 : iv + 1] ** 2) * grid.steps[iu:iv])
    return stoch - 0.5 * quad


def stochastic_exponential(path: BrownianPath, sigma: DeterministicFn, u: float, v: float) -> float:
    """``exp(int_u^v sigma dW - 1/2 int_u^v sigma^2 ds)`` on the path's grid."""
    return float(np.exp(log_stochastic_exponential(path.values, path.grid, sigma, u, v)))


def nodes_of(grid: Grid, times: Sequence[float]) -> np.ndarray:
    return np.array([grid.index_of(t) for t in times], dtype=int)
