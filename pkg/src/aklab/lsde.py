"""Anticipating linear SDE  dX = sigma X dW + f(int_0^1 gamma dW) X dt,  X_0 = xi.

Two independent solvers:

* :func:`closed_form_Z` evaluates the explicit solution
  ``xi exp[int sigma dW - 1/2 int sigma^2 + int_0^t f(I - int_s^t gamma sigma) ds]``
  with ``I = int_0^1 gamma dW``.
* :func:`braid_solve` alternates a diffusion step (Girsanov-shift solution
  of ``dY = sigma Y dW``) and a drift step (``dX = f(I) X dt``) on every
  subinterval, carrying the solution as a functional of the path so that it
  can be re-evaluated on shifted paths.

A noise scale ``epsilon`` replaces ``sigma`` by ``sqrt(eps) sigma`` and
``f(x)`` by ``f(sqrt(eps) x)``; ``epsilon = 1`` is the unscaled equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import rng
from .ayed_kuo import observed_order
from .ensemble import Ensemble
from .functions import DeterministicFn
from .paths import (
    BrownianPath,
    Grid,
    brownian_matrix,
    cumulative_ito,
    cumulative_trapezoid,
    stochastic_exponential,
)

XI_KINDS = ("constant", "uniform", "lognormal", "eps-exp", "eps-sqrt", "wiener")


@dataclass(frozen=True)
class XiSpec:
    """Initial condition.

    ``constant``  kappa
    ``uniform``   low, high
    ``lognormal`` mu, s  (``exp(mu + s eta)``)
    ``eps-exp``   kappa  (``kappa + exp(-1/eps^2) eta``)
    ``eps-sqrt``  kappa  (``kappa + sqrt(eps) eta``; violates superexponential closeness)
    ``wiener``    phi, g (``phi(int_0^1 g dW)``; depends on the driving path)

    ``eta`` is standard normal.  Every kind except ``wiener`` is drawn from
    its own counter-based stream, independent of the Brownian driver.
    """

    kind: str = "constant"
    kappa: float = 1.0
    low: float = 0.5
    high: float = 1.5
    mu: float = 0.0
    s: float = 1.0
    phi: DeterministicFn | None = None
    g: DeterministicFn | None = None

    def __post_init__(self) -> None:
        if self.kind not in XI_KINDS:
            raise ValueError(f"unknown initial-condition kind {self.kind!r}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform initial condition needs low < high")
        if self.kind == "wiener" and (self.phi is None or self.g is None):
            raise ValueError("wiener initial condition needs phi and g")

    @property
    def independent(self) -> bool:
        return self.kind != "wiener"

    def draw(self, seed: int, start: int, n_paths: int, epsilon: float = 1.0) -> np.ndarray:
        """Realized values for paths ``start .. start+n_paths-1``."""
        if not self.independent:
            raise ValueError("path-dependent initial condition: use evaluate_on_path")
        if self.kind == "constant":
            return np.full(n_paths, self.kappa)
        u = rng.uniforms(seed, rng.INITIAL_CONDITION, 0, 0, 1, start, n_paths)[:, 0]
        if self.kind == "uniform":
            return self.low + (self.high - self.low) * u
        eta = _ndtri(u)
        if self.kind == "lognormal":
            return np.exp(self.mu + self.s * eta)
        if self.kind == "eps-exp":
            return self.kappa + np.exp(-1.0 / epsilon**2) * eta
        return self.kappa + np.sqrt(epsilon) * eta

    def deviation(self, seed: int, start: int, n_paths: int, epsilon: float = 1.0) -> np.ndarray:
        """``xi - kappa`` computed without cancellation for the kappa-centred kinds."""
        if self.kind == "constant":
            return np.zeros(n_paths)
        if self.kind == "eps-exp":
            return np.exp(-1.0 / epsilon**2) * self.eta(seed, start, n_paths)
        if self.kind == "eps-sqrt":
            return np.sqrt(epsilon) * self.eta(seed, start, n_paths)
        raise ValueError("deviation is defined for the kappa-centred kinds")

    def eta(self, seed: int, start: int, n_paths: int) -> np.ndarray:
        u = rng.uniforms(seed, rng.INITIAL_CONDITION, 0, 0, 1, start, n_paths)[:, 0]
        return _ndtri(u)

    def evaluate_on_path(self, w: np.ndarray, grid: Grid, shift: np.ndarray | float = 0.0) -> np.ndarray:
        """``phi(int g dW - shift)`` for the path-dependent kind."""
        base = cumulative_ito(self.g(grid.nodes), w)[..., -1]
        return self.phi(base - shift)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind in ("constant", "eps-exp", "eps-sqrt"):
            d["kappa"] = self.kappa
        elif self.kind == "uniform":
            d.update(low=self.low, high=self.high)
        elif self.kind == "lognormal":
            d.update(mu=self.mu, s=self.s)
        else:
            d.update(phi=self.phi.to_dict(), g=self.g.to_dict())
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "XiSpec":
        data = dict(data)
        for key in ("phi", "g"):
            if key in data:
                data[key] = DeterministicFn.from_dict(data[key])
        return cls(**data)


def _ndtri(u: np.ndarray) -> np.ndarray:
    from scipy.special import ndtri

    return ndtri(u)


@dataclass(frozen=True)
class ModelSpec:
    sigma: DeterministicFn
    gamma: DeterministicFn
    f: DeterministicFn
    xi: XiSpec = field(default_factory=XiSpec)
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.f.bounded:
            raise ValueError("drift nonlinearity f must be bounded on the real line")
        if not np.isfinite(self.f.lipschitz):
            raise ValueError("drift nonlinearity f must be Lipschitz")

    @property
    def lipschitz_f(self) -> float:
        return self.f.lipschitz

    def with_epsilon(self, epsilon: float) -> "ModelSpec":
        return ModelSpec(self.sigma, self.gamma, self.f, self.xi, float(epsilon))

    def with_xi(self, xi: XiSpec) -> "ModelSpec":
        return ModelSpec(self.sigma, self.gamma, self.f, xi, self.epsilon)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma": self.sigma.to_dict(),
            "gamma": self.gamma.to_dict(),
            "f": self.f.to_dict(),
            "xi": self.xi.to_dict(),
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelSpec":
        return cls(
            sigma=DeterministicFn.from_dict(data["sigma"]),
            gamma=DeterministicFn.from_dict(data["gamma"]),
            f=DeterministicFn.from_dict(data["f"]),
            xi=XiSpec.from_dict(data.get("xi", {"kind": "constant", "kappa": 1.0})),
            epsilon=float(data.get("epsilon", 1.0)),
        )


# closed form --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Tables:
    sigma: np.ndarray  # scaled sigma at nodes
    gamma: np.ndarray
    Q: np.ndarray  # cumulative int sigma~^2
    G: np.ndarray  # cumulative int gamma sigma~
    scale: float  # sqrt(eps)


def _tables(model: ModelSpec, grid: Grid) -> _Tables:
    scale = float(np.sqrt(model.epsilon))
    s = scale * model.sigma(grid.nodes)
    g = model.gamma(grid.nodes)
    return _Tables(s, g, cumulative_trapezoid(s**2, grid), cumulative_trapezoid(g * s, grid), scale)


def _require_unit_horizon(grid: Grid) -> None:
    if abs(grid.t_end - 1.0) > 1e-12:
        raise ValueError("the anticipating functional int_0^1 gamma dW needs a grid ending at 1")


def gamma_integral(model: ModelSpec, w: np.ndarray, grid: Grid) -> np.ndarray:
    """``I = int_0^1 gamma dW`` (unscaled), one value per path."""
    _require_unit_horizon(grid)
    g = model.gamma(grid.nodes)
    return np.sum(g[:-1] * np.diff(w, axis=-1), axis=-1)


def _drift_integral(
    fn: DeterministicFn, tab: _Tables, grid: Grid, I: np.ndarray, k: int
) -> np.ndarray:
    """Trapezoid of ``fn(sqrt(eps) (I - (G~_k - G~_s)))`` over ``s`` in nodes ``0..k``."""
    if k == 0:
        return np.zeros(np.shape(I))
    arg = tab.scale * (np.asarray(I)[..., None] - (tab.G[k] - tab.G[: k + 1]))
    vals = fn(arg)
    return np.sum(0.5 * (vals[..., 1:] + vals[..., :-1]) * grid.steps[:k], axis=-1)


def closed_form_log(
    model: ModelSpec, w: np.ndarray, grid: Grid, nodes_idx: Sequence[int], I: np.ndarray | None = None
) -> np.ndarray:
    """Log of the solution divided by ``xi`` at ``nodes_idx``; shape ``(P, len(nodes_idx))``."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    tab = _tables(model, grid)
    if I is None:
        I = gamma_integral(model, w, grid)
    stoch = cumulative_ito(tab.sigma, w)
    out = np.empty((w.shape[0], len(nodes_idx)))
    for j, k in enumerate(nodes_idx):
        out[:, j] = stoch[:, k] - 0.5 * tab.Q[k] + _drift_integral(model.f, tab, grid, I, int(k))
    return out


def closed_form_nodes(
    model: ModelSpec, w: np.ndarray, grid: Grid, xi: np.ndarray, nodes_idx: Sequence[int] | None = None
) -> np.ndarray:
    if not model.xi.independent:
        raise ValueError("the explicit Ayed-Kuo solution requires xi independent of W")
    if nodes_idx is None:
        nodes_idx = range(grid.n + 1)
    return np.asarray(xi, dtype=float)[:, None] * np.exp(closed_form_log(model, w, grid, list(nodes_idx)))


def closed_form_Z(model: ModelSpec, path: BrownianPath, t: float, xi: float) -> float:
    """Explicit solution at node ``t`` for one path and a realized ``xi``."""
    k = path.grid.index_of(t)
    return float(closed_form_nodes(model, path.values[None, :], path.grid, np.array([xi]), [k])[0, 0])


def skorokhod_closed_form(
    model: ModelSpec, w: np.ndarray, grid: Grid, xi: np.ndarray | None = None, nodes_idx: Sequence[int] | None = None
) -> np.ndarray:
    """Explicit Skorokhod-sense solution ``(xi o A_0^t) E_0^t exp(drift integral)``.

    For independent ``xi`` pass the realized values; for the path-dependent
    kind ``xi`` is evaluated on the shifted path.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if nodes_idx is None:
        nodes_idx = list(range(grid.n + 1))
    logs = closed_form_log(model, w, grid, nodes_idx)
    if model.xi.independent:
        base = np.asarray(xi, dtype=float)[:, None]
    else:
        tab = _tables(model, grid)
        shifts = cumulative_trapezoid(model.xi.g(grid.nodes) * tab.sigma, grid)[list(nodes_idx)]
        base = model.xi.evaluate_on_path(w[:, None, :], grid, shifts[None, :])
    return base * np.exp(logs)


def realize_xi(model: ModelSpec, seed: int, start: int, n_paths: int) -> np.ndarray:
    return model.xi.draw(seed, start, n_paths, model.epsilon)


def solve_ensemble(
    model: ModelSpec,
    grid: Grid,
    seed: int,
    n_paths: int,
    start: int = 0,
    record: Sequence[int] | None = None,
) -> Ensemble:
    """Closed-form trajectories for paths ``start ..``; ``record`` limits the stored nodes."""
    w = brownian_matrix(grid, seed, n_paths, start)
    xi = realize_xi(model, seed, start, n_paths)
    idx = np.arange(grid.n + 1) if record is None else np.asarray(sorted(set(int(k) for k in record)))
    z = closed_form_nodes(model, w, grid, xi, idx)
    return Ensemble(z, grid, w, seed, np.arange(start, start + n_paths), "Z", idx, xi)


# braiding -----------------------------------------------------------------------


def skorokhod_base_step(
    xi_value_on_shifted_path: float, path: BrownianPath, sigma: DeterministicFn, u: float, v: float
) -> float:
    """Solution of ``dY = sigma Y dW`` on ``[u, v]``: ``(xi o A_u^v) E_u^v``."""
    return float(xi_value_on_shifted_path) * stochastic_exponential(path, sigma, u, v)


@dataclass
class BraidTrace:
    times: np.ndarray
    Y: np.ndarray  # diffusion-step endpoints
    X: np.ndarray  # drift-step endpoints; X[0] = xi
    product: np.ndarray  # product formula at the same nodes
    shift: np.ndarray  # accumulated int gamma sigma correction carried by the first drift factor
    offsets: np.ndarray  # final shift correction of every drift factor

    @property
    def final(self) -> float:
        return float(self.X[-1])

    @property
    def identity_error(self) -> float:
        """Max relative gap between the step recursion and the product formula."""
        return float(np.max(np.abs(self.X - self.product) / np.abs(self.product)))


def braid_solve(
    model: ModelSpec,
    path: BrownianPath,
    t: float = 1.0,
    xi: float | None = None,
    partition: Grid | Sequence[float] | None = None,
) -> BraidTrace:
    """Braiding construction on ``partition`` (default: every path node up to ``t``).

    ``X^{(k-1)}`` is carried as a functional of the path: the shift applied
    to the initial condition, the accumulated stochastic exponential and one
    offset per drift factor, so that composing with ``A_{t_{k-1}}^{t_k}``
    only moves offsets.  The product formula is evaluated independently at
    every partition node.
    """
    grid = path.grid
    _require_unit_horizon(grid)
    kt = grid.index_of(t)
    if partition is None:
        pidx = np.arange(kt + 1)
    else:
        nodes = partition.nodes if isinstance(partition, Grid) else np.asarray(partition, dtype=float)
        try:
            pidx = np.array([grid.index_of(s) for s in nodes])
        except ValueError as exc:
            raise ValueError("braiding partition is not nested in the path grid") from exc
        if pidx[0] != 0 or pidx[-1] != kt or np.any(np.diff(pidx) <= 0):
            raise ValueError("braiding partition must run from 0 to t through increasing nodes")
    tab = _tables(model, grid)
    w = path.values
    dw = np.diff(w)
    I = float(gamma_integral(model, w, grid))

    if model.xi.independent:
        if xi is None:
            raise ValueError("pass the realized xi for an independent initial condition")
        xi_table = None
    else:
        xi_table = cumulative_trapezoid(model.xi.g(grid.nodes) * tab.sigma, grid)

    def xi_on(shift: float) -> float:
        if xi_table is None:
            return float(xi)
        return float(model.xi.evaluate_on_path(w, grid, shift))

    def drift(offsets: np.ndarray, dts: np.ndarray) -> float:
        return float(np.sum(model.f(tab.scale * (I - offsets)) * dts))

    s2 = tab.sigma**2
    log_e_direct = cumulative_ito(tab.sigma, w) - 0.5 * tab.Q

    K = pidx.size - 1
    times = grid.nodes[pidx]
    dts = np.diff(times)
    Y = np.empty(K + 1)
    X = np.empty(K + 1)
    prod = np.empty(K + 1)
    shift = np.zeros(K + 1)
    X[0] = Y[0] = prod[0] = xi_on(0.0)

    xi_shift = 0.0
    log_e = 0.0
    offsets = np.zeros(K)
    for k in range(1, K + 1):
        a, b = pidx[k - 1], pidx[k]
        # diffusion step on [t_{k-1}, t_k]
        if xi_table is not None:
            xi_shift += xi_table[b] - xi_table[a]
        offsets[: k - 1] += tab.G[b] - tab.G[a]
        log_e += float(
            np.dot(tab.sigma[a:b], dw[a:b]) - 0.25 * np.dot(s2[a:b] + s2[a + 1 : b + 1], grid.steps[a:b])
        )
        Y[k] = xi_on(xi_shift) * np.exp(log_e + drift(offsets[: k - 1], dts[: k - 1]))
        # drift step: growth factor on the current path
        X[k] = Y[k] * np.exp(float(model.f(tab.scale * I)) * dts[k - 1])
        shift[k] = tab.G[b] - tab.G[pidx[1]]

        xi_direct = xi_on(xi_table[b]) if xi_table is not None else xi_on(0.0)
        prod[k] = xi_direct * np.exp(log_e_direct[b] + drift(tab.G[b] - tab.G[pidx[1 : k + 1]], dts[:k]))

    return BraidTrace(times, Y, X, prod, shift, offsets.copy())


# squared process ----------------------------------------------------------------


@dataclass
class ResidualReport:
    dt: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    rms: np.ndarray
    n_samples: np.ndarray
    order: float

    @property
    def z(self) -> np.ndarray:
        return self.mean / self.se

    def rows(self) -> list[dict[str, float]]:
        return [
            {"dt": float(d), "mean_residual": float(m), "se": float(s), "rms": float(r), "n": int(n)}
            for d, m, s, r, n in zip(self.dt, self.mean, self.se, self.rms, self.n_samples)
        ]


def squared_drift(model: ModelSpec, grid: Grid, I: np.ndarray, k: int, f_coefficient: float = 2.0) -> np.ndarray:
    """Drift rate of ``V = Z^2`` at node ``k``:
    ``eps sigma^2 + 2 f(sqrt(eps) I) + 2 eps gamma sigma int_0^t f'(sqrt(eps) I - eps int_s^t gamma sigma) ds``.
    """
    tab = _tables(model, grid)
    fprime_int = _drift_integral(model.f.derivative(), tab, grid, I, k)
    return (
        tab.sigma[k] ** 2
        + f_coefficient * model.f(tab.scale * np.asarray(I))
        + 2.0 * tab.gamma[k] * tab.sigma[k] * tab.scale * fprime_int
    )


def step_residuals(
    model: ModelSpec,
    w: np.ndarray,
    grid: Grid,
    xi: np.ndarray,
    starts: Sequence[int],
    r: int = 1,
    f_coefficient: float = 2.0,
    z_values: np.ndarray | None = None,
    z_nodes: Sequence[int] | None = None,
) -> np.ndarray:
    """Residual of the squared-process dynamics over ``[t_k, t_{k+r}]`` for each ``k`` in ``starts``.

    ``V(t+dt) - V(t) - drift(t) V(t) dt - 2 sqrt(eps) sigma(t) V~(t) dW``
    where ``V~(t)`` is ``V(t)`` with its instantly independent part
    ``int_t^1 gamma dW`` read at the right end ``t + dt``, the same convention
    as the anticipating Riemann sums.  Already computed solution values can
    be passed as ``z_values`` at grid nodes ``z_nodes``.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    xi = np.asarray(xi, dtype=float)
    tab = _tables(model, grid)
    I = gamma_integral(model, w, grid)
    stoch = cumulative_ito(tab.sigma, w)
    gam_cum = cumulative_ito(tab.gamma, w)
    recorded = {} if z_nodes is None else {int(k): j for j, k in enumerate(z_nodes)}

    def V(k: int, I_used: np.ndarray | None = None) -> np.ndarray:
        if I_used is None and k in recorded:
            return z_values[:, recorded[k]] ** 2
        I_k = I if I_used is None else I_used
        log = stoch[:, k] - 0.5 * tab.Q[k] + _drift_integral(model.f, tab, grid, I_k, k)
        return xi**2 * np.exp(2.0 * log)

    out = np.empty((w.shape[0], len(starts)))
    for j, k in enumerate(starts):
        k = int(k)
        if k + r > grid.n:
            raise ValueError("step runs past the end of the grid")
        dt = grid.nodes[k + r] - grid.nodes[k]
        vk, vk1 = V(k), V(k + r)
        vt = V(k, I - (gam_cum[:, k + r] - gam_cum[:, k]))
        drift = squared_drift(model, grid, I, k, f_coefficient)
        dW = w[:, k + r] - w[:, k]
        out[:, j] = vk1 - vk - drift * vk * dt - 2.0 * tab.sigma[k] * vt * dW
    return out


def squared_sde_residual(
    model: ModelSpec,
    ensemble: Ensemble,
    dt_levels: Sequence[float],
    sample_times: Sequence[float] | None = None,
    f_coefficient: float = 2.0,
) -> ResidualReport:
    """Ensemble statistics of :func:`step_residuals` at several step sizes.

    ``sample_times`` restricts the step starts (default: every multiple of
    ``dt``); ``f_coefficient`` scales the ``f`` term of the drift and exists
    for negative controls.
    """
    dt_levels = list(dt_levels)
    if len(dt_levels) < 2:
        raise ValueError("need at least 2 step sizes")
    grid = ensemble.grid
    if not grid.is_uniform:
        raise ValueError("residual study needs a uniform fine grid")
    if ensemble.xi is None:
        raise ValueError("ensemble must carry realized xi")
    h = grid.mesh
    means, ses, rmss, counts = [], [], [], []
    for dt in dt_levels:
        r = int(round(dt / h))
        if r < 1 or abs(r * h - dt) > 1e-9:
            raise ValueError(f"step {dt} is not a multiple of the grid mesh {h}")
        if sample_times is None:
            starts = np.arange(0, grid.n - r + 1, r)
        else:
            starts = np.array([grid.index_of(s) for s in sample_times])
            starts = starts[starts + r <= grid.n]
        res = step_residuals(
            model, ensemble.w, grid, ensemble.xi, starts, r, f_coefficient, ensemble.values, ensemble.nodes_idx
        ).ravel()
        means.append(res.mean())
        ses.append(res.std(ddof=1) / np.sqrt(res.size))
        rmss.append(np.sqrt(np.mean(res**2)))
        counts.append(res.size)
    dt_arr = np.asarray(dt_levels, dtype=float)
    means_arr = np.asarray(means)
    return ResidualReport(
        dt_arr, means_arr, np.asarray(ses), np.asarray(rmss), np.asarray(counts), observed_order(dt_arr, np.abs(means_arr))
    )
