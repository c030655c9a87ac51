"""Large deviations of the scaled linear equation.

The solution map ``theta`` sends a Cameron-Martin path ``x`` to

    theta(x)(t) = kappa exp[ int_0^t sigma dx - eps/2 int_0^t sigma^2
                             + int_0^t f(int_0^1 gamma dx - eps int_s^t gamma sigma) ds ]

so that ``Z^eps = theta(sqrt(eps) W)``.  The contracted rate
``J(y) = inf { I(h) : theta(h)(1) = y }`` with the Schilder energy ``I`` is
computed by quasi-Newton minimization of a quadratic-penalty objective on a
piecewise-linear discretization, and compared against rare-event Monte
Carlo estimates of ``eps log P``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, stats
from scipy.special import log_ndtr

from . import rng
from .functions import DeterministicFn
from .lsde import ModelSpec, closed_form_log
from .paths import Grid, brownian_matrix, cumulative_trapezoid, make_grid


@dataclass(frozen=True, eq=False)
class CMPath:
    """Piecewise-linear Cameron-Martin path given by its node values."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise ValueError("values must align with grid nodes")
        if v[0] != 0.0:
            raise ValueError("a Cameron-Martin path starts at 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def linear(cls, grid: Grid, end: float) -> "CMPath":
        return cls(grid, end * grid.nodes / grid.t_end)

    @classmethod
    def zero(cls, grid: Grid) -> "CMPath":
        return cls(grid, np.zeros(grid.n + 1))


def kappa_of(model: ModelSpec) -> float:
    if model.xi.kind not in ("constant", "eps-exp", "eps-sqrt"):
        raise ValueError("the contraction map needs a deterministic centre kappa")
    return float(model.xi.kappa)


# contraction map ----------------------------------------------------------------


def phi_map(x: CMPath, sigma: DeterministicFn) -> np.ndarray:
    """``int_0^t sigma dx`` at every node, left-point sums."""
    s = sigma(x.grid.nodes)
    out = np.zeros(x.grid.n + 1)
    np.cumsum(s[:-1] * np.diff(x.values), out=out[1:])
    return out


def _psi_matrix(fn: DeterministicFn, gamma_int: float, C: np.ndarray, eps: float) -> np.ndarray:
    """``fn(Gamma - eps (C_k - C_s))`` for all ``s <= k`` (upper triangle is unused)."""
    return fn(gamma_int - eps * (C[:, None] - C[None, :]))


def _lower_trapezoid(vals: np.ndarray, grid: Grid) -> np.ndarray:
    """Row ``k``: trapezoid of ``vals[k, :k+1]`` over nodes ``0..k``."""
    pieces = 0.5 * (vals[:, 1:] + vals[:, :-1]) * grid.steps[None, :]
    n = grid.n
    mask = np.arange(n)[None, :] < np.arange(n + 1)[:, None]
    return np.sum(np.where(mask, pieces, 0.0), axis=1)


def psi_map(x: CMPath, model: ModelSpec, eps: float = 0.0) -> np.ndarray:
    """``int_0^t f(int_0^1 gamma dx - eps int_s^t gamma sigma) ds`` at every node."""
    grid = x.grid
    g = model.gamma(grid.nodes)
    gamma_int = float(np.dot(g[:-1], np.diff(x.values)))
    C = cumulative_trapezoid(g * model.sigma(grid.nodes), grid)
    return _lower_trapezoid(_psi_matrix(model.f, gamma_int, C, eps), grid)


def theta_trajectory(
    x: CMPath, model: ModelSpec, eps: float | None = None, jacobian: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """``theta(x)`` at every node; optionally ``d log theta_k / d (x_j - x_{j-1})``, shape ``(n+1, n)``."""
    eps = model.epsilon if eps is None else float(eps)
    grid = x.grid
    if abs(grid.t_end - 1.0) > 1e-12:
        raise ValueError("theta needs a grid ending at 1")
    s = model.sigma(grid.nodes)
    g = model.gamma(grid.nodes)
    dx = np.diff(x.values)
    gamma_int = float(np.dot(g[:-1], dx))
    C = cumulative_trapezoid(g * s, grid)
    Q = cumulative_trapezoid(s**2, grid)
    psi = _lower_trapezoid(_psi_matrix(model.f, gamma_int, C, eps), grid)
    log_theta = phi_map(x, model.sigma) - 0.5 * eps * Q + psi
    theta = kappa_of(model) * np.exp(log_theta)
    if not jacobian:
        return theta
    A = _lower_trapezoid(_psi_matrix(model.f.derivative(), gamma_int, C, eps), grid)
    before = np.arange(grid.n)[None, :] < np.arange(grid.n + 1)[:, None]
    jac = np.where(before, s[None, :-1], 0.0) + A[:, None] * g[None, :-1]
    return theta, jac


def theta_map(x: CMPath, model: ModelSpec, t: float, eps: float | None = None) -> float:
    """``theta(x)(t)``; ``eps`` defaults to the model's noise scale."""
    k = x.grid.index_of(t)
    return float(theta_trajectory(x, model, eps)[k])


def schilder_rate(h: CMPath) -> float:
    """Exact energy ``sum (dh)^2 / (2 dt)`` of a piecewise-linear path."""
    return float(0.5 * np.sum(np.diff(h.values) ** 2 / h.grid.steps))


# rate problems ------------------------------------------------------------------


@dataclass(frozen=True)
class RateProblem:
    """Minimize the Schilder energy subject to an endpoint or sup-ball constraint.

    Endpoint: ``theta(h)(1) = y``.  Ball: ``sup_t |theta(h)(t) - target(t)| <= rho``.
    """

    model: ModelSpec
    grid: Grid
    y: float | None = None
    target: DeterministicFn | None = None
    rho: float | None = None
    eps: float = 0.0
    mu0: float = 10.0
    mu_factor: float = 10.0
    stages: int = 6
    max_iter: int = 5000
    gtol: float = 1e-10

    def __post_init__(self) -> None:
        if abs(self.grid.t_end - 1.0) > 1e-12:
            raise ValueError("rate problems live on [0, 1]")
        kappa = kappa_of(self.model)
        if self.y is not None:
            if self.target is not None:
                raise ValueError("give either an endpoint or a ball constraint")
            if kappa == 0.0 or not self.y / kappa > 0.0:
                raise ValueError("infeasible endpoint: y and kappa must share sign")
        else:
            if self.target is None or self.rho is None:
                raise ValueError("a ball constraint needs target and rho")
            if not self.rho > 0:
                raise ValueError("ball radius must be positive")
        if self.stages < 1 or self.mu0 <= 0 or self.mu_factor < 1:
            raise ValueError("invalid penalty schedule")

    @property
    def kind(self) -> str:
        return "endpoint" if self.y is not None else "ball"

    def on_grid(self, grid: Grid) -> "RateProblem":
        return replace(self, grid=grid)


def _violation_terms(theta: np.ndarray, problem: RateProblem) -> tuple[np.ndarray, np.ndarray]:
    """Signed residuals ``r`` (penalty ``sum r^2``) and their derivative w.r.t. ``theta``."""
    if problem.kind == "endpoint":
        r = np.zeros_like(theta)
        r[-1] = theta[-1] - problem.y
        d = np.zeros_like(theta)
        d[-1] = 1.0
        return r, d
    dev = theta - problem.target(problem.grid.nodes)
    excess = np.maximum(np.abs(dev) - problem.rho, 0.0)
    return excess, np.where(excess > 0, np.sign(dev), 0.0)


def _objective_increments(dh: np.ndarray, problem: RateProblem, mu: float) -> tuple[float, np.ndarray]:
    grid = problem.grid
    h = CMPath(grid, np.concatenate([[0.0], np.cumsum(dh)]))
    theta, jac = theta_trajectory(h, problem.model, problem.eps, jacobian=True)
    r, dr = _violation_terms(theta, problem)
    value = 0.5 * np.sum(dh**2 / grid.steps) + mu * np.sum(r**2)
    grad = dh / grid.steps + 2.0 * mu * ((r * dr * theta) @ jac)
    return float(value), grad


def penalized_objective(h: CMPath, problem: RateProblem, mu: float) -> tuple[float, np.ndarray]:
    """Energy plus ``mu`` times the squared constraint violation, and its
    gradient with respect to the free node values ``h_1 .. h_n``."""
    value, g_inc = _objective_increments(np.diff(h.values), problem, mu)
    grad = g_inc - np.append(g_inc[1:], 0.0)
    return value, grad


def initial_path(problem: RateProblem) -> CMPath:
    """Linear path meeting the constraint when ``f = 0`` and ``eps = 0``."""
    grid = problem.grid
    s = problem.model.sigma(grid.nodes)
    slope_weight = float(np.dot(s[:-1], grid.steps))
    if problem.kind == "endpoint":
        goal = np.log(problem.y / kappa_of(problem.model))
    else:
        tgt = float(problem.target(np.array(1.0)))
        ratio = tgt / kappa_of(problem.model)
        goal = np.log(ratio) if ratio > 0 else 0.0
    if slope_weight == 0.0:
        return CMPath.zero(grid)
    return CMPath.linear(grid, goal / slope_weight)


@dataclass
class RateResult:
    J: float
    path: CMPath
    violation: float
    theta_end: float
    converged: bool
    stages: list[dict] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"t": float(t), "h": float(v)} for t, v in zip(self.path.grid.nodes, self.path.values)]


def rate_endpoint(problem: RateProblem, start: CMPath | None = None, tol: float = 1e-6) -> RateResult:
    """Penalty continuation with L-BFGS-B in whitened increments ``dh / sqrt(dt)``."""
    grid = problem.grid
    root = np.sqrt(grid.steps)
    h0 = start if start is not None else initial_path(problem)
    z = np.diff(h0.values) / root
    mu = problem.mu0
    log = []
    res = None
    for stage in range(problem.stages):

        def fun(zz: np.ndarray, mu: float = mu) -> tuple[float, np.ndarray]:
            v, g = _objective_increments(zz * root, problem, mu)
            return v, g * root

        res = optimize.minimize(
            fun, z, jac=True, method="L-BFGS-B",
            options={"maxiter": problem.max_iter, "gtol": problem.gtol, "ftol": 1e-15, "maxcor": 30},
        )
        z = res.x
        log.append({"stage": stage, "mu": mu, "value": float(res.fun), "iterations": int(res.nit), "success": bool(res.success)})
        mu *= problem.mu_factor
    h = CMPath(grid, np.concatenate([[0.0], np.cumsum(z * root)]))
    theta = theta_trajectory(h, problem.model, problem.eps)
    r, _ = _violation_terms(theta, problem)
    violation = float(np.max(np.abs(r)))
    scale = abs(problem.y) if problem.kind == "endpoint" else 1.0
    return RateResult(schilder_rate(h), h, violation, float(theta[-1]), violation <= tol * max(1.0, scale), log)


def gradient_check(
    problem: RateProblem, n_points: int = 10, seed: int = 0, mu: float | None = None, step: float = 1e-6, spread: float = 0.3
) -> np.ndarray:
    """Relative error ``|g_fd - g| / |g|`` at random paths around the initial guess."""
    mu = problem.mu0 if mu is None else mu
    grid = problem.grid
    base = initial_path(problem).values
    errs = np.empty(n_points)
    for i in range(n_points):
        z = rng.normals(seed, rng.AUXILIARY, 0, 0, grid.n, i, 1)[0]
        h = base + spread * np.concatenate([[0.0], np.cumsum(z * np.sqrt(grid.steps))])
        _, g = penalized_objective(CMPath(grid, h), problem, mu)
        fd = np.empty(grid.n)
        for j in range(1, grid.n + 1):
            d = step * max(1.0, abs(h[j]))
            hp, hm = h.copy(), h.copy()
            hp[j] += d
            hm[j] -= d
            fd[j - 1] = (penalized_objective(CMPath(grid, hp), problem, mu)[0] - penalized_objective(CMPath(grid, hm), problem, mu)[0]) / (2 * d)
        errs[i] = np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300)
    return errs


@dataclass
class RateRefinement:
    levels: np.ndarray
    J: np.ndarray
    violation: np.ndarray
    order: float
    extrapolated: float

    def non_increasing(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.diff(self.J) <= tol))

    def rows(self) -> list[dict]:
        return [{"n": int(n), "J": float(j), "violation": float(v)} for n, j, v in zip(self.levels, self.J, self.violation)]


def richardson(values: Sequence[float], ratio: float = 2.0, floor: float = 1e-12) -> tuple[float, float]:
    """Extrapolated limit and observed order from the last three values of a refinement sequence."""
    a, b, c = (float(v) for v in values[-3:])
    d1, d2 = a - b, b - c
    if abs(d2) <= floor or abs(d1) <= floor or d1 * d2 <= 0:
        return c, float("nan")
    p = np.log(d1 / d2) / np.log(ratio)
    if p <= 0:
        return c, float(p)
    return c - d2 / (ratio**p - 1.0), float(p)


def rate_refinement(problem: RateProblem, levels: Sequence[int]) -> RateRefinement:
    """Solve on nested uniform grids, each warm-started from the previous argmin."""
    levels = np.asarray(levels, dtype=int)
    if levels.size < 3 or np.any(np.diff(levels) <= 0):
        raise ValueError("need at least 3 increasing levels")
    ratios = levels[1:] / levels[:-1]
    if not np.allclose(ratios, ratios[0]) or abs(ratios[0] - round(ratios[0])) > 1e-12:
        raise ValueError("levels must form a geometric sequence of nested grids")
    Js, viol = [], []
    prev = None
    for n in levels:
        grid = make_grid(int(n))
        start = None
        if prev is not None:
            start = CMPath(grid, np.interp(grid.nodes, prev.grid.nodes, prev.values))
        res = rate_endpoint(problem.on_grid(grid), start)
        Js.append(res.J)
        viol.append(res.violation)
        prev = res.path
    ext, order = richardson(Js, float(ratios[0]))
    return RateRefinement(levels, np.asarray(Js), np.asarray(viol), order, ext)


# Monte Carlo ---------------------------------------------------------------------


@dataclass(frozen=True)
class TailEvent:
    """``endpoint``: ``Z(1) >= y``.  ``sup``: ``sup_t |Z(t) - reference(t)| >= delta``
    (reference defaults to the noiseless skeleton ``theta(0)``)."""

    kind: str = "endpoint"
    y: float = 2.0
    delta: float = 0.1
    reference: DeterministicFn | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("endpoint", "sup"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "sup" and not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass
class TailRow:
    eps: float
    n: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    eps_log_p: float
    upper_bound: bool
    method: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TailTable:
    rows: list[TailRow]

    def slope(self) -> float:
        """Least-squares slope of ``log p`` against ``1 / eps`` (estimates ``-J``)."""
        pts = [(1.0 / r.eps, np.log(r.p_hat)) for r in self.rows if not r.upper_bound and r.p_hat > 0]
        if len(pts) < 2:
            return float("nan")
        x, y = np.asarray(pts).T
        return float(np.polyfit(x, y, 1)[0])

    def dicts(self) -> list[dict]:
        return [r.as_dict() for r in self.rows]


def gaussian_tail_log_prob(y: float, eps: float, kappa: float = 1.0, c: float = 1.0, a: float = 0.0) -> float:
    """``log P(kappa exp(sqrt(eps) c W_1 - eps c^2 / 2 + a) >= y)``.

    Exact endpoint tail when ``sigma = c`` and ``f = a`` are constant.
    """
    if c == 0:
        return 0.0 if kappa * np.exp(a) >= y else float("-inf")
    return float(log_ndtr(-(np.log(y / kappa) - a + 0.5 * eps * c**2) / (np.sqrt(eps) * abs(c))))


def skeleton(model: ModelSpec, grid: Grid) -> np.ndarray:
    return theta_trajectory(CMPath.zero(grid), model, 0.0)


def _log_paths(model: ModelSpec, w: np.ndarray, grid: Grid, nodes: Sequence[int]) -> np.ndarray:
    return closed_form_log(model, w, grid, nodes)


def _event_hits(model: ModelSpec, event: TailEvent, w: np.ndarray, grid: Grid, xi: np.ndarray) -> np.ndarray:
    if event.kind == "endpoint":
        z = xi * np.exp(_log_paths(model, w, grid, [grid.n])[:, 0])
        return z >= event.y
    ref = event.reference(grid.nodes) if event.reference is not None else skeleton(model, grid)
    z = xi[:, None] * np.exp(_log_paths(model, w, grid, range(grid.n + 1)))
    return np.max(np.abs(z - ref[None, :]), axis=1) >= event.delta


def mc_tail(
    model: ModelSpec,
    event: TailEvent,
    eps_list: Sequence[float],
    n_paths: int,
    seed: int,
    grid: Grid,
    tilt: CMPath | None = None,
    batch: int = 100_000,
) -> TailTable:
    """Estimate ``P(event)`` for ``Z^eps`` at each ``eps``.

    Plain Monte Carlo reports Wilson 95% intervals and, with no hits, the
    rule-of-three bound ``3 / n``.  With ``tilt`` the driver is shifted by
    ``tilt / sqrt(eps)`` and every sample is reweighted by the Girsanov
    density; intervals are then normal-approximation intervals.
    """
    if any(not 0 < e <= 1 for e in eps_list):
        raise ValueError("eps values must lie in (0, 1]")
    if tilt is not None and not tilt.grid == grid:
        raise ValueError("tilt path must live on the simulation grid")
    rows = []
    for eps in eps_list:
        m = model.with_epsilon(eps)
        hits = 0
        wsum = 0.0
        wsq = 0.0
        for start in range(0, n_paths, batch):
            size = min(batch, n_paths - start)
            w = brownian_matrix(grid, seed, size, start)
            xi = m.xi.draw(seed, start, size, eps)
            if tilt is None:
                hits += int(np.count_nonzero(_event_hits(m, event, w, grid, xi)))
                continue
            b = np.diff(tilt.values) / np.sqrt(eps)
            log_wt = -(np.diff(w, axis=1) @ (b / grid.steps)) - 0.5 * np.sum(b**2 / grid.steps)
            hit = _event_hits(m, event, w + np.concatenate([[0.0], np.cumsum(b)]), grid, xi)
            hits += int(np.count_nonzero(hit))
            vals = np.where(hit, np.exp(log_wt), 0.0)
            wsum += float(vals.sum())
            wsq += float(np.sum(vals**2))
        if tilt is None:
            p = hits / n_paths
            if hits == 0:
                rows.append(TailRow(eps, n_paths, 0, 0.0, 0.0, 3.0 / n_paths, eps * np.log(3.0 / n_paths), True, "plain"))
                continue
            ci = stats.binomtest(hits, n_paths).proportion_ci(0.95, method="wilson")
            rows.append(TailRow(eps, n_paths, hits, p, ci.low, ci.high, eps * np.log(p), False, "plain"))
        else:
            p = wsum / n_paths
            if hits == 0 or p <= 0:
                rows.append(TailRow(eps, n_paths, 0, 0.0, 0.0, float("nan"), float("nan"), True, "tilted"))
                continue
            se = np.sqrt(max(wsq / n_paths - p**2, 0.0) / n_paths)
            rows.append(TailRow(eps, n_paths, hits, p, max(p - 1.96 * se, 0.0), p + 1.96 * se, eps * np.log(p), False, "tilted"))
    return TailTable(rows)


# exponential equivalence ---------------------------------------------------------


@dataclass
class ExpEquivRow:
    eps: float
    n: int
    exceedances: int
    eps_log_p: float
    upper_bound: bool
    eps_log_moment: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ExpEquivReport:
    kind: str
    delta: float
    rows: list[ExpEquivRow]

    @property
    def moments(self) -> np.ndarray:
        return np.array([r.eps_log_moment for r in self.rows])

    @property
    def strictly_decreasing(self) -> bool:
        """Along decreasing ``eps``."""
        order = np.argsort([-r.eps for r in self.rows])
        return bool(np.all(np.diff(self.moments[order]) < 0))

    @property
    def no_exceedance(self) -> bool:
        return all(r.exceedances == 0 for r in self.rows)

    def dicts(self) -> list[dict]:
        return [r.as_dict() for r in self.rows]


def log_second_moment(xi_kind: str, eps: float, eta: np.ndarray) -> float:
    """``eps log E[(xi - kappa)^2]`` with ``E[eta^2]`` replaced by its sample mean."""
    m2 = float(np.mean(eta**2))
    if xi_kind == "constant":
        return float("-inf")
    if xi_kind == "eps-exp":
        return -2.0 / eps + eps * np.log(m2)
    if xi_kind == "eps-sqrt":
        return eps * (np.log(eps) + np.log(m2))
    raise ValueError("second-moment sequence is defined for the kappa-centred kinds")


def exp_equiv_check(
    model: ModelSpec, delta: float, eps_list: Sequence[float], n_paths: int, seed: int, grid: Grid
) -> ExpEquivReport:
    """Paired solutions from ``xi^eps`` and from ``kappa`` on common noise."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    kappa_of(model)
    eta = model.xi.eta(seed, 0, n_paths)
    w = brownian_matrix(grid, seed, n_paths)
    rows = []
    for eps in eps_list:
        m = model.with_epsilon(eps)
        logs = _log_paths(m, w, grid, range(grid.n + 1))
        dev = m.xi.deviation(seed, 0, n_paths, eps)
        gap = np.max(np.abs(dev[:, None] * np.exp(logs)), axis=1)
        k = int(np.count_nonzero(gap > delta))
        bound = k == 0
        elp = eps * np.log((3.0 if bound else k) / n_paths)
        rows.append(ExpEquivRow(eps, n_paths, k, elp, bound, log_second_moment(m.xi.kind, eps, eta)))
    return ExpEquivReport(model.xi.kind, delta, rows)
