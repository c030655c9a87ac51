"""Near-martingale statistics: conditional-mean regression tests, the
near-martingale transform, stopped processes and optional stopping.

``E[N_t - N_s | F_s]`` is estimated by least-squares projection of the
increment on a finite set of ``F_s``-measurable features.  Increments of
anticipating processes are strongly heteroskedastic in the features, so the
coefficient standard errors are the White (HC0) sandwich estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ayed_kuo import ADAPTED_KINDS, Factor
from .ensemble import Ensemble
from .functions import DeterministicFn, polynomial
from .paths import Grid, brownian_matrix, cumulative_ito, cumulative_trapezoid

__all__ = [
    "Ensemble",
    "RegressionReport",
    "StoppingTime",
    "StoppingReport",
    "conditional_mean_test",
    "dyadic_discretization",
    "make_fixture",
    "nm_transform",
    "optional_stopping_check",
    "prob_sup_abs_below",
    "prob_hit_discrete",
    "realize_stopping_time",
    "stopping_indices",
    "stopped",
]

SE_MULTIPLIER = 3.0
DEFAULT_BASIS = ("const", "W", "W2", "wiener")
BASIS_FEATURES = ("const", "W", "W2", "W3", "wiener", "t")
# max-over-grid correction for discretely monitored barriers, -zeta(1/2)/sqrt(2 pi)
BARRIER_SHIFT = 0.5825971579390107


# transform and stopping ---------------------------------------------------------


def nm_transform(A: np.ndarray | Factor, X: Ensemble) -> Ensemble:
    """``Y_n = sum_{i<=n} A_{i-1} (X_i - X_{i-1})`` over the recorded nodes of ``X``.

    ``A`` is either an array aligned with ``X.values`` or an adapted factor
    from the integrand vocabulary, evaluated on the driving paths.
    """
    if isinstance(A, Factor):
        bad = A.kinds() - ADAPTED_KINDS
        if bad:
            raise ValueError(f"weights must be adapted; got primitives {sorted(bad)}")
        A = A.values(X.w, X.grid)[:, X.nodes_idx]
    A = np.broadcast_to(np.asarray(A, dtype=float), X.values.shape) if np.ndim(A) == 0 else np.asarray(A, dtype=float)
    if A.shape != X.values.shape:
        raise ValueError(f"weights shape {A.shape} does not match ensemble {X.values.shape}")
    y = np.zeros_like(X.values)
    np.cumsum(A[:, :-1] * np.diff(X.values, axis=1), axis=1, out=y[:, 1:])
    return X.with_values(y, f"transform({X.label})")


def stopped(X: Ensemble, tau_idx: np.ndarray) -> Ensemble:
    """Freeze every path after its stopping node ``tau_idx`` (grid indices)."""
    if not X.full:
        raise ValueError("stopping needs the process at every grid node")
    tau_idx = np.asarray(tau_idx, dtype=int)
    if tau_idx.shape != (X.n_paths,):
        raise ValueError("one stopping index per path")
    cols = np.minimum(np.arange(X.grid.n + 1)[None, :], tau_idx[:, None])
    return X.with_values(np.take_along_axis(X.values, cols, axis=1), f"{X.label}^tau")


@dataclass(frozen=True)
class StoppingTime:
    """``deterministic``: the fixed node ``time``.
    ``hitting``: first node where ``|W| >= level``, capped at ``cap``.
    """

    kind: str = "hitting"
    level: float = 1.0
    cap: float = 1.0
    time: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("deterministic", "hitting"):
            raise ValueError(f"unknown stopping-time kind {self.kind!r}")
        if self.kind == "hitting" and self.level < 0:
            raise ValueError("hitting level must be non-negative")

    def to_dict(self) -> dict:
        if self.kind == "deterministic":
            return {"kind": self.kind, "time": self.time}
        return {"kind": self.kind, "level": self.level, "cap": self.cap}

    @classmethod
    def from_dict(cls, data: dict) -> "StoppingTime":
        return cls(**data)


def stopping_indices(tau: StoppingTime, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Realized stopping node index for every row of ``w``."""
    w = np.atleast_2d(w)
    if tau.kind == "deterministic":
        return np.full(w.shape[0], grid.index_of(tau.time), dtype=int)
    cap = grid.index_of(tau.cap)
    hit = np.abs(w[:, : cap + 1]) >= tau.level
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first, cap).astype(int)


def realize_stopping_time(tau: StoppingTime, path) -> float:
    k = stopping_indices(tau, path.values[None, :], path.grid)[0]
    return float(path.grid.nodes[k])


def dyadic_discretization(x: np.ndarray | float, n: int, cap: float) -> np.ndarray:
    """``f_n(x) = min((floor(2^n x) + 1) / 2^n, cap)``; ``f_n(x) >= x`` for ``x <= cap`` and decreases to ``x``."""
    x = np.asarray(x, dtype=float)
    return np.minimum((np.floor(x * 2.0**n) + 1.0) / 2.0**n, cap)


def prob_sup_abs_below(a: float, T: float = 1.0, terms: int = 200) -> float:
    """``P(sup_{[0,T]} |W| < a)`` from the alternating eigenfunction series."""
    if a <= 0:
        return 0.0
    k = np.arange(terms)
    odd = 2 * k + 1
    series = (-1.0) ** k / odd * np.exp(-(odd**2) * np.pi**2 * T / (8.0 * a**2))
    return float(np.clip(4.0 / np.pi * np.sum(series), 0.0, 1.0))


def prob_hit_discrete(a: float, mesh: float, T: float = 1.0) -> float:
    """Probability that ``|W|`` reaches ``a`` on a grid of step ``mesh`` (shifted-barrier approximation)."""
    return 1.0 - prob_sup_abs_below(a + BARRIER_SHIFT * np.sqrt(mesh), T)


# regression ----------------------------------------------------------------------


@dataclass
class RegressionReport:
    features: tuple[str, ...]
    coefficients: np.ndarray
    se: np.ndarray
    n: int
    s: float
    t: float
    passed_each: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.passed_each = np.abs(self.coefficients) <= SE_MULTIPLIER * self.se

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passed_each))

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, self.coefficients / self.se, np.where(self.coefficients == 0, 0.0, np.inf))

    def rows(self) -> list[dict]:
        return [
            {"feature": f, "coefficient": float(c), "se": float(e), "z": float(z), "pass": bool(p)}
            for f, c, e, z, p in zip(self.features, self.coefficients, self.se, self.z, self.passed_each)
        ]

    def summary(self) -> str:
        lines = [f"E[N_t - N_s | F_s] = 0 at s={self.s:g}, t={self.t:g}, {self.n} paths: {'pass' if self.passed else 'FAIL'}"]
        for r in self.rows():
            lines.append(f"  {r['feature']:>7s}  coef={r['coefficient']:+.4e}  se={r['se']:.4e}  z={r['z']:+.2f}")
        return "\n".join(lines)


def hc0_regression(y: np.ndarray, X: np.ndarray, cond_limit: float = 1e12) -> tuple[np.ndarray, np.ndarray]:
    """OLS coefficients and heteroskedasticity-robust (HC0) standard errors."""
    if np.linalg.matrix_rank(X) < X.shape[1] or np.linalg.cond(X) > cond_limit:
        raise ValueError("singular design matrix: features are collinear")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    meat = (X * resid[:, None] ** 2).T @ X
    cov = bread @ meat @ bread
    return beta, np.sqrt(np.maximum(np.diag(cov), 0.0))


def adapted_features(
    w: np.ndarray, grid: Grid, k: int | np.ndarray, basis: Sequence[str], gamma: DeterministicFn
) -> np.ndarray:
    """Design matrix of ``F_{t_k}``-measurable features (``k`` scalar or per path)."""
    rows = np.arange(w.shape[0])
    k = np.broadcast_to(np.asarray(k, dtype=int), rows.shape)
    wk = w[rows, k]
    cols = []
    for name in basis:
        if name == "const":
            cols.append(np.ones_like(wk))
        elif name == "W":
            cols.append(wk)
        elif name == "W2":
            cols.append(wk**2)
        elif name == "W3":
            cols.append(wk**3)
        elif name == "wiener":
            cols.append(cumulative_ito(gamma(grid.nodes), w)[rows, k])
        elif name == "t":
            cols.append(grid.nodes[k])
        else:
            raise ValueError(f"unknown feature {name!r}; expected one of {BASIS_FEATURES}")
    return np.column_stack(cols)


def conditional_mean_test(
    N: Ensemble,
    s: float,
    t: float,
    basis: Sequence[str] = DEFAULT_BASIS,
    gamma: DeterministicFn | None = None,
) -> RegressionReport:
    """Regress ``N_t - N_s`` on adapted features at ``s``.

    The default ``wiener`` feature is ``int_0^s u dW_u``; a constant kernel
    would duplicate ``W_s``.
    """
    if not s < t:
        raise ValueError("need s < t")
    gamma = gamma if gamma is not None else polynomial([0.0, 1.0])
    y = N.at(t) - N.at(s)
    X = adapted_features(N.w, N.grid, N.grid.index_of(s), basis, gamma)
    beta, se = hc0_regression(y, X)
    return RegressionReport(tuple(basis), beta, se, N.n_paths, float(s), float(t))


# optional stopping ---------------------------------------------------------------


@dataclass
class StoppingReport:
    mode: str
    difference: float
    se: float
    n: int
    mean_tau: float
    regression: RegressionReport | None = None

    @property
    def effect(self) -> float:
        if self.se == 0:
            return 0.0 if self.difference == 0 else float(np.sign(self.difference) * np.inf)
        return self.difference / self.se

    @property
    def passed(self) -> bool:
        if self.regression is not None:
            return self.regression.passed
        if self.mode == "submartingale":
            return self.difference >= -SE_MULTIPLIER * self.se
        return abs(self.difference) <= SE_MULTIPLIER * self.se

    def rows(self) -> list[dict]:
        return [
            {
                "mode": self.mode,
                "difference": self.difference,
                "se": self.se,
                "effect": self.effect,
                "n": self.n,
                "mean_tau": self.mean_tau,
                "pass": self.passed,
            }
        ]


def optional_stopping_check(
    N: Ensemble,
    tau: StoppingTime,
    sigma_st: StoppingTime | None = None,
    mode: str = "martingale",
    nonnegative: bool = True,
    basis: Sequence[str] = ("const", "W", "W2"),
) -> StoppingReport:
    """Compare ``E[N_tau]`` with ``E[N_0]`` or, given ``sigma_st <= tau``, test
    ``E[N_tau - N_sigma | F_sigma] = 0`` by regression on features at ``sigma``."""
    if mode not in ("martingale", "submartingale"):
        raise ValueError("mode must be 'martingale' or 'submartingale'")
    if not N.full:
        raise ValueError("optional stopping needs the process at every grid node")
    if nonnegative and np.any(N.values < 0):
        raise ValueError("process takes negative values but non-negative mode was requested")
    rows = np.arange(N.n_paths)
    k_tau = stopping_indices(tau, N.w, N.grid)
    n_tau = N.values[rows, k_tau]
    if sigma_st is None:
        d = n_tau - N.values[:, 0]
        se = float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
        return StoppingReport(mode, float(d.mean()), se, N.n_paths, float(N.grid.nodes[k_tau].mean()))
    k_sig = stopping_indices(sigma_st, N.w, N.grid)
    if np.any(k_sig > k_tau):
        raise ValueError("sigma must not exceed tau")
    d = n_tau - N.values[rows, k_sig]
    X = adapted_features(N.w, N.grid, k_sig, basis, polynomial([0.0, 1.0]))
    beta, se_b = hc0_regression(d, X)
    reg = RegressionReport(tuple(basis), beta, se_b, N.n_paths, float("nan"), float("nan"))
    se = float(d.std(ddof=1) / np.sqrt(d.size))
    return StoppingReport(mode, float(d.mean()), se, N.n_paths, float(N.grid.nodes[k_tau].mean()), reg)


# fixtures ------------------------------------------------------------------------

FIXTURES = ("ito", "ak-future", "drift", "gbm-xi")


def make_fixture(
    name: str,
    grid: Grid,
    seed: int,
    n_paths: int,
    start: int = 0,
    xi_low: float = 0.5,
    xi_high: float = 1.5,
) -> Ensemble:
    """Shipped processes on every grid node.

    ``ito``       ``int_0^t W dW = (W_t^2 - t) / 2``
    ``ak-future`` ``int_0^t (W_1 - W_s) dW_s = W_1 W_t - (W_t^2 + t) / 2``
    ``drift``     ``N_t = t`` (not a near-martingale)
    ``gbm-xi``    ``xi exp(W_t - t/2)`` with ``xi ~ U(xi_low, xi_high)`` independent of ``W``
    """
    w = brownian_matrix(grid, seed, n_paths, start)
    t = grid.nodes[None, :]
    xi = None
    if name == "ito":
        v = 0.5 * (w**2 - t)
    elif name == "ak-future":
        if abs(grid.t_end - 1.0) > 1e-12:
            raise ValueError("ak-future fixture needs a grid ending at 1")
        v = w[:, -1:] * w - 0.5 * (w**2 + t)
    elif name == "drift":
        v = np.broadcast_to(t, w.shape).copy()
    elif name == "gbm-xi":
        from .lsde import XiSpec

        xi = XiSpec("uniform", low=xi_low, high=xi_high).draw(seed, start, n_paths)
        q = cumulative_trapezoid(np.ones(grid.n + 1), grid)
        v = xi[:, None] * np.exp(cumulative_ito(np.ones(grid.n + 1), w) - 0.5 * q)
    else:
        raise ValueError(f"unknown fixture {name!r}; expected one of {FIXTURES}")
    return Ensemble(v, grid, w, seed, np.arange(start, start + n_paths), name, None, xi)
