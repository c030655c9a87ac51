"""Riemann-sum evaluation of the Ayed-Kuo anticipating integral.

An integrand is a finite sum of products ``adapted(t) * instant(t)``.  The
adapted factor is read at the left end of each interval and the instantly
independent factor at the right end:

    sum_j adapted(t_{j-1}) * instant(t_j) * (W_{t_j} - W_{t_{j-1}})

Factors are built from a closed vocabulary so that adaptedness and instant
independence hold by construction:

adapted  ``time-fn`` (deterministic g(t)), ``W`` (W_t), ``wiener`` (int_0^t g dW)
instant  ``time-fn``, ``tail`` (W_b - W_t), ``tail-wiener`` (int_t^b g dW)

with ``compose`` (a DeterministicFn applied to a factor) and ``product``
available on both sides.  ``b`` is the right end of the path's grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .functions import DeterministicFn, constant
from .paths import BrownianPath, Grid, brownian_matrix, cumulative_ito, make_grid, dyadic_split

ADAPTED_KINDS = frozenset({"time-fn", "W", "wiener", "compose", "product"})
INSTANT_KINDS = frozenset({"time-fn", "tail", "tail-wiener", "compose", "product"})


@dataclass(frozen=True)
class Factor:
    kind: str
    fn: DeterministicFn | None = None
    parts: tuple["Factor", ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in ADAPTED_KINDS | INSTANT_KINDS:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.kind in ("time-fn", "wiener", "tail-wiener", "compose") and self.fn is None:
            raise ValueError(f"{self.kind} factor needs a function")
        if self.kind == "compose" and len(self.parts) != 1:
            raise ValueError("compose takes exactly one inner factor")
        if self.kind == "product" and not self.parts:
            raise ValueError("product needs at least one factor")

    def kinds(self) -> set[str]:
        out = {self.kind}
        for p in self.parts:
            out |= p.kinds()
        return out

    def values(self, w: np.ndarray, grid: Grid) -> np.ndarray:
        """Factor value at every node, shape of ``w``."""
        k = self.kind
        if k == "time-fn":
            return np.broadcast_to(self.fn(grid.nodes), np.shape(w)).astype(float)
        if k == "W":
            return np.array(w, dtype=float)
        if k == "wiener":
            return cumulative_ito(self.fn(grid.nodes), w)
        if k == "tail":
            return w[..., -1:] - w
        if k == "tail-wiener":
            cum = cumulative_ito(self.fn(grid.nodes), w)
            return cum[..., -1:] - cum
        if k == "compose":
            return self.fn(self.parts[0].values(w, grid))
        out = self.parts[0].values(w, grid)
        for p in self.parts[1:]:
            out = out * p.values(w, grid)
        return out

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.fn is not None:
            d["fn"] = self.fn.to_dict()
        if self.kind == "compose":
            d["inner"] = self.parts[0].to_dict()
        elif self.kind == "product":
            d["factors"] = [p.to_dict() for p in self.parts]
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Factor":
        kind = data["kind"]
        fn = DeterministicFn.from_dict(data["fn"]) if "fn" in data else None
        if kind == "compose":
            parts: tuple[Factor, ...] = (cls.from_dict(data["inner"]),)
        elif kind == "product":
            parts = tuple(cls.from_dict(f) for f in data["factors"])
        else:
            parts = ()
        return cls(kind, fn, parts)


# vocabulary ---------------------------------------------------------------------


def const(c: float) -> Factor:
    return Factor("time-fn", constant(c))


def time_fn(g: DeterministicFn) -> Factor:
    return Factor("time-fn", g)


def brownian() -> Factor:
    return Factor("W")


def wiener(g: DeterministicFn) -> Factor:
    return Factor("wiener", g)


def tail() -> Factor:
    return Factor("tail")


def tail_wiener(g: DeterministicFn) -> Factor:
    return Factor("tail-wiener", g)


def compose(g: DeterministicFn, inner: Factor) -> Factor:
    return Factor("compose", g, (inner,))


def product(*factors: Factor) -> Factor:
    return Factor("product", None, tuple(factors))


@dataclass(frozen=True)
class Term:
    adapted: Factor
    instant: Factor

    def __post_init__(self) -> None:
        bad = self.adapted.kinds() - ADAPTED_KINDS
        if bad:
            raise ValueError(f"adapted factor uses non-adapted primitives {sorted(bad)}")
        bad = self.instant.kinds() - INSTANT_KINDS
        if bad:
            raise ValueError(f"instant factor uses non-instantly-independent primitives {sorted(bad)}")


@dataclass(frozen=True)
class IntegrandSpec:
    terms: tuple[Term, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("an integrand needs at least one term")

    def __add__(self, other: "IntegrandSpec") -> "IntegrandSpec":
        return IntegrandSpec(self.terms + other.terms)

    def to_dict(self) -> dict[str, Any]:
        return {"terms": [{"adapted": t.adapted.to_dict(), "instant": t.instant.to_dict()} for t in self.terms]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "IntegrandSpec":
        return cls(tuple(Term(Factor.from_dict(t["adapted"]), Factor.from_dict(t["instant"])) for t in data["terms"]))


def integrand(*pairs: tuple[Factor, Factor]) -> IntegrandSpec:
    return IntegrandSpec(tuple(Term(a, b) for a, b in pairs))


# shipped integrand families
def itos_w() -> IntegrandSpec:
    """Integrand ``W_t`` (adapted only)."""
    return integrand((brownian(), const(1.0)))


def future_tail() -> IntegrandSpec:
    """Integrand ``W_1 - W_t`` (instantly independent only)."""
    return integrand((const(1.0), tail()))


def terminal_value() -> IntegrandSpec:
    """Integrand ``W_1 = W_t + (W_1 - W_t)``."""
    return integrand((brownian(), const(1.0)), (const(1.0), tail()))


# evaluation ---------------------------------------------------------------------


def ak_process(spec: IntegrandSpec, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Partial Riemann sums at every node, shape of ``w``; column 0 is 0."""
    w = np.asarray(w, dtype=float)
    dw = np.diff(w, axis=-1)
    out = np.zeros(w.shape)
    for term in spec.terms:
        a = term.adapted.values(w, grid)[..., :-1]
        b = term.instant.values(w, grid)[..., 1:]
        out[..., 1:] += np.cumsum(a * b * dw, axis=-1)
    return out


def ak_integral(spec: IntegrandSpec, path: BrownianPath, t_end: float = 1.0) -> float:
    k = path.grid.index_of(t_end)
    w = path.values
    dw = np.diff(w)[:k]
    total = 0.0
    for term in spec.terms:
        a = term.adapted.values(w, path.grid)[:k]
        b = term.instant.values(w, path.grid)[1 : k + 1]
        total += float(np.sum(a * b * dw))
    return total


# closed forms used as refinement oracles
def _oracle_w1_squared(w: np.ndarray, grid: Grid, t: float) -> np.ndarray:
    return w[..., -1] ** 2 - 1.0


def _oracle_future_tail(w: np.ndarray, grid: Grid, t: float) -> np.ndarray:
    wt = w[..., grid.index_of(t)]
    return w[..., -1] * wt - 0.5 * (wt**2 + t)


def _oracle_ito_w(w: np.ndarray, grid: Grid, t: float) -> np.ndarray:
    wt = w[..., grid.index_of(t)]
    return 0.5 * (wt**2 - t)


ORACLES: dict[str, Callable[[np.ndarray, Grid, float], np.ndarray]] = {
    "w1-squared-minus-one": _oracle_w1_squared,
    "future-tail": _oracle_future_tail,
    "ito-w": _oracle_ito_w,
}


@dataclass
class RefinementReport:
    levels: np.ndarray
    mesh: np.ndarray
    values: np.ndarray  # (paths, levels)
    differences: np.ndarray  # (paths, levels - 1)
    median_abs_difference: np.ndarray
    order: float
    path_indices: np.ndarray
    errors: np.ndarray | None = None  # (paths, levels) against the oracle
    median_abs_error: np.ndarray | None = None

    def rows(self) -> list[dict[str, float]]:
        out = []
        for p, idx in enumerate(self.path_indices):
            for j, n in enumerate(self.levels):
                row = {"path_index": int(idx), "n": int(n), "mesh": float(self.mesh[j]), "value": float(self.values[p, j])}
                if self.errors is not None:
                    row["error"] = float(self.errors[p, j])
                out.append(row)
        return out


def observed_order(mesh: np.ndarray, magnitude: np.ndarray) -> float:
    """Least-squares slope of ``log magnitude`` against ``log mesh``."""
    mesh = np.asarray(mesh, dtype=float)
    magnitude = np.asarray(magnitude, dtype=float)
    ok = magnitude > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(mesh[ok]), np.log(magnitude[ok]), 1)[0])


def refinement_study(
    spec: IntegrandSpec,
    seed: int,
    levels: Sequence[int],
    n_paths: int = 1,
    t_end: float = 1.0,
    oracle: str | Callable[[np.ndarray, Grid, float], np.ndarray] | None = None,
    start: int = 0,
) -> RefinementReport:
    """Evaluate the integral on nested grids over the same bridge-extended paths."""
    levels = np.asarray(levels, dtype=int)
    if levels.size < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    if np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be increasing")
    families = {dyadic_split(int(n))[0] for n in levels}
    if len(families) != 1:
        raise ValueError("levels must share the same odd factor so that grids are nested")
    fine = make_grid(int(levels[-1]))
    w_fine = brownian_matrix(fine, seed, n_paths, start)
    values = np.empty((n_paths, levels.size))
    errors = np.empty((n_paths, levels.size)) if oracle is not None else None
    oracle_fn = ORACLES[oracle] if isinstance(oracle, str) else oracle
    for j, n in enumerate(levels):
        grid = make_grid(int(n))
        w = w_fine[:, fine.coarsen_index(grid)]
        proc = ak_process(spec, w, grid)
        values[:, j] = proc[:, grid.index_of(t_end)]
        if oracle_fn is not None:
            errors[:, j] = values[:, j] - oracle_fn(w, grid, t_end)
    diffs = np.diff(values, axis=1)
    med = np.median(np.abs(diffs), axis=0)
    mesh = 1.0 / levels
    report = RefinementReport(
        levels=levels,
        mesh=mesh,
        values=values,
        differences=diffs,
        median_abs_difference=med,
        order=observed_order(mesh[:-1], med),
        path_indices=np.arange(start, start + n_paths),
        errors=errors,
    )
    if errors is not None:
        report.median_abs_error = np.median(np.abs(errors), axis=0)
    return report
