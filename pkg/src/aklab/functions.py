"""Deterministic coefficient functions.

A small closed vocabulary of real functions used for the diffusion
coefficient, the anticipation kernel and the drift nonlinearity.  Each kind
knows its analytic derivative, a Lipschitz constant on the real line and
whether it is bounded there, and round-trips through a JSON-friendly dict.

Piecewise-linear functions accept repeated knots; a repeated knot is a jump
and the function is right-continuous there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

KINDS = (
    "constant",
    "piecewise-linear",
    "trigonometric",
    "polynomial",
    "tanh",
    "sech2",
    "sum",
)


@dataclass(frozen=True)
class DeterministicFn:
    """A deterministic real function.

    Parameter layouts by ``kind``:

    ``constant``          ``(c,)``
    ``piecewise-linear``  ``(t0, v0, t1, v1, ...)`` with non-decreasing knots,
                          constant extension outside the knot range
    ``trigonometric``     ``(omega, a0, a1, b1, a2, b2, ...)`` meaning
                          ``a0 + sum_k a_k cos(k omega x) + b_k sin(k omega x)``
    ``polynomial``        ``(c0, c1, ...)`` meaning ``sum_k c_k x**k``
    ``tanh``              ``(a, b, c, d)`` meaning ``a tanh(b x + c) + d``
    ``sech2``             ``(a, b, c)`` meaning ``a sech(b x + c)**2``
    ``sum``               ``params`` are weights for ``terms``
    """

    kind: str
    params: tuple[float, ...] = ()
    terms: tuple["DeterministicFn", ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown function kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "terms", tuple(self.terms))
        p = self.params
        if not all(np.isfinite(p)):
            raise ValueError(f"{self.kind}: parameters must be finite")
        if self.kind == "constant" and len(p) != 1:
            raise ValueError("constant takes exactly one parameter")
        if self.kind == "piecewise-linear":
            if len(p) < 2 or len(p) % 2:
                raise ValueError("piecewise-linear takes (t, v) pairs")
            if np.any(np.diff(p[0::2]) < 0):
                raise ValueError("piecewise-linear knots must be non-decreasing")
        if self.kind == "trigonometric" and (len(p) < 2 or len(p) % 2):
            raise ValueError("trigonometric takes (omega, a0, a1, b1, ...)")
        if self.kind == "polynomial" and len(p) < 1:
            raise ValueError("polynomial needs at least one coefficient")
        if self.kind == "tanh" and len(p) != 4:
            raise ValueError("tanh takes (a, b, c, d)")
        if self.kind == "sech2" and len(p) != 3:
            raise ValueError("sech2 takes (a, b, c)")
        if self.kind == "sum" and len(p) != len(self.terms):
            raise ValueError("sum needs one weight per term")

    # evaluation ------------------------------------------------------------

    def __call__(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        k = self.kind
        if k == "constant":
            return np.full_like(x, p[0])
        if k == "polynomial":
            return np.polynomial.polynomial.polyval(x, p) + np.zeros_like(x)
        if k == "piecewise-linear":
            return _pwl_eval(np.asarray(p[0::2]), np.asarray(p[1::2]), x)
        if k == "trigonometric":
            omega, a0 = p[0], p[1]
            out = np.full_like(x, a0)
            for j, (a, b) in enumerate(zip(p[2::2], p[3::2]), start=1):
                out = out + a * np.cos(j * omega * x) + b * np.sin(j * omega * x)
            return out
        if k == "tanh":
            a, b, c, d = p
            return a * np.tanh(b * x + c) + d
        if k == "sech2":
            a, b, c = p
            return a / np.cosh(b * x + c) ** 2
        out = np.zeros_like(x)
        for w, term in zip(p, self.terms):
            out = out + w * term(x)
        return out

    def derivative(self) -> "DeterministicFn":
        p = self.params
        k = self.kind
        if k == "constant":
            return constant(0.0)
        if k == "polynomial":
            if len(p) == 1:
                return polynomial([0.0])
            return polynomial([j * c for j, c in enumerate(p)][1:])
        if k == "piecewise-linear":
            t, v = np.asarray(p[0::2]), np.asarray(p[1::2])
            knots: list[tuple[float, float]] = []
            for i in range(len(t) - 1):
                if t[i + 1] > t[i]:
                    s = (v[i + 1] - v[i]) / (t[i + 1] - t[i])
                    knots += [(t[i], s), (t[i + 1], s)]
            if not knots:
                return constant(0.0)
            # slopes are zero outside the knot range
            knots = [(t[0], 0.0)] + knots + [(t[-1], 0.0)]
            return piecewise_linear(knots)
        if k == "trigonometric":
            omega = p[0]
            coeffs = [omega, 0.0]
            for j, (a, b) in enumerate(zip(p[2::2], p[3::2]), start=1):
                coeffs += [j * omega * b, -j * omega * a]
            return DeterministicFn("trigonometric", tuple(coeffs))
        if k == "tanh":
            a, b, c, _ = p
            return DeterministicFn("sech2", (a * b, b, c))
        if k == "sech2":
            raise NotImplementedError("derivative of sech2 is not in the vocabulary")
        return DeterministicFn("sum", p, tuple(t.derivative() for t in self.terms))

    # analytic properties ----------------------------------------------------

    @property
    def bounded(self) -> bool:
        """Whether the function is bounded on the whole real line."""
        if self.kind == "polynomial":
            return all(c == 0.0 for c in self.params[1:])
        if self.kind == "sum":
            return all(t.bounded or w == 0.0 for w, t in zip(self.params, self.terms))
        return True

    @property
    def lipschitz(self) -> float:
        """A Lipschitz constant on the real line (``inf`` if none exists)."""
        p = self.params
        k = self.kind
        if k == "constant":
            return 0.0
        if k == "polynomial":
            if len(p) <= 1:
                return 0.0
            if all(c == 0.0 for c in p[2:]):
                return abs(p[1])
            return float("inf")
        if k == "piecewise-linear":
            t, v = np.asarray(p[0::2]), np.asarray(p[1::2])
            dt, dv = np.diff(t), np.diff(v)
            if np.any((dt == 0) & (dv != 0)):
                return float("inf")
            ok = dt > 0
            return float(np.max(np.abs(dv[ok] / dt[ok]), initial=0.0))
        if k == "trigonometric":
            omega = abs(p[0])
            return float(
                sum(j * omega * (abs(a) + abs(b)) for j, (a, b) in enumerate(zip(p[2::2], p[3::2]), 1))
            )
        if k == "tanh":
            return abs(p[0] * p[1])
        if k == "sech2":
            # max |d/dx sech^2(y)| = 4 / (3 sqrt 3)
            return abs(p[0] * p[1]) * 4.0 / (3.0 * np.sqrt(3.0))
        return float(sum(abs(w) * t.lipschitz for w, t in zip(p, self.terms) if w != 0.0))

    def sup_norm(self, lo: float = 0.0, hi: float = 1.0, n: int = 4097) -> float:
        """Sup of ``|g|`` on ``[lo, hi]`` over a dense sample plus all knots."""
        x = np.linspace(lo, hi, n)
        if self.kind == "piecewise-linear":
            knots = np.asarray(self.params[0::2])
            x = np.concatenate([x, knots[(knots >= lo) & (knots <= hi)]])
        return float(np.max(np.abs(self(x))))

    # serialization ------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "sum":
            return {
                "kind": "sum",
                "terms": [{"weight": w, "fn": t.to_dict()} for w, t in zip(self.params, self.terms)],
            }
        if self.kind == "piecewise-linear":
            knots = [[t, v] for t, v in zip(self.params[0::2], self.params[1::2])]
            return {"kind": self.kind, "coefficients": knots}
        return {"kind": self.kind, "coefficients": list(self.params)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DeterministicFn":
        kind = data["kind"]
        if kind == "sum":
            terms = data["terms"]
            return cls("sum", tuple(t["weight"] for t in terms), tuple(cls.from_dict(t["fn"]) for t in terms))
        coeffs = data.get("coefficients", [])
        if kind == "piecewise-linear":
            return piecewise_linear(coeffs)
        return cls(kind, tuple(coeffs))

    def __add__(self, other: "DeterministicFn") -> "DeterministicFn":
        return linear_combination([(1.0, self), (1.0, other)])

    def __rmul__(self, a: float) -> "DeterministicFn":
        return linear_combination([(float(a), self)])


def _pwl_eval(t: np.ndarray, v: np.ndarray, x: np.ndarray) -> np.ndarray:
    # right-continuous at repeated knots
    idx = np.searchsorted(t, x, side="right") - 1
    idx = np.clip(idx, 0, len(t) - 1)
    nxt = np.minimum(idx + 1, len(t) - 1)
    t0, t1 = t[idx], t[nxt]
    v0, v1 = v[idx], v[nxt]
    span = t1 - t0
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (x - t0) / np.where(span > 0, span, 1.0), 0.0)
    w = np.clip(w, 0.0, 1.0)
    out = v0 + w * (v1 - v0)
    out = np.where(x < t[0], v[0], out)
    return np.where(x >= t[-1], v[-1], out)


def constant(c: float) -> DeterministicFn:
    return DeterministicFn("constant", (c,))


def polynomial(coeffs: Sequence[float]) -> DeterministicFn:
    return DeterministicFn("polynomial", tuple(coeffs))


def piecewise_linear(knots: Sequence[Sequence[float]]) -> DeterministicFn:
    flat: list[float] = []
    for t, v in knots:
        flat += [t, v]
    return DeterministicFn("piecewise-linear", tuple(flat))


def trigonometric(omega: float, a0: float, cos: Sequence[float] = (), sin: Sequence[float] = ()) -> DeterministicFn:
    n = max(len(cos), len(sin))
    cos = list(cos) + [0.0] * (n - len(cos))
    sin = list(sin) + [0.0] * (n - len(sin))
    params = [omega, a0]
    for a, b in zip(cos, sin):
        params += [a, b]
    return DeterministicFn("trigonometric", tuple(params))


def tanh(a: float = 1.0, b: float = 1.0, c: float = 0.0, d: float = 0.0) -> DeterministicFn:
    return DeterministicFn("tanh", (a, b, c, d))


def step(jump_at: float, left: float, right: float) -> DeterministicFn:
    """Piecewise-constant function with one right-continuous jump in ``[0, 1]``."""
    return piecewise_linear([(0.0, left), (jump_at, left), (jump_at, right), (1.0, right)])


def indicator(lo: float, hi: float) -> DeterministicFn:
    """``1`` on ``[lo, hi)`` and ``0`` elsewhere in ``[0, 1]``."""
    knots = [(0.0, 1.0 if lo <= 0.0 else 0.0)]
    if lo > 0.0:
        knots += [(lo, 0.0), (lo, 1.0)]
    knots += [(hi, 1.0), (hi, 0.0), (max(hi, 1.0), 0.0)]
    return piecewise_linear(knots)


def linear_combination(pairs: Sequence[tuple[float, DeterministicFn]]) -> DeterministicFn:
    return DeterministicFn("sum", tuple(w for w, _ in pairs), tuple(g for _, g in pairs))
