"""Monte Carlo ensembles of derived processes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .paths import BrownianPath, Grid


@dataclass(eq=False)
class Ensemble:
    """Values of a process ``N`` on ``P`` paths, recorded at a subset of grid nodes.

    ``w`` always holds the driving Brownian values at every node of ``grid``
    so that adapted features and stopping times can be evaluated.
    """

    values: np.ndarray
    grid: Grid
    w: np.ndarray
    seed: int = 0
    path_indices: np.ndarray | None = None
    label: str = "N"
    nodes_idx: np.ndarray | None = None
    xi: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        n_paths = self.w.shape[0]
        if self.w.shape != (n_paths, self.grid.n + 1):
            raise ValueError("Brownian values must have shape (paths, grid nodes)")
        if self.nodes_idx is None:
            self.nodes_idx = np.arange(self.grid.n + 1)
        self.nodes_idx = np.asarray(self.nodes_idx, dtype=int)
        if self.values.shape != (n_paths, self.nodes_idx.size):
            raise ValueError(
                f"shape mismatch: values {self.values.shape} vs ({n_paths}, {self.nodes_idx.size})"
            )
        if self.path_indices is None:
            self.path_indices = np.arange(n_paths)
        self.path_indices = np.asarray(self.path_indices, dtype=int)
        if self.xi is not None:
            self.xi = np.asarray(self.xi, dtype=float)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes[self.nodes_idx]

    @property
    def full(self) -> bool:
        return self.nodes_idx.size == self.grid.n + 1

    def column(self, t: float) -> int:
        k = self.grid.index_of(t)
        hit = np.nonzero(self.nodes_idx == k)[0]
        if hit.size == 0:
            raise ValueError(f"time {t!r} is not recorded in this ensemble")
        return int(hit[0])

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.column(t)]

    def path(self, p: int) -> BrownianPath:
        return BrownianPath(self.grid, self.w[p], self.seed, int(self.path_indices[p]))

    def with_values(self, values: np.ndarray, label: str | None = None) -> "Ensemble":
        return replace(self, values=np.asarray(values, dtype=float), label=label or self.label)
