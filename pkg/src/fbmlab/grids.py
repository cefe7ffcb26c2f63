"""Uniform time grids and sampled paths shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * horizon / n_steps, k = 0..n_steps."""

    n_steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def mesh(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def node_index(self, t: float) -> int:
        """Index of a grid node, rejecting off-grid times."""
        k = round(t / self.mesh)
        if not (0 <= k <= self.n_steps) or abs(k * self.mesh - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"t={t} is not a node of {self}")
        return int(k)


@dataclass
class SampledPath:
    """A path sampled on a TimeGrid.

    ``values`` has shape (n_steps+1,) for scalar paths or (n_steps+1, m) for
    m-vector paths.  ``declared_regularity`` is an optional Holder exponent
    used for precondition warnings in the Young integral.
    """

    grid: TimeGrid
    values: np.ndarray
    declared_regularity: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.grid.n_nodes:
            raise ValueError(
                f"path has {self.values.shape[0]} samples, grid has {self.grid.n_nodes} nodes"
            )
        if self.values.ndim not in (1, 2):
            raise ValueError("path values must be scalar or vector valued")

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == 1

    @property
    def width(self) -> int:
        """Number of components (1 for scalar paths)."""
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def component(self, i: int) -> "SampledPath":
        if self.is_scalar:
            if i != 0:
                raise IndexError("scalar path has a single component")
            return self
        return SampledPath(self.grid, self.values[:, i], self.declared_regularity)


def require_same_grid(*paths: SampledPath) -> TimeGrid:
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise ValueError(f"grid mismatch: {p.grid} vs {grid}")
    return grid
