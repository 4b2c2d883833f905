"""Time grids on [0, T]."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridAlignmentError, ParameterError


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing nodes 0 = t_0 < t_1 < ... < t_n = T."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ParameterError("grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ParameterError("first grid node must be exactly 0")
        if not np.all(np.diff(nodes) > 0):
            raise ParameterError("grid nodes must be strictly increasing")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if horizon <= 0:
            raise ParameterError("horizon must be positive")
        if n_steps < 1:
            raise ParameterError("need at least one step")
        return cls(np.linspace(0.0, float(horizon), n_steps + 1))

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    def index_of(self, t: float) -> int:
        """Index of node t; GridAlignmentError if t is not a node.

        Matching uses an absolute tolerance of 1e-12 * max(1, T) so that
        values like 0.6 hit the float node 0.6000000000000001.
        """
        i = int(np.clip(np.searchsorted(self.nodes, t), 0, self.nodes.size - 1))
        candidates = [i] if i == 0 else [i - 1, i]
        tol = 1e-12 * max(1.0, abs(self.horizon))
        for c in candidates:
            if abs(self.nodes[c] - t) <= tol:
                return c
        raise GridAlignmentError(f"t={t!r} is not a node of the grid")

    def refine(self, factor: int) -> "TimeGrid":
        """Insert factor-1 uniform subnodes into every interval."""
        if factor < 1:
            raise ParameterError("refinement factor must be >= 1")
        if factor == 1:
            return self
        pieces = [
            np.linspace(self.nodes[i], self.nodes[i + 1], factor, endpoint=False)
            for i in range(self.n_steps)
        ]
        return TimeGrid(np.concatenate(pieces + [self.nodes[-1:]]))

    def same_nodes(self, other: "TimeGrid") -> bool:
        return self.nodes.shape == other.nodes.shape and bool(
            np.array_equal(self.nodes, other.nodes)
        )

    def require_same(self, other: "TimeGrid", what: str = "grids") -> None:
        if not self.same_nodes(other):
            raise GridAlignmentError(f"{what} are on different time grids")
