"""Empirical measures, measure flows and histogram binning specs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyDataError, ParameterError
from .grids import TimeGrid

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted particle cloud; weights sum to 1 within 1e-12."""

    atoms: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise EmptyDataError("a measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise ParameterError("atoms must be finite")
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (atoms.shape[0],):
            raise ParameterError("one weight per atom required")
        if np.any(weights < 0):
            raise ParameterError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ParameterError(f"weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "EmpiricalMeasure":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        n = samples.shape[0]
        return cls(samples, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, x) -> "EmpiricalMeasure":
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None, :], np.ones(1))

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.atoms, axis=1)

    def moment(self, p: float) -> float:
        """Weighted p-th absolute moment, sum_i w_i |x_i|^p."""
        if p <= 0:
            raise ParameterError("moment order must be positive")
        return float(np.sum(self.weights * self.norms() ** p))

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def integrate(self, f) -> float:
        """gamma(f) for a vectorized test function f((n, d) array) -> (n,)."""
        return float(np.sum(self.weights * np.asarray(f(self.atoms), dtype=float)))

    def scaled(self, c: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(c * self.atoms, self.weights)

    def shifted(self, v) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.atoms + np.asarray(v, dtype=float), self.weights)

    def to_csv(self, file) -> None:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["weight"] + [f"x_{j + 1}" for j in range(self.dim)])
        for w, x in zip(self.weights, self.atoms):
            writer.writerow([repr(float(w))] + [repr(float(v)) for v in x])

    @classmethod
    def from_csv(cls, file) -> "EmpiricalMeasure":
        reader = csv.reader(file)
        header = next(reader, None)
        if header is None or header[0] != "weight":
            raise ParameterError("expected header `weight,x_1..x_d`")
        rows = [[float(v) for v in row] for row in reader if row]
        if not rows:
            raise EmptyDataError("no atoms in CSV")
        arr = np.asarray(rows)
        return cls(arr[:, 1:], arr[:, 0])


@dataclass(frozen=True, eq=False)
class MeasureFlow:
    """One empirical measure per grid node."""

    grid: TimeGrid
    measures: tuple

    def __post_init__(self):
        measures = tuple(self.measures)
        if len(measures) != self.grid.n_nodes:
            raise ParameterError("need exactly one measure per grid node")
        d = measures[0].dim
        if any(m.dim != d for m in measures):
            raise ParameterError("all node measures must share one dimension")
        object.__setattr__(self, "measures", measures)

    @classmethod
    def constant(cls, grid: TimeGrid, measure: EmpiricalMeasure) -> "MeasureFlow":
        return cls(grid, (measure,) * grid.n_nodes)

    @classmethod
    def from_states(cls, grid: TimeGrid, states: np.ndarray) -> "MeasureFlow":
        """Uniform-weight flow from particle states of shape (n_nodes, n, d)."""
        n = states.shape[1]
        w = np.full(n, 1.0 / n)
        return cls(grid, tuple(EmpiricalMeasure(states[i], w) for i in range(states.shape[0])))

    @property
    def dim(self) -> int:
        return self.measures[0].dim

    def at(self, i: int) -> EmpiricalMeasure:
        return self.measures[i]

    def map(self, fn) -> "MeasureFlow":
        return MeasureFlow(self.grid, tuple(fn(m) for m in self.measures))


@dataclass(frozen=True)
class BinningSpec:
    """Axis-aligned histogram box with a fixed number of bins per axis (d <= 3)."""

    lower: np.ndarray
    upper: np.ndarray
    bins: int

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ParameterError("lower/upper must be vectors of equal length")
        if lower.size > 3:
            raise ParameterError("binning supports d <= 3 only")
        if not np.all(lower < upper):
            raise ParameterError("need lower < upper per axis")
        if int(self.bins) < 1:
            raise ParameterError("bins per axis must be >= 1")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "bins", int(self.bins))

    @property
    def dim(self) -> int:
        return self.lower.size

    @classmethod
    def covering(cls, atom_arrays, bins: int, pad: float = 1e-9) -> "BinningSpec":
        """Smallest padded box covering all given atom arrays."""
        stacked = np.concatenate([np.atleast_2d(a) for a in atom_arrays], axis=0)
        lo, hi = stacked.min(axis=0), stacked.max(axis=0)
        span = np.maximum(hi - lo, 1.0)
        return cls(lo - pad * span, hi + pad * span, bins)

    def flat_index(self, atoms: np.ndarray) -> np.ndarray:
        """Flattened bin index per atom; DomainError reports the first outlier."""
        atoms = np.atleast_2d(atoms)
        if atoms.shape[1] != self.dim:
            raise ParameterError("atom dimension does not match the binning box")
        outside = np.any((atoms < self.lower) | (atoms > self.upper), axis=1)
        if np.any(outside):
            bad = atoms[np.argmax(outside)]
            raise DomainError(f"atom {bad.tolist()} lies outside the binning box")
        width = (self.upper - self.lower) / self.bins
        idx = np.minimum(((atoms - self.lower) / width).astype(int), self.bins - 1)
        flat = idx[:, 0]
        for j in range(1, self.dim):
            flat = flat * self.bins + idx[:, j]
        return flat

    def centers(self) -> np.ndarray:
        """Bin centers as a (bins^d, d) array, ordered by flat index."""
        axes = [
            self.lower[j]
            + (np.arange(self.bins) + 0.5) * (self.upper[j] - self.lower[j]) / self.bins
            for j in range(self.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
