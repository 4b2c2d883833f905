"""Exact sampling of one-sided stable subordinators and subordinated Brownian
alpha-stable paths, plus the path functionals used by the rest of the toolkit.

Normalization convention (pinned by the transform self-tests):

* subordinator:  E exp(-r S_t) = exp(-t (2r)^{alpha/2} / 2)
* stable path:   E exp(i <xi, Z_t>) = exp(-t |xi|^alpha / 2),  Z_t = W_{S_t}

with W an m-dimensional standard Brownian motion independent of S.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .errors import EmptyDataError, GridAlignmentError, ParameterError
from .grids import TimeGrid
from .rng import normalize_rng


@dataclass(frozen=True)
class StableParams:
    """Stability index in (1, 2) and spatial dimension of the driven path."""

    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (1, 2), got {self.alpha}")
        if int(self.dim) < 1 or self.dim != int(self.dim):
            raise ParameterError(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True, eq=False)
class SubordinatorPath:
    """Nondecreasing trajectory of the alpha/2-stable subordinator on a grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_nodes,):
            raise ParameterError("values must have one entry per grid node")
        if values[0] != 0.0:
            raise ParameterError("subordinator must start at 0")
        if np.any(np.diff(values) < 0):
            raise ParameterError("subordinator values must be nondecreasing")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass(frozen=True, eq=False)
class StablePath:
    """Subordinated Brownian path Z(t_i) in R^m with its driving clock."""

    grid: TimeGrid
    values: np.ndarray  # (n_nodes, m)
    sub: SubordinatorPath

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.grid.n_nodes:
            raise ParameterError("values must be (n_nodes, m)")
        if np.any(values[0] != 0.0):
            raise ParameterError("stable path must start at the origin")
        self.grid.require_same(self.sub.grid, "path and subordinator")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _kanter_unit(rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """One-sided rho-stable samples with E exp(-l X) = exp(-l^rho), rho in (0,1).

    Kanter's representation: X = (a(U)/E)^((1-rho)/rho) with U ~ U(0, pi),
    E ~ Exp(1) and a(u) = [sin(rho u)^rho sin((1-rho)u)^(1-rho) / sin u]^(1/(1-rho)).
    """
    u = rng.uniform(0.0, np.pi, size=n)
    np.maximum(u, 1e-300, out=u)  # u = 0.0 has probability 0 but would divide by sin(0)
    e = rng.standard_exponential(size=n)
    a = (
        np.sin(rho * u) ** rho
        * np.sin((1.0 - rho) * u) ** (1.0 - rho)
        / np.sin(u)
    ) ** (1.0 / (1.0 - rho))
    return (a / e) ** ((1.0 - rho) / rho)


def stable_scale(rho: float) -> float:
    """Scale carrying unit Kanter samples to E exp(-r X) = exp(-(2r)^rho / 2).

    If X has Laplace transform exp(-l^rho), then c*X has exp(-c^rho l^rho);
    matching c^rho = 2^(rho-1) gives c = 2^(1 - 1/rho).
    """
    return 2.0 ** (1.0 - 1.0 / rho)


def sample_one_sided_stable(rho: float, n: int, rng) -> np.ndarray:
    """i.i.d. one-sided rho-stable samples, normalized per the module convention.

    Parameters
    ----------
    rho : float
        Stability index of the subordinator law, in (0, 1).  The subordinator
        of an alpha-stable path uses rho = alpha/2.
    n : int
        Number of samples (>= 1).
    rng : int or numpy.random.Generator
        Master seed or generator.

    Returns
    -------
    numpy.ndarray
        Strictly positive samples X with E exp(-r X) = exp(-(2r)^rho / 2).
    """
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")
    if n < 1:
        raise ParameterError("need n >= 1 samples")
    rng = normalize_rng(rng)
    return stable_scale(rho) * _kanter_unit(rho, int(n), rng)


def sample_subordinator_increments(
    params: StableParams, grid: TimeGrid, n_paths: int, rng
) -> np.ndarray:
    """Increment matrix (n_paths, n_steps); increment over [s,t] is (t-s)^(2/alpha) S_1."""
    rng = normalize_rng(rng)
    units = sample_one_sided_stable(params.alpha / 2.0, n_paths * grid.n_steps, rng)
    units = units.reshape(n_paths, grid.n_steps)
    return grid.dt ** (2.0 / params.alpha) * units


def subordinator_values_from_increments(ds: np.ndarray) -> np.ndarray:
    """Cumulative values (n_paths, n_nodes) with S(t_0) = 0."""
    n_paths = ds.shape[0]
    return np.concatenate(
        [np.zeros((n_paths, 1)), np.cumsum(ds, axis=1)], axis=1
    )


def sample_subordinator_path(params: StableParams, grid: TimeGrid, rng) -> SubordinatorPath:
    """One subordinator trajectory on the grid."""
    ds = sample_subordinator_increments(params, grid, 1, rng)
    return SubordinatorPath(grid, subordinator_values_from_increments(ds)[0])


def sample_stable_path(params: StableParams, sub_path: SubordinatorPath, rng) -> StablePath:
    """Brownian increments with per-coordinate variance dS on the given clock."""
    rng = normalize_rng(rng)
    ds = sub_path.increments
    normals = rng.standard_normal((ds.size, params.dim))
    dz = np.sqrt(ds)[:, None] * normals
    values = np.concatenate([np.zeros((1, params.dim)), np.cumsum(dz, axis=0)])
    return StablePath(sub_path.grid, values, sub_path)


def sample_stable_marginal(params: StableParams, t: float, n: int, rng) -> np.ndarray:
    """Exact samples of Z_t in R^m (single-increment construction)."""
    if t <= 0:
        raise ParameterError("t must be positive")
    rng = normalize_rng(rng)
    s_t = t ** (2.0 / params.alpha) * sample_one_sided_stable(params.alpha / 2.0, n, rng)
    return np.sqrt(s_t)[:, None] * rng.standard_normal((int(n), params.dim))


def stieltjes_exp_integral(path: SubordinatorPath, delta: float, r: float, t: float) -> float:
    """Left-point Stieltjes sum of exp(delta * tau) dS over [r, t].

    r and t must be grid nodes with r <= t; equals S(t) - S(r) when delta = 0.
    """
    if delta < 0:
        raise ParameterError("delta must be >= 0")
    ir, it = path.grid.index_of(r), path.grid.index_of(t)
    if ir > it:
        raise GridAlignmentError("need r <= t")
    nodes = path.grid.nodes[ir:it]
    ds = np.diff(path.values[ir : it + 1])
    return float(np.sum(np.exp(delta * nodes) * ds))


def subordinator_negative_moment(alpha: float, epsilon: float, t: float) -> float:
    """Closed form of E[S_t^((-1+epsilon)/2)] for epsilon in [0, alpha).

    For the unit-scale subordinator (E exp(-r S) = exp(-t r^(alpha/2))) the
    moment is Gamma(1-(-1+eps)/alpha)/Gamma((3-eps)/2) * t^((-1+eps)/alpha);
    our subordinator is that one scaled by 2^(1-2/alpha), which multiplies the
    moment by 2^((2/alpha-1)(1-eps)/2).  The Monte Carlo acceptance test pins
    this constant.
    """
    if not 1.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (1, 2), got {alpha}")
    if not 0.0 <= epsilon < alpha:
        raise ParameterError(f"epsilon must lie in [0, alpha), got {epsilon}")
    if t <= 0:
        raise ParameterError("t must be positive")
    base = _gamma(1.0 - (-1.0 + epsilon) / alpha) / _gamma((3.0 - epsilon) / 2.0)
    scale_fix = 2.0 ** ((2.0 / alpha - 1.0) * (1.0 - epsilon) / 2.0)
    return float(scale_fix * base * t ** ((-1.0 + epsilon) / alpha))


def subordinator_moment(alpha: float, p: float, t: float = 1.0) -> float:
    """Closed form of E[S_t^p] for p < alpha/2 (any sign).

    Same Gamma identity as `subordinator_negative_moment`, continued in p:
    E[S_1^p] = lam^p * Gamma(1 - 2p/alpha) / Gamma(1 - p) with lam = 2^(1-2/alpha).
    """
    if p >= alpha / 2.0:
        raise ParameterError(f"moment of order {p} is infinite for alpha={alpha}")
    lam = 2.0 ** (1.0 - 2.0 / alpha)
    value = lam**p * _gamma(1.0 - 2.0 * p / alpha) / _gamma(1.0 - p)
    return float(value * t ** (2.0 * p / alpha))


def empirical_laplace(samples: np.ndarray, r: float):
    """Sample mean of exp(-r S) with its standard error."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptyDataError("empirical_laplace needs at least one sample")
    if r <= 0:
        raise ParameterError("r must be positive")
    vals = np.exp(-r * samples)
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


def empirical_charfn(samples: np.ndarray, xi):
    """Sample mean of exp(i <xi, Z>) with a combined standard error.

    The standard error is sqrt((var(cos) + var(sin)) / n), an upper bound for
    the error of both components.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise EmptyDataError("empirical_charfn needs at least one sample")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if samples.shape[1] != xi.size:
        raise ParameterError("xi dimension does not match the samples")
    phase = samples @ xi
    c, s = np.cos(phase), np.sin(phase)
    n = phase.size
    if n > 1:
        se = float(np.sqrt((c.var(ddof=1) + s.var(ddof=1)) / n))
    else:
        se = 0.0
    return complex(c.mean(), s.mean()), se


def exact_laplace(alpha: float, r: float, t: float = 1.0) -> float:
    """E exp(-r S_t) under the module normalization."""
    return float(np.exp(-t * (2.0 * r) ** (alpha / 2.0) / 2.0))


def exact_charfn(alpha: float, xi, t: float = 1.0) -> float:
    """E exp(i <xi, Z_t>) under the module normalization (real by symmetry)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return float(np.exp(-t * np.linalg.norm(xi) ** alpha / 2.0))


def export_paths_csv(paths, file) -> None:
    """Write stable paths as CSV rows `path_id,t,S,Z_1..Z_m`."""
    paths = list(paths)
    if not paths:
        raise EmptyDataError("no paths to export")
    m = paths[0].dim
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["path_id", "t", "S"] + [f"Z_{j + 1}" for j in range(m)])
    for pid, path in enumerate(paths):
        for i, t in enumerate(path.grid.nodes):
            row = [pid, repr(float(t)), repr(float(path.sub.values[i]))]
            row += [repr(float(v)) for v in path.values[i]]
            writer.writerow(row)
