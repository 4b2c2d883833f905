"""Distances between empirical measures.

Three base distances (exact optimal transport W_kappa, weighted variation,
total variation) and the damped sup-over-time metrics that drive both Picard
fixed points.

Estimator policy
----------------
* W_kappa is always an exact optimal-transport solve on the given supports:
  sorted monotone coupling for d = 1 and convex cost (kappa >= 1), exact
  assignment for equal-count uniform-weight clouds, dense LP otherwise.
  Support size is capped (`atom_cap`); callers must subsample explicitly.
* Weighted/total variation between sampled clouds is a histogram estimator on
  a shared box; measures sharing one atom array are compared exactly.
* The damped flow metrics take a `MetricParams` describing exactly how each
  per-node distance is estimated; every report carries those parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .errors import CapacityError, GridAlignmentError, ParameterError
from .measures import BinningSpec, EmpiricalMeasure, MeasureFlow
from .rng import stream

COMBOS = ("eta_plus_k", "kvar_plus_k")


def _cost_matrix(g: EmpiricalMeasure, h: EmpiricalMeasure, kappa: float) -> np.ndarray:
    diff = g.atoms[:, None, :] - h.atoms[None, :, :]
    return np.linalg.norm(diff, axis=2) ** kappa


def _monotone_cost_1d(g: EmpiricalMeasure, h: EmpiricalMeasure, kappa: float) -> float:
    """Quantile-coupling transport cost on the line (optimal for kappa >= 1)."""
    xg, xh = g.atoms[:, 0], h.atoms[:, 0]
    ig, ih = np.argsort(xg, kind="stable"), np.argsort(xh, kind="stable")
    xg, wg = xg[ig], g.weights[ig]
    xh, wh = xh[ih], h.weights[ih]
    cg, ch = np.cumsum(wg), np.cumsum(wh)
    cg[-1] = ch[-1] = 1.0
    bounds = np.union1d(cg, ch)
    seg_mass = np.diff(np.concatenate([[0.0], bounds]))
    mids = bounds - seg_mass / 2.0
    ag = xg[np.searchsorted(cg, mids, side="left")]
    ah = xh[np.searchsorted(ch, mids, side="left")]
    keep = seg_mass > 1e-15
    return float(np.sum(seg_mass[keep] * np.abs(ag[keep] - ah[keep]) ** kappa))


def _lp_cost(g: EmpiricalMeasure, h: EmpiricalMeasure, kappa: float) -> float:
    """Dense transportation LP (HiGHS); exact for any weights/dimension."""
    C = _cost_matrix(g, h, kappa)
    n, m = C.shape
    row_i = np.repeat(np.arange(n), m)
    col_j = np.tile(np.arange(m), n)
    var = np.arange(n * m)
    a_rows = sparse.csr_matrix(
        (np.ones(n * m), (row_i, var)), shape=(n, n * m)
    )
    a_cols = sparse.csr_matrix(
        (np.ones(n * m), (col_j, var)), shape=(m, n * m)
    )
    a_eq = sparse.vstack([a_rows, a_cols[:-1]])  # drop one redundant constraint
    b_eq = np.concatenate([g.weights, h.weights[:-1]])
    res = linprog(C.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def _assignment_cost(g: EmpiricalMeasure, h: EmpiricalMeasure, kappa: float) -> float:
    C = _cost_matrix(g, h, kappa)
    ri, ci = linear_sum_assignment(C)
    return float(C[ri, ci].sum() / C.shape[0])


def _uniform_weights(m: EmpiricalMeasure) -> bool:
    return bool(np.allclose(m.weights, 1.0 / m.n_atoms, rtol=0.0, atol=1e-12))


def wasserstein(
    g: EmpiricalMeasure,
    h: EmpiricalMeasure,
    kappa: float,
    atom_cap: int = 4096,
) -> float:
    """Exact L^kappa optimal-transport distance with cost |x-y|^kappa.

    The outer power 1/kappa is applied only when kappa > 1 (the 1/(1 v kappa)
    convention).  Total atom count above `atom_cap` raises CapacityError; use
    `stratified_subsample` first for oversized supports.
    """
    if kappa <= 0:
        raise ParameterError("kappa must be positive")
    if g.dim != h.dim:
        raise ParameterError("measures live in different dimensions")
    if g.n_atoms + h.n_atoms > atom_cap:
        raise CapacityError(
            f"support size {g.n_atoms}+{h.n_atoms} exceeds cap {atom_cap}; "
            "subsample (stratified_subsample) before calling wasserstein"
        )
    if g.n_atoms == h.n_atoms and np.array_equal(g.atoms, h.atoms) and np.array_equal(
        g.weights, h.weights
    ):
        return 0.0
    if g.dim == 1 and kappa >= 1.0:
        cost = _monotone_cost_1d(g, h, kappa)
    elif g.n_atoms == h.n_atoms and _uniform_weights(g) and _uniform_weights(h):
        cost = _assignment_cost(g, h, kappa)
    else:
        cost = _lp_cost(g, h, kappa)
    return cost ** (1.0 / kappa) if kappa > 1.0 else cost


def _binned_masses(g: EmpiricalMeasure, h: EmpiricalMeasure, bins: BinningSpec):
    size = bins.bins**bins.dim
    mg = np.bincount(bins.flat_index(g.atoms), weights=g.weights, minlength=size)
    mh = np.bincount(bins.flat_index(h.atoms), weights=h.weights, minlength=size)
    return mg, mh


def weighted_variation(
    g: EmpiricalMeasure,
    h: EmpiricalMeasure,
    k: float,
    bins: BinningSpec | None,
    exact_on_shared_atoms: bool = True,
) -> float:
    """Estimate of the weighted variation distance sup_{|f| <= 1+|x|^k}.

    Histogram estimator sum_b (1+|c_b|^k) |g(b)-h(b)| with weights at bin
    centers; exact atomwise value when both measures share one atom array
    (bins may then be None).
    """
    if k < 1:
        raise ParameterError("weight exponent k must be >= 1")
    if exact_on_shared_atoms and g.n_atoms == h.n_atoms and np.array_equal(
        g.atoms, h.atoms
    ):
        w = 1.0 + g.norms() ** k
        return float(np.sum(w * np.abs(g.weights - h.weights)))
    if bins is None:
        raise ParameterError("binning spec required for measures with distinct atoms")
    mg, mh = _binned_masses(g, h, bins)
    w = 1.0 + np.linalg.norm(bins.centers(), axis=1) ** k
    return float(np.sum(w * np.abs(mg - mh)))


def total_variation(
    g: EmpiricalMeasure,
    h: EmpiricalMeasure,
    bins: BinningSpec | None,
    exact_on_shared_atoms: bool = True,
) -> float:
    """Binned total variation (weighted variation with weight identically 1)."""
    if exact_on_shared_atoms and g.n_atoms == h.n_atoms and np.array_equal(
        g.atoms, h.atoms
    ):
        return float(np.sum(np.abs(g.weights - h.weights)))
    if bins is None:
        raise ParameterError("binning spec required for measures with distinct atoms")
    mg, mh = _binned_masses(g, h, bins)
    return float(np.sum(np.abs(mg - mh)))


def stratified_subsample(
    measure: EmpiricalMeasure, size: int, seed: int
) -> EmpiricalMeasure:
    """Deterministic equal-mass quantile subsample (never applied silently).

    Atoms are ordered by first coordinate (d = 1) or by norm (d > 1), split
    into `size` strata of mass 1/size, and each stratum is represented by the
    atom at its mass midpoint.  The seed only breaks ties among equal sort
    keys, keeping the reduction reproducible.
    """
    if size < 1:
        raise ParameterError("subsample size must be >= 1")
    if measure.n_atoms <= size:
        return measure
    key = measure.atoms[:, 0] if measure.dim == 1 else measure.norms()
    jitter = stream(seed, 0x5B).random(measure.n_atoms) * 1e-12
    order = np.argsort(key + jitter, kind="stable")
    w = measure.weights[order]
    cw = np.cumsum(w)
    cw[-1] = 1.0
    mids = (np.arange(size) + 0.5) / size
    pick = order[np.searchsorted(cw, mids, side="left")]
    return EmpiricalMeasure(measure.atoms[pick], np.full(size, 1.0 / size))


@dataclass(frozen=True)
class MetricParams:
    """How per-node distances inside the damped flow metrics are estimated.

    k, eta          exponents of W_k and W_eta
    bins            explicit BinningSpec for variation distances, or None to
                    bin over the pooled per-node atom range (`auto_bins` bins)
    atom_cap        support cap handed to `wasserstein`
    eta_support     per-side quantile-subsample size for W_eta (None = exact)
    subsample_seed  seed for deterministic subsampling
    """

    k: float
    eta: float
    bins: BinningSpec | None = None
    auto_bins: int = 512
    atom_cap: int = 4096
    eta_support: int | None = 256
    subsample_seed: int = 0

    def describe(self) -> dict:
        return {
            "k": self.k,
            "eta": self.eta,
            "bins": (
                {"lower": self.bins.lower.tolist(), "upper": self.bins.upper.tolist(), "bins": self.bins.bins}
                if self.bins is not None
                else {"policy": "pooled-range", "bins": self.auto_bins}
            ),
            "atom_cap": self.atom_cap,
            "eta_support": self.eta_support,
            "subsample_seed": self.subsample_seed,
        }


def _node_bins(g: EmpiricalMeasure, h: EmpiricalMeasure, params: MetricParams) -> BinningSpec:
    if params.bins is not None:
        return params.bins
    return BinningSpec.covering([g.atoms, h.atoms], params.auto_bins)


def _w_eta(g, h, params: MetricParams) -> float:
    if params.eta_support is not None:
        g = stratified_subsample(g, params.eta_support, params.subsample_seed)
        h = stratified_subsample(h, params.eta_support, params.subsample_seed + 1)
    return wasserstein(g, h, params.eta, params.atom_cap)


def _node_distance(g, h, combo: str, params: MetricParams) -> float:
    wk = wasserstein(g, h, params.k, params.atom_cap)
    if combo == "eta_plus_k":
        return _w_eta(g, h, params) + wk
    return weighted_variation(g, h, params.k, _node_bins(g, h, params)) + wk


def _node_bound(g, h, combo: str, params: MetricParams) -> float:
    """Cheap upper bound on the node distance (transport through the origin)."""
    mk = g.moment(params.k) ** (1.0 / params.k) + h.moment(params.k) ** (1.0 / params.k)
    if combo == "eta_plus_k":
        return g.moment(params.eta) + h.moment(params.eta) + mk
    return 2.0 + g.moment(params.k) + h.moment(params.k) + mk


def damped_sup_distance(
    flow_f: MeasureFlow,
    flow_g: MeasureFlow,
    delta: float,
    combo: str,
    params: MetricParams,
) -> float:
    """max over grid nodes of exp(-delta * t) * (sum of the selected distances).

    combo `eta_plus_k` sums W_eta + W_k; `kvar_plus_k` sums the weighted
    variation estimate + W_k.  Nodes whose damped upper bound cannot beat the
    running maximum are skipped; the returned value is the exact maximum of
    the damped node distances.
    """
    if combo not in COMBOS:
        raise ParameterError(f"combo must be one of {COMBOS}")
    if delta < 0:
        raise ParameterError("delta must be >= 0")
    flow_f.grid.require_same(flow_g.grid, "flows")
    damp = np.exp(-delta * flow_f.grid.nodes)
    bounds = damp * np.array(
        [
            _node_bound(flow_f.at(i), flow_g.at(i), combo, params)
            for i in range(flow_f.grid.n_nodes)
        ]
    )
    best = 0.0
    for i in np.argsort(-bounds):
        if bounds[i] <= best:
            break
        value = damp[i] * _node_distance(flow_f.at(i), flow_g.at(i), combo, params)
        best = max(best, value)
    return float(best)
