"""Non-uniqueness construction for purely total-variation-Lipschitz noise.

With sigma_t(gamma) = a + b * gamma([2 M t^{1/alpha}, infinity)) and (M, a, b)
calibrated from the tails of the 1-d stable marginal, the driftless equation
dX = sigma_t(Law(X_t)) dZ_t started at 0 is solved by both Z and 2Z: the
functional evaluates to exactly 1 on Law(Z_t) and to exactly 2 on Law(2 Z_t).
This module calibrates (M, a, b) by Monte Carlo and verifies both residual
profiles, plus the tail-ratio limit P(Z_1 >= 2x)/P(x <= Z_1 < 2x) -> 1/(2^alpha - 1)
that makes the calibration possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataError, ParameterError
from .measures import EmpiricalMeasure
from .rng import normalize_rng
from .stable_paths import StableParams, sample_stable_marginal


def stable_1d_samples(alpha: float, t: float, n: int, rng) -> np.ndarray:
    """Exact 1-d stable marginal Z_t via the subordinated construction."""
    return sample_stable_marginal(StableParams(alpha, 1), t, n, rng)[:, 0]


def tail_ratio_limit(alpha: float) -> float:
    return 1.0 / (2.0**alpha - 1.0)


@dataclass(frozen=True)
class TailRatioEstimate:
    x: float
    n_samples: int
    ratio: float
    stderr: float
    limit: float
    hits_mid: int
    hits_tail: int


def _ratio_stderr(p_tail: float, p_mid: float, n: int) -> float:
    # delta method with multinomial covariance of the two disjoint cells
    r = p_tail / p_mid
    var = r**2 / n * ((1 - p_tail) / p_tail + (1 - p_mid) / p_mid + 2.0)
    return float(np.sqrt(var))


def tail_ratio(alpha: float, x: float, n_samples: int, rng) -> TailRatioEstimate:
    """Monte Carlo estimate of P(Z_1 >= 2x) / P(x <= Z_1 < 2x)."""
    if x <= 0:
        raise ParameterError("x must be positive")
    if n_samples < 10**5:
        raise ParameterError("need at least 1e5 samples for tail estimation")
    z = stable_1d_samples(alpha, 1.0, n_samples, rng)
    hits_tail = int(np.count_nonzero(z >= 2 * x))
    hits_mid = int(np.count_nonzero((z >= x) & (z < 2 * x)))
    if hits_mid == 0 or hits_tail == 0:
        raise EmptyDataError(
            f"insufficient tail hits at x={x}: mid={hits_mid}, tail={hits_tail}"
        )
    p_tail, p_mid = hits_tail / n_samples, hits_mid / n_samples
    return TailRatioEstimate(
        x=x,
        n_samples=n_samples,
        ratio=p_tail / p_mid,
        stderr=_ratio_stderr(p_tail, p_mid, n_samples),
        limit=tail_ratio_limit(alpha),
        hits_mid=hits_mid,
        hits_tail=hits_tail,
    )


@dataclass(frozen=True)
class CounterexampleParams:
    """Calibrated threshold M and the induced sigma functional constants.

    a = (P(M <= Z_1 < 2M) - P(Z_1 >= 2M)) / P(M <= Z_1 < 2M)  in (0, 1)
    b = 1 / P(M <= Z_1 < 2M)                                  in (1, inf)

    p_mid/p_tail are the calibration estimates of the two probabilities with
    their standard errors; they propagate into verification error bars.
    """

    alpha: float
    M: float
    a: float
    b_coef: float
    horizon: float
    p_mid: float
    p_tail: float
    se_mid: float
    se_tail: float
    n_calibration: int

    def __post_init__(self):
        if not (0.0 < self.a < 1.0):
            raise ParameterError(f"a={self.a} outside (0,1)")
        if self.b_coef <= 1.0:
            raise ParameterError(f"b={self.b_coef} must exceed 1")
        if self.p_tail >= self.p_mid:
            raise ParameterError("calibration requires P(Z>=2M) < P(M<=Z<2M)")

    def threshold(self, t: float) -> float:
        return 2.0 * self.M * t ** (1.0 / self.alpha)


def calibrate(
    alpha: float,
    n_samples: int,
    rng,
    m_grid=tuple(2.0**j for j in range(1, 15)),
    horizon: float = 1.0,
    min_hits: int = 100,
) -> CounterexampleParams:
    """Pick the smallest admissible M on a doubling grid.

    Admissible means the estimated P(Z_1 >= 2M) sits below P(M <= Z_1 < 2M) by
    at least three joint standard errors, with at least `min_hits` hits in
    both cells; same seed, same params.
    """
    rng = normalize_rng(rng)
    z = stable_1d_samples(alpha, 1.0, n_samples, rng)
    attempts = []
    for m in m_grid:
        hits_mid = int(np.count_nonzero((z >= m) & (z < 2 * m)))
        hits_tail = int(np.count_nonzero(z >= 2 * m))
        q, p = hits_mid / n_samples, hits_tail / n_samples
        attempts.append((m, hits_mid, hits_tail))
        if hits_mid < min_hits or hits_tail < min_hits:
            continue
        # Var(q_hat - p_hat) for disjoint multinomial cells
        se_diff = np.sqrt((q * (1 - q) + p * (1 - p) + 2 * p * q) / n_samples)
        if q - p > 3.0 * se_diff:
            return CounterexampleParams(
                alpha=alpha,
                M=float(m),
                a=(q - p) / q,
                b_coef=1.0 / q,
                horizon=horizon,
                p_mid=q,
                p_tail=p,
                se_mid=float(np.sqrt(q * (1 - q) / n_samples)),
                se_tail=float(np.sqrt(p * (1 - p) / n_samples)),
                n_calibration=n_samples,
            )
    raise ParameterError(
        "no admissible M on the doubling grid; attempts (M, mid hits, tail hits): "
        f"{attempts}"
    )


def sigma_of_law(params: CounterexampleParams, t: float, law: EmpiricalMeasure) -> float:
    """a + b * law([2 M t^{1/alpha}, infinity)); defined for t in (0, horizon]."""
    if not (0.0 < t <= params.horizon):
        raise ParameterError(f"t={t} outside (0, {params.horizon}]")
    if law.dim != 1:
        raise ParameterError("the construction lives on the real line")
    mass = float(np.sum(law.weights[law.atoms[:, 0] >= params.threshold(t)]))
    return params.a + params.b_coef * mass


def verify_two_solutions(
    params: CounterexampleParams,
    n_samples: int,
    t_grid,
    rng,
    scales=(1.0, 2.0, 3.0),
) -> dict:
    """Residuals |sigma_t(Law(c Z_t)) - c| with joint standard errors.

    For c in {1, 2} the residual is zero in expectation (both are strong
    solutions); c = 3 is the negative control and its residual is merely
    recorded.  The standard error combines the fresh-sample error with the
    calibration error of the cell probabilities entering (a, b).
    """
    rng = normalize_rng(rng)
    rows = []
    for t in t_grid:
        z_t = stable_1d_samples(params.alpha, float(t), n_samples, rng)
        thr = params.threshold(float(t))
        for c in scales:
            p_hat = float(np.mean(c * z_t >= thr))
            sigma = params.a + params.b_coef * p_hat
            se_fresh = np.sqrt(p_hat * (1 - p_hat) / n_samples)
            # calibration uncertainty of the target value c (cell masses at 1/c scale)
            if c == 1.0:
                se_cal = params.se_tail
            elif c == 2.0:
                pc = params.p_mid + params.p_tail
                se_cal = np.sqrt(pc * (1 - pc) / params.n_calibration)
            else:
                se_cal = np.sqrt(p_hat * (1 - p_hat) / params.n_calibration)
            se = params.b_coef * float(np.sqrt(se_fresh**2 + se_cal**2))
            rows.append(
                {
                    "t": float(t),
                    "scale": float(c),
                    "sigma": sigma,
                    "residual": sigma - c,
                    "stderr": se,
                    "within_3se": bool(abs(sigma - c) <= 3.0 * se),
                }
            )
    return {
        "alpha": params.alpha,
        "M": params.M,
        "a": params.a,
        "b": params.b_coef,
        "n_samples": n_samples,
        "rows": rows,
    }
