"""Drift/noise coefficient sets, their standing assumptions, and a numerical
assumption probe.

A coefficient set declares the constants of the three standing assumptions:

(A1)  alpha in (1, 2);
(A2)  |b_t(x,g) - b_t(y,g~)| <= K1 (||g-g~||_{k,var} + W_k(g,g~) + |x-y|^beta)
      with beta in (0,1), 2 beta + alpha > 2, k in [1, alpha), ||b||_inf <= b_sup;
(A3)  K2^{-1} I <= (sigma sigma*)(g) <= K2 I with K2 >= 1, and sigma Lipschitz
      in the measure with constant K2 against W_eta + W_k, eta in (0,1).

The ellipticity sandwich in (A3) is probed by an eigenvalue check on every
noise evaluation; drift callbacks are vectorized over particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, NumericalIntegrityError, ParameterError
from .measures import EmpiricalMeasure
from .metrics import MetricParams, wasserstein, weighted_variation
from .measures import BinningSpec
from .rng import stream

_EIG_TOL = 1e-9


@dataclass
class CoefficientSet:
    """Drift b(t, x, mu) and noise sigma(t, mu) with declared constants.

    drift : callable (t, x, mu) -> array
        x is a batch of particle positions with shape (n, dim); the return
        value must have the same shape.
    noise : callable (t, mu) -> array
        Returns the (dim, noise_dim) matrix sigma_t(mu); no x argument by
        construction (measure-dependent noise only).
    """

    drift: object
    noise: object
    alpha: float
    beta: float
    k: float
    eta: float
    K1: float
    K2: float
    b_sup: float
    dim: int = 1
    noise_dim: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1.0 < self.alpha < 2.0:
            raise AssumptionError(f"(A1) requires alpha in (1,2); got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise AssumptionError(f"(A2) requires beta in (0,1); got {self.beta}")
        if not 2.0 * self.beta + self.alpha > 2.0:
            raise AssumptionError(
                f"(A2) requires 2*beta + alpha > 2; got {2 * self.beta + self.alpha}"
            )
        if not 1.0 <= self.k < self.alpha:
            raise AssumptionError(f"(A2) requires k in [1, alpha); got k={self.k}")
        if self.K1 <= 0:
            raise AssumptionError("(A2) requires K1 > 0")
        if self.b_sup < 0 or not np.isfinite(self.b_sup):
            raise AssumptionError("(A2) requires a finite drift sup bound")
        if self.K2 < 1.0:
            raise AssumptionError(f"(A3) requires K2 >= 1; got {self.K2}")
        if not 0.0 < self.eta < 1.0:
            raise AssumptionError(f"(A3) requires eta in (0,1); got {self.eta}")
        if self.dim < 1 or self.noise_dim < 1:
            raise ParameterError("dimensions must be positive")

    def drift_eval(self, t: float, x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        out = np.asarray(self.drift(t, x, mu), dtype=float)
        if out.shape != x.shape:
            raise NumericalIntegrityError(
                f"drift returned shape {out.shape}, expected {x.shape}"
            )
        return out

    def noise_eval(self, t: float, mu: EmpiricalMeasure) -> np.ndarray:
        """sigma_t(mu) with the (A3) eigenvalue sandwich probed on every call."""
        s = np.asarray(self.noise(t, mu), dtype=float)
        if s.shape != (self.dim, self.noise_dim):
            raise NumericalIntegrityError(
                f"noise returned shape {s.shape}, expected {(self.dim, self.noise_dim)}"
            )
        eigs = np.linalg.eigvalsh(s @ s.T)
        if eigs.min() < 1.0 / self.K2 - _EIG_TOL or eigs.max() > self.K2 + _EIG_TOL:
            raise NumericalIntegrityError(
                f"(A3) ellipticity violated at t={t}: sigma*sigma^T eigenvalues "
                f"[{eigs.min():.6g}, {eigs.max():.6g}] outside [{1 / self.K2:.6g}, {self.K2:.6g}]"
            )
        return s


def _radial_holder(x: np.ndarray, beta: float) -> np.ndarray:
    """tanh(|x|^beta) * x/|x|: bounded by 1 and globally beta-Hoelder."""
    r = np.linalg.norm(x, axis=1)
    safe = np.maximum(r, 1e-300)
    return (np.tanh(safe**beta) / safe)[:, None] * x


def make_benchmark_coefficients(
    dim: int = 1,
    alpha: float = 1.5,
    beta: float = 0.6,
    k: float = 1.2,
    eta: float = 0.5,
    c1: float = 0.5,
    c2: float = 0.5,
    c3: float = 0.25,
) -> CoefficientSet:
    """Benchmark coefficient family satisfying (A1)-(A3).

    b_t(x, mu) = c1 cos(t) tanh(|x|^beta) x/|x| + c2 mu(tanh|.|) u0
    sigma_t(mu) = (1 + c3 tanh(min(|mean(mu)|, 1))) I

    The drift is bounded by c1 + c2 and beta-Hoelder in x with constant <= 3 c1;
    its measure term is c2-Lipschitz against W_1 <= W_k.  The noise multiplier
    lies in [1, 1 + c3 tanh 1] (uniformly elliptic) and is c3-Lipschitz against
    W_1 since the mean functional is 1-Lipschitz under W_1.
    """
    u0 = np.zeros(dim)
    u0[0] = 1.0
    eye = np.eye(dim)

    def drift(t, x, mu: EmpiricalMeasure):
        mphi = float(np.sum(mu.weights * np.tanh(mu.norms())))
        return c1 * np.cos(t) * _radial_holder(np.atleast_2d(x), beta) + c2 * mphi * u0

    def noise(t, mu: EmpiricalMeasure):
        w = min(float(np.linalg.norm(mu.mean())), 1.0)
        return (1.0 + c3 * np.tanh(w)) * eye

    return CoefficientSet(
        drift=drift,
        noise=noise,
        alpha=alpha,
        beta=beta,
        k=k,
        eta=eta,
        K1=max(3.0 * c1, c2),
        K2=max((1.0 + c3 * np.tanh(1.0)) ** 2, 1.0) + 0.1,
        b_sup=c1 + c2,
        dim=dim,
        noise_dim=dim,
    )


def make_zero_drift_identity(dim: int = 1, alpha: float = 1.5, **kw) -> CoefficientSet:
    """b = 0, sigma = I: the driftless isotropic reference coefficients."""
    eye = np.eye(dim)
    return CoefficientSet(
        drift=lambda t, x, mu: np.zeros_like(np.atleast_2d(x)),
        noise=lambda t, mu: eye,
        alpha=alpha,
        beta=kw.get("beta", 0.6),
        k=kw.get("k", 1.2),
        eta=kw.get("eta", 0.5),
        K1=kw.get("K1", 1.0),
        K2=kw.get("K2", 1.0),
        b_sup=0.0,
        dim=dim,
        noise_dim=dim,
    )


BUILTIN_COEFFICIENTS = {
    "benchmark": make_benchmark_coefficients,
    "zero-drift-identity": make_zero_drift_identity,
}


@dataclass(frozen=True)
class ProbePlan:
    """Sampling plan for the numerical (A2)/(A3) audit."""

    n_probes: int = 1000
    seed: int = 0
    point_scale: float = 3.0
    n_atoms: int = 24
    times: tuple = (0.0, 0.3, 0.7, 1.0)


def _random_measure_pair(rng, dim: int, n_atoms: int):
    """Two measures on one shared atom set (weighted variation is then exact)."""
    atoms = rng.normal(scale=2.0, size=(n_atoms, dim))
    w1 = rng.random(n_atoms)
    w2 = rng.random(n_atoms)
    return (
        EmpiricalMeasure(atoms, w1 / w1.sum()),
        EmpiricalMeasure(atoms, w2 / w2.sum()),
    )


def probe_assumptions(coeffs: CoefficientSet, plan: ProbePlan = ProbePlan()) -> dict:
    """Empirical audit of the declared (A2)/(A3) constants.

    Returns max observed ratios (drift Hoelder in x, drift Lipschitz in the
    measure against ||.||_{k,var} + W_k, noise Lipschitz against W_eta + W_k)
    and the extreme sigma*sigma^T eigenvalues, with pass flags against the
    declared constants.
    """
    rng = stream(plan.seed, 0xA2)
    d = coeffs.dim
    holder = 0.0
    b_measure = 0.0
    sigma_lip = 0.0
    eig_min, eig_max = np.inf, -np.inf
    b_max = 0.0
    for i in range(plan.n_probes):
        t = plan.times[i % len(plan.times)]
        x = rng.normal(scale=plan.point_scale, size=(1, d))
        y = rng.normal(scale=plan.point_scale, size=(1, d))
        g1, g2 = _random_measure_pair(rng, d, plan.n_atoms)
        bx = coeffs.drift_eval(t, x, g1)[0]
        by = coeffs.drift_eval(t, y, g1)[0]
        b_max = max(b_max, float(np.linalg.norm(bx)), float(np.linalg.norm(by)))
        dx = float(np.linalg.norm(x - y))
        if dx > 1e-12:
            holder = max(holder, float(np.linalg.norm(bx - by)) / dx**coeffs.beta)
        wk = wasserstein(g1, g2, coeffs.k)
        kvar = weighted_variation(g1, g2, coeffs.k, bins=None)
        weta = wasserstein(g1, g2, coeffs.eta)
        bg2 = coeffs.drift_eval(t, x, g2)[0]
        if kvar + wk > 1e-12:
            b_measure = max(b_measure, float(np.linalg.norm(bx - bg2)) / (kvar + wk))
        s1 = coeffs.noise_eval(t, g1)
        s2 = coeffs.noise_eval(t, g2)
        if weta + wk > 1e-12:
            sigma_lip = max(
                sigma_lip, float(np.linalg.norm(s1 - s2, ord=2)) / (weta + wk)
            )
        eigs = np.linalg.eigvalsh(s1 @ s1.T)
        eig_min, eig_max = min(eig_min, eigs.min()), max(eig_max, eigs.max())
    report = {
        "holder_ratio_x": holder,
        "drift_measure_ratio": b_measure,
        "sigma_measure_ratio": sigma_lip,
        "drift_sup": b_max,
        "eig_min": float(eig_min),
        "eig_max": float(eig_max),
        "declared": {
            "K1": coeffs.K1,
            "K2": coeffs.K2,
            "b_sup": coeffs.b_sup,
        },
    }
    report["pass"] = bool(
        holder <= coeffs.K1 + 1e-9
        and b_measure <= coeffs.K1 + 1e-9
        and sigma_lip <= coeffs.K2 + 1e-9
        and b_max <= coeffs.b_sup + 1e-9
        and eig_min >= 1.0 / coeffs.K2 - _EIG_TOL
        and eig_max <= coeffs.K2 + _EIG_TOL
    )
    return report
