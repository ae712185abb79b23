"""Upper and lower bounds on the two-group minimax error.

The upper bound is the worst-case MSE of ADPM. The lower bound uses the
explicit constants from the Le Cam argument (1/1560 below the saturation
point, 1/1048 above it), so ``lower <= upper`` can be asserted literally.
``lower_bound_from_first_principles`` redoes the Le Cam optimisation
numerically instead of using the closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hdp_mean.privacy import DomainError, as_privacy_vector
from hdp_mean.weights import TwoGroupProfile

TRIVIAL_ERROR = 0.25
LOWER_CONST_A = 1.0 / 1560.0
LOWER_CONST_B = 1.0 / 1048.0
LECAM_DELTA_MAX = 0.5


@dataclass(frozen=True)
class BoundReport:
    upper: float
    lower: float
    regime: str
    saturation_eps2: float
    lower_terms: tuple[float, float, float]


@dataclass(frozen=True)
class LeCamInstance:
    """Two Bernoulli laws on {-0.5, 0.5} with means +delta/2 and -delta/2."""

    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta <= LECAM_DELTA_MAX:
            raise DomainError("delta must lie in [0, 0.5]")

    @property
    def means(self) -> tuple[float, float]:
        return self.delta / 2.0, -self.delta / 2.0

    @property
    def tv_p(self) -> float:
        return self.delta

    @property
    def kl_p_bound(self) -> float:
        return 3.0 * self.delta ** 2

    @property
    def kl_p(self) -> float:
        d = self.delta
        return d * math.log1p(2.0 * d / (1.0 - d)) if d > 0 else 0.0

    @property
    def gamma(self) -> float:
        return self.delta / 2.0


def _regime_a_value(p: TwoGroupProfile) -> float:
    # (eps^2-bar)/(4 n eps-bar^2) + 2/(n eps-bar)^2, written in s = eps1/eps2
    n, f = p.n, p.f
    if p.eps2 == 0:
        return math.inf
    s = p.eps1 / p.eps2
    mass = f * s + (1.0 - f)
    if mass == 0:
        return math.inf
    var = (f * s * s + (1.0 - f)) / (4.0 * n * mass * mass)
    noise = 0.0 if math.isinf(p.eps2) else 2.0 / (n * p.eps2 * mass) ** 2
    return var + noise


def _regime_b_value(p: TwoGroupProfile) -> float:
    n, f, R = p.n, p.f, p.R
    if math.isinf(R) and f == 1:
        return math.inf
    # R / (4n[f + (1-f)R]) divided through by R; R can be huge for tiny n f eps1^2
    return 1.0 / (4.0 * n * (f / R + (1.0 - f)))


def eq_average_form(p: TwoGroupProfile) -> float:
    """Regime-A bound via the privacy averages (pre-minimum)."""
    eb, e2b = p.eps_bar, p.eps_sq_bar
    return e2b / (4.0 * p.n * eb * eb) + 2.0 / (p.n * eb) ** 2


def eq_ratio_form(p: TwoGroupProfile, r=None) -> float:
    """Regime-A bound ``U(r)`` via the ratios R and r (pre-minimum)."""
    r = p.r if r is None else r
    f, R = p.f, p.R
    return (f * R + (1.0 - f) * r * r) / (4.0 * p.n * (f + (1.0 - f) * r) ** 2)


def eq_saturated_form(p: TwoGroupProfile) -> float:
    """Regime-B bound in terms of R (pre-minimum)."""
    return _regime_b_value(p)


def eq_saturated_explicit_form(p: TwoGroupProfile) -> float:
    """Regime-B bound written with n f eps1^2 (pre-minimum)."""
    a = p.n * p.f * p.eps1 ** 2
    return (a + 8.0) / (4.0 * p.n * (a + 8.0 * (1.0 - p.f)))


def regime(p: TwoGroupProfile) -> str:
    return "B" if p.saturated else "A"


def upper_bound(p: TwoGroupProfile) -> float:
    """Worst-case MSE achieved by ADPM, capped at the trivial 1/4."""
    value = _regime_b_value(p) if p.saturated else _regime_a_value(p)
    return min(value, TRIVIAL_ERROR)


def lower_bound_terms(p: TwoGroupProfile) -> tuple[float, float, float]:
    """``(L1, L2, L3(r))`` from the Le Cam argument, before capping at 1/4."""
    n, f = p.n, p.f
    l1 = 1.0 / (6.0 * n)
    l2 = _regime_b_value(p)
    if f == 0:
        l3 = 0.0
    elif p.eps1 == 0:
        l3 = math.inf
    else:
        # f (R - 1) = 8 / (n eps1^2)
        f_rm1 = 8.0 / (n * p.eps1 ** 2)
        l3 = 0.0 if math.isinf(p.r) else f_rm1 / (4.0 * n * (f + p.r * (1.0 - f)) ** 2)
    return l1, l2, l3


def lower_bound(p: TwoGroupProfile) -> float:
    """Closed-form minimax lower bound with explicit constants."""
    below = LOWER_CONST_A * min(_regime_a_value(p), TRIVIAL_ERROR)
    above = LOWER_CONST_B * min(_regime_b_value(p), TRIVIAL_ERROR)
    if p.degenerate_group:
        return below
    R = p.R
    if p.eps2 > R * p.eps1:
        return above
    if p.eps2 < R * p.eps1:
        return below
    return max(below, above)


def bound_report(p: TwoGroupProfile) -> BoundReport:
    return BoundReport(
        upper=upper_bound(p),
        lower=lower_bound(p),
        regime=regime(p),
        saturation_eps2=p.saturation_eps2,
        lower_terms=lower_bound_terms(p),
    )


def tv_upper_bound(eps, k: int, tv_p: float, kl_p: float) -> float:
    """Bound on the TV distance between the output laws of any eps-DP estimator.

    The ``k`` most private users contribute through the DP constraint, the
    remaining ``n - k`` through Pinsker's inequality.
    """
    eps = np.sort(as_privacy_vector(eps))
    n = eps.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    head = float(np.sum(-np.expm1(-eps[:k])))
    return 2.0 * tv_p * head + math.sqrt((n - k) / 2.0 * kl_p)


def tv_upper_bound_two_group(p: TwoGroupProfile, k: str, tv_p: float, kl_p: float) -> float:
    """``tv_upper_bound`` for a two-group profile with real-valued group masses.

    ``k`` selects the split: ``"none"`` (k = 0), ``"first"`` (k = n f) or
    ``"all"`` (k = n).
    """
    n1, n2 = p.n * p.f, p.n * (1.0 - p.f)
    d1 = -math.expm1(-p.eps1)
    d2 = -math.expm1(-p.eps2)
    if k == "none":
        return math.sqrt(p.n / 2.0 * kl_p)
    if k == "first":
        return 2.0 * tv_p * n1 * d1 + math.sqrt(n2 / 2.0 * kl_p)
    if k == "all":
        return 2.0 * tv_p * (n1 * d1 + n2 * d2)
    raise ValueError(f"unknown split {k!r}")


def lecam_value(gamma: float, tv_q_bound: float) -> float:
    """Le Cam two-point bound ``gamma^2/2 * (1 - TV)``."""
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    tv = min(max(tv_q_bound, 0.0), 1.0)
    return max(gamma * gamma / 2.0 * (1.0 - tv), 0.0)


def _candidate_deltas(p: TwoGroupProfile, num=4000) -> np.ndarray:
    grid = np.geomspace(1e-9, LECAM_DELTA_MAX, num)
    n, f = p.n, p.f
    picks = [1.0 / math.sqrt(6.0 * n)]
    s = 4.0 * n * f * p.eps1 + 4.0 * math.sqrt(8.0 * n * (1.0 - f))
    if s > 0:
        picks.append(1.0 / s)
    s = 4.0 * n * (f * p.eps1 + ((1.0 - f) * p.eps2 if f < 1 else 0.0))
    if 0 < s < math.inf:
        picks.append(1.0 / s)
    picks = [min(d, LECAM_DELTA_MAX) for d in picks]
    return np.unique(np.concatenate([grid, picks]))


def lower_bound_from_first_principles(p: TwoGroupProfile, num=4000) -> float:
    """Maximise the Le Cam bound over delta and the split k in {0, n f, n}.

    Uses the exact Bernoulli KL and the exact ``1 - e^-eps`` DP factor, so the
    result is at least as large as every closed-form term it relaxes.
    """
    delta = _candidate_deltas(p, num)
    kl = delta * np.log1p(2.0 * delta / (1.0 - delta))
    gamma = delta / 2.0
    n1, n2 = p.n * p.f, p.n * (1.0 - p.f)
    d1 = -math.expm1(-p.eps1)
    d2 = -math.expm1(-p.eps2)
    splits = (
        np.sqrt(p.n / 2.0 * kl),
        2.0 * delta * n1 * d1 + np.sqrt(n2 / 2.0 * kl),
        2.0 * delta * (n1 * d1 + n2 * d2),
    )
    best = 0.0
    for tv in splits:
        value = gamma * gamma / 2.0 * (1.0 - np.clip(tv, 0.0, 1.0))
        best = max(best, float(value.max()))
    return best
