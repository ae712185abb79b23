"""Optimal affine weights for ADPM.

Two-group profiles have a closed form. General privacy vectors are solved by a
one-dimensional search over the noise scale ``eta``: for fixed ``eta`` the
best weights are the minimum-norm point of the simplex under the caps
``w_i <= eps_i * eta``, which is a water-filling problem with an exact
solution. ``oracle_solve`` is an independent dual method used for testing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hdp_mean._backend import get_kernels
from hdp_mean.privacy import DomainError, as_privacy_vector

ETA_RTOL = 1e-10
ORACLE_ITERS = 100_000
ORACLE_MAX_N = 128


class InfeasibleError(ValueError):
    """No weights satisfy the requested constraints."""


@dataclass(frozen=True)
class TwoGroupProfile:
    """``n`` users; a fraction ``f`` at level ``eps1``, the rest at ``eps2``.

    Groups are swapped on construction so that ``eps1 <= eps2``.
    """

    eps1: float
    eps2: float
    n: float
    f: float

    def __post_init__(self):
        e1, e2, n, f = float(self.eps1), float(self.eps2), float(self.n), float(self.f)
        if math.isnan(e1) or math.isnan(e2) or e1 < 0 or e2 < 0:
            raise DomainError("privacy levels must be >= 0")
        if not n >= 1:
            raise DomainError("n must be >= 1")
        if not 0.0 <= f <= 1.0:
            raise DomainError("f must lie in [0, 1]")
        if e1 > e2:
            e1, e2, f = e2, e1, 1.0 - f
        object.__setattr__(self, "eps1", e1)
        object.__setattr__(self, "eps2", e2)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "f", f)

    @property
    def R(self) -> float:
        denom = self.eps1 * self.eps1 * self.n * self.f
        return math.inf if denom == 0 else 1.0 + 8.0 / denom

    @property
    def r(self) -> float:
        if self.eps1 == 0:
            return math.inf
        return self.eps2 / self.eps1

    @property
    def degenerate_group(self) -> bool:
        """The saturation ratio is infinite (``eps1 == 0`` or ``f == 0``)."""
        return math.isinf(self.R)

    @property
    def saturation_eps2(self) -> float:
        if self.degenerate_group:
            return math.inf
        return self.R * self.eps1

    @property
    def saturated(self) -> bool:
        """Regime B: ``eps2 >= R * eps1``."""
        return not self.degenerate_group and self.eps2 >= self.R * self.eps1

    @property
    def eps_bar(self) -> float:
        return _wsum(self.f, self.eps1, 1.0 - self.f, self.eps2)

    @property
    def eps_sq_bar(self) -> float:
        return _wsum(self.f, self.eps1 * self.eps1, 1.0 - self.f, self.eps2 * self.eps2)

    @property
    def group_sizes(self) -> tuple[int, int]:
        n1 = int(round(self.n * self.f))
        return n1, int(round(self.n)) - n1

    def realized(self) -> "TwoGroupProfile":
        """Same profile with integer ``n`` and ``f`` snapped to ``round(n f) / n``."""
        n = int(round(self.n))
        n1, _ = self.group_sizes
        return TwoGroupProfile(self.eps1, self.eps2, n, n1 / n)

    def privacy_vector(self) -> np.ndarray:
        n1, n2 = self.group_sizes
        return np.concatenate([np.full(n1, self.eps1), np.full(n2, self.eps2)])


def _wsum(a, x, b, y):
    # a*x + b*y with 0 * inf treated as 0
    return (a * x if a else 0.0) + (b * y if b else 0.0)


@dataclass(frozen=True)
class WeightSolution:
    """Weights, noise scale and objective ``||w||^2/4 + 2 eta^2``.

    ``weights`` is per user, or per group when ``counts`` gives the number of
    users sharing each entry.
    """

    weights: np.ndarray
    eta: float
    objective: float
    degenerate: bool
    counts: np.ndarray | None = field(default=None)

    @property
    def weight_sum(self) -> float:
        if self.counts is None:
            return float(np.sum(self.weights))
        return float(np.dot(self.counts, self.weights))

    def user_weights(self, sizes=None) -> np.ndarray:
        """Expand per-group weights to users (``sizes`` default to ``counts``)."""
        if self.counts is None:
            return self.weights
        sizes = self.counts if sizes is None else sizes
        return np.repeat(self.weights, np.asarray(sizes, dtype=np.int64))


def saturation_ratio(profile: TwoGroupProfile) -> float:
    """``R = 1 + 8 / (eps1^2 n f)``; infinite when the first group is trivial."""
    return profile.R


def _objective(weights, eta, counts=None):
    if counts is None:
        sq = float(np.dot(weights, weights))
    else:
        sq = float(np.dot(counts, weights * weights))
    return sq / 4.0 + 2.0 * eta * eta


def solve_two_group(profile: TwoGroupProfile) -> WeightSolution:
    """Closed-form ADPM weights for two privacy groups."""
    n, f = profile.n, profile.f
    e1, e2 = profile.eps1, profile.eps2
    counts = np.array([n * f, n * (1.0 - f)])
    if profile.saturated:
        R = profile.R
        w2 = 1.0 / (n * (f / R + (1.0 - f)))
        w1 = w2 / R
        eta = w1 / e1
    else:
        if e2 == 0 or (e1 == 0 and f == 1.0):
            # nobody may be used
            return WeightSolution(np.zeros(2), 0.0, math.inf, True, counts)
        # scale by eps2 so that eps2 = inf is handled
        s = e1 / e2
        base = n * _wsum(f, s, 1.0 - f, 1.0)
        w1 = s / base
        w2 = 1.0 / base
        eta = 1.0 / (n * profile.eps_bar)
    weights = np.array([w1, w2])
    obj = _objective(weights, eta, counts)
    return WeightSolution(weights, eta, obj, obj > 0.25, counts)


def project_capped_simplex(eps, eta, backend=None) -> np.ndarray:
    """Minimum-norm ``w`` with ``sum(w) = 1`` and ``0 <= w_i <= eps_i * eta``."""
    eps = as_privacy_vector(eps)
    if not eta >= 0:
        raise DomainError("noise scale must be non-negative")
    order = np.argsort(eps, kind="stable")
    with np.errstate(invalid="ignore"):
        caps = np.where(np.isinf(eps), math.inf, eps * eta)
    lam = get_kernels(backend).water_level(caps[order])
    if math.isnan(lam):
        raise InfeasibleError("noise scale below 1/||eps||_1")
    return np.minimum(lam, caps)


def _finalize(eps, w) -> WeightSolution:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(w == 0, 0.0, w / eps)
    eta = float(ratios.max())
    obj = _objective(w, eta)
    return WeightSolution(w, eta, obj, obj > 0.25)


def solve_general(eps, rtol=ETA_RTOL, backend=None) -> WeightSolution:
    """ADPM weights for an arbitrary privacy vector.

    Users with ``eps_i == 0`` get weight zero. The noise scale is found by
    golden-section search on ``[1/||eps||_1, 1/(m min eps)]`` where ``m``
    counts the users with positive level.
    """
    eps = as_privacy_vector(eps)
    n = eps.shape[0]
    active = np.flatnonzero(eps > 0)
    if active.size == 0:
        return WeightSolution(np.zeros(n), 0.0, math.inf, True)
    e = eps[active]
    finite = e[np.isfinite(e)]
    w = np.zeros(n)
    if finite.size < e.size:
        # public users alone already need no noise
        eta_opt = _public_eta(e, rtol, backend)
    else:
        e_sorted = np.sort(e)
        lo = 1.0 / float(np.sum(e_sorted))
        hi = 1.0 / (e.size * float(e_sorted[0]))
        eta_opt = get_kernels(backend).minimize_eta(e_sorted, lo, hi, rtol)
    w[active] = project_capped_simplex(e, eta_opt, backend)
    return _finalize(eps, w)


def _public_eta(e, rtol, backend):
    fin = np.sort(e[np.isfinite(e)])
    if fin.size == 0:
        return 0.0
    # caps of finite users scale with eta; public users are uncapped
    hi = 1.0 / (e.size * float(fin[0]))
    sorted_all = np.concatenate([fin, np.full(e.size - fin.size, math.inf)])
    return get_kernels(backend).minimize_eta(sorted_all, 0.0, hi, rtol)


def oracle_solve(eps, iters=ORACLE_ITERS, backend=None) -> WeightSolution:
    """Independent solver: accelerated projected gradient on the dual QP.

    Only meant for small problems (``n <= 128``) in tests.
    """
    eps = as_privacy_vector(eps)
    n = eps.shape[0]
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle_solve is limited to n <= {ORACLE_MAX_N}")
    active = np.flatnonzero(eps > 0)
    if active.size == 0:
        return WeightSolution(np.zeros(n), 0.0, math.inf, True)
    w_act, _ = get_kernels(backend).dual_oracle(eps[active], int(iters))
    w = np.zeros(n)
    w[active] = w_act
    return _finalize(eps, w)


def oracle_dual_bound(eps, iters=ORACLE_ITERS, backend=None) -> float:
    """Dual objective reached by the oracle: a lower bound on the optimum."""
    eps = as_privacy_vector(eps)
    active = eps[eps > 0]
    if active.size == 0:
        return math.inf
    return get_kernels(backend).dual_oracle(active, int(iters))[1]


def proportional_weights(eps) -> tuple[np.ndarray, float]:
    """Weights ``eps / ||eps||_1`` with noise scale ``1 / ||eps||_1``."""
    eps = as_privacy_vector(eps)
    total = float(np.sum(eps))
    if not (0 < total < math.inf):
        raise InfeasibleError("proportional weighting needs 0 < ||eps||_1 < inf")
    return eps / total, 1.0 / total
