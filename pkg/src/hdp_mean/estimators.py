"""ADPM and the baseline mechanisms behind one interface.

Every mechanism supports a single release (``release``), a vectorised
release over a batch of datasets (``release_batch``), a closed-form MSE under
a distribution with given mean and variance (``analytic_mse``) and a privacy
certificate (``certificate``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hdp_mean.privacy import (
    DOMAIN_HIGH,
    DOMAIN_LOW,
    DpCertificate,
    as_dataset,
    as_privacy_vector,
    certify,
    dp_certificate,
    histogram_ratio_audit,
    laplace_from_uniform,
)
from hdp_mean.weights import (
    InfeasibleError,
    TwoGroupProfile,
    WeightSolution,
    proportional_weights,
    solve_general,
    solve_two_group,
)

KINDS = ("ADPM", "UNI", "SM", "PROPDPM", "LDPE", "STRETCH")


@dataclass(frozen=True, eq=False)
class MechanismSpec:
    kind: str
    privacy: object
    clamp: bool = False

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown mechanism {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not isinstance(self.privacy, TwoGroupProfile):
            object.__setattr__(self, "privacy", as_privacy_vector(self.privacy))

    @property
    def profile(self) -> TwoGroupProfile | None:
        return self.privacy if isinstance(self.privacy, TwoGroupProfile) else None

    @property
    def privacy_vector(self) -> np.ndarray:
        if self.profile is not None:
            return self.profile.privacy_vector()
        return self.privacy


@dataclass(frozen=True)
class AnalyticMse:
    variance_term: float
    noise_term: float
    bias_sq_term: float
    exact: bool = True
    reason: str = ""

    @property
    def total(self) -> float:
        return self.variance_term + self.noise_term + self.bias_sq_term

    @classmethod
    def infeasible(cls, reason: str) -> "AnalyticMse":
        return cls(math.inf, 0.0, 0.0, exact=False, reason=reason)


def _laplace_batch(scale, rng, size):
    u = rng.random(size)
    if scale == 0:
        return np.zeros(size)
    return laplace_from_uniform(u, scale)


class Mechanism:
    kind = ""

    def __init__(self, spec: MechanismSpec):
        self.spec = spec
        self.eps = spec.privacy_vector
        self.n = self.eps.shape[0]
        self.clamp = spec.clamp

    def _post(self, y):
        if self.clamp:
            return np.clip(y, DOMAIN_LOW, DOMAIN_HIGH)
        return y

    def release(self, x, rng) -> float:
        x = as_dataset(x)
        if x.shape[0] != self.n:
            raise ValueError(f"dataset has {x.shape[0]} values but {self.n} privacy levels were given")
        return float(self.release_batch(x[None, :], rng)[0])

    def release_batch(self, X, rng) -> np.ndarray:
        raise NotImplementedError

    def analytic_mse(self, variance, mean) -> AnalyticMse:
        raise NotImplementedError

    def certificate(self) -> DpCertificate:
        raise NotImplementedError


class AffineMechanism(Mechanism):
    """``<w, x> + Laplace(eta)``; ``degenerate`` releases the constant 0."""

    def __init__(self, spec, weights, eta, degenerate=False):
        super().__init__(spec)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.eta = float(eta)
        self.degenerate = degenerate

    def release_batch(self, X, rng):
        X = np.asarray(X, dtype=np.float64)
        noise = _laplace_batch(self.eta, rng, X.shape[0])
        if self.degenerate:
            return np.zeros(X.shape[0])
        return self._post(X @ self.weights + noise)

    def analytic_mse(self, variance, mean):
        if self.degenerate:
            return AnalyticMse(0.0, 0.0, mean * mean)
        w = self.weights
        total_w = float(np.sum(w))
        return AnalyticMse(
            variance_term=variance * float(np.dot(w, w)),
            noise_term=2.0 * self.eta * self.eta,
            bias_sq_term=(mean * (total_w - 1.0)) ** 2,
            exact=not self.clamp,
        )

    def certificate(self):
        return dp_certificate(self.weights, self.eta, self.eps, degenerate=self.degenerate)


class ADPM(AffineMechanism):
    kind = "ADPM"

    def __init__(self, spec):
        if spec.profile is not None:
            prof = spec.profile.realized()
            sol = solve_two_group(prof)
            n1, n2 = prof.group_sizes
            weights = np.concatenate([np.full(n1, sol.weights[0]), np.full(n2, sol.weights[1])])
        else:
            sol = solve_general(spec.privacy)
            weights = sol.weights
        self.solution: WeightSolution = sol
        if sol.degenerate:
            weights = np.zeros_like(weights)
        super().__init__(spec, weights, 0.0 if sol.degenerate else sol.eta, sol.degenerate)


class UNI(AffineMechanism):
    kind = "UNI"

    def __init__(self, spec):
        eps = spec.privacy_vector
        eps_min = float(eps.min())
        if not eps_min > 0:
            raise InfeasibleError("UNI needs every privacy level > 0")
        n = eps.shape[0]
        super().__init__(spec, np.full(n, 1.0 / n), 1.0 / (n * eps_min) if math.isfinite(eps_min) else 0.0)


class PropDPM(AffineMechanism):
    kind = "PROPDPM"

    def __init__(self, spec):
        eps = spec.privacy_vector
        if np.isinf(eps).any():
            raise InfeasibleError("proportional weighting collapses onto public users")
        w, eta = proportional_weights(eps)
        super().__init__(spec, w, eta)


class Stretch(AffineMechanism):
    """Scale each datum by ``eps_i / eps_max``, then a homogeneous eps_max release."""

    kind = "STRETCH"

    def __init__(self, spec):
        eps = spec.privacy_vector
        eps_max = float(eps.max())
        if not (0 < eps_max < math.inf):
            raise InfeasibleError("stretching needs a finite positive maximum privacy level")
        n = eps.shape[0]
        super().__init__(spec, eps / (eps_max * n), 1.0 / (n * eps_max))


class SM(Mechanism):
    """Subsample user i with probability (e^eps_i - 1)/(e^t - 1), t = max eps.

    The subsample mean gets Laplace noise of scale 1/(m t) for realised size m;
    an empty subsample releases 0.
    """

    kind = "SM"

    def __init__(self, spec):
        super().__init__(spec)
        t = float(self.eps.max())
        if math.isinf(t):
            raise InfeasibleError("SM undefined for public users")
        if not t > 0:
            raise InfeasibleError("SM needs a positive maximum privacy level")
        self.t = t
        self.probs = sampling_probabilities(self.eps, t)

    def release_batch(self, X, rng):
        X = np.asarray(X, dtype=np.float64)
        trials = X.shape[0]
        mask = rng.random(X.shape) < self.probs
        u = rng.random(trials)
        m = mask.sum(axis=1)
        s = np.where(mask, X, 0.0).sum(axis=1)
        out = np.zeros(trials)
        hit = m > 0
        scale = 1.0 / (m[hit] * self.t)
        out[hit] = s[hit] / m[hit] + laplace_from_uniform(u[hit], 1.0) * scale
        return self._post(out)

    def size_pmf(self) -> np.ndarray:
        return poisson_binomial_pmf(self.probs)

    def analytic_mse(self, variance, mean):
        pmf = self.size_pmf()
        m = np.arange(1, pmf.shape[0])
        tail = pmf[1:]
        return AnalyticMse(
            variance_term=float(np.dot(tail, variance / m)),
            noise_term=float(np.dot(tail, 2.0 / (m * self.t) ** 2)),
            bias_sq_term=float(pmf[0]) * mean * mean,
            exact=not self.clamp,
        )

    def certificate(self):
        # amplification by subsampling: log(1 + p_i (e^t - 1))
        eff = np.log1p(self.probs * math.expm1(self.t))
        return certify(eff, self.eps)


def sampling_probabilities(eps, t) -> np.ndarray:
    """``(e^eps - 1)/(e^t - 1)`` evaluated without overflow."""
    eps = np.asarray(eps, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.exp(eps - t) * (-np.expm1(-eps)) / (-math.expm1(-t))
    return np.where(eps == 0, 0.0, np.minimum(p, 1.0))


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Distribution of the number of successes of independent Bernoulli trials."""
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for k, p in enumerate(probs, start=1):
        pmf[1 : k + 1] = pmf[1 : k + 1] * (1.0 - p) + pmf[:k] * p
        pmf[0] *= 1.0 - p
    return pmf


class LDPE(Mechanism):
    """Noisy mean per privacy level, combined by worst-case inverse variance.

    Each group g of users sharing the level eps_g releases its mean plus
    Laplace(1/(eps_g n_g)); the releases are mixed with weights proportional
    to 1/E_g, E_g = 1/(4 n_g) + 2/(n_g eps_g)^2.
    """

    kind = "LDPE"

    def __init__(self, spec):
        super().__init__(spec)
        if spec.profile is not None:
            n1, n2 = spec.profile.group_sizes
            if n1 < 1 or n2 < 1:
                raise InfeasibleError("LDPE needs both groups nonempty")
            e = spec.profile
            levels = np.array([e.eps1, e.eps2])
            group = np.repeat([0, 1], [n1, n2])
        else:
            levels, group = np.unique(self.eps, return_inverse=True)
        sizes = np.bincount(group, minlength=levels.shape[0]).astype(np.float64)
        with np.errstate(divide="ignore"):
            worst = 1.0 / (4.0 * sizes) + np.where(np.isinf(levels), 0.0, 2.0 / (sizes * levels) ** 2)
        usable = levels > 0
        if not usable.any():
            raise InfeasibleError("LDPE needs at least one positive privacy level")
        inv = np.where(usable, 1.0 / np.where(usable, worst, 1.0), 0.0)
        self.levels = levels
        self.group = group
        self.sizes = sizes
        self.group_worst = np.where(usable, worst, math.inf)
        self.mix = inv / inv.sum()
        self.noise_scales = np.where(usable & np.isfinite(levels), 1.0 / (sizes * np.where(usable, levels, 1.0)), 0.0)
        self.user_weights = self.mix[group] / sizes[group]

    @property
    def combined_worst_case(self) -> float:
        """Worst-case MSE proxy ``1 / sum_g 1/E_g`` (E1 E2/(E1 + E2) for two groups)."""
        usable = np.isfinite(self.group_worst)
        return float(1.0 / np.sum(1.0 / self.group_worst[usable]))

    def release_batch(self, X, rng):
        X = np.asarray(X, dtype=np.float64)
        u = rng.random((X.shape[0], self.levels.shape[0]))
        noise = laplace_from_uniform(u, 1.0) * self.noise_scales
        return self._post(X @ self.user_weights + noise @ self.mix)

    def analytic_mse(self, variance, mean):
        a2 = self.mix ** 2
        return AnalyticMse(
            variance_term=float(np.dot(a2, variance / self.sizes)),
            noise_term=float(np.dot(a2, 2.0 * self.noise_scales ** 2)),
            bias_sq_term=0.0,
            exact=not self.clamp,
        )

    def certificate(self):
        # each group's release touches only its own users (post-processing for the mix)
        eff = np.zeros(self.n)
        for g in range(self.levels.shape[0]):
            members = self.group == g
            if self.mix[g] == 0:
                continue
            scale = self.noise_scales[g]
            w = np.full(int(members.sum()), 1.0 / self.sizes[g])
            eff[members] = dp_certificate(w, scale, self.eps[members]).effective_levels
        return certify(eff, self.eps)


_REGISTRY = {"ADPM": ADPM, "UNI": UNI, "SM": SM, "PROPDPM": PropDPM, "LDPE": LDPE, "STRETCH": Stretch}


def build(spec: MechanismSpec) -> Mechanism:
    """Instantiate the mechanism for ``spec``; raises ``InfeasibleError``."""
    return _REGISTRY[spec.kind](spec)


def analytic_mse(spec: MechanismSpec, dist_variance: float, dist_mean: float) -> AnalyticMse:
    try:
        mech = build(spec)
    except InfeasibleError as exc:
        return AnalyticMse.infeasible(str(exc))
    return mech.analytic_mse(dist_variance, dist_mean)


def audit_mechanism(mech: Mechanism, draws: int, seed: int, user=None, chunk_values=2_000_000):
    """Empirical density-ratio test on the neighbouring datasets of one user.

    User ``user`` (default: the one with the largest certified level) takes the
    values -0.5 and +0.5 while everybody else sits at 0. Returns the audited
    user, its certified level and the ``AuditResult``.
    """
    eff = mech.certificate().effective_levels
    i = int(np.argmax(eff)) if user is None else int(user)
    xa = np.zeros(mech.n)
    xb = np.zeros(mech.n)
    xa[i], xb[i] = DOMAIN_LOW, DOMAIN_HIGH
    rngs = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7, j))) for j in (0, 1)]
    chunk = max(1, min(draws, chunk_values // mech.n))
    outs = ([], [])
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        for x, rng, out in zip((xa, xb), rngs, outs):
            out.append(mech.release_batch(np.broadcast_to(x, (k, mech.n)), rng))
        done += k
    res = histogram_ratio_audit(np.concatenate(outs[0]), np.concatenate(outs[1]), float(eff[i]))
    return i, float(eff[i]), res


def _run(kind, privacy, x, rng, clamp=False):
    return build(MechanismSpec(kind, privacy, clamp)).release(x, rng)


def adpm_estimate(eps, x, rng, clamp=False) -> float:
    return _run("ADPM", eps, x, rng, clamp)


def uni_estimate(eps1, x, rng, clamp=False) -> float:
    x = as_dataset(x)
    if not eps1 > 0:
        raise InfeasibleError("UNI needs eps1 > 0")
    return _run("UNI", np.full(x.shape[0], float(eps1)), x, rng, clamp)


def sm_estimate(eps, x, rng, clamp=False) -> float:
    return _run("SM", eps, x, rng, clamp)


def propdpm_estimate(eps, x, rng, clamp=False) -> float:
    return _run("PROPDPM", eps, x, rng, clamp)


def ldpe_estimate(profile: TwoGroupProfile, x, rng, clamp=False) -> float:
    return _run("LDPE", profile, x, rng, clamp)


def stretch_estimate(eps, x, rng, clamp=False) -> float:
    return _run("STRETCH", eps, x, rng, clamp)
