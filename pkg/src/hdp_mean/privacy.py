"""Bounded data model, Laplace noise, the affine release and its DP certificate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DOMAIN_LOW = -0.5
DOMAIN_HIGH = 0.5
DOMAIN_WIDTH = DOMAIN_HIGH - DOMAIN_LOW

# Relative slack when comparing effective against declared privacy levels.
CERT_RTOL = 1e-12

# Smallest value fed to log() in the inverse CDF; u == 0 occurs w.p. 2**-53.
_TINY = 2.0 ** -53


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


def as_privacy_vector(levels) -> np.ndarray:
    """Validate per-user privacy levels and return them as a float array.

    Levels must be non-negative; ``inf`` marks a public user.
    """
    eps = np.atleast_1d(np.asarray(levels, dtype=np.float64))
    if eps.ndim != 1 or eps.shape[0] == 0:
        raise DomainError("privacy vector must be a nonempty 1-d sequence")
    if np.isnan(eps).any() or (eps < 0).any():
        raise DomainError("privacy levels must be >= 0")
    return eps


def as_dataset(values) -> np.ndarray:
    x = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if x.ndim != 1:
        raise DomainError("dataset must be 1-d")
    if np.isnan(x).any() or (x < DOMAIN_LOW).any() or (x > DOMAIN_HIGH).any():
        raise DomainError("data values must lie in [-0.5, 0.5]")
    return x


def laplace_from_uniform(u, scale):
    """Inverse CDF of the zero-mean Laplace law with the given scale."""
    u = np.asarray(u, dtype=np.float64)
    d = u - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(d), _TINY)
    out = -scale * np.sign(d) * np.log(tail)
    return float(out) if out.ndim == 0 else out


def sample_laplace(scale, rng, size=None):
    """Draw zero-mean Laplace noise with density exp(-|x|/scale) / (2 scale)."""
    if not scale > 0:
        raise DomainError(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(rng.random(size), scale)


def _noise(eta, rng, size=None):
    # eta == 0 happens only when every weighted user is public
    if eta == 0:
        return 0.0 if size is None else np.zeros(size)
    return sample_laplace(eta, rng, size)


def affine_release(x, w, eta, rng, clamp=False):
    """Release ``<w, x> + Laplace(eta)``, optionally clamped to the data domain."""
    x = as_dataset(x)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != x.shape:
        raise ValueError(f"weights have length {w.shape[0]} but dataset has {x.shape[0]}")
    if (w < 0).any():
        raise DomainError("weights must be non-negative")
    if eta < 0:
        raise DomainError("noise scale must be non-negative")
    y = float(np.dot(w, x)) + _noise(eta, rng)
    if clamp:
        y = min(max(y, DOMAIN_LOW), DOMAIN_HIGH)
    return y


@dataclass(frozen=True)
class DpCertificate:
    effective_levels: np.ndarray
    declared: np.ndarray
    satisfied: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.satisfied.all())


def certify(effective, declared) -> DpCertificate:
    effective = np.asarray(effective, dtype=np.float64)
    declared = as_privacy_vector(declared)
    if effective.shape != declared.shape:
        raise ValueError("effective and declared levels differ in length")
    with np.errstate(invalid="ignore"):
        slack = CERT_RTOL * np.where(np.isfinite(declared), np.abs(declared), 0.0)
        satisfied = (effective <= declared + slack) | (np.isinf(declared))
    return DpCertificate(effective, declared, satisfied)


def dp_certificate(w, eta, declared, degenerate=False) -> DpCertificate:
    """Per-user privacy actually delivered by ``<w, x> + Laplace(eta)``.

    Changing user i's datum across the domain moves the mean of the output by
    at most ``w_i * width``, so the density ratio is bounded by
    ``exp(w_i / eta)`` on the unit-width domain. A degenerate release (constant
    output) leaks nothing.
    """
    declared = as_privacy_vector(declared)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != declared.shape:
        raise ValueError(f"weights have length {w.shape[0]} but {declared.shape[0]} levels were declared")
    if degenerate:
        return certify(np.zeros_like(declared), declared)
    if not eta >= 0:
        raise DomainError("noise scale must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(w == 0, 0.0, w * DOMAIN_WIDTH / eta)
    return certify(eff, declared)


def laplace_density_ratio_bound(w_i, eta):
    """Worst-case density ratio of the affine release for a change in user i."""
    return math.exp(w_i * DOMAIN_WIDTH / eta)


def dp_lower_tail_holds(eps, lam):
    """The lower DP-implied bound e^-eps * lam dominates 1 - e^eps + e^eps * lam."""
    eps = np.asarray(eps, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    lhs = np.exp(-eps) * lam
    rhs = 1.0 - np.exp(eps) + np.exp(eps) * lam
    return lhs >= rhs - 1e-12 * np.maximum(1.0, np.abs(rhs))


@dataclass(frozen=True)
class AuditResult:
    max_z: float
    bins_tested: int
    ratio_bound: float
    draws: int

    @property
    def passed(self) -> bool:
        return self.max_z <= 4.0


def _boundary_z(c_hi, c_lo, k, draws):
    # score statistic for c_hi - k * c_lo with cell probabilities fitted on the
    # null boundary p_hi = k * p_lo
    p_lo = (c_hi + c_lo) / (draws * (1.0 + k))
    p_hi = k * p_lo
    var = draws * (p_hi * (1 - p_hi) + k * k * p_lo * (1 - p_lo))
    sd = np.sqrt(np.where(var > 0, var, 1.0))
    return (c_hi - k * c_lo) / sd


def histogram_ratio_audit(sample_a, sample_b, epsilon, bin_width=0.05) -> AuditResult:
    """Empirical check that two output samples respect an e^epsilon density ratio.

    For each bin the count difference ``c_a - e^eps * c_b`` (and the mirrored
    one) is standardised by its binomial standard deviation; the worst z-score
    is returned. Under a valid mechanism the counts can only exceed the bound
    by sampling noise, so ``max_z <= 4`` is the pass criterion.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError("audit samples must have equal size")
    draws = a.shape[0]
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    edges = np.arange(math.floor(lo / bin_width), math.ceil(hi / bin_width) + 1) * bin_width
    if edges.shape[0] < 2:
        edges = np.array([lo - bin_width, hi + bin_width])
    ca = np.histogram(a, edges)[0].astype(np.float64)
    cb = np.histogram(b, edges)[0].astype(np.float64)
    k = math.exp(epsilon) if math.isfinite(epsilon) else math.inf
    if math.isinf(k):
        return AuditResult(0.0, int(edges.shape[0] - 1), k, draws)
    z1 = _boundary_z(ca, cb, k, draws)
    z2 = _boundary_z(cb, ca, k, draws)
    used = (ca + cb) > 0
    max_z = float(max(z1[used].max(), z2[used].max()))
    return AuditResult(max_z, int(used.sum()), k, draws)
