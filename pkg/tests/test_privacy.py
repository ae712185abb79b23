import math

import numpy as np
import pytest

from hdp_mean.privacy import (
    DomainError,
    affine_release,
    as_dataset,
    as_privacy_vector,
    dp_certificate,
    dp_lower_tail_holds,
    histogram_ratio_audit,
    laplace_density_ratio_bound,
    laplace_from_uniform,
    sample_laplace,
)


def test_laplace_inverse_cdf_values():
    assert laplace_from_uniform(0.75, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert laplace_from_uniform(0.25, 2.5) == pytest.approx(-2.5 * math.log(2), abs=1e-15)
    assert laplace_from_uniform(0.5, 3.0) == 0.0


def test_laplace_endpoint_is_finite():
    assert math.isfinite(laplace_from_uniform(0.0, 1.0))


def test_laplace_moments():
    rng = np.random.default_rng(3)
    z = sample_laplace(0.5, rng, 400_000)
    # var = 2 b^2 = 0.5, E|Z| = b
    assert abs(z.mean()) < 4 * math.sqrt(0.5 / z.size)
    assert z.var() == pytest.approx(0.5, rel=0.02)
    assert np.abs(z).mean() == pytest.approx(0.5, rel=0.01)


@pytest.mark.parametrize("scale", [0.0, -1.0, float("nan")])
def test_laplace_rejects_bad_scale(scale):
    with pytest.raises(DomainError):
        sample_laplace(scale, np.random.default_rng(0))


def test_privacy_vector_validation():
    assert as_privacy_vector([0.1, float("inf")])[1] == math.inf
    with pytest.raises(DomainError):
        as_privacy_vector([0.1, -0.2])
    with pytest.raises(DomainError):
        as_privacy_vector([float("nan")])
    with pytest.raises(DomainError):
        as_privacy_vector([])


def test_dataset_domain():
    as_dataset([-0.5, 0.5, 0.0])
    with pytest.raises(DomainError):
        as_dataset([0.6])


def test_affine_release_and_clamp():
    rng = np.random.default_rng(0)
    x = np.array([0.5, 0.5])
    w = np.array([0.5, 0.5])
    assert affine_release(x, w, 0.0, rng) == 0.5
    outs = [affine_release(x, w, 10.0, rng, clamp=True) for _ in range(200)]
    assert min(outs) >= -0.5 and max(outs) <= 0.5
    with pytest.raises(ValueError):
        affine_release(x, w[:1], 1.0, rng)


def test_certificate_matches_weight_over_eta():
    cert = dp_certificate([0.2, 0.2, 0.6], 0.2, [1.0, 1.0, 10.0])
    np.testing.assert_allclose(cert.effective_levels, [1.0, 1.0, 3.0])
    assert cert.ok


def test_certificate_flags_violation():
    cert = dp_certificate([0.5, 0.5], 0.1, [1.0, 10.0])
    assert not cert.ok
    assert list(cert.satisfied) == [False, True]


def test_certificate_degenerate_and_public():
    cert = dp_certificate([0.0, 1.0], 0.0, [0.0, float("inf")])
    assert cert.ok
    assert dp_certificate([0.3, 0.7], 1.0, [0.0, 0.1], degenerate=True).ok


def test_density_ratio_bound():
    assert laplace_density_ratio_bound(0.01, 0.1) == pytest.approx(math.exp(0.1))


def test_lower_tail_inequality_region():
    # the inequality holds exactly for lam <= e^eps / (1 + e^eps), not on all of [0, 1]
    eps, lam = np.meshgrid(np.linspace(0, 20, 201), np.linspace(0, 1, 1001))
    eps, lam = eps[:, 1:], lam[:, 1:]  # at eps = 0 both sides coincide
    holds = dp_lower_tail_holds(eps, lam)
    threshold = 1.0 / (1.0 + np.exp(-eps))
    assert holds[lam <= threshold - 1e-9].all()
    assert not holds[lam >= threshold + 1e-9].any()
    assert not dp_lower_tail_holds(1.0, 1.0)


def test_difference_bound_holds_everywhere():
    # |P(S) - P'(S)| <= 1 - e^-eps for every P(S) allowed by the two-sided DP constraints
    eps, lam = np.meshgrid(np.linspace(0, 20, 201), np.linspace(0, 1, 1001))
    lo = np.maximum(np.exp(-eps) * lam, 1 - np.exp(eps) + np.exp(eps) * lam)
    hi = np.minimum(np.exp(eps) * lam, 1 - np.exp(-eps) + np.exp(-eps) * lam)
    gap = np.maximum(np.abs(hi - lam), np.abs(lam - lo))
    assert (gap <= -np.expm1(-eps) + 1e-12).all()


def _laplace_pair(shift, scale, draws, seed):
    rng = np.random.default_rng(seed)
    return sample_laplace(scale, rng, draws), shift + sample_laplace(scale, rng, draws)


def test_audit_accepts_valid_mechanism():
    a, b = _laplace_pair(0.1, 0.1, 400_000, 1)
    res = histogram_ratio_audit(a, b, 1.0)
    assert res.passed, res


def test_audit_rejects_undernoised_mechanism():
    # true level is 2, declared 1
    a, b = _laplace_pair(0.2, 0.1, 400_000, 2)
    res = histogram_ratio_audit(a, b, 1.0)
    assert not res.passed
    assert res.max_z > 10
