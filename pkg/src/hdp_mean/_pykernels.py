"""Pure-Python/numpy versions of the solver kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``HDP_MEAN_BACKEND=python`` is set. Every function here has a twin in
``_kernels.pyx`` with the same signature and semantics.
"""
import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0

# Slack on the feasibility boundary sum(caps) == 1.
FEAS_TOL = 1e-12
MAX_GSS_ITERS = 5000


def water_level(caps_sorted):
    """Level ``lam`` with ``sum(min(lam, caps)) == 1`` for ascending caps.

    Returns nan when the caps cannot hold unit mass.
    """
    caps = np.asarray(caps_sorted, dtype=np.float64)
    m = caps.shape[0]
    if m == 0:
        return math.nan
    prefix = np.empty(m)
    prefix[0] = 0.0
    np.cumsum(caps[:-1], out=prefix[1:])
    lam = (1.0 - prefix) / (m - np.arange(m))
    ok = lam <= caps
    if ok.any():
        return float(lam[np.argmax(ok)])
    total = prefix[-1] + caps[-1]
    if math.isfinite(total) and total >= 1.0 - FEAS_TOL:
        return float(1.0 - prefix[-1])
    return math.nan


def _caps(eps, eta):
    if eta != 0:
        return eps * eta
    # inf * 0 would be nan; public users stay uncapped
    return np.where(np.isinf(eps), math.inf, 0.0)


def _objective(eps_sorted, eta):
    caps = _caps(eps_sorted, eta)
    lam = water_level(caps)
    if math.isnan(lam):
        return math.inf
    w = np.minimum(lam, caps)
    return float(np.dot(w, w)) / 4.0 + 2.0 * eta * eta


def minimize_eta(eps_sorted, lo, hi, rtol):
    """Golden-section search for the noise scale minimising the ADPM objective."""
    eps_sorted = np.asarray(eps_sorted, dtype=np.float64)
    a, b = float(lo), float(hi)
    if b <= a:
        return a
    h = b - a
    c = a + INV_PHI_SQ * h
    d = a + INV_PHI * h
    yc = _objective(eps_sorted, c)
    yd = _objective(eps_sorted, d)
    it = 0
    while h > rtol * b and it < MAX_GSS_ITERS:
        it += 1
        if yc < yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQ * h
            yc = _objective(eps_sorted, c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = _objective(eps_sorted, d)
    best, fbest = (c, yc) if yc < yd else (d, yd)
    for end in (float(lo), float(hi)):
        fe = _objective(eps_sorted, end)
        if fe < fbest:
            best, fbest = end, fe
    return best


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.shape[0] + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def dual_oracle(eps, iters):
    """Accelerated projected gradient ascent on the dual of the epigraph QP.

    Primal: min ||w||^2/4 + 2 eta^2  s.t.  w in simplex, w_i <= eps_i * eta.
    The multipliers of the cap constraints are the only dual variables, so
    the dual projection is a clip at zero. Infinite entries of ``eps`` carry
    no cap. Returns ``(w, dual_value)``.
    """
    eps = np.asarray(eps, dtype=np.float64)
    n = eps.shape[0]
    fin = np.isfinite(eps)
    ef = np.where(fin, eps, 0.0)
    lip = 2.0 + float(np.dot(ef, ef)) / 4.0
    step = 1.0 / lip
    mu = np.zeros(n)
    y = np.zeros(n)
    t = 1.0
    for _ in range(iters):
        w = project_simplex(-2.0 * y)
        eta = float(np.dot(ef, y)) / 4.0
        g = w - ef * eta
        mu_new = np.where(fin, np.maximum(y + step * g, 0.0), 0.0)
        diff = mu_new - mu
        if np.dot(g, diff) < 0.0:
            # gradient-based adaptive restart
            t = 1.0
            y = mu_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = mu_new + ((t - 1.0) / t_new) * diff
            t = t_new
        mu = mu_new
    w = project_simplex(-2.0 * mu)
    eta = float(np.dot(ef, mu)) / 4.0
    dual = float(np.dot(w, w)) / 4.0 + float(np.dot(mu, w)) + 2.0 * eta * eta - eta * float(np.dot(ef, mu))
    return w, dual
