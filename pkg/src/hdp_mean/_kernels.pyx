# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled solver kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN, INFINITY, isnan

cnp.import_array()

cdef double INV_PHI = (sqrt(5.0) - 1.0) / 2.0
cdef double INV_PHI_SQ = (3.0 - sqrt(5.0)) / 2.0
cdef double FEAS_TOL = 1e-12
cdef int MAX_GSS_ITERS = 5000


cdef double _water_level(const double[::1] eps, double scale) noexcept nogil:
    # caps are eps[i] * scale with eps ascending
    cdef Py_ssize_t m = eps.shape[0], k
    cdef double prefix = 0.0, lam, cap
    if m == 0:
        return NAN
    for k in range(m):
        cap = INFINITY if eps[k] == INFINITY else eps[k] * scale
        lam = (1.0 - prefix) / <double>(m - k)
        if lam <= cap:
            return lam
        if k < m - 1:
            prefix += cap
    if eps[m - 1] != INFINITY and prefix + eps[m - 1] * scale >= 1.0 - FEAS_TOL:
        return 1.0 - prefix
    return NAN


cdef double _objective(const double[::1] eps, double eta) noexcept nogil:
    cdef double lam = _water_level(eps, eta)
    cdef double acc = 0.0, wi
    cdef Py_ssize_t i
    if isnan(lam):
        return INFINITY
    for i in range(eps.shape[0]):
        wi = INFINITY if eps[i] == INFINITY else eps[i] * eta
        if lam < wi:
            wi = lam
        acc += wi * wi
    return acc / 4.0 + 2.0 * eta * eta


def water_level(caps_sorted):
    cdef double[::1] caps = np.ascontiguousarray(caps_sorted, dtype=np.float64)
    return _water_level(caps, 1.0)


def minimize_eta(eps_sorted, double lo, double hi, double rtol):
    cdef double[::1] eps = np.ascontiguousarray(eps_sorted, dtype=np.float64)
    cdef double a = lo, b = hi, h, c, d, yc, yd, best, fbest, fe
    cdef int it = 0
    if b <= a:
        return a
    with nogil:
        h = b - a
        c = a + INV_PHI_SQ * h
        d = a + INV_PHI * h
        yc = _objective(eps, c)
        yd = _objective(eps, d)
        while h > rtol * b and it < MAX_GSS_ITERS:
            it += 1
            if yc < yd:
                b = d
                d = c
                yd = yc
                h = INV_PHI * h
                c = a + INV_PHI_SQ * h
                yc = _objective(eps, c)
            else:
                a = c
                c = d
                yc = yd
                h = INV_PHI * h
                d = a + INV_PHI * h
                yd = _objective(eps, d)
        if yc < yd:
            best = c
            fbest = yc
        else:
            best = d
            fbest = yd
        fe = _objective(eps, lo)
        if fe < fbest:
            best = lo
            fbest = fe
        fe = _objective(eps, hi)
        if fe < fbest:
            best = hi
    return best


cdef void _project_simplex(const double[::1] v, double[::1] out,
                           Py_ssize_t[::1] order) noexcept nogil:
    # order holds a permutation reused across calls; insertion sort is
    # near-linear when v changes little between iterations
    cdef Py_ssize_t n = v.shape[0], i, j, key, rho = 0
    cdef double css = 0.0, theta = 0.0, run = 0.0
    for i in range(1, n):
        key = order[i]
        j = i - 1
        while j >= 0 and v[order[j]] < v[key]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = key
    for i in range(n):
        run += v[order[i]]
        if v[order[i]] - (run - 1.0) / <double>(i + 1) > 0.0:
            rho = i + 1
            css = run
    theta = (css - 1.0) / <double>rho
    for i in range(n):
        out[i] = v[i] - theta
        if out[i] < 0.0:
            out[i] = 0.0


def project_simplex(v):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty(vv.shape[0])
    order = np.argsort(-np.asarray(vv), kind="stable").astype(np.intp)
    _project_simplex(vv, out, order)
    return out


def dual_oracle(eps_in, long iters):
    cdef double[::1] eps = np.ascontiguousarray(eps_in, dtype=np.float64)
    cdef Py_ssize_t n = eps.shape[0], i
    cdef long it
    ef_arr = np.where(np.isfinite(eps_in), eps_in, 0.0).astype(np.float64)
    fin_arr = np.isfinite(eps_in).astype(np.uint8)
    cdef double[::1] ef = ef_arr
    cdef unsigned char[::1] fin = fin_arr
    w_arr = np.zeros(n)
    cdef double[::1] w = w_arr
    cdef double[::1] mu = np.zeros(n)
    cdef double[::1] mu_new = np.zeros(n)
    cdef double[::1] y = np.zeros(n)
    cdef double[::1] v = np.zeros(n)
    cdef double[::1] g = np.zeros(n)
    cdef Py_ssize_t[::1] order = np.arange(n, dtype=np.intp)
    cdef double lip = 2.0, step, t = 1.0, t_new, eta, gd, beta, dual, ww, mw, em
    for i in range(n):
        lip += ef[i] * ef[i] / 4.0
    step = 1.0 / lip
    with nogil:
        for it in range(iters):
            eta = 0.0
            for i in range(n):
                v[i] = -2.0 * y[i]
                eta += ef[i] * y[i]
            eta /= 4.0
            _project_simplex(v, w, order)
            gd = 0.0
            for i in range(n):
                g[i] = w[i] - ef[i] * eta
                if fin[i]:
                    mu_new[i] = y[i] + step * g[i]
                    if mu_new[i] < 0.0:
                        mu_new[i] = 0.0
                else:
                    mu_new[i] = 0.0
                gd += g[i] * (mu_new[i] - mu[i])
            if gd < 0.0:
                t = 1.0
                for i in range(n):
                    y[i] = mu_new[i]
                    mu[i] = mu_new[i]
            else:
                t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
                beta = (t - 1.0) / t_new
                for i in range(n):
                    y[i] = mu_new[i] + beta * (mu_new[i] - mu[i])
                    mu[i] = mu_new[i]
                t = t_new
        eta = 0.0
        for i in range(n):
            v[i] = -2.0 * mu[i]
            eta += ef[i] * mu[i]
        eta /= 4.0
        _project_simplex(v, w, order)
        ww = 0.0
        mw = 0.0
        em = 0.0
        for i in range(n):
            ww += w[i] * w[i]
            mw += mu[i] * w[i]
            em += ef[i] * mu[i]
        dual = ww / 4.0 + mw + 2.0 * eta * eta - eta * em
    return w_arr, dual
