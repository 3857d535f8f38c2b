# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: CMOD5.N forward evaluation and bracketed inversion.

Scalar hot loops; must stay behaviourally identical to the pure-numpy
twin in sarwind._kernels_py (same formulas, same golden-section schedule).
The look-geometry terms (everything that depends on phi and theta but not
on wind speed) are hoisted into a per-pixel context, because the inversion
evaluates the model ~60 times per pixel at fixed geometry.  Every hoisted
expression keeps the original operand order, so the hoist is bit-exact.
"""

from libc.math cimport ceil, cos, exp, log, pow, sqrt, tanh, isnan

import numpy as np

cdef double THETM = 40.0
cdef double THETHR = 25.0
cdef double ZPOW = 1.6
cdef double GOLDEN = (sqrt(5.0) - 1.0) / 2.0
cdef double DEG2RAD = 3.14159265358979323846 / 180.0


cdef struct Geo:
    # wind-independent pieces of the model at one (phi, theta)
    double a0
    double a1
    double a2
    double gam
    double s0
    double gs0
    double pexp      # s0 * (1 - gs0), the below-knee exponent
    double hx        # 0.5 + x
    double xc        # x + c[15]
    double t13       # c[13] * (1 + x)
    double c14       # upwind amplitude factor
    double c16v      # tanh wind slope
    double c17v      # roll-off reference speed
    double v0
    double d1
    double d2
    double y0
    double npw
    double apar
    double bpar
    double cphi
    double c2phi


cdef inline void _geo_init(double phi_deg, double theta_deg, const double[::1] c,
                    Geo *g) nogil:
    cdef double x = (theta_deg - THETM) / THETHR
    cdef double xx = x * x

    g.a0 = c[0] + c[1] * x + c[2] * xx + c[3] * x * xx
    g.a1 = c[4] + c[5] * x
    g.a2 = c[6] + c[7] * x
    g.gam = c[8] + c[9] * x + c[10] * xx
    g.s0 = c[11] + c[12] * x
    g.gs0 = 1.0 / (1.0 + exp(-g.s0))
    g.pexp = g.s0 * (1.0 - g.gs0)

    g.hx = 0.5 + x
    g.xc = x + c[15]
    g.t13 = c[13] * (1.0 + x)
    g.c14 = c[14]
    g.c16v = c[16]
    g.c17v = c[17]

    g.v0 = c[20] + c[21] * x + c[22] * xx
    g.d1 = c[23] + c[24] * x + c[25] * xx
    g.d2 = c[26] + c[27] * x
    g.y0 = c[18]
    g.npw = c[19]
    g.apar = g.y0 - (g.y0 - 1.0) / g.npw
    g.bpar = 1.0 / (g.npw * pow(g.y0 - 1.0, g.npw - 1.0))

    cdef double phi = phi_deg * DEG2RAD
    g.cphi = cos(phi)
    g.c2phi = cos(2.0 * phi)


cdef inline double _sigma0_at(double v, const Geo *g) nogil:
    cdef double s = g.a2 * v
    cdef double a3
    if s < g.s0:
        a3 = g.gs0 * pow(s / g.s0, g.pexp)
    else:
        a3 = 1.0 / (1.0 + exp(-s))
    cdef double b0 = pow(a3, g.gam) * pow(10.0, g.a0 + g.a1 * v)

    cdef double b1 = g.c14 * v * (g.hx - tanh(4.0 * (g.xc + g.c16v * v)))
    b1 = (g.t13 - b1) / (exp(0.34 * (v - g.c17v)) + 1.0)

    cdef double y = (v + g.v0) / g.v0
    if y < g.y0:
        y = g.apar + g.bpar * pow(y - 1.0, g.npw)
    cdef double b2 = (-g.d1 + g.d2 * y) * exp(-y)

    return b0 * pow(1.0 + b1 * g.cphi + b2 * g.c2phi, ZPOW)


def forward(const double[::1] v, const double[::1] phi_deg,
            const double[::1] theta_deg, const double[::1] c):
    """CMOD5.N sigma0 (linear power, VV) for 1-D arrays of equal length."""
    cdef Py_ssize_t i, n = v.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Geo g
    with nogil:
        for i in range(n):
            _geo_init(phi_deg[i], theta_deg[i], c, &g)
            out[i] = _sigma0_at(v[i], &g)
    return out_arr


cdef int N_SCAN = 50


cdef Py_ssize_t _golden_iterations(double width, double tol) nogil:
    if tol >= width:
        return 0
    return <Py_ssize_t> ceil(log(tol / width) / log(GOLDEN))


def golden_iterations(double width, double tol):
    return _golden_iterations(width, tol)


def invert(const double[::1] s0_obs, const double[::1] phi_deg,
           const double[::1] theta_deg, const double[::1] c,
           double v_min, double v_max, double tol):
    """Argmin of (forward(v) - s0_obs)^2 over [v_min, v_max].

    sigma0(v) folds back at high winds for part of the geometry range, so
    an observation can have two exact roots.  A coarse scan over N_SCAN+1
    equispaced speeds finds the first sign change of forward(v) - s0_obs
    (the lowest-wind root, which is the retrieval convention); golden
    section then refines inside that cell to tol.  Observations brighter
    than the model anywhere in the bracket are clipped to v_max with the
    saturation flag set.  Returns (wind, saturated).
    """
    cdef Py_ssize_t i, k, cell, n = s0_obs.shape[0]
    cdef double span = v_max - v_min
    cdef Py_ssize_t iters = _golden_iterations(span / N_SCAN, tol)
    wind_arr = np.empty(n, dtype=np.float64)
    sat_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] wind = wind_arr
    cdef unsigned char[::1] sat = sat_arr
    cdef double a, b, x1, x2, f1, f2, xe, fe, obs
    cdef double sig, sig_max, gg, g_prev
    cdef Geo g
    with nogil:
        for i in range(n):
            obs = s0_obs[i]
            if isnan(obs):
                wind[i] = obs
                continue
            _geo_init(phi_deg[i], theta_deg[i], c, &g)
            sig = _sigma0_at(v_min, &g)
            sig_max = sig
            g_prev = sig - obs
            cell = -1
            for k in range(1, N_SCAN + 1):
                sig = _sigma0_at(v_min + span * k / N_SCAN, &g)
                gg = sig - obs
                if sig > sig_max:
                    sig_max = sig
                if g_prev * gg <= 0.0:
                    # a crossing endpoint has sig >= obs, so saturation is
                    # ruled out and the rest of the scan cannot matter
                    cell = k - 1
                    break
                g_prev = gg
            if cell < 0 and obs > sig_max:
                wind[i] = v_max
                sat[i] = 1
                continue
            if cell < 0:
                cell = 0
            a = v_min + span * cell / N_SCAN
            b = v_min + span * (cell + 1) / N_SCAN
            x1 = b - GOLDEN * (b - a)
            x2 = a + GOLDEN * (b - a)
            f1 = _sigma0_at(x1, &g) - obs
            f1 = f1 * f1
            f2 = _sigma0_at(x2, &g) - obs
            f2 = f2 * f2
            for k in range(iters):
                if f1 < f2:
                    b = x2
                    xe = b - GOLDEN * (b - a)
                    x2 = x1
                    f2 = f1
                    x1 = xe
                    fe = _sigma0_at(xe, &g) - obs
                    f1 = fe * fe
                else:
                    a = x1
                    xe = a + GOLDEN * (b - a)
                    x1 = x2
                    f1 = f2
                    x2 = xe
                    fe = _sigma0_at(xe, &g) - obs
                    f2 = fe * fe
            wind[i] = 0.5 * (a + b)
    return wind_arr, sat_arr
