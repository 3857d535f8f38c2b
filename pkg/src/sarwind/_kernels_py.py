"""Pure-numpy kernels: CMOD5.N forward evaluation and bracketed inversion.

Mirrors the compiled extension in sarwind._kernels; the two must stay
behaviourally identical (same formulas, same golden-section schedule) so the
backend choice never changes results beyond floating-point noise.
"""
from __future__ import annotations

import math

import numpy as np

THETM = 40.0
THETHR = 25.0
ZPOW = 1.6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def forward(v, phi_deg, theta_deg, c):
    """CMOD5.N sigma0 (linear power, VV) for 1-D arrays of equal length."""
    v = np.asarray(v, dtype=np.float64)
    phi = np.deg2rad(np.asarray(phi_deg, dtype=np.float64))
    x = (np.asarray(theta_deg, dtype=np.float64) - THETM) / THETHR
    xx = x * x

    a0 = c[0] + c[1] * x + c[2] * xx + c[3] * x * xx
    a1 = c[4] + c[5] * x
    a2 = c[6] + c[7] * x
    gam = c[8] + c[9] * x + c[10] * xx
    s0 = c[11] + c[12] * x
    s = a2 * v
    gs0 = 1.0 / (1.0 + np.exp(-s0))
    below = s < s0
    with np.errstate(invalid="ignore"):
        a3 = np.where(
            below,
            gs0 * (s / s0) ** (s0 * (1.0 - gs0)),
            1.0 / (1.0 + np.exp(-np.where(below, s0, s))),
        )
    b0 = (a3 ** gam) * 10.0 ** (a0 + a1 * v)

    b1 = c[14] * v * (0.5 + x - np.tanh(4.0 * (x + c[15] + c[16] * v)))
    b1 = (c[13] * (1.0 + x) - b1) / (np.exp(0.34 * (v - c[17])) + 1.0)

    v0 = c[20] + c[21] * x + c[22] * xx
    d1 = c[23] + c[24] * x + c[25] * xx
    d2 = c[26] + c[27] * x
    y0 = c[18]
    n = c[19]
    a = y0 - (y0 - 1.0) / n
    b = 1.0 / (n * (y0 - 1.0) ** (n - 1.0))
    y = (v + v0) / v0
    y = np.where(y < y0, a + b * (y - 1.0) ** n, y)
    b2 = (-d1 + d2 * y) * np.exp(-y)

    return b0 * (1.0 + b1 * np.cos(phi) + b2 * np.cos(2.0 * phi)) ** ZPOW


#: coarse pre-scan points bracketing the global residual minimum; the
#: sigma0(v) curve can fold back at high winds, so a blind golden section
#: over the whole range may land in the wrong basin
N_SCAN = 50


def golden_iterations(width: float, tol: float) -> int:
    """Number of golden-section steps to shrink a bracket of ``width`` below tol."""
    if tol >= width:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(GOLDEN)))


def invert(s0_obs, phi_deg, theta_deg, c, v_min, v_max, tol):
    """Argmin of (forward(v) - s0_obs)^2 over [v_min, v_max].

    sigma0(v) folds back at high winds for part of the geometry range, so
    an observation can have two exact roots.  A coarse scan over N_SCAN+1
    equispaced speeds finds the first sign change of forward(v) - s0_obs
    (the lowest-wind root, which is the retrieval convention); golden
    section then refines inside that cell to tol.  Observations brighter
    than the model anywhere in the bracket are clipped to v_max with the
    saturation flag set.  Returns (wind, saturated).
    """
    s0_obs = np.asarray(s0_obs, dtype=np.float64)
    phi_deg = np.asarray(phi_deg, dtype=np.float64)
    theta_deg = np.asarray(theta_deg, dtype=np.float64)
    n = s0_obs.shape[0]

    def resid(v):
        return (forward(v, phi_deg, theta_deg, c) - s0_obs) ** 2

    span = v_max - v_min
    sig = forward(np.full(n, v_min), phi_deg, theta_deg, c)
    sig_max = sig
    g_prev = sig - s0_obs
    cell = np.full(n, -1, dtype=np.intp)
    for i in range(1, N_SCAN + 1):
        sig = forward(np.full(n, v_min + span * i / N_SCAN), phi_deg, theta_deg, c)
        g = sig - s0_obs
        cross = (cell < 0) & (g_prev * g <= 0.0)
        cell = np.where(cross, i - 1, cell)
        sig_max = np.maximum(sig_max, sig)
        g_prev = g

    # no sign change and model everywhere brighter: argmin sits at v_min,
    # which refinement inside the first cell converges to
    lo = np.where(cell >= 0, cell, 0)
    a = v_min + span * lo / N_SCAN
    b = v_min + span * (lo + 1) / N_SCAN
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1 = resid(x1)
    f2 = resid(x2)
    for _ in range(golden_iterations(span / N_SCAN, tol)):
        take1 = f1 < f2
        a_new = np.where(take1, a, x1)
        b_new = np.where(take1, x2, b)
        x_eval = np.where(
            take1,
            b_new - GOLDEN * (b_new - a_new),
            a_new + GOLDEN * (b_new - a_new),
        )
        fe = resid(x_eval)
        x1, x2, f1, f2 = (
            np.where(take1, x_eval, x2),
            np.where(take1, x1, x_eval),
            np.where(take1, fe, f2),
            np.where(take1, f1, fe),
        )
        a, b = a_new, b_new

    wind = 0.5 * (a + b)
    saturated = s0_obs > sig_max
    wind = np.where(saturated, v_max, wind)
    wind = np.where(np.isnan(s0_obs), np.nan, wind)
    return wind, saturated.astype(np.uint8)
