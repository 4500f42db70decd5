"""Pure-numpy Gibbs scan kernel.

Mirrors the compiled kernel in ``_gibbs_core.pyx``: same update order, same
consumption of pre-generated randomness, same error conditions.  The two
implementations agree up to floating-point reduction order, so chains are
statistically equivalent but not bit-identical across backends.

All per-scan updates work on per-cell sufficient statistics, so one scan
costs O(J*K) regardless of the number of observations.
"""

from __future__ import annotations

import math

import numpy as np


def _inv2(packed):
    """Inverse of a packed symmetric 2x2 [a11, a12, a22]; None if not PD."""
    det = packed[0] * packed[2] - packed[1] * packed[1]
    if det <= 0.0 or packed[0] <= 0.0:
        return None
    return packed[2] / det, -packed[1] / det, packed[0] / det


def _draw_iw2(s11, s12, s22, chi1, chi2, zb):
    """One inverse-Wishart draw with scale [[s11,s12],[s12,s22]].

    ``chi1``/``chi2`` are chi-square variates for the Bartlett diagonal and
    ``zb`` the off-diagonal normal.  Returns packed [p11, p12, p22] or None
    when the scale matrix is not positive-definite.
    """
    dets = s11 * s22 - s12 * s12
    if dets <= 0.0 or s11 <= 0.0:
        return None
    v11 = s22 / dets
    v12 = -s12 / dets
    v22 = s11 / dets
    c11 = math.sqrt(v11)
    c21 = v12 / c11
    c22s = v22 - c21 * c21
    if c22s <= 0.0:
        return None
    c22 = math.sqrt(c22s)
    a11 = math.sqrt(chi1)
    a22 = math.sqrt(chi2)
    l00 = c11 * a11
    l10 = c21 * a11 + c22 * zb
    l11 = c22 * a22
    w11 = l00 * l00
    w12 = l00 * l10
    w22 = l10 * l10 + l11 * l11
    detw = w11 * w22 - w12 * w12
    if detw <= 0.0 or w11 <= 0.0:
        return None
    return w22 / detw, -w12 / detw, w11 / detw


def scan_chunk(stats, state, alpha_mean, alpha_prec, s1, s2, b0, zmat, chimat, gam, out, scan0):
    """Run ``zmat.shape[0]`` Gibbs scans, recording one row per scan.

    Returns -1 on success or the global scan index at which a conditional
    became numerically degenerate.
    """
    x13, x14, x23, x24 = stats.x13, stats.x14, stats.x23, stats.x24
    g1, g2 = stats.g1, stats.g2
    hu, cu, hv, cv = stats.hu, stats.cu, stats.hv, stats.cv
    n_total, h0_sum, q_total = stats.n_total, stats.h0_sum, stats.q_total
    u, v, psi1, psi2, scal = state.u, state.v, state.psi1, state.psi2, state.scal
    nj = u.shape[0]
    nk = v.shape[0]
    zv_lo = 1 + 2 * nj
    zb_lo = zv_lo + 2 * nk

    for s in range(zmat.shape[0]):
        alpha = scal[0]
        sigma2 = scal[1]
        z = zmat[s]

        # intercept
        t = (
            h0_sum
            - cu[:, 0] @ u[:, 0]
            - cu[:, 1] @ u[:, 1]
            - cv[:, 0] @ v[:, 0]
            - cv[:, 1] @ v[:, 1]
        )
        prec = n_total / sigma2 + alpha_prec
        alpha = (t / sigma2 + alpha_prec * alpha_mean) / prec + z[0] / math.sqrt(prec)

        # dimension-1 effect pairs, conditionally independent across clusters
        ip = _inv2(psi1)
        if ip is None:
            return scan0 + s
        bu0 = hu[:, 0] - alpha * cu[:, 0] - x13 @ v[:, 0] - x14 @ v[:, 1]
        bu1 = hu[:, 1] - alpha * cu[:, 1] - x23 @ v[:, 0] - x24 @ v[:, 1]
        p11 = g1[:, 0] / sigma2 + ip[0]
        p12 = g1[:, 1] / sigma2 + ip[1]
        p22 = g1[:, 2] / sigma2 + ip[2]
        detp = p11 * p22 - p12 * p12
        if not (np.all(detp > 0.0) and np.all(p11 > 0.0)):
            return scan0 + s
        q11 = p22 / detp
        q12 = -p12 / detp
        q22 = p11 / detp
        m0 = (q11 * bu0 + q12 * bu1) / sigma2
        m1 = (q12 * bu0 + q22 * bu1) / sigma2
        l11 = np.sqrt(q11)
        l21 = q12 / l11
        l22s = q22 - l21 * l21
        if not np.all(l22s > 0.0):
            return scan0 + s
        zu = z[1:zv_lo].reshape(nj, 2)
        u[:, 0] = m0 + l11 * zu[:, 0]
        u[:, 1] = m1 + l21 * zu[:, 0] + np.sqrt(l22s) * zu[:, 1]

        # dimension-2 effect pairs
        ip = _inv2(psi2)
        if ip is None:
            return scan0 + s
        bv0 = hv[:, 0] - alpha * cv[:, 0] - x13.T @ u[:, 0] - x23.T @ u[:, 1]
        bv1 = hv[:, 1] - alpha * cv[:, 1] - x14.T @ u[:, 0] - x24.T @ u[:, 1]
        p11 = g2[:, 0] / sigma2 + ip[0]
        p12 = g2[:, 1] / sigma2 + ip[1]
        p22 = g2[:, 2] / sigma2 + ip[2]
        detp = p11 * p22 - p12 * p12
        if not (np.all(detp > 0.0) and np.all(p11 > 0.0)):
            return scan0 + s
        q11 = p22 / detp
        q12 = -p12 / detp
        q22 = p11 / detp
        m0 = (q11 * bv0 + q12 * bv1) / sigma2
        m1 = (q12 * bv0 + q22 * bv1) / sigma2
        l11 = np.sqrt(q11)
        l21 = q12 / l11
        l22s = q22 - l21 * l21
        if not np.all(l22s > 0.0):
            return scan0 + s
        zv = z[zv_lo:zb_lo].reshape(nk, 2)
        v[:, 0] = m0 + l11 * zv[:, 0]
        v[:, 1] = m1 + l21 * zv[:, 0] + np.sqrt(l22s) * zv[:, 1]

        # covariance of the dimension-1 pairs
        new = _draw_iw2(
            s1[0] + u[:, 0] @ u[:, 0],
            s1[1] + u[:, 0] @ u[:, 1],
            s1[2] + u[:, 1] @ u[:, 1],
            chimat[s, 0],
            chimat[s, 1],
            z[zb_lo],
        )
        if new is None:
            return scan0 + s
        psi1[:] = new

        # covariance of the dimension-2 pairs
        new = _draw_iw2(
            s2[0] + v[:, 0] @ v[:, 0],
            s2[1] + v[:, 0] @ v[:, 1],
            s2[2] + v[:, 1] @ v[:, 1],
            chimat[s, 2],
            chimat[s, 3],
            z[zb_lo + 1],
        )
        if new is None:
            return scan0 + s
        psi2[:] = new

        # residual variance via the expanded sum of squares
        lin = (
            alpha * h0_sum
            + hu[:, 0] @ u[:, 0]
            + hu[:, 1] @ u[:, 1]
            + hv[:, 0] @ v[:, 0]
            + hv[:, 1] @ v[:, 1]
        )
        quad = alpha * alpha * n_total + 2.0 * alpha * (
            cu[:, 0] @ u[:, 0] + cu[:, 1] @ u[:, 1] + cv[:, 0] @ v[:, 0] + cv[:, 1] @ v[:, 1]
        )
        quad += (
            g1[:, 0] @ (u[:, 0] * u[:, 0])
            + 2.0 * (g1[:, 1] @ (u[:, 0] * u[:, 1]))
            + g1[:, 2] @ (u[:, 1] * u[:, 1])
        )
        quad += (
            g2[:, 0] @ (v[:, 0] * v[:, 0])
            + 2.0 * (g2[:, 1] @ (v[:, 0] * v[:, 1]))
            + g2[:, 2] @ (v[:, 1] * v[:, 1])
        )
        quad += 2.0 * (
            u[:, 0] @ (x13 @ v[:, 0])
            + u[:, 0] @ (x14 @ v[:, 1])
            + u[:, 1] @ (x23 @ v[:, 0])
            + u[:, 1] @ (x24 @ v[:, 1])
        )
        rss = q_total - 2.0 * lin + quad
        if rss <= 0.0:
            return scan0 + s
        sigma2 = (b0 + 0.5 * rss) / gam[s]

        scal[0] = alpha
        scal[1] = sigma2
        out[s, 0] = alpha
        out[s, 1 : 1 + nj] = u[:, 0]
        out[s, 1 + nj : zv_lo] = u[:, 1]
        out[s, zv_lo : zv_lo + nk] = v[:, 0]
        out[s, zv_lo + nk : zb_lo] = v[:, 1]
        out[s, zb_lo : zb_lo + 3] = psi1
        out[s, zb_lo + 3 : zb_lo + 6] = psi2
        out[s, zb_lo + 6] = sigma2
    return -1
