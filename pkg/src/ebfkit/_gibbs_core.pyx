# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gibbs scan kernel.

Behavioural twin of ``_gibbs_py.scan_chunk``: identical update order,
identical consumption of pre-generated randomness, identical degeneracy
checks.  Differences are limited to floating-point reduction order.
"""

from libc.math cimport sqrt


cdef inline bint _draw_iw2(double s11, double s12, double s22,
                           double chi1, double chi2, double zb,
                           double[::1] psi) noexcept:
    cdef double dets, v11, v12, v22, c11, c21, c22s, c22
    cdef double a11, a22, l00, l10, l11, w11, w12, w22, detw
    dets = s11 * s22 - s12 * s12
    if dets <= 0.0 or s11 <= 0.0:
        return 0
    v11 = s22 / dets
    v12 = -s12 / dets
    v22 = s11 / dets
    c11 = sqrt(v11)
    c21 = v12 / c11
    c22s = v22 - c21 * c21
    if c22s <= 0.0:
        return 0
    c22 = sqrt(c22s)
    a11 = sqrt(chi1)
    a22 = sqrt(chi2)
    l00 = c11 * a11
    l10 = c21 * a11 + c22 * zb
    l11 = c22 * a22
    w11 = l00 * l00
    w12 = l00 * l10
    w22 = l10 * l10 + l11 * l11
    detw = w11 * w22 - w12 * w12
    if detw <= 0.0 or w11 <= 0.0:
        return 0
    psi[0] = w22 / detw
    psi[1] = -w12 / detw
    psi[2] = w11 / detw
    return 1


def scan_chunk(stats, state, double alpha_mean, double alpha_prec,
               double[::1] s1, double[::1] s2, double b0,
               double[:, ::1] zmat, double[:, ::1] chimat, double[::1] gam,
               double[:, ::1] out, Py_ssize_t scan0):
    """Run ``zmat.shape[0]`` scans; see the python kernel for semantics."""
    cdef double[:, ::1] x13 = stats.x13
    cdef double[:, ::1] x14 = stats.x14
    cdef double[:, ::1] x23 = stats.x23
    cdef double[:, ::1] x24 = stats.x24
    cdef double[:, ::1] g1 = stats.g1
    cdef double[:, ::1] g2 = stats.g2
    cdef double[:, ::1] hu = stats.hu
    cdef double[:, ::1] cu = stats.cu
    cdef double[:, ::1] hv = stats.hv
    cdef double[:, ::1] cv = stats.cv
    cdef double n_total = stats.n_total
    cdef double h0_sum = stats.h0_sum
    cdef double q_total = stats.q_total
    cdef double[::1] scal = state.scal
    cdef double[:, ::1] u = state.u
    cdef double[:, ::1] v = state.v
    cdef double[::1] psi1 = state.psi1
    cdef double[::1] psi2 = state.psi2

    cdef Py_ssize_t nj = u.shape[0]
    cdef Py_ssize_t nk = v.shape[0]
    cdef Py_ssize_t nscan = zmat.shape[0]
    cdef Py_ssize_t zv_lo = 1 + 2 * nj
    cdef Py_ssize_t zb_lo = zv_lo + 2 * nk
    cdef Py_ssize_t s, j, k
    cdef double alpha, sigma2, t, prec
    cdef double det, ip11, ip12, ip22
    cdef double b0_, b1_, p11, p12, p22, detp, q11, q12, q22
    cdef double m0, m1, l11, l21, l22s, z1, z2
    cdef double s11, s12, s22, lin, quad, acc, uj0, uj1, rss

    for s in range(nscan):
        alpha = scal[0]
        sigma2 = scal[1]

        # intercept
        t = h0_sum
        for j in range(nj):
            t -= cu[j, 0] * u[j, 0] + cu[j, 1] * u[j, 1]
        for k in range(nk):
            t -= cv[k, 0] * v[k, 0] + cv[k, 1] * v[k, 1]
        prec = n_total / sigma2 + alpha_prec
        alpha = (t / sigma2 + alpha_prec * alpha_mean) / prec + zmat[s, 0] / sqrt(prec)

        # dimension-1 effect pairs
        det = psi1[0] * psi1[2] - psi1[1] * psi1[1]
        if det <= 0.0 or psi1[0] <= 0.0:
            return scan0 + s
        ip11 = psi1[2] / det
        ip12 = -psi1[1] / det
        ip22 = psi1[0] / det
        for j in range(nj):
            b0_ = hu[j, 0] - alpha * cu[j, 0]
            b1_ = hu[j, 1] - alpha * cu[j, 1]
            for k in range(nk):
                b0_ -= x13[j, k] * v[k, 0] + x14[j, k] * v[k, 1]
                b1_ -= x23[j, k] * v[k, 0] + x24[j, k] * v[k, 1]
            p11 = g1[j, 0] / sigma2 + ip11
            p12 = g1[j, 1] / sigma2 + ip12
            p22 = g1[j, 2] / sigma2 + ip22
            detp = p11 * p22 - p12 * p12
            if detp <= 0.0 or p11 <= 0.0:
                return scan0 + s
            q11 = p22 / detp
            q12 = -p12 / detp
            q22 = p11 / detp
            m0 = (q11 * b0_ + q12 * b1_) / sigma2
            m1 = (q12 * b0_ + q22 * b1_) / sigma2
            l11 = sqrt(q11)
            l21 = q12 / l11
            l22s = q22 - l21 * l21
            if l22s <= 0.0:
                return scan0 + s
            z1 = zmat[s, 1 + 2 * j]
            z2 = zmat[s, 2 + 2 * j]
            u[j, 0] = m0 + l11 * z1
            u[j, 1] = m1 + l21 * z1 + sqrt(l22s) * z2

        # dimension-2 effect pairs
        det = psi2[0] * psi2[2] - psi2[1] * psi2[1]
        if det <= 0.0 or psi2[0] <= 0.0:
            return scan0 + s
        ip11 = psi2[2] / det
        ip12 = -psi2[1] / det
        ip22 = psi2[0] / det
        for k in range(nk):
            b0_ = hv[k, 0] - alpha * cv[k, 0]
            b1_ = hv[k, 1] - alpha * cv[k, 1]
            for j in range(nj):
                b0_ -= x13[j, k] * u[j, 0] + x23[j, k] * u[j, 1]
                b1_ -= x14[j, k] * u[j, 0] + x24[j, k] * u[j, 1]
            p11 = g2[k, 0] / sigma2 + ip11
            p12 = g2[k, 1] / sigma2 + ip12
            p22 = g2[k, 2] / sigma2 + ip22
            detp = p11 * p22 - p12 * p12
            if detp <= 0.0 or p11 <= 0.0:
                return scan0 + s
            q11 = p22 / detp
            q12 = -p12 / detp
            q22 = p11 / detp
            m0 = (q11 * b0_ + q12 * b1_) / sigma2
            m1 = (q12 * b0_ + q22 * b1_) / sigma2
            l11 = sqrt(q11)
            l21 = q12 / l11
            l22s = q22 - l21 * l21
            if l22s <= 0.0:
                return scan0 + s
            z1 = zmat[s, zv_lo + 2 * k]
            z2 = zmat[s, zv_lo + 2 * k + 1]
            v[k, 0] = m0 + l11 * z1
            v[k, 1] = m1 + l21 * z1 + sqrt(l22s) * z2

        # covariance of the dimension-1 pairs
        s11 = s1[0]
        s12 = s1[1]
        s22 = s1[2]
        for j in range(nj):
            s11 += u[j, 0] * u[j, 0]
            s12 += u[j, 0] * u[j, 1]
            s22 += u[j, 1] * u[j, 1]
        if not _draw_iw2(s11, s12, s22, chimat[s, 0], chimat[s, 1], zmat[s, zb_lo], psi1):
            return scan0 + s

        # covariance of the dimension-2 pairs
        s11 = s2[0]
        s12 = s2[1]
        s22 = s2[2]
        for k in range(nk):
            s11 += v[k, 0] * v[k, 0]
            s12 += v[k, 0] * v[k, 1]
            s22 += v[k, 1] * v[k, 1]
        if not _draw_iw2(s11, s12, s22, chimat[s, 2], chimat[s, 3], zmat[s, zb_lo + 1], psi2):
            return scan0 + s

        # residual variance via the expanded sum of squares
        lin = alpha * h0_sum
        quad = alpha * alpha * n_total
        for j in range(nj):
            lin += hu[j, 0] * u[j, 0] + hu[j, 1] * u[j, 1]
            quad += 2.0 * alpha * (cu[j, 0] * u[j, 0] + cu[j, 1] * u[j, 1])
            quad += (
                g1[j, 0] * u[j, 0] * u[j, 0]
                + 2.0 * g1[j, 1] * u[j, 0] * u[j, 1]
                + g1[j, 2] * u[j, 1] * u[j, 1]
            )
        for k in range(nk):
            lin += hv[k, 0] * v[k, 0] + hv[k, 1] * v[k, 1]
            quad += 2.0 * alpha * (cv[k, 0] * v[k, 0] + cv[k, 1] * v[k, 1])
            quad += (
                g2[k, 0] * v[k, 0] * v[k, 0]
                + 2.0 * g2[k, 1] * v[k, 0] * v[k, 1]
                + g2[k, 2] * v[k, 1] * v[k, 1]
            )
        for j in range(nj):
            uj0 = u[j, 0]
            uj1 = u[j, 1]
            acc = 0.0
            for k in range(nk):
                acc += (uj0 * x13[j, k] + uj1 * x23[j, k]) * v[k, 0]
                acc += (uj0 * x14[j, k] + uj1 * x24[j, k]) * v[k, 1]
            quad += 2.0 * acc
        rss = q_total - 2.0 * lin + quad
        if rss <= 0.0:
            return scan0 + s
        sigma2 = (b0 + 0.5 * rss) / gam[s]

        scal[0] = alpha
        scal[1] = sigma2
        out[s, 0] = alpha
        for j in range(nj):
            out[s, 1 + j] = u[j, 0]
            out[s, 1 + nj + j] = u[j, 1]
        for k in range(nk):
            out[s, zv_lo + k] = v[k, 0]
            out[s, zv_lo + nk + k] = v[k, 1]
        out[s, zb_lo] = psi1[0]
        out[s, zb_lo + 1] = psi1[1]
        out[s, zb_lo + 2] = psi1[2]
        out[s, zb_lo + 3] = psi2[0]
        out[s, zb_lo + 4] = psi2[1]
        out[s, zb_lo + 5] = psi2[2]
        out[s, zb_lo + 6] = sigma2
    return -1
