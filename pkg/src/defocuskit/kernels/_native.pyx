# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot kernels.

Signatures and semantics mirror _numpy.py exactly; tests assert agreement
between the two backends on random inputs.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, ceil

cnp.import_array()


def conv2d_forward(x, w, b):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], h = xv.shape[1], wd = xv.shape[2], ci = xv.shape[3]
    cdef Py_ssize_t kh = wv.shape[0], kw = wv.shape[1], co = wv.shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = wd - kw + 1
    out_arr = np.empty((n, ho, wo, co), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, y, xx, o, u, v, c
    cdef double acc
    for i in range(n):
        for y in range(ho):
            for xx in range(wo):
                for o in range(co):
                    acc = bv[o]
                    for u in range(kh):
                        for v in range(kw):
                            for c in range(ci):
                                acc += xv[i, y + u, xx + v, c] * wv[u, v, c, o]
                    out[i, y, xx, o] = acc
    return out_arr


def conv2d_backward(x, w, dy):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] dyv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], h = xv.shape[1], wd = xv.shape[2], ci = xv.shape[3]
    cdef Py_ssize_t kh = wv.shape[0], kw = wv.shape[1], co = wv.shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = wd - kw + 1
    dx_arr = np.zeros((n, h, wd, ci), dtype=np.float64)
    dw_arr = np.zeros((kh, kw, ci, co), dtype=np.float64)
    db_arr = np.zeros(co, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, y, xx, o, u, v, c
    cdef double g
    for i in range(n):
        for y in range(ho):
            for xx in range(wo):
                for o in range(co):
                    g = dyv[i, y, xx, o]
                    db[o] += g
                    for u in range(kh):
                        for v in range(kw):
                            for c in range(ci):
                                dw[u, v, c, o] += xv[i, y + u, xx + v, c] * g
                                dx[i, y + u, xx + v, c] += wv[u, v, c, o] * g
    return dx_arr, dw_arr, db_arr


def joint_bilateral(data, guide, double sigma_s, double sigma_r, radius):
    data_p = np.ascontiguousarray(data, dtype=np.float64)
    guide_p = np.ascontiguousarray(guide, dtype=np.float64)
    if data_p.shape[2] > 8 or guide_p.shape[2] > 8:
        raise ValueError("joint_bilateral supports at most 8 channels")
    cdef Py_ssize_t r = int(radius)
    cdef Py_ssize_t h = data_p.shape[0], w = data_p.shape[1], ch = data_p.shape[2]
    cdef Py_ssize_t gc = guide_p.shape[2]
    dp_arr = np.pad(data_p, ((r, r), (r, r), (0, 0)), mode="symmetric")
    gp_arr = np.pad(guide_p, ((r, r), (r, r), (0, 0)), mode="symmetric")
    cdef double[:, :, ::1] dp = dp_arr
    cdef double[:, :, ::1] gp = gp_arr
    out_arr = np.empty((h, w, ch), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double inv_s = -0.5 / (sigma_s * sigma_s)
    cdef double inv_r = -0.5 / (sigma_r * sigma_r)
    cdef Py_ssize_t y, x, dy, dx, c
    cdef double wgt, den, diff, d2
    cdef double acc[8]
    for y in range(h):
        for x in range(w):
            den = 0.0
            for c in range(ch):
                acc[c] = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    d2 = 0.0
                    for c in range(gc):
                        diff = gp[y + r + dy, x + r + dx, c] - gp[y + r, x + r, c]
                        d2 += diff * diff
                    wgt = exp((dy * dy + dx * dx) * inv_s + d2 * inv_r)
                    den += wgt
                    for c in range(ch):
                        acc[c] += wgt * dp[y + r + dy, x + r + dx, c]
            for c in range(ch):
                out[y, x, c] = acc[c] / den
    return out_arr


def sparse_prob_bilateral(ys, xs, values, conf, guide,
                          double sigma_s, double sigma_r, double sigma_c, radius):
    cdef cnp.int64_t[::1] yv = np.ascontiguousarray(ys, dtype=np.int64)
    cdef cnp.int64_t[::1] xv = np.ascontiguousarray(xs, dtype=np.int64)
    cdef double[::1] val = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] cf = np.ascontiguousarray(conf, dtype=np.float64)
    guide_p = np.ascontiguousarray(guide, dtype=np.float64)
    cdef double[:, :, ::1] gv = guide_p
    cdef Py_ssize_t h = gv.shape[0], w = gv.shape[1], gc = gv.shape[2]
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t r = int(radius)

    vmap_arr = np.zeros((h, w), dtype=np.float64)
    cmap_arr = np.zeros((h, w), dtype=np.float64)
    smask_arr = np.zeros((h, w), dtype=np.uint8)
    cdef double[:, ::1] vmap = vmap_arr
    cdef double[:, ::1] cmap = cmap_arr
    cdef unsigned char[:, ::1] smask = smask_arr
    cdef Py_ssize_t i
    for i in range(n):
        vmap[yv[i], xv[i]] = val[i]
        cmap[yv[i], xv[i]] = cf[i]
        smask[yv[i], xv[i]] = 1

    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double inv_s = -0.5 / (sigma_s * sigma_s)
    cdef double inv_r = -0.5 / (sigma_r * sigma_r)
    cdef double inv_c = -0.5 / (sigma_c * sigma_c)
    cdef Py_ssize_t y, x, py, px, y0, y1, x0, x1, c
    cdef double num, den, wgt, d2, diff, cdiff
    for i in range(n):
        y = yv[i]
        x = xv[i]
        y0 = y - r if y - r > 0 else 0
        y1 = y + r + 1 if y + r + 1 < h else h
        x0 = x - r if x - r > 0 else 0
        x1 = x + r + 1 if x + r + 1 < w else w
        num = 0.0
        den = 0.0
        for py in range(y0, y1):
            for px in range(x0, x1):
                if not smask[py, px]:
                    continue
                d2 = 0.0
                for c in range(gc):
                    diff = gv[py, px, c] - gv[y, x, c]
                    d2 += diff * diff
                cdiff = 1.0 - cmap[py, px]
                wgt = exp(((py - y) * (py - y) + (px - x) * (px - x)) * inv_s
                          + d2 * inv_r + cdiff * cdiff * inv_c)
                num += wgt * vmap[py, px]
                den += wgt
        if den < 1e-300:
            out[i] = vmap[y, x]
        else:
            out[i] = num / den
    return out_arr


def varying_gaussian_blur(img, sigma_map, mask, double truncate=3.0):
    img_p = np.ascontiguousarray(img, dtype=np.float64)
    if img_p.shape[2] > 8:
        raise ValueError("varying_gaussian_blur supports at most 8 channels")
    sig_p = np.ascontiguousarray(sigma_map, dtype=np.float64)
    mask_p = np.ascontiguousarray(mask, dtype=bool).astype(np.uint8)
    cdef Py_ssize_t h = img_p.shape[0], w = img_p.shape[1], ch = img_p.shape[2]
    out_arr = img_p.copy()
    if not mask_p.any():
        return out_arr
    cdef Py_ssize_t rad = int(ceil(truncate * float(sig_p[mask_p.astype(bool)].max())))
    if rad == 0:
        return out_arr
    pad_arr = np.pad(img_p, ((rad, rad), (rad, rad), (0, 0)), mode="symmetric")
    cdef double[:, :, ::1] pad = pad_arr
    cdef double[:, ::1] sig = sig_p
    cdef unsigned char[:, ::1] mk = mask_p
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, dy, dx, c
    cdef double s, inv, cut2, den, wgt, d2
    cdef double acc[8]
    for y in range(h):
        for x in range(w):
            if not mk[y, x]:
                continue
            s = sig[y, x]
            if s < 1e-12:
                s = 1e-12
            inv = -0.5 / (s * s)
            cut2 = (truncate * sig[y, x]) * (truncate * sig[y, x])
            den = 0.0
            for c in range(ch):
                acc[c] = 0.0
            for dy in range(-rad, rad + 1):
                for dx in range(-rad, rad + 1):
                    d2 = dy * dy + dx * dx
                    if d2 > cut2:
                        continue
                    wgt = exp(d2 * inv)
                    den += wgt
                    for c in range(ch):
                        acc[c] += wgt * pad[y + rad + dy, x + rad + dx, c]
            if den > 0.0:
                for c in range(ch):
                    out[y, x, c] = acc[c] / den
    return out_arr
