# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grouped 2-D cross-correlation kernels (same contract as _conv_py)."""
import numpy as np


def conv_forward(const double[:, :, :, ::1] xp, const double[:, :, :, ::1] w,
                 int groups, int sh, int sw):
    cdef Py_ssize_t B = xp.shape[0], Hp = xp.shape[2], Wp = xp.shape[3]
    cdef Py_ssize_t Cout = w.shape[0], Cg = w.shape[1], KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t OH = (Hp - KH) // sh + 1, OW = (Wp - KW) // sw + 1
    cdef Py_ssize_t og = Cout // groups
    out_arr = np.zeros((B, Cout, OH, OW))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, co, ci, cin, oh, y, x, ow
    cdef double wv
    cdef double* orow
    cdef const double* xrow
    with nogil:
        for b in range(B):
            for co in range(Cout):
                for ci in range(Cg):
                    cin = (co // og) * Cg + ci
                    for oh in range(OH):
                        orow = &out[b, co, oh, 0]
                        for y in range(KH):
                            xrow = &xp[b, cin, oh * sh + y, 0]
                            for x in range(KW):
                                wv = w[co, ci, y, x]
                                if sw == 1:
                                    for ow in range(OW):
                                        orow[ow] += wv * xrow[ow + x]
                                else:
                                    for ow in range(OW):
                                        orow[ow] += wv * xrow[ow * sw + x]
    return out_arr


def conv_grad_weight(const double[:, :, :, ::1] xp, const double[:, :, :, ::1] gout,
                     int groups, int sh, int sw, int kh, int kw):
    cdef Py_ssize_t B = gout.shape[0], Cout = gout.shape[1], OH = gout.shape[2], OW = gout.shape[3]
    cdef Py_ssize_t Cg = xp.shape[1] // groups
    cdef Py_ssize_t og = Cout // groups
    gw_arr = np.zeros((Cout, Cg, kh, kw))
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, co, ci, cin, oh, y, x, ow
    cdef double acc0, acc1, acc2, acc3, gv
    cdef const double* grow
    cdef const double* xrow
    cdef double* wrow
    with nogil:
        if kw >= 8:
            # wide kernels: axpy over the taps, which vectorises without reassociation
            for co in range(Cout):
                for ci in range(Cg):
                    cin = (co // og) * Cg + ci
                    for b in range(B):
                        for oh in range(OH):
                            grow = &gout[b, co, oh, 0]
                            for y in range(kh):
                                xrow = &xp[b, cin, oh * sh + y, 0]
                                wrow = &gw[co, ci, y, 0]
                                for ow in range(OW):
                                    gv = grow[ow]
                                    for x in range(kw):
                                        wrow[x] += gv * xrow[ow * sw + x]
        else:
            for co in range(Cout):
                for ci in range(Cg):
                    cin = (co // og) * Cg + ci
                    for y in range(kh):
                        for x in range(kw):
                            acc0 = 0.0
                            acc1 = 0.0
                            acc2 = 0.0
                            acc3 = 0.0
                            for b in range(B):
                                for oh in range(OH):
                                    grow = &gout[b, co, oh, 0]
                                    xrow = &xp[b, cin, oh * sh + y, 0]
                                    if sw == 1:
                                        ow = 0
                                        while ow + 3 < OW:
                                            acc0 += grow[ow] * xrow[ow + x]
                                            acc1 += grow[ow + 1] * xrow[ow + 1 + x]
                                            acc2 += grow[ow + 2] * xrow[ow + 2 + x]
                                            acc3 += grow[ow + 3] * xrow[ow + 3 + x]
                                            ow += 4
                                        while ow < OW:
                                            acc0 += grow[ow] * xrow[ow + x]
                                            ow += 1
                                    else:
                                        for ow in range(OW):
                                            acc0 += grow[ow] * xrow[ow * sw + x]
                            gw[co, ci, y, x] = (acc0 + acc1) + (acc2 + acc3)
    return gw_arr


def conv_grad_input(const double[:, :, :, ::1] gout, const double[:, :, :, ::1] w,
                    int groups, int sh, int sw, int hp, int wp):
    cdef Py_ssize_t B = gout.shape[0], Cout = gout.shape[1], OH = gout.shape[2], OW = gout.shape[3]
    cdef Py_ssize_t Cg = w.shape[1], KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t og = Cout // groups
    gx_arr = np.zeros((B, Cg * groups, hp, wp))
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, co, ci, cin, oh, y, x, ow
    cdef double wv
    cdef const double* grow
    cdef double* xrow
    with nogil:
        for b in range(B):
            for co in range(Cout):
                for ci in range(Cg):
                    cin = (co // og) * Cg + ci
                    for oh in range(OH):
                        grow = &gout[b, co, oh, 0]
                        for y in range(KH):
                            xrow = &gx[b, cin, oh * sh + y, 0]
                            for x in range(KW):
                                wv = w[co, ci, y, x]
                                if sw == 1:
                                    for ow in range(OW):
                                        xrow[ow + x] += wv * grow[ow]
                                else:
                                    for ow in range(OW):
                                        xrow[ow * sw + x] += wv * grow[ow]
    return gx_arr
