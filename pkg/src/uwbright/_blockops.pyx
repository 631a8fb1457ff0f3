# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled blockwise metric scans (single pass, no temporaries).

Semantics match _blockops_np exactly; see that module for the contract.
"""

from libc.math cimport log


def block_log_ratio_sum(double[:, :] values, int block):
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    if block < 1 or h % block or w % block:
        raise ValueError(f"array ({h}, {w}) not tileable by {block}x{block} blocks")
    cdef Py_ssize_t nby = h // block
    cdef Py_ssize_t nbx = w // block
    cdef Py_ssize_t by, bx, i, j, i0, j0
    cdef double mx, mn, v, total = 0.0
    with nogil:
        for by in range(nby):
            i0 = by * block
            for bx in range(nbx):
                j0 = bx * block
                mx = values[i0, j0]
                mn = values[i0, j0]
                for i in range(i0, i0 + block):
                    for j in range(j0, j0 + block):
                        v = values[i, j]
                        if v > mx:
                            mx = v
                        if v < mn:
                            mn = v
                if mn > 0.0:
                    total += log(mx / mn)
    return total, nby * nbx


def block_plip_contrast_sum(double[:, :] values, int block, double gamma):
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    if block < 1 or h % block or w % block:
        raise ValueError(f"array ({h}, {w}) not tileable by {block}x{block} blocks")
    cdef Py_ssize_t nby = h // block
    cdef Py_ssize_t nbx = w // block
    cdef Py_ssize_t by, bx, i, j, i0, j0
    cdef double mx, mn, v, top, bottom, m, total = 0.0
    with nogil:
        for by in range(nby):
            i0 = by * block
            for bx in range(nbx):
                j0 = bx * block
                mx = values[i0, j0]
                mn = values[i0, j0]
                for i in range(i0, i0 + block):
                    for j in range(j0, j0 + block):
                        v = values[i, j]
                        if v > mx:
                            mx = v
                        if v < mn:
                            mn = v
                top = gamma * (mx - mn) / (gamma - mn)
                bottom = mx + mn - mx * mn / gamma
                if bottom > 0.0:
                    m = top / bottom
                    if m > 0.0:
                        total += m * log(m)
    return total, nby * nbx
