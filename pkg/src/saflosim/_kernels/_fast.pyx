# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled 1D-convolution kernels (hot path of CNN training and inference)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv1d_forward(double[:, :, ::1] x_padded, double[:, :, ::1] w):
    cdef Py_ssize_t n = x_padded.shape[0]
    cdef Py_ssize_t lp = x_padded.shape[1]
    cdef Py_ssize_t c = x_padded.shape[2]
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t f = w.shape[2]
    cdef Py_ssize_t l = lp - k + 1
    out_arr = np.zeros((n, l, f), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, p, q, r
    cdef double xv
    for i in range(n):
        for p in range(k):
            for j in range(l):
                for q in range(c):
                    xv = x_padded[i, j + p, q]
                    if xv == 0.0:
                        continue
                    for r in range(f):
                        out[i, j, r] += xv * w[p, q, r]
    return out_arr


def conv1d_backward_input(double[:, :, ::1] dy, double[:, :, ::1] w, Py_ssize_t padded_len):
    cdef Py_ssize_t n = dy.shape[0]
    cdef Py_ssize_t l = dy.shape[1]
    cdef Py_ssize_t f = dy.shape[2]
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t c = w.shape[1]
    dx_arr = np.zeros((n, padded_len, c), dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t i, j, p, q, r
    cdef double acc
    for i in range(n):
        for p in range(k):
            for j in range(l):
                for q in range(c):
                    acc = 0.0
                    for r in range(f):
                        acc += dy[i, j, r] * w[p, q, r]
                    dx[i, j + p, q] += acc
    return dx_arr


def conv1d_backward_weights(double[:, :, ::1] x_padded, double[:, :, ::1] dy):
    cdef Py_ssize_t n = x_padded.shape[0]
    cdef Py_ssize_t lp = x_padded.shape[1]
    cdef Py_ssize_t c = x_padded.shape[2]
    cdef Py_ssize_t l = dy.shape[1]
    cdef Py_ssize_t f = dy.shape[2]
    cdef Py_ssize_t k = lp - l + 1
    dw_arr = np.zeros((k, c, f), dtype=np.float64)
    cdef double[:, :, ::1] dw = dw_arr
    cdef Py_ssize_t i, j, p, q, r
    cdef double xv
    for i in range(n):
        for p in range(k):
            for j in range(l):
                for q in range(c):
                    xv = x_padded[i, j + p, q]
                    if xv == 0.0:
                        continue
                    for r in range(f):
                        dw[p, q, r] += xv * dy[i, j, r]
    return dw_arr
