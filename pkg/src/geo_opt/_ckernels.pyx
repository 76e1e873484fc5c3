# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for MPS training and sampling.

Semantics are identical to ``geo_opt._pykernels``; see that module for the
reference formulation.
"""
import numpy as np
from libc.math cimport sqrt, fabs

cdef double _TINY = 1e-300


def two_site_descent(const double[:, ::1] left, const double[:, ::1] right,
                     const signed char[::1] s1, const signed char[::1] s2,
                     const double[::1] weights, double[:, :, :, ::1] merged,
                     double lr, int n_steps):
    cdef Py_ssize_t n = left.shape[0]
    cdef Py_ssize_t dl = merged.shape[0], dr = merged.shape[3]
    cdef Py_ssize_t i, a, b, s, t, step
    cdef double psi, coef, acc, norm
    grad_arr = np.empty((dl, 2, 2, dr))
    tmp_arr = np.empty(dl)
    cdef double[:, :, :, ::1] grad = grad_arr
    cdef double[::1] tmp = tmp_arr

    for step in range(n_steps):
        grad[...] = 0.0
        for i in range(n):
            s = s1[i]
            t = s2[i]
            psi = 0.0
            for a in range(dl):
                acc = 0.0
                for b in range(dr):
                    acc = acc + merged[a, s, t, b] * right[i, b]
                psi = psi + left[i, a] * acc
            if fabs(psi) < _TINY:
                psi = _TINY if psi >= 0 else -_TINY
            coef = 2.0 * weights[i] / psi
            for a in range(dl):
                tmp[a] = coef * left[i, a]
            for a in range(dl):
                for b in range(dr):
                    grad[a, s, t, b] = grad[a, s, t, b] + tmp[a] * right[i, b]
        norm = 0.0
        for a in range(dl):
            for s in range(2):
                for t in range(2):
                    for b in range(dr):
                        merged[a, s, t, b] = merged[a, s, t, b] + lr * (
                            grad[a, s, t, b] - 2.0 * merged[a, s, t, b])
                        norm = norm + merged[a, s, t, b] * merged[a, s, t, b]
        norm = sqrt(norm)
        if norm > 0:
            for a in range(dl):
                for s in range(2):
                    for t in range(2):
                        for b in range(dr):
                            merged[a, s, t, b] = merged[a, s, t, b] / norm


def advance_left(const double[:, ::1] left, const double[:, :, ::1] tensor,
                 const signed char[::1] bits):
    cdef Py_ssize_t n = left.shape[0], dl = tensor.shape[0], dr = tensor.shape[2]
    cdef Py_ssize_t i, a, b
    cdef signed char s
    cdef double norm
    out_arr = np.zeros((n, dr))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        s = bits[i]
        for a in range(dl):
            for b in range(dr):
                out[i, b] = out[i, b] + left[i, a] * tensor[a, s, b]
        norm = 0.0
        for b in range(dr):
            norm = norm + out[i, b] * out[i, b]
        norm = sqrt(norm)
        if norm > 0:
            for b in range(dr):
                out[i, b] = out[i, b] / norm
    return out_arr


def advance_right(const double[:, ::1] right, const double[:, :, ::1] tensor,
                  const signed char[::1] bits):
    cdef Py_ssize_t n = right.shape[0], dl = tensor.shape[0], dr = tensor.shape[2]
    cdef Py_ssize_t i, a, b
    cdef signed char s
    cdef double norm, acc
    out_arr = np.empty((n, dl))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        s = bits[i]
        norm = 0.0
        for a in range(dl):
            acc = 0.0
            for b in range(dr):
                acc = acc + tensor[a, s, b] * right[i, b]
            out[i, a] = acc
            norm = norm + acc * acc
        norm = sqrt(norm)
        if norm > 0:
            for a in range(dl):
                out[i, a] = out[i, a] / norm
    return out_arr


def sample_chain(list tensors, const double[:, ::1] uniforms):
    cdef Py_ssize_t n = uniforms.shape[0], n_sites = uniforms.shape[1]
    cdef Py_ssize_t i, k, a, b, dl, dr
    cdef double p0, p1, u0, u1, norm
    cdef double[:, :, ::1] tensor
    bits_arr = np.empty((n, n_sites), dtype=np.uint8)
    cdef unsigned char[:, ::1] bits = bits_arr
    vec_arr = np.ones((n, 1))
    cdef double[:, ::1] vec = vec_arr
    cdef double[:, ::1] nxt
    cdef double[::1] w0, w1
    for k in range(n_sites):
        tensor = np.ascontiguousarray(tensors[k], dtype=np.float64)
        dl = tensor.shape[0]
        dr = tensor.shape[2]
        nxt_arr = np.empty((n, dr))
        nxt = nxt_arr
        w0 = np.empty(dr)
        w1 = np.empty(dr)
        for i in range(n):
            p0 = 0.0
            p1 = 0.0
            for b in range(dr):
                u0 = 0.0
                u1 = 0.0
                for a in range(dl):
                    u0 = u0 + vec[i, a] * tensor[a, 0, b]
                    u1 = u1 + vec[i, a] * tensor[a, 1, b]
                w0[b] = u0
                w1[b] = u1
                p0 = p0 + u0 * u0
                p1 = p1 + u1 * u1
            if p0 < 0:
                p0 = 0.0
            if p1 < 0:
                p1 = 0.0
            if uniforms[i, k] * (p0 + p1) < p0:
                bits[i, k] = 0
                norm = sqrt(p0)
                for b in range(dr):
                    nxt[i, b] = w0[b] / norm if norm > 0 else 0.0
            else:
                bits[i, k] = 1
                norm = sqrt(p1)
                for b in range(dr):
                    nxt[i, b] = w1[b] / norm if norm > 0 else 0.0
        vec = nxt
    return bits_arr
