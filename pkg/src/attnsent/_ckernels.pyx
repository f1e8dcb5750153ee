# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


cdef inline uint64_t _fnv(const unsigned char* p, Py_ssize_t n) noexcept nogil:
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(n):
        h ^= p[i]
        h *= FNV_PRIME
    return h


def fnv1a64(bytes data):
    return _fnv(<const unsigned char*>data, len(data))


def ngram_buckets(str token, int minn, int maxn, uint64_t nbuckets):
    cdef str word = "<" + token + ">"
    cdef bytes raw = word.encode("utf-8")
    cdef const unsigned char* p = raw
    cdef Py_ssize_t nchar = len(word)
    cdef Py_ssize_t nbyte = len(raw)
    # byte offset of every code point, plus the end sentinel
    cdef cnp.ndarray[int64_t] starts = np.empty(nchar + 1, dtype=np.int64)
    cdef Py_ssize_t b = 0, c = 0, i, n, count = 0
    while b < nbyte:
        if (p[b] & 0xC0) != 0x80:
            starts[c] = b
            c += 1
        b += 1
    starts[nchar] = nbyte
    cdef Py_ssize_t cap = nchar * (maxn - minn + 1)
    cdef cnp.ndarray[int64_t] out = np.empty(max(cap, 0), dtype=np.int64)
    for i in range(nchar):
        for n in range(minn, maxn + 1):
            if i + n > nchar:
                break
            out[count] = <int64_t>(_fnv(p + starts[i], starts[i + n] - starts[i]) % nbuckets)
            count += 1
    return out[:count]


def bag_mean(double[:, ::1] weights, int64_t[::1] idx, int64_t[::1] offsets):
    cdef Py_ssize_t m = offsets.shape[0] - 1
    cdef Py_ssize_t d = weights.shape[1]
    out_arr = np.zeros((m, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t bag, k, j, row
    cdef double inv
    with nogil:
        for bag in range(m):
            for k in range(offsets[bag], offsets[bag + 1]):
                row = idx[k]
                for j in range(d):
                    out[bag, j] += weights[row, j]
            inv = 1.0 / (offsets[bag + 1] - offsets[bag])
            for j in range(d):
                out[bag, j] *= inv
    return out_arr


def bag_mean_backward(double[:, ::1] dout, int64_t[::1] idx, int64_t[::1] offsets,
                      Py_ssize_t nrows):
    cdef Py_ssize_t m = offsets.shape[0] - 1
    cdef Py_ssize_t d = dout.shape[1]
    grad_arr = np.zeros((nrows, d))
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t bag, k, j, row
    cdef double inv
    with nogil:
        for bag in range(m):
            inv = 1.0 / (offsets[bag + 1] - offsets[bag])
            for k in range(offsets[bag], offsets[bag + 1]):
                row = idx[k]
                for j in range(d):
                    grad[row, j] += dout[bag, j] * inv
    return grad_arr
