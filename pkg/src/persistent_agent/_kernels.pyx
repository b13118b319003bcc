# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled memory kernels: hashed bag-of-words embedding and cosine top-k.

Must agree bit-for-bit with ``_kernels_py``; sums run in ascending index order
and the extension is built without FP contraction.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdint cimport uint64_t

cnp.import_array()

cdef uint64_t FNV_OFFSET = 14695981039346656037ULL
cdef uint64_t FNV_PRIME = 1099511628211ULL


cdef inline bint _is_alnum(unsigned char c) nogil:
    return (c >= 48 and c <= 57) or (c >= 97 and c <= 122) or (c >= 65 and c <= 90)


cdef inline unsigned char _lower(unsigned char c) nogil:
    if c >= 65 and c <= 90:
        return c + 32
    return c


def embed_bytes(bytes data, int dim):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(dim, dtype=np.float64)
    cdef const unsigned char[:] buf = data
    cdef Py_ssize_t n = len(data), i = 0
    cdef uint64_t h
    cdef bint in_tok = False
    cdef double norm = 0.0
    cdef unsigned char c
    h = FNV_OFFSET
    for i in range(n):
        c = buf[i]
        if _is_alnum(c):
            if not in_tok:
                h = FNV_OFFSET
                in_tok = True
            h = (h ^ _lower(c)) * FNV_PRIME
        elif in_tok:
            out[h % dim] += 1.0
            in_tok = False
    if in_tok:
        out[h % dim] += 1.0
    for i in range(dim):
        norm += out[i] * out[i]
    if norm > 0.0:
        norm = sqrt(norm)
        for i in range(dim):
            out[i] = out[i] / norm
    return out


def cosine_scores(cnp.ndarray[cnp.float64_t, ndim=2] matrix, cnp.ndarray[cnp.float64_t, ndim=1] query):
    cdef Py_ssize_t rows = matrix.shape[0], cols = matrix.shape[1], r, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(rows, dtype=np.float64)
    cdef double s
    for r in range(rows):
        s = 0.0
        for j in range(cols):
            if query[j] != 0.0:
                s += matrix[r, j] * query[j]
        out[r] = s
    return out


def top_k(cnp.ndarray[cnp.float64_t, ndim=1] scores, cnp.ndarray[cnp.int64_t, ndim=1] ids, int k):
    """Indices of the k best rows by (score desc, id asc)."""
    cdef Py_ssize_t n = scores.shape[0], i, j, best
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] taken = np.zeros(n, dtype=np.uint8)
    out = []
    if k > n:
        k = n
    for j in range(k):
        best = -1
        for i in range(n):
            if taken[i]:
                continue
            if best < 0 or scores[i] > scores[best] or (scores[i] == scores[best] and ids[i] < ids[best]):
                best = i
        taken[best] = 1
        out.append(best)
    return out
