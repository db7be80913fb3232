# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled DTW accumulation kernel; mirrors fallback.dtw_accumulate exactly.

The arithmetic (one add plus a three-way min per cell, row-major order)
matches the pure-Python fallback operation for operation, so both
backends produce bit-identical tables.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def dtw_accumulate(object cost_obj):
    cost_arr = np.ascontiguousarray(cost_obj, dtype=np.float64)
    cdef double[:, ::1] cost = cost_arr
    cdef Py_ssize_t t1 = cost.shape[0]
    cdef Py_ssize_t t2 = cost.shape[1]
    out_arr = np.empty((t1, t2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double best, diag, up, left

    out[0, 0] = cost[0, 0]
    for j in range(1, t2):
        out[0, j] = cost[0, j] + out[0, j - 1]
    for i in range(1, t1):
        out[i, 0] = cost[i, 0] + out[i - 1, 0]
        left = out[i, 0]
        for j in range(1, t2):
            diag = out[i - 1, j - 1]
            up = out[i - 1, j]
            best = diag if diag <= up else up
            if left < best:
                best = left
            left = cost[i, j] + best
            out[i, j] = left
    return out_arr
