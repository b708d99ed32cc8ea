# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled two-pointer time-tag correlator kernel."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def correlate_kernel(
    cnp.int64_t[::1] tags1,
    cnp.int64_t[::1] tags2,
    long long bin_width,
    long long n_half,
):
    """Histogram of tags2[j] - tags1[i] into 2*n_half+1 centered bins.

    Bin k (tau near k*bin_width) collects |tau| with
    round-half-away-from-zero binning, so the histogram is exactly
    symmetric under stream exchange with tau -> -tau. Pairs with
    |tau| >= (n_half + 1/2) * bin_width are excluded.
    """
    cdef Py_ssize_t n1 = tags1.shape[0]
    cdef Py_ssize_t n2 = tags2.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(
        2 * n_half + 1, dtype=np.int64
    )
    cdef cnp.int64_t[::1] cview = counts
    cdef long long two_bw = 2 * bin_width
    cdef long long lim = (2 * n_half + 1) * bin_width  # 2*|tau| < lim qualifies
    cdef Py_ssize_t i, j, lo = 0, hi = 0
    cdef long long t1, tau, k

    for i in range(n1):
        t1 = tags1[i]
        # Window of qualifying partners: 2*(t2 - t1) in (-lim, lim).
        while lo < n2 and 2 * (tags2[lo] - t1) <= -lim:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n2 and 2 * (tags2[hi] - t1) < lim:
            hi += 1
        for j in range(lo, hi):
            tau = tags2[j] - t1
            if tau >= 0:
                k = (2 * tau + bin_width) // two_bw
            else:
                k = -((-2 * tau + bin_width) // two_bw)
            cview[n_half + k] += 1
    return counts
