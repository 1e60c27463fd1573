"""Numba-jitted implementations of the hot kernels.

Contracts match :mod:`.numpy_impl`; compiled lazily on first call and
cached on disk so repeat runs skip compilation.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def lcs_length(a, b):
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(a.shape[0]):
        for j in range(1, m + 1):
            if a[i] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        for j in range(m + 1):
            prev[j] = cur[j]
    return int(prev[m])


@njit(cache=True)
def silhouette_samples(dist, labels, k):
    n = labels.shape[0]
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
    sums = np.zeros((n, k))
    for i in range(n):
        for j in range(n):
            sums[i, labels[j]] += dist[i, j]
    out = np.zeros(n)
    for i in range(n):
        own = labels[i]
        if counts[own] <= 1:
            continue
        a = sums[i, own] / (counts[own] - 1)
        b = np.inf
        for c in range(k):
            if c != own and counts[c] > 0:
                m = sums[i, c] / counts[c]
                if m < b:
                    b = m
        if not np.isfinite(b):
            continue
        denom = a if a > b else b
        if denom > 0:
            out[i] = (b - a) / denom
    return out


@njit(cache=True)
def nearest_centroid(x, centroids):
    n, d = x.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    inertia = 0.0
    for i in range(n):
        best = np.inf
        best_j = 0
        for j in range(k):
            s = 0.0
            for t in range(d):
                diff = x[i, t] - centroids[j, t]
                s += diff * diff
            if s < best:
                best = s
                best_j = j
        labels[i] = best_j
        inertia += best
    return labels, inertia
