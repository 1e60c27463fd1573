"""Pure-numpy implementations of the hot kernels.

Fallback path used when numba is unavailable or disabled via
``STREAMPROFILE_NUMBA=0``. Same contracts as :mod:`.numba_impl`.
"""

import numpy as np


def lcs_length(a, b):
    """Longest common subsequence length of two integer code sequences.

    Row-sweep formulation: within a row, dp[j] = running max of
    max(prev[j-1] + match, prev[j]), which lets numpy vectorize the
    otherwise sequential inner loop.  O(len(a) * len(b)) time, O(len(b))
    memory.
    """
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0
    prev = np.zeros(b.shape[0] + 1, dtype=np.int64)
    cur = np.zeros_like(prev)
    for i in range(a.shape[0]):
        cand = np.where(b == a[i], prev[:-1] + 1, 0)
        np.maximum(cand, prev[1:], out=cand)
        np.maximum.accumulate(cand, out=cur[1:])
        prev, cur = cur, prev
        cur[0] = 0
    return int(prev[-1])


def silhouette_samples(dist, labels, k):
    """Per-point silhouette values from a precomputed distance matrix.

    ``dist`` must be symmetric with a zero diagonal; ``labels`` in [0, k).
    Points alone in their cluster contribute 0.
    """
    n = labels.shape[0]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    counts = onehot.sum(axis=0)
    sums = dist @ onehot
    out = np.zeros(n)
    own = counts[labels]
    singleton = own <= 1
    a = np.zeros(n)
    np.divide(sums[np.arange(n), labels], own - 1, out=a, where=~singleton)
    mean_other = sums / np.where(counts > 0, counts, 1.0)
    mask = (np.arange(k)[None, :] == labels[:, None]) | (counts[None, :] == 0)
    mean_other[mask] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    good = (~singleton) & (denom > 0) & np.isfinite(b)
    out[good] = (b[good] - a[good]) / denom[good]
    return out


def nearest_centroid(x, centroids):
    """Assign each row of ``x`` to its nearest centroid (squared Euclidean).

    Returns (labels, inertia). Ties go to the lowest centroid index.
    """
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(x.shape[0]), labels].sum())
    return labels.astype(np.int64), inertia
