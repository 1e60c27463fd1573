"""Shared test utilities: independent oracles and fixture builders.

The oracles here deliberately avoid the library's own code paths so
they can vouch for them: LCS by subsequence enumeration and by naive
memoized recursion, Jaccard by explicit set enumeration, clustering by
exhaustive partition search, silhouette by direct transliteration of
its definition.
"""

from __future__ import annotations

import itertools
import json
import unicodedata
from functools import lru_cache

import numpy as np

from streamprofile.schema import DialogueSegment, DialogueWindow


# ---------------------------------------------------------------- oracles

def lcs_by_enumeration(a, b):
    """Max length over all subsequences of the shorter side that also
    occur in the longer side; exponential, for short inputs only."""
    if len(a) > len(b):
        a, b = b, a
    best = 0
    for mask in range(1 << len(a)):
        sub = [a[i] for i in range(len(a)) if (mask >> i) & 1]
        if len(sub) <= best:
            continue
        it = iter(b)
        if all(token in it for token in sub):
            best = len(sub)
    return best


def lcs_by_recursion(a, b):
    """Top-down memoized recursion, structurally unlike the row-sweep DP."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0 or j == 0:
            return 0
        if a[i - 1] == b[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    return rec(len(a), len(b))


def jaccard_by_enumeration(s1, s2):
    """Bigram Jaccard with explicit unique-list bookkeeping, no set ops."""
    s1 = unicodedata.normalize("NFC", s1)
    s2 = unicodedata.normalize("NFC", s2)

    def uniq_bigrams(s):
        seen = []
        for i in range(len(s) - 1):
            gram = s[i] + s[i + 1]
            if gram not in seen:
                seen.append(gram)
        return seen

    b1, b2 = uniq_bigrams(s1), uniq_bigrams(s2)
    if not b1 and not b2:
        return 1.0
    if not b1 or not b2:
        return 0.0
    inter = sum(1 for g in b1 if g in b2)
    union = len(b1) + sum(1 for g in b2 if g not in b1)
    return inter / union


def best_partition_by_enumeration(vectors, k):
    """Exhaustive search for the k-partition minimizing the sum of
    within-cluster pairwise cosine distances.  n <= 12 only."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    sims = vectors @ vectors.T
    best_cost, best_labels = np.inf, None
    for assignment in itertools.product(range(k), repeat=n):
        if assignment[0] != 0:  # fix first point's label: kills k! symmetry
            break
        if len(set(assignment)) != k:
            continue
        cost = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if assignment[i] == assignment[j]:
                    cost += 1.0 - sims[i, j]
        if cost < best_cost:
            best_cost, best_labels = cost, assignment
    return list(best_labels)


def silhouette_by_definition(dist, labels):
    """Direct per-point transliteration of the silhouette definition."""
    n = len(labels)
    values = []
    for i in range(n):
        own = [j for j in range(n) if j != i and labels[j] == labels[i]]
        if not own:
            values.append(0.0)
            continue
        a = sum(dist[i][j] for j in own) / len(own)
        others = []
        for c in set(labels):
            if c == labels[i]:
                continue
            members = [j for j in range(n) if labels[j] == c]
            others.append(sum(dist[i][j] for j in members) / len(members))
        b = min(others)
        denom = max(a, b)
        values.append(0.0 if denom == 0 else (b - a) / denom)
    return sum(values) / n


def aligned_accuracy(predicted, truth, k):
    """Best label-permutation agreement between two labelings."""
    predicted = list(predicted)
    truth = list(truth)
    best = 0.0
    for perm in itertools.permutations(range(k)):
        hits = sum(1 for p, t in zip(predicted, truth) if perm[p] == t)
        best = max(best, hits / len(truth))
    return best


# ----------------------------------------------- synthetic diarization data

def synthetic_directions(k, dim, rng, blend=0.8):
    """k unit directions with pairwise angle >= 60 degrees (about 67 here)."""
    basis = np.linalg.qr(rng.normal(size=(dim, k + 1)))[0].T
    common = basis[k]
    directions = []
    for i in range(k):
        v = basis[i] + blend * common
        directions.append(v / np.linalg.norm(v))
    return np.array(directions)


def synthetic_cluster_points(k, n, dim, seed, within_std_deg=8.0):
    """(vectors, labels) for k clusters of noisy unit vectors."""
    rng = np.random.default_rng(seed)
    directions = synthetic_directions(k, dim, rng)
    sigma = np.radians(within_std_deg) / np.sqrt(dim - 1)
    labels = np.array([i % k for i in range(n)])
    rng.shuffle(labels)
    vectors = np.empty((n, dim))
    for i, label in enumerate(labels):
        v = directions[label] + rng.normal(scale=sigma, size=dim)
        vectors[i] = v / np.linalg.norm(v)
    return vectors, labels, directions


# -------------------------------------------------------- dialogue builders

def make_window(texts, index=0, start=None, seconds_each=5.0, roles=None, embeddings=None,
                emotions=None, window_seconds=60.0):
    """Quick DialogueWindow from a list of utterances."""
    start = index * window_seconds if start is None else start
    segments = []
    for i, text in enumerate(texts):
        t0 = start + i * seconds_each
        segments.append(
            DialogueSegment(
                utterance=text,
                role=(roles[i] if roles else "unknown"),
                t_start=t0,
                t_end=t0 + seconds_each - 0.5,
                embedding=None if embeddings is None else embeddings[i],
                emotion=None if emotions is None else emotions[i],
            )
        )
    end = max(start + window_seconds, max((s.t_end for s in segments), default=0.0))
    return DialogueWindow(index=index, segments=tuple(segments), window_start=start, window_end=end)


def analysis_response(phases=("ProblemManagement",), severity="clinical",
                      emotion="depression", filters=(), prose="The window shows sustained distress."):
    block = {
        "phases": list(phases),
        "filtered_segments": [{"segment": i, "verdict": v} for i, v in filters],
        "severity": severity,
        "major_emotion": emotion,
    }
    return f"{prose}\n\n```json\n{json.dumps(block, ensure_ascii=False)}\n```\n"


def extraction_response(items):
    return "Extracted evidence follows.\n```json\n" + json.dumps(list(items), ensure_ascii=False) + "\n```\n"


def profile_response(claims):
    """claims: list of (dimension_id, text, [entry ids])."""
    lines = ["Profile synthesis:"]
    for dim, text, ids in claims:
        lines.append(f"{dim}: {text} [{', '.join(ids)}]")
    return "\n".join(lines) + "\n"
