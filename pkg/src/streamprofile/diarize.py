"""Speaker-clustering math over per-segment embedding vectors.

Pipeline: cosine affinity -> normalized-Laplacian spectral embedding ->
seeded k-means, with the speaker count chosen by silhouette over the
allowed counts, enrollment-based role labeling, and a session-end global
re-clustering pass that repairs within-window drift.

Randomness: every stochastic step derives from one session seed through
``numpy.random.SeedSequence(seed, spawn_key=(k, restart))``, so each
candidate speaker count and each k-means restart draws from its own
deterministic stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, SingleCluster, TooFewPoints, ZeroVector
from .schema import ROLE_COUNSELOR, ROLE_GUARDIAN, ROLE_PATIENT

logger = logging.getLogger(__name__)

_KMEANS_RESTARTS = 8
_KMEANS_MAX_ITER = 300


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"vector dims differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < 1e-12 or nb < 1e-12:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class EmbeddingSet:
    """Unit-norm embedding vectors with (window, segment) provenance.

    ``durations`` optionally carries per-segment speaking time, used to
    split patient vs guardian when three speakers are present.
    """

    vectors: np.ndarray
    segment_refs: tuple[tuple[int, int], ...]
    durations: Optional[np.ndarray] = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a (n, d) array")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "segment_refs", tuple(tuple(r) for r in self.segment_refs))
        if len(self.segment_refs) != vectors.shape[0]:
            raise ValueError("segment_refs must parallel vectors")
        if vectors.shape[0]:
            norms = np.linalg.norm(vectors, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("all embeddings must be unit-norm within 1e-6")
        if self.durations is not None:
            durations = np.asarray(self.durations, dtype=np.float64)
            if durations.shape != (vectors.shape[0],):
                raise ValueError("durations must parallel vectors")
            object.__setattr__(self, "durations", durations)

    def __len__(self) -> int:
        return int(self.vectors.shape[0])


@dataclass(frozen=True)
class ClusterResult:
    k: int
    labels: np.ndarray
    centroids: np.ndarray  # unit-norm, normalized member means
    silhouette: float


@dataclass(frozen=True)
class RoleMap:
    """Cluster label -> role; exactly one cluster is the counselor."""

    assignments: dict[int, str]

    def __post_init__(self):
        counselors = [l for l, r in self.assignments.items() if r == ROLE_COUNSELOR]
        if len(counselors) != 1:
            raise ValueError("exactly one cluster must be the counselor")


def _cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    sim = np.clip(vectors @ vectors.T, -1.0, 1.0)
    dist = 1.0 - sim
    np.fill_diagonal(dist, 0.0)
    return np.maximum(dist, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 1e-18:
            centroids[j] = x[rng.integers(n)]
            continue
        probs = d2 / total
        centroids[j] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _fix_empty_clusters(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Move one far point into each empty cluster; only splits clusters of >=2."""
    labels = labels.copy()
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] >= 2
        if not np.any(movable):
            continue
        centroids = np.vstack(
            [x[labels == j].mean(axis=0) if counts[j] else np.zeros(x.shape[1]) for j in range(k)]
        )
        residual = ((x - centroids[labels]) ** 2).sum(axis=1)
        residual[~movable] = -np.inf
        labels[int(np.argmax(residual))] = c
    return labels


def _lloyd(x: np.ndarray, init: np.ndarray, k: int) -> tuple[np.ndarray, float]:
    centroids = init.copy()
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    for _ in range(_KMEANS_MAX_ITER):
        new_labels, inertia = kernels.nearest_centroid(x, centroids)
        new_labels = _fix_empty_clusters(x, new_labels, k)
        if np.array_equal(new_labels, labels):
            return labels, inertia
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    _, inertia = kernels.nearest_centroid(x, centroids)
    return labels, inertia


def _kmeans(x: np.ndarray, k: int, seed: int) -> np.ndarray:
    best_labels = None
    best_inertia = np.inf
    for restart in range(_KMEANS_RESTARTS):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, restart)))
        labels, inertia = _lloyd(x, _kmeans_pp_init(x, k, rng), k)
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels
    return best_labels


def spectral_cluster(emb: EmbeddingSet, k: int, seed: int) -> np.ndarray:
    """Cluster embeddings into k groups; deterministic for a fixed seed.

    Affinity A_ij = (1 + cos(v_i, v_j)) / 2, symmetric normalized
    Laplacian, embedding into the k leading eigenvectors, row
    normalization, then seeded k-means on the rows.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n = len(emb)
    if n < k:
        raise TooFewPoints(f"{n} points cannot form {k} clusters")
    affinity = (1.0 + np.clip(emb.vectors @ emb.vectors.T, -1.0, 1.0)) / 2.0
    degree = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, 1e-12))
    laplacian = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    # eigh returns ascending eigenvalues; equal values keep index order.
    _, eigvecs = np.linalg.eigh(laplacian)
    embedded = eigvecs[:, :k]
    row_norms = np.linalg.norm(embedded, axis=1)
    embedded = embedded / np.maximum(row_norms, 1e-12)[:, None]
    return _kmeans(embedded, k, seed)


def _normalized_centroids(vectors: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centroids = np.empty((k, vectors.shape[1]))
    for j in range(k):
        mean = vectors[labels == j].mean(axis=0)
        norm = np.linalg.norm(mean)
        centroids[j] = mean / norm if norm > 1e-12 else vectors[labels == j][0]
    return centroids


def silhouette_from_distances(dist: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over points for any precomputed distance matrix.

    Points alone in their cluster contribute 0 (standard convention).
    """
    labels = np.asarray(labels, dtype=np.int64)
    distinct = np.unique(labels)
    if distinct.size < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    remap = {int(v): i for i, v in enumerate(distinct)}
    dense = np.array([remap[int(v)] for v in labels], dtype=np.int64)
    samples = kernels.silhouette_samples(np.asarray(dist, dtype=np.float64), dense, distinct.size)
    return float(samples.mean())


def silhouette(emb: EmbeddingSet, labels: np.ndarray) -> float:
    """Mean silhouette under cosine distance (1 - cosine similarity)."""
    return silhouette_from_distances(_cosine_distance_matrix(emb.vectors), labels)


def cluster_candidates(emb: EmbeddingSet, counts: Sequence[int], seed: int) -> dict[int, ClusterResult]:
    """One ClusterResult per allowed speaker count, ascending."""
    counts = sorted(set(int(c) for c in counts))
    if not counts:
        raise ValueError("counts must be nonempty")
    if len(emb) < max(counts):
        raise TooFewPoints(f"{len(emb)} points, need at least {max(counts)}")
    candidates = {}
    for k in counts:
        labels = spectral_cluster(emb, k, seed)
        candidates[k] = ClusterResult(
            k=k,
            labels=labels,
            centroids=_normalized_centroids(emb.vectors, labels, k),
            silhouette=silhouette(emb, labels),
        )
    return candidates


def select_speaker_count(emb: EmbeddingSet, counts: Sequence[int], seed: int) -> ClusterResult:
    """Cluster at every allowed count, keep the best-silhouette result.

    Ties break toward the smaller count.
    """
    best: Optional[ClusterResult] = None
    for result in cluster_candidates(emb, counts, seed).values():
        if best is None or result.silhouette > best.silhouette:
            best = result
    return best


def assign_roles(
    result: ClusterResult,
    enrollment: Sequence[float],
    guardian_present: bool = False,
    durations: Optional[np.ndarray] = None,
) -> RoleMap:
    """Label clusters with session roles via one-shot speaker verification.

    The cluster whose centroid is closest (cosine) to the counselor
    enrollment embedding becomes the counselor; near-ties within 1e-9 go
    to the lower cluster index.  With three clusters the non-counselor
    cluster speaking longer is the patient, the other the guardian
    (member counts stand in when durations are absent).
    """
    enrollment = np.asarray(enrollment, dtype=np.float64)
    sims = np.array([cosine_similarity(c, enrollment) for c in result.centroids])
    counselor = int(np.flatnonzero(sims >= sims.max() - 1e-9)[0])
    others = [j for j in range(result.k) if j != counselor]
    assignments = {counselor: ROLE_COUNSELOR}
    if result.k == 2:
        assignments[others[0]] = ROLE_PATIENT
    else:
        if durations is not None:
            weight = np.array([float(durations[result.labels == j].sum()) for j in others])
        else:
            weight = np.array([float(np.sum(result.labels == j)) for j in others])
        patient = others[int(np.argmax(weight))]
        for j in others:
            assignments[j] = ROLE_PATIENT if j == patient else ROLE_GUARDIAN
        if not guardian_present:
            logger.warning("3 clusters found but no guardian expected; labeling one anyway")
    return RoleMap(assignments=assignments)


@dataclass(frozen=True)
class GlobalReclusterResult:
    cluster: ClusterResult
    roles: RoleMap
    #: (window_index, segment_index, role) per input point, original order.
    segment_roles: tuple[tuple[int, int, str], ...]


def global_recluster(
    all_emb: EmbeddingSet,
    counts: Sequence[int],
    seed: int,
    enrollment: Sequence[float],
    guardian_present: bool = False,
) -> GlobalReclusterResult:
    """Re-cluster the whole session's embeddings and re-derive every role.

    Pure function of the embedding union: within-window assignments play
    no part, which is what lets this pass correct per-window drift.
    """
    if len(all_emb) == 0:
        raise TooFewPoints("no embeddings accumulated")
    result = select_speaker_count(all_emb, counts, seed)
    roles = assign_roles(
        result,
        enrollment,
        guardian_present=guardian_present,
        durations=all_emb.durations,
    )
    segment_roles = tuple(
        (ref[0], ref[1], roles.assignments[int(label)])
        for ref, label in zip(all_emb.segment_refs, result.labels)
    )
    return GlobalReclusterResult(cluster=result, roles=roles, segment_roles=segment_roles)
