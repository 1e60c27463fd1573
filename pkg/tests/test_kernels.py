"""Both kernel backends against the independent oracles and each other."""

import numpy as np
import pytest

from streamprofile.kernels import available_backends

from helpers import lcs_by_enumeration, lcs_by_recursion, silhouette_by_definition

BACKENDS = list(available_backends().items())


@pytest.fixture(params=[name for name, _ in BACKENDS])
def impl(request):
    return dict(BACKENDS)[request.param]


def _codes(seq):
    return np.asarray(list(seq), dtype=np.int64)


class TestLcs:
    def test_empty_sides(self, impl):
        assert impl.lcs_length(_codes([]), _codes([1, 2])) == 0
        assert impl.lcs_length(_codes([1, 2]), _codes([])) == 0
        assert impl.lcs_length(_codes([]), _codes([])) == 0

    def test_identity(self, impl):
        assert impl.lcs_length(_codes([1, 2, 3]), _codes([1, 2, 3])) == 3

    def test_classic(self, impl):
        # "abcde" vs "ace" -> 3, checked against enumeration
        a = [ord(c) for c in "abcde"]
        b = [ord(c) for c in "ace"]
        assert lcs_by_enumeration(a, b) == 3
        assert impl.lcs_length(_codes(a), _codes(b)) == 3

    def test_matches_enumeration_oracle_small(self, impl):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a = rng.integers(0, 3, size=rng.integers(0, 9))
            b = rng.integers(0, 3, size=rng.integers(0, 9))
            assert impl.lcs_length(_codes(a), _codes(b)) == lcs_by_enumeration(list(a), list(b))

    def test_matches_recursion_oracle_medium(self, impl):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a = rng.integers(0, 5, size=rng.integers(0, 40))
            b = rng.integers(0, 5, size=rng.integers(0, 40))
            assert impl.lcs_length(_codes(a), _codes(b)) == lcs_by_recursion(list(a), list(b))


class TestSilhouette:
    def test_two_far_duplicate_clusters(self, impl):
        # zero intra-cluster distance forces every per-point value to 1
        dist = np.array(
            [
                [0.0, 0.0, 9.0, 9.0],
                [0.0, 0.0, 9.0, 9.0],
                [9.0, 9.0, 0.0, 0.0],
                [9.0, 9.0, 0.0, 0.0],
            ]
        )
        labels = np.array([0, 0, 1, 1], dtype=np.int64)
        assert impl.silhouette_samples(dist, labels, 2).mean() == 1.0

    def test_singleton_contributes_zero(self, impl):
        dist = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
        labels = np.array([0, 1, 1], dtype=np.int64)
        samples = impl.silhouette_samples(dist, labels, 2)
        assert samples[0] == 0.0

    def test_matches_definition_oracle(self, impl):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(4, 15))
            k = int(rng.integers(2, 4))
            points = rng.normal(size=(n, 2))
            dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
            labels = rng.integers(0, k, size=n)
            labels[:k] = np.arange(k)  # every cluster nonempty
            got = impl.silhouette_samples(dist, labels.astype(np.int64), k).mean()
            want = silhouette_by_definition(dist.tolist(), labels.tolist())
            assert got == pytest.approx(want, abs=1e-12)


class TestNearestCentroid:
    def test_assigns_closest(self, impl):
        x = np.array([[0.0, 0.0], [10.0, 10.0], [0.2, -0.1]])
        c = np.array([[0.0, 0.0], [10.0, 10.0]])
        labels, inertia = impl.nearest_centroid(x, c)
        assert list(labels) == [0, 1, 0]
        assert inertia == pytest.approx(0.05)

    def test_tie_goes_to_lowest_index(self, impl):
        x = np.array([[0.0, 0.0]])
        c = np.array([[1.0, 0.0], [-1.0, 0.0]])
        labels, _ = impl.nearest_centroid(x, c)
        assert labels[0] == 0


def test_backends_agree():
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("numba backend not importable")
    rng = np.random.default_rng(23)
    for _ in range(50):
        a = rng.integers(0, 4, size=rng.integers(0, 30))
        b = rng.integers(0, 4, size=rng.integers(0, 30))
        results = {name: impl.lcs_length(_codes(a), _codes(b)) for name, impl in backends.items()}
        assert len(set(results.values())) == 1


@pytest.mark.parametrize(
    "flag,expected",
    [("0", "numpy"), ("off", "numpy"), ("1", "numba")],
)
def test_env_flag_selects_backend(flag, expected):
    import os
    import subprocess
    import sys

    env = dict(os.environ, STREAMPROFILE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from streamprofile.kernels import BACKEND; print(BACKEND)"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert out.stdout.strip() == expected, out.stderr
