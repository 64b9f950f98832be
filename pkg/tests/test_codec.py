from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2b.codec import (ContextVector, EncoderModel, GridCapExceeded, cardinality, encode,
                       enumerate_grid, grid_units, kmeans, normalize_and_round, round_units,
                       sample_grid_units, train_encoder)


def brute_force_grid(d: int, q: int) -> set[tuple[int, ...]]:
    total = 10**q
    return {p for p in itertools.product(range(total + 1), repeat=d) if sum(p) == total}


class TestCardinality:
    @pytest.mark.parametrize("d,q,n", [(3, 1, 66), (2, 1, 11), (6, 1, 3003),
                                       (10, 1, 92378), (20, 1, 20030010), (1, 1, 1)])
    def test_known_values(self, d, q, n):
        assert cardinality(d, q) == n

    @pytest.mark.parametrize("d,q", [(d, 1) for d in range(1, 6)] + [(d, 2) for d in range(1, 4)])
    def test_matches_brute_force(self, d, q):
        assert cardinality(d, q) == len(brute_force_grid(d, q))

    @pytest.mark.parametrize("d,q", [(0, 1), (3, 0), (-1, 2)])
    def test_rejects_bad_arguments(self, d, q):
        with pytest.raises(ValueError):
            cardinality(d, q)


class TestGridEnumeration:
    @pytest.mark.parametrize("d,q", [(1, 1), (3, 1), (4, 1), (3, 2)])
    def test_enumeration_is_the_grid(self, d, q):
        points = [v.units for v in enumerate_grid(d, q)]
        assert len(points) == len(set(points)) == cardinality(d, q)
        assert set(points) == brute_force_grid(d, q)

    def test_grid_units_array(self):
        g = grid_units(3, 1)
        assert g.shape == (66, 3)
        assert np.all(g.sum(axis=1) == 10)
        assert tuple(g[0]) == (0, 0, 10)

    def test_cap(self):
        with pytest.raises(GridCapExceeded) as info:
            grid_units(20, 1)
        assert info.value.n == 20030010
        with pytest.raises(GridCapExceeded):
            next(enumerate_grid(3, 1, cap=10))

    def test_sampled_points_lie_on_grid(self):
        rng = np.random.default_rng(3)
        s = sample_grid_units(20, 1, 2000, rng)
        assert s.shape == (2000, 20)
        assert np.all(s >= 0) and np.all(s.sum(axis=1) == 10)

    def test_sampling_is_uniform_over_grid(self):
        from scipy.stats import chisquare
        rng = np.random.default_rng(11)
        s = sample_grid_units(3, 1, 66 * 300, rng)
        index = {tuple(p): i for i, p in enumerate(grid_units(3, 1))}
        counts = np.bincount([index[tuple(p)] for p in s], minlength=66)
        assert chisquare(counts).pvalue > 0.01


class TestRounding:
    def test_three_way_tie(self):
        x = normalize_and_round([1, 1, 1], 1)
        assert x.units == (4, 3, 3)
        np.testing.assert_allclose(x.values, [0.4, 0.3, 0.3])

    def test_two_entries(self):
        assert normalize_and_round([1, 3], 1).units == (3, 7)

    def test_already_on_grid(self):
        assert normalize_and_round([0.2, 0.5, 0.3], 1).units == (2, 5, 3)

    @pytest.mark.parametrize("raw", [[0, 0, 0], [1, -1], [np.nan, 1.0], []])
    def test_rejects_invalid(self, raw):
        with pytest.raises(ValueError):
            normalize_and_round(raw, 1)

    def test_rejects_bad_precision(self):
        with pytest.raises(ValueError):
            normalize_and_round([1, 2], 0)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=12)
           .filter(lambda v: sum(v) > 1e-6), st.integers(1, 3))
    def test_sum_and_error_bound(self, raw, q):
        x = normalize_and_round(raw, q)
        assert sum(x.units) == 10**q
        target = np.asarray(raw) / np.sum(raw)
        assert np.all(np.abs(x.values - target) < 10.0**-q + 1e-12)

    def test_batch_rounding_matches_single(self):
        rng = np.random.default_rng(0)
        raw = rng.random((50, 7))
        rows = round_units(raw, 2)
        for r, u in zip(raw, rows):
            assert tuple(u) == normalize_and_round(r, 2).units

    def test_context_vector_invariants(self):
        with pytest.raises(ValueError):
            ContextVector((5, 4), 1)
        with pytest.raises(ValueError):
            ContextVector((11, -1), 1)
        assert ContextVector((10,), 1).d == 1


class TestKMeans:
    def test_two_obvious_clusters(self):
        pts = np.array([[0, 0], [0, 0.1], [5, 5], [5, 5.1]], dtype=float)
        centers, labels, converged = kmeans(pts, 2, np.random.default_rng(0))
        assert converged
        assert labels[0] == labels[1] != labels[2] == labels[3]
        np.testing.assert_allclose(sorted(centers[:, 0]), [0, 5])

    def test_k_equal_points_gives_singletons(self):
        pts = grid_units(2, 1) / 10
        centers, labels, _ = kmeans(pts, 11, np.random.default_rng(1))
        assert sorted(np.bincount(labels, minlength=11)) == [1] * 11


class TestEncoder:
    def test_small_grid_six_codes(self):
        model = train_encoder(3, 1, 6, seed=0)
        assert model.k == 6 and model.d == 3
        assert sum(model.cluster_sizes) == 66
        assert model.min_cluster_size == min(model.cluster_sizes) >= 1
        assert model.converged

    def test_k_equals_n(self):
        assert train_encoder(2, 1, 11).min_cluster_size == 1

    def test_single_code_is_grid_mean(self):
        model = train_encoder(2, 1, 1)
        np.testing.assert_allclose(model.centroids[0], [0.5, 0.5])
        assert model.cluster_sizes == (11,)

    def test_k_above_n_names_the_bound(self):
        with pytest.raises(ValueError, match=r"C\(10\^q\+d-1, d-1\) = 11"):
            train_encoder(2, 1, 12)

    def test_deterministic(self):
        a = train_encoder(4, 1, 20, seed=5)
        b = train_encoder(4, 1, 20, seed=5)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_sampled_training_above_cap(self):
        model = train_encoder(4, 1, 8, samples=500, seed=1, cap=100)
        assert sum(model.cluster_sizes) == 500

    def test_encode_tie_goes_to_lowest_index(self):
        model = EncoderModel(np.array([[1.0, 0.0], [0.0, 1.0]]), d=2, q=1, seed=0,
                             converged=True, cluster_sizes=(1, 1))
        assert encode(model, np.array([0.5, 0.5])) == 0
        assert model.encode(ContextVector((1, 9), 1)) == 1

    def test_encode_matches_brute_force(self):
        model = train_encoder(3, 1, 6, seed=2)
        for x in enumerate_grid(3, 1):
            dist = [math.dist(x.values, c) for c in model.centroids]
            assert model.encode(x) == int(np.argmin(dist))

    def test_encode_rejects_wrong_dimension(self):
        model = train_encoder(3, 1, 2)
        with pytest.raises(ValueError):
            model.encode(np.array([0.5, 0.5]))

    def test_encode_many_agrees(self):
        model = train_encoder(3, 1, 6)
        pts = grid_units(3, 1) / 10
        assert list(model.encode_many(pts)) == [model.encode(p) for p in pts]

    def test_json_round_trip(self, tmp_path):
        model = train_encoder(3, 1, 6, seed=4)
        path = tmp_path / "enc.json"
        model.save(path)
        doc = json.loads(path.read_text())
        assert set(doc) >= {"version", "d", "q", "k", "centroids", "min_cluster_size",
                            "seed", "converged"}
        back = EncoderModel.load(path)
        np.testing.assert_array_equal(back.centroids, model.centroids)
        assert back.cluster_sizes == model.cluster_sizes and back.seed == 4

    def test_rejects_unknown_version(self):
        doc = train_encoder(2, 1, 2).to_dict()
        doc["version"] = 99
        with pytest.raises(ValueError):
            EncoderModel.from_dict(doc)

    def test_centroids_read_only(self):
        model = train_encoder(2, 1, 2)
        with pytest.raises(ValueError):
            model.centroids[0, 0] = 3.0
