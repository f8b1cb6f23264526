import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from timbrelab.errors import ConfigurationError
from timbrelab.stats import (CorrelationReport, collinearity_filter,
                             correlation_table, feature_agglomeration,
                             p_value_for_r, pearson_test,
                             regularized_incomplete_beta, spearman,
                             stars_for_p, student_t_two_tailed_p)

# Published descriptor-vs-dimension correlations (9 descriptors x 4 dims)
# with their significance marks, n = 15 stimuli.
TABLE_1 = {
    "spectral_complexity": [(0.75, "**"), (0.39, ""), (-0.23, ""), (0.10, "")],
    "spectral_flux": [(0.68, "**"), (-0.24, ""), (-0.08, ""), (0.41, "")],
    "log_attack_time": [(0.60, "*"), (-0.39, ""), (-0.26, ""), (-0.37, "")],
    "tristimulus_3": [(0.75, "**"), (0.31, ""), (-0.23, ""), (-0.37, "")],
    "spectral_decrease": [(-0.23, ""), (0.58, "*"), (0.24, ""), (-0.43, "")],
    "tristimulus_2": [(-0.44, ""), (0.14, ""), (-0.51, "*"), (0.30, "")],
    "spectral_kurtosis": [(-0.01, ""), (-0.43, ""), (0.61, "*"), (0.35, "")],
    "odd_even_ratio": [(-0.34, ""), (-0.30, ""), (0.56, "*"), (0.14, "")],
    "spectral_centroid": [(0.05, ""), (0.28, ""), (-0.52, "*"), (-0.65, "**")],
}
TABLE_N = 15


def oracle_rank_then_pearson(x, y):
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        out = [0.0] * len(v)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                out[order[k]] = (i + j) / 2 + 1
            i = j + 1
        return out
    rx, ry = ranks(x), ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def oracle_p_by_integration(t, df):
    """Two-tailed tail mass of the Student t density via quadrature."""
    def pdf(x):
        return (math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
                * (1 + x * x / df) ** (-(df + 1) / 2))
    tail, _ = integrate.quad(pdf, abs(t), np.inf)
    return 2 * tail


class TestSpearman:
    def test_identity(self):
        x = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        assert spearman(x, x) == pytest.approx(1.0)

    def test_strictly_decreasing(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert spearman(x, -(x ** 3)) == pytest.approx(-1.0)

    def test_tied_example_matches_oracle(self):
        x = [1.0, 2.0, 2.0, 3.0]
        y = [1.0, 2.0, 3.0, 4.0]
        assert spearman(x, y) == pytest.approx(oracle_rank_then_pearson(x, y), abs=1e-12)

    def test_constant_input_rejected(self):
        with pytest.raises(ConfigurationError):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    @given(seed=st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(12)
        y = rng.standard_normal(12)
        base = spearman(x, y)
        assert spearman(np.exp(x), y) == pytest.approx(base, abs=1e-12)
        assert spearman(x, 3.0 * y ** 3 + 2.0) == pytest.approx(base, abs=1e-12)


class TestIncompleteBeta:
    def test_against_scipy_betainc(self):
        for a in (0.5, 1.5, 6.5, 15.0):
            for b in (0.5, 2.0, 7.0):
                for x in (0.01, 0.2, 0.5, 0.8, 0.99):
                    assert regularized_incomplete_beta(a, b, x) == pytest.approx(
                        float(special.betainc(a, b, x)), abs=1e-12)

    def test_p_values_match_numerical_integration(self):
        for df in (3, 13, 30):
            for r in np.arange(0.1, 0.95, 0.1):
                t = r * math.sqrt(df / (1 - r * r))
                assert student_t_two_tailed_p(t, df) == pytest.approx(
                    oracle_p_by_integration(t, df), abs=1e-8)


class TestPearson:
    def test_published_strong_cell(self):
        assert p_value_for_r(0.75, TABLE_N) == pytest.approx(0.0013, abs=0.0002)

    def test_published_weak_cell(self):
        assert p_value_for_r(0.58, TABLE_N) == pytest.approx(0.023, abs=0.001)

    def test_unstarred_cell(self):
        assert p_value_for_r(0.44, TABLE_N) == pytest.approx(0.10, abs=0.005)

    def test_zero_correlation(self):
        assert p_value_for_r(0.0, 10) == pytest.approx(1.0)

    def test_perfect_correlation(self):
        x = np.arange(10.0)
        r, p = pearson_test(x, 2 * x + 1)
        assert r == pytest.approx(1.0)
        assert p == 0.0

    def test_constant_input_rejected(self):
        with pytest.raises(ConfigurationError):
            pearson_test(np.ones(5), np.arange(5.0))


class TestTableOneStars:
    def consistent_cells(self):
        for name, row in TABLE_1.items():
            for dim, (r, mark) in enumerate(row, start=1):
                yield name, dim, r, mark

    def test_all_but_the_boundary_cell_reproduce(self):
        # r = -.51 (tristimulus_2, dim 3) is starred in the published table
        # but the rounded value gives p = .052; every other cell classifies
        # exactly.
        mismatches = []
        for name, dim, r, mark in self.consistent_cells():
            if (name, dim) == ("tristimulus_2", 3):
                continue
            if stars_for_p(p_value_for_r(r, TABLE_N)) != mark:
                mismatches.append((name, dim, r, mark))
        assert mismatches == []

    @pytest.mark.xfail(strict=True, reason=(
        "published r values are rounded to 2 decimals: tristimulus_2 vs dim 3 "
        "is starred at r=-.51, but p(.51, n=15)=.0521 >= .05; the unrounded "
        "study value must have been |r| >= .514"))
    def test_every_cell_reproduces(self):
        for name, dim, r, mark in self.consistent_cells():
            assert stars_for_p(p_value_for_r(r, TABLE_N)) == mark, (name, dim)


class TestCollinearityFilter:
    def test_correlated_pair_drops_the_later_one(self):
        rng = np.random.default_rng(0)
        centroid = rng.uniform(0, 1, 15)
        rolloff = centroid * 1.8 + rng.normal(0, 0.01, 15)  # |rho| ~ 1
        flux = rng.uniform(0, 1, 15)
        features = {"centroid": centroid, "rolloff": rolloff, "flux": flux}
        kept = collinearity_filter(features, 0.8, ["centroid", "flux", "rolloff"])
        assert kept == ["centroid", "flux"]

    def test_independent_features_all_retained(self):
        rng = np.random.default_rng(1)
        features = {f"f{i}": rng.uniform(0, 1, 40) for i in range(5)}
        kept = collinearity_filter(features, 0.8, list(features))
        assert kept == list(features)

    def test_duplicate_column_dropped(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, 15)
        features = {"a": x, "b": x.copy(), "c": rng.uniform(0, 1, 15)}
        assert collinearity_filter(features, 0.8, ["a", "b", "c"]) == ["a", "c"]

    def test_uncovered_feature_is_an_error(self):
        rng = np.random.default_rng(3)
        features = {"a": rng.uniform(0, 1, 10), "b": rng.uniform(0, 1, 10)}
        with pytest.raises(ConfigurationError):
            collinearity_filter(features, 0.8, ["a"])

    @given(seed=st.integers(0, 200))
    @settings(max_examples=30, deadline=None)
    def test_no_retained_pair_exceeds_threshold(self, seed):
        rng = np.random.default_rng(seed)
        base = rng.standard_normal((4, 12))
        features = {}
        for i in range(6):
            mix = rng.standard_normal(4)
            features[f"f{i}"] = mix @ base + rng.normal(0, 0.1, 12)
        kept = collinearity_filter(features, 0.8, list(features))
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                assert abs(spearman(features[a], features[b])) <= 0.8


class TestCorrelationTable:
    def test_descriptor_equal_to_a_dimension(self):
        rng = np.random.default_rng(4)
        coords = rng.standard_normal((15, 4))
        features = {"mirror": coords[:, 2].copy(), "noise": rng.uniform(0, 1, 15)}
        report = correlation_table(coords, features)
        assert report.r[0, 2] == pytest.approx(1.0)
        assert report.p[0, 2] == 0.0
        assert report.stars[0][2] == "**"

    def test_shape_matches_published_layout(self):
        rng = np.random.default_rng(5)
        coords = rng.standard_normal((15, 4))
        features = {name: rng.uniform(0, 1, 15) for name in TABLE_1}
        report = correlation_table(coords, features)
        assert report.rows == list(TABLE_1)
        assert report.r.shape == (9, 4)

    def test_order_invariance_under_consistent_permutation(self):
        rng = np.random.default_rng(6)
        coords = rng.standard_normal((15, 3))
        column = rng.uniform(0, 1, 15)
        perm = rng.permutation(15)
        a = correlation_table(coords, {"f": column})
        b = correlation_table(coords[perm], {"f": column[perm]})
        assert np.allclose(a.r, b.r)
        assert np.allclose(a.p, b.p)


def oracle_average_linkage(features):
    """Exhaustive re-averaging agglomeration with the same name tie-break."""
    names = list(features)
    dist = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            dist[frozenset((a, b))] = 1.0 - abs(spearman(features[a], features[b]))
    clusters = {(name,): [name] for name in names}
    merges = []
    while len(clusters) > 1:
        best = None
        for ka in clusters:
            for kb in clusters:
                if ka >= kb:
                    continue
                members_a, members_b = clusters[ka], clusters[kb]
                avg = sum(dist[frozenset((x, y))] for x in members_a for y in members_b
                          ) / (len(members_a) * len(members_b))
                key = (avg, *sorted((min(members_a), min(members_b))))
                if best is None or key < best[0]:
                    best = (key, ka, kb, avg)
        _, ka, kb, avg = best
        merged = tuple(sorted(clusters[ka] + clusters[kb]))
        merges.append((avg, frozenset(merged)))
        new_members = clusters.pop(ka) + clusters.pop(kb)
        clusters[merged] = new_members
    return merges


def collect_merges(node, out):
    if node.is_leaf:
        return
    collect_merges(node.left, out)
    collect_merges(node.right, out)
    out.append((node.height, frozenset(node.members)))


class TestDendrogram:
    def test_duplicates_merge_first_at_zero(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 1, 12)
        features = {"a": x, "b": x.copy(), "c": rng.uniform(0, 1, 12)}
        tree = feature_agglomeration(features)
        merges = []
        collect_merges(tree, merges)
        assert merges[0][0] == pytest.approx(0.0, abs=1e-12)
        assert merges[0][1] == frozenset({"a", "b"})

    def test_strongest_pair_merges_first(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(20)
        features = {
            "a": x + rng.normal(0, 0.05, 20),     # |rho(a,b)| ~ 0.9
            "b": x + rng.normal(0, 0.05, 20),
            "c": rng.standard_normal(20),
        }
        tree = feature_agglomeration(features)
        merges = []
        collect_merges(tree, merges)
        assert merges[0][1] == frozenset({"a", "b"})

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        base = rng.standard_normal((3, 14))
        features = {}
        for i in range(6):
            mix = rng.standard_normal(3)
            features[f"f{i}"] = mix @ base + rng.normal(0, 0.2, 14)
        tree = feature_agglomeration(features)
        merges = []
        collect_merges(tree, merges)
        merges.sort(key=lambda m: (m[0], sorted(m[1])))
        expected = sorted(oracle_average_linkage(features),
                          key=lambda m: (m[0], sorted(m[1])))
        assert len(merges) == len(expected)
        for (h1, s1), (h2, s2) in zip(merges, expected):
            assert h1 == pytest.approx(h2, abs=1e-12)
            assert s1 == s2

    def test_merge_heights_non_decreasing(self):
        rng = np.random.default_rng(9)
        features = {f"f{i}": rng.standard_normal(16) for i in range(7)}
        heights = feature_agglomeration(features).merge_heights()
        ordered = []

        def walk(node):
            if node.is_leaf:
                return
            walk(node.left)
            walk(node.right)
            ordered.append(node.height)

        tree = feature_agglomeration(features)
        walk(tree)
        assert sorted(heights) == sorted(ordered)
        # root height is the largest; every parent >= both children
        def check(node):
            if node.is_leaf:
                return 0.0
            assert node.height >= check(node.left) - 1e-12
            assert node.height >= check(node.right) - 1e-12
            return node.height

        check(tree)
