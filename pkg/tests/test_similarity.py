import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicflow.errors import ValidationError
from topicflow.similarity import (
    EmpiricalCDF,
    MeasureKind,
    bhattacharyya,
    empirical_cdf,
    hellinger,
    quasi_jaccard,
    similarity,
    threshold_at,
    to_similarity,
)


def simplex_pair(n=6):
    """Hypothesis strategy for a pair of n-point distributions."""
    positive = st.floats(min_value=1e-6, max_value=1.0)
    def normalize(vals):
        arr = np.asarray(vals)
        return arr / arr.sum()
    return st.tuples(
        st.lists(positive, min_size=n, max_size=n).map(normalize),
        st.lists(positive, min_size=n, max_size=n).map(normalize),
    )


class TestMeasures:
    def test_hellinger_identity(self):
        assert hellinger([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_hellinger_disjoint(self):
        assert hellinger([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_hellinger_value(self):
        expected = math.sqrt(1 - math.sqrt(0.5))
        assert hellinger([0.5, 0.5], [1.0, 0.0]) == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(0.541196, abs=1e-6)

    def test_bhattacharyya_identity(self):
        assert bhattacharyya([0.2, 0.8], [0.2, 0.8]) == pytest.approx(1.0)

    def test_bhattacharyya_disjoint(self):
        assert bhattacharyya([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_bhattacharyya_value(self):
        assert bhattacharyya([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.sqrt(0.5), abs=1e-9)

    def test_quasi_jaccard_identity(self):
        assert quasi_jaccard([0.4, 0.6], [0.4, 0.6]) == pytest.approx(1.0)

    def test_quasi_jaccard_disjoint(self):
        assert quasi_jaccard([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_quasi_jaccard_value(self):
        # p.q = 0.5, |p|^2 = 0.5, |q|^2 = 1: 0.5 / (0.5 + 1 - 0.5)
        assert quasi_jaccard([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5, abs=1e-12)
        # an asymmetric-support pair, worked by hand
        assert quasi_jaccard([0.6, 0.4, 0.0], [0.0, 0.5, 0.5]) == pytest.approx(
            0.2 / (0.52 + 0.5 - 0.2), abs=1e-12)

    def test_length_mismatch_fatal(self):
        with pytest.raises(ValidationError):
            hellinger([1.0], [0.5, 0.5])

    def test_unnormalized_fatal(self):
        with pytest.raises(ValidationError):
            bhattacharyya([0.5, 0.2], [0.5, 0.5])


class TestCanonicalization:
    def test_hellinger_flipped(self):
        assert to_similarity(MeasureKind.HELLINGER, 0.0) == 1.0
        assert to_similarity(MeasureKind.HELLINGER, 0.541196) == pytest.approx(0.458804)

    def test_pass_through(self):
        assert to_similarity(MeasureKind.BHATTACHARYYA, 0.7) == 0.7
        assert to_similarity(MeasureKind.QUASI_JACCARD, 0.2) == 0.2

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            to_similarity(MeasureKind.BHATTACHARYYA, 1.5)

    def test_parse(self):
        assert MeasureKind.parse("Hellinger") is MeasureKind.HELLINGER
        assert MeasureKind.parse("quasi-jaccard") is MeasureKind.QUASI_JACCARD
        with pytest.raises(ValidationError):
            MeasureKind.parse("cosine")


class TestMeasureProperties:
    @settings(max_examples=80, deadline=None)
    @given(simplex_pair())
    def test_hellinger_bhattacharyya_identity(self, pq):
        # checked in squared form: near p == q the direct form loses half the
        # mantissa to cancellation inside the square root
        p, q = pq
        assert abs(hellinger(p, q) ** 2 - max(0.0, 1 - bhattacharyya(p, q))) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(simplex_pair())
    def test_exact_symmetry(self, pq):
        p, q = pq
        for fn in (hellinger, bhattacharyya, quasi_jaccard):
            assert fn(p, q) == fn(q, p)

    @settings(max_examples=60, deadline=None)
    @given(simplex_pair())
    def test_range(self, pq):
        p, q = pq
        for kind in MeasureKind:
            assert 0.0 <= similarity(kind, p, q) <= 1.0


class TestEmpiricalCDF:
    def test_counting_definition(self):
        cdf = empirical_cdf([0.1, 0.5, 0.9])
        assert cdf(0.5) == pytest.approx(2 / 3)

    def test_boundaries(self):
        cdf = empirical_cdf([0.1, 0.5, 0.9])
        assert cdf(0.1 - 1e-9) == 0.0
        assert cdf(0.9) == 1.0

    def test_empty_fatal(self):
        with pytest.raises(ValidationError):
            empirical_cdf([])

    def test_dkw_uniform(self):
        rng = np.random.default_rng(123)
        xs = rng.uniform(size=1000)
        cdf = empirical_cdf(xs)
        grid = np.linspace(0, 1, 2001)
        sup = max(abs(cdf(x) - x) for x in grid)
        assert sup < 0.06

    def test_csv_export(self):
        csv = empirical_cdf([0.2, 0.1]).to_csv()
        lines = csv.strip().splitlines()
        assert lines[0] == "value,cdf"
        assert lines[1].startswith("0.1,")


class TestThreshold:
    def setup_method(self):
        self.cdf = empirical_cdf([round(0.1 * i, 10) for i in range(1, 11)])

    def test_quantile_examples(self):
        assert threshold_at(self.cdf, 0.95) == pytest.approx(1.0)
        assert threshold_at(self.cdf, 0.0) == pytest.approx(0.1)
        assert threshold_at(self.cdf, 0.5) == pytest.approx(0.5)

    def test_one_returns_max(self):
        assert threshold_at(self.cdf, 1.0) == pytest.approx(1.0)

    def test_monotone_in_zeta(self):
        zs = np.linspace(0, 1, 101)
        ts = [threshold_at(self.cdf, z) for z in zs]
        assert all(a <= b for a, b in zip(ts, ts[1:]))

    def test_invalid_zeta(self):
        with pytest.raises(ValidationError):
            threshold_at(self.cdf, 1.5)

    def test_retained_fraction_band(self):
        rng = np.random.default_rng(7)
        values = np.unique(rng.uniform(size=1000))
        assert values.size == 1000
        cdf = EmpiricalCDF.from_values(values)
        for zeta in (0.5, 0.9, 0.95, 0.99):
            thr = threshold_at(cdf, zeta)
            frac = float(np.mean(values >= thr))
            assert 1 - zeta <= frac <= 1 - zeta + 1 / values.size + 1e-12
