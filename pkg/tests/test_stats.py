import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twostage.stats import (
    ConfusionCounts,
    bh_adjust,
    bh_reject,
    confusion,
    fdp_sen,
    fpr_over_screened,
    sen_fdr_curve,
)


def step_up_reference(p, alpha):
    """Largest k with p_(k) <= k alpha / m; reject every p <= p_(k)."""
    m = len(p)
    srt = sorted(p)
    k = 0
    for i in range(1, m + 1):
        if srt[i - 1] <= i * alpha / m:
            k = i
    if k == 0:
        return np.zeros(m, dtype=bool)
    return np.array([v <= srt[k - 1] for v in p])


def adjusted_reference(p):
    m = len(p)
    srt = sorted(p)
    out = []
    for v in p:
        r = srt.index(v) + 1  # smallest rank among ties
        best = min(srt[k - 1] * m / k for k in range(r, m + 1))
        out.append(min(1.0, max(v, best)))  # never below p itself, even after rounding
    return np.array(out)


def random_pvalues(r):
    m = int(r.integers(1, 60))
    kind = r.integers(3)
    if kind == 0:
        return r.uniform(size=m)
    if kind == 1:  # mixture with signals
        return np.concatenate([r.uniform(size=m), r.beta(0.1, 5, size=m)])
    return np.round(r.uniform(size=m), 2)  # ties


class TestBH:
    def test_doc_example(self):
        assert np.allclose(bh_adjust([0.01, 0.02, 0.04, 0.5]), [0.04, 0.04, 0.04 * 4 / 3, 0.5])

    def test_thousand_vectors(self):
        r = np.random.default_rng(0)
        for _ in range(1000):
            p = random_pvalues(r)
            assert np.array_equal(bh_adjust(p), adjusted_reference(list(p)))
            for alpha in (0.01, 0.05, 0.1, 0.2):
                assert np.array_equal(bh_reject(p, alpha), step_up_reference(list(p), alpha))

    def test_all_tied(self):
        # p * m / m may round one ulp below p; the adjustment never goes below p
        for m in range(1, 200):
            p = np.full(m, 0.44791538)
            assert np.all(bh_adjust(p) >= p)

    @given(arrays(float, st.integers(1, 40), elements=st.floats(0, 1)))
    def test_monotone_in_rank(self, p):
        adj = bh_adjust(p)
        order = np.argsort(p, kind="stable")
        assert np.all(np.diff(adj[order]) >= 0)
        assert np.all(adj >= p) and np.all(adj <= 1)

    def test_empty_and_invalid(self):
        assert bh_adjust([]).size == 0
        for bad in ([0.5, 1.2], [-0.1], [np.nan], [[0.1]]):
            with pytest.raises(ValueError):
                bh_adjust(bad)


class TestConfusion:
    def test_hand_example(self):
        c = confusion([0, 1, 5], [1, 2, 5, 7], 10)
        assert c == ConfusionCounts(tp=2, fp=1, fn=2, tn=5)
        fdp, sen = fdp_sen(c)
        assert fdp == pytest.approx(1 / 3) and sen == pytest.approx(0.5)

    def test_no_discoveries(self):
        assert fdp_sen(confusion([], [1, 2], 5)) == (0.0, 0.0)

    def test_no_truth(self):
        assert fdp_sen(confusion([0, 3], [], 5)) == (1.0, 0.0)

    def test_perfect(self):
        assert fdp_sen(confusion([4, 2], [2, 4], 6)) == (0.0, 1.0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            confusion([6], [1], 5)


class TestFpr:
    def test_pooled(self):
        assert fpr_over_screened([10, 30], [1, 1]) == pytest.approx(2 / 40)

    def test_nothing_tested(self):
        assert np.isnan(fpr_over_screened([0, 0], [0, 0]))

    def test_inconsistent(self):
        with pytest.raises(ValueError):
            fpr_over_screened([1], [2])


class TestCurve:
    def test_hand_example(self):
        c = sen_fdr_curve([[3, 0, 1], [2, 5]], [[0, 1], [2]])
        # replicate 1: hits F,T,T -> fdp 1, 1/2, 1/3 ; sen 0, 1/2, 1
        # replicate 2: hits T,F   -> fdp 0, 1/2, 1/2 ; sen 1, 1, 1
        assert c.ranks.tolist() == [1, 2, 3]
        assert np.allclose(c.fdr, [0.5, 0.5, (1 / 3 + 1 / 2) / 2])
        assert np.allclose(c.sen, [0.5, 0.75, 1.0])
        assert len(c.points) == 3

    def test_mismatched(self):
        with pytest.raises(ValueError):
            sen_fdr_curve([[1]], [])
