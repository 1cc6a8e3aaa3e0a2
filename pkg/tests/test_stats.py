"""Correlation statistics against independent brute-force oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metricforge.core import RankedPair
from metricforge.errors import (
    DataError,
    DegenerateInputError,
    MissingScoreError,
)
from metricforge.stats import (
    DaEntry,
    DaSegmentGroup,
    ScoredSegment,
    da_to_relative_ranking,
    evaluate_da,
    evaluate_darr,
    evaluate_tau_b,
    kendall_tau_b,
    kendall_wmt,
    pearson,
)

floats_list = st.lists(
    st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=2, max_size=40
)


def pearson_oracle(xs, ys) -> float:
    """Raw-moment Pearson, an independent route from the two-pass version."""
    n = len(xs)
    sx = math.fsum(xs)
    sy = math.fsum(ys)
    sxx = math.fsum(x * x for x in xs)
    syy = math.fsum(y * y for y in ys)
    sxy = math.fsum(x * y for x, y in zip(xs, ys))
    num = sxy - sx * sy / n
    den = math.sqrt((sxx - sx * sx / n) * (syy - sy * sy / n))
    return num / den


def tau_b_oracle(xs, ys) -> float:
    """O(n^2) tau-b with tie corrections via sign outer products."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(len(x), k=1)
    s = float(np.sum(dx[iu] * dy[iu]))
    n0 = len(x) * (len(x) - 1) / 2
    tx = float(np.sum(dx[iu] == 0))
    ty = float(np.sum(dy[iu] == 0))
    return s / math.sqrt((n0 - tx) * (n0 - ty))


class TestPearson:
    def test_perfect_line(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == 1.0
        assert pearson([1, 2, 3], [-2, -4, -6]) == -1.0

    def test_matches_oracle_on_50_random_instances(self):
        rng = np.random.default_rng(11)
        for i in range(50):
            n = int(rng.integers(2, 1001))
            xs = rng.normal(size=n)
            ys = 0.5 * xs + rng.normal(size=n)
            got = pearson(list(xs), list(ys))
            assert got == pytest.approx(pearson_oracle(xs, ys), abs=1e-12)

    def test_degenerate_inputs_raise(self):
        with pytest.raises(DegenerateInputError):
            pearson([1.0], [2.0])
        with pytest.raises(DegenerateInputError):
            pearson([1.0, 1.0], [2.0, 3.0])
        with pytest.raises(DegenerateInputError):
            pearson([1.0, 2.0], [3.0])

    @given(floats_list)
    def test_symmetric(self, xs):
        ys = [2.0 * x + 1.0 for x in xs]
        try:
            a = pearson(xs, ys)
        except DegenerateInputError:
            return
        assert pearson(ys, xs) == a
        assert -1.0 <= a <= 1.0

    def test_never_outside_unit_interval(self):
        xs = [1e-8 * k for k in range(5)]
        ys = [3.0 * x for x in xs]
        assert abs(pearson(xs, ys)) <= 1.0


class TestKendallTauB:
    def test_matches_oracle_on_50_random_instances(self):
        rng = np.random.default_rng(23)
        for i in range(50):
            n = int(rng.integers(2, 1001))
            # Rounding plants heavy ties, exercising both corrections.
            xs = np.round(rng.normal(size=n), 1)
            ys = np.round(0.7 * xs + rng.normal(size=n), 1)
            if len(set(xs.tolist())) == 1 or len(set(ys.tolist())) == 1:
                continue
            got = kendall_tau_b(list(xs), list(ys))
            assert got == pytest.approx(tau_b_oracle(xs, ys), abs=1e-12)

    def test_tied_scale_example(self):
        xs = [1, 1, 2, 2, 3]
        ys = [1, 2, 2, 3, 3]
        assert kendall_tau_b(xs, ys) == pytest.approx(tau_b_oracle(xs, ys), abs=1e-15)

    def test_all_tied_raises(self):
        with pytest.raises(DegenerateInputError):
            kendall_tau_b([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateInputError):
            kendall_tau_b([1.0, 2.0], [5.0, 5.0])

    def test_perfect_agreement(self):
        assert kendall_tau_b([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0


def _synthetic_groups(rng: np.random.Generator, n_segments: int = 50):
    """Segments with 2..5 systems and integer DA scores (plants >25 gaps,
    exact-25 gaps, and exact ties)."""
    groups = []
    for seg in range(n_segments):
        k = int(rng.integers(2, 6))
        scores = rng.integers(0, 101, size=k).astype(float)
        if seg % 7 == 0 and k >= 2:
            scores[1] = min(100.0, scores[0] + 25.0)  # exactly at threshold
        if seg % 5 == 0 and k >= 2:
            scores[-1] = scores[0]  # exact human tie
        entries = tuple(
            DaEntry(f"sys{j}", f"cand {seg} {j}", float(scores[j])) for j in range(k)
        )
        groups.append(
            DaSegmentGroup(
                lang_pair="cs-en" if seg % 2 == 0 else "de-en",
                segment_id=seg,
                reference=f"ref {seg}",
                entries=entries,
            )
        )
    return groups


def _ranking_oracle(groups, threshold=25.0):
    expected = set()
    for g in groups:
        for a, b in itertools.combinations(g.entries, 2):
            if abs(a.human_score - b.human_score) > threshold:
                hi, lo = (a, b) if a.human_score > b.human_score else (b, a)
                expected.add((g.segment_id, hi.candidate, lo.candidate))
    return expected


class TestDaToRelativeRanking:
    def test_matches_exhaustive_enumeration(self):
        groups = _synthetic_groups(np.random.default_rng(5))
        ranked = da_to_relative_ranking(groups)
        got = {
            (rp.segment_id, rp.better_candidate, rp.worse_candidate) for rp in ranked
        }
        assert got == _ranking_oracle(groups)

    def test_gap_exactly_at_threshold_is_dropped(self):
        group = DaSegmentGroup(
            lang_pair="cs-en",
            segment_id=0,
            reference="r",
            entries=(DaEntry("a", "ca", 70.0), DaEntry("b", "cb", 45.0)),
        )
        assert da_to_relative_ranking([group]) == []

    def test_gap_just_over_threshold_is_kept(self):
        group = DaSegmentGroup(
            lang_pair="cs-en",
            segment_id=0,
            reference="r",
            entries=(DaEntry("a", "ca", 70.5), DaEntry("b", "cb", 45.0)),
        )
        ranked = da_to_relative_ranking([group])
        assert len(ranked) == 1
        assert ranked[0].better_candidate == "ca"
        assert ranked[0].worse_candidate == "cb"

    def test_custom_threshold(self):
        group = DaSegmentGroup(
            lang_pair="cs-en",
            segment_id=0,
            reference="r",
            entries=(DaEntry("a", "ca", 60.0), DaEntry("b", "cb", 45.0)),
        )
        assert len(da_to_relative_ranking([group], threshold=10.0)) == 1
        assert da_to_relative_ranking([group], threshold=15.0) == []

    def test_rejects_nonpositive_threshold(self):
        with pytest.raises(ValueError):
            da_to_relative_ranking([], threshold=0.0)


class TestKendallWmt:
    def _ranked(self):
        return [
            RankedPair("r", "good", "bad", "cs-en", 1),
            RankedPair("r", "fine", "poor", "cs-en", 2),
        ]

    def test_all_concordant(self):
        scores = {(1, "good"): 0.9, (1, "bad"): 0.1, (2, "fine"): 0.8, (2, "poor"): 0.2}
        assert kendall_wmt(self._ranked(), scores) == 1.0

    def test_all_discordant(self):
        scores = {(1, "good"): 0.1, (1, "bad"): 0.9, (2, "fine"): 0.2, (2, "poor"): 0.8}
        assert kendall_wmt(self._ranked(), scores) == -1.0

    def test_metric_tie_counts_discordant(self):
        scores = {(1, "good"): 0.5, (1, "bad"): 0.5, (2, "fine"): 0.8, (2, "poor"): 0.2}
        # one concordant, one tie-as-discordant: (1 - 1) / 2 = 0
        assert kendall_wmt(self._ranked(), scores) == 0.0

    def test_missing_score_raises_with_pair_name(self):
        scores = {(1, "good"): 0.9, (1, "bad"): 0.1, (2, "fine"): 0.8}
        with pytest.raises(MissingScoreError, match="poor"):
            kendall_wmt(self._ranked(), scores)

    def test_empty_raises(self):
        with pytest.raises(DegenerateInputError):
            kendall_wmt([], {})

    def test_matches_enumeration_on_synthetic_corpus(self):
        rng = np.random.default_rng(9)
        groups = _synthetic_groups(rng)
        ranked = da_to_relative_ranking(groups)
        # Quantized metric scores so some ranked pairs tie under the metric.
        scores = {
            (g.segment_id, e.candidate): round(float(rng.uniform()), 1)
            for g in groups
            for e in g.entries
        }
        concordant = sum(
            1
            for rp in ranked
            if scores[(rp.segment_id, rp.better_candidate)]
            > scores[(rp.segment_id, rp.worse_candidate)]
        )
        discordant = len(ranked) - concordant
        ties = sum(
            1
            for rp in ranked
            if scores[(rp.segment_id, rp.better_candidate)]
            == scores[(rp.segment_id, rp.worse_candidate)]
        )
        assert ties > 0  # the fixture must actually exercise the tie rule
        expected = (concordant - discordant) / len(ranked)
        assert kendall_wmt(ranked, scores) == expected


class TestEvaluateReports:
    def _items(self):
        rng = np.random.default_rng(2)
        items = []
        for lang in ("cs-en", "de-en"):
            for _ in range(30):
                h = float(rng.uniform())
                items.append(ScoredSegment(lang, h, 0.8 * h + 0.1 * float(rng.uniform())))
        return items

    def test_evaluate_da_reports_abs_pearson_per_lang_and_pooled(self):
        items = self._items()
        report = evaluate_da(items)
        assert report.statistic_kind == "abs_pearson"
        assert sorted(report.per_lang) == ["cs-en", "de-en"]
        for lang, entry in report.per_lang.items():
            sub = [i for i in items if i.lang_pair == lang]
            expected = abs(
                pearson([i.metric_score for i in sub], [i.human_score for i in sub])
            )
            assert entry.statistic == expected
            assert entry.n == len(sub)
        pooled = abs(
            pearson([i.metric_score for i in items], [i.human_score for i in items])
        )
        assert report.aggregate.statistic == pooled
        assert report.aggregate.n == len(items)

    def test_evaluate_da_absolute_value(self):
        items = [
            ScoredSegment("cs-en", h, -2.0 * h + 1.0) for h in (0.1, 0.4, 0.5, 0.9)
        ]
        report = evaluate_da(items)
        assert report.per_lang["cs-en"].statistic == 1.0

    def test_evaluate_tau_b_pools(self):
        items = self._items()
        report = evaluate_tau_b(items)
        assert report.statistic_kind == "kendall_tau_b"
        assert report.aggregate.n == len(items)

    def test_evaluate_darr_per_lang(self):
        ranked = [
            RankedPair("r", "a", "b", "cs-en", 1),
            RankedPair("r", "c", "d", "de-en", 2),
        ]
        scores = {(1, "a"): 0.9, (1, "b"): 0.1, (2, "c"): 0.1, (2, "d"): 0.9}
        report = evaluate_darr(ranked, scores)
        assert report.per_lang["cs-en"].statistic == 1.0
        assert report.per_lang["de-en"].statistic == -1.0
        assert report.aggregate.statistic == 0.0
        assert report.aggregate.n == 2

    def test_empty_inputs_raise(self):
        with pytest.raises(DegenerateInputError):
            evaluate_da([])
        with pytest.raises(DegenerateInputError):
            evaluate_tau_b([])
        with pytest.raises(DegenerateInputError):
            evaluate_darr([], {})

    def test_degenerate_language_is_named(self):
        items = [ScoredSegment("cs-en", 0.5, 0.5), ScoredSegment("cs-en", 0.5, 0.7)]
        with pytest.raises(DegenerateInputError, match="cs-en"):
            evaluate_da(items)


class TestDaEntryValidation:
    def test_score_bounds(self):
        with pytest.raises(DataError):
            DaEntry("s", "c", 101.0)
        with pytest.raises(DataError):
            DaEntry("s", "c", -0.5)

    def test_empty_group_rejected(self):
        with pytest.raises(DataError):
            DaSegmentGroup("cs-en", 1, "r", ())
