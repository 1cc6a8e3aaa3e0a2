"""Correlation statistics and the DA-to-relative-ranking conversion.

Three evaluation protocols live here: absolute Pearson on direct
assessments, the WMT Kendall's Tau variant over ranked candidate pairs,
and tau-b for heavily tied judgment scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from scipy import stats as _scipy_stats

from .core import EvalReport, RankedPair, ReportEntry
from .errors import DataError, DegenerateInputError, MissingScoreError

DA_GAP_THRESHOLD = 25.0


@dataclass(frozen=True)
class DaEntry:
    """One system's candidate for a segment, with its averaged human score."""

    system_id: str
    candidate: str
    human_score: float

    def __post_init__(self):
        if not 0.0 <= self.human_score <= 100.0:
            raise DataError(
                f"DA entry: human_score {self.human_score} outside [0,100]"
            )


@dataclass(frozen=True)
class DaSegmentGroup:
    """All candidate translations of one segment, sharing one reference."""

    lang_pair: str
    segment_id: int
    reference: str
    entries: tuple[DaEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise DataError(
                f"segment group {self.lang_pair}/{self.segment_id} has no entries"
            )
        object.__setattr__(self, "entries", tuple(self.entries))


@dataclass(frozen=True)
class ScoredSegment:
    """A (human score, metric score) observation attached to a language pair."""

    lang_pair: str
    human_score: float
    metric_score: float


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient.

    Raises :class:`DegenerateInputError` on length mismatch, fewer than two
    points, or a constant input.
    """
    if len(xs) != len(ys):
        raise DegenerateInputError(
            f"pearson: length mismatch ({len(xs)} vs {len(ys)})"
        )
    n = len(xs)
    if n < 2:
        raise DegenerateInputError(f"pearson: need at least 2 points, got {n}")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("pearson: constant input")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def kendall_tau_b(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Kendall's tau-b with tie corrections in both variables.

    Delegates to :func:`scipy.stats.kendalltau`; degenerate inputs (either
    variable entirely tied) raise instead of returning NaN.
    """
    if len(xs) != len(ys):
        raise DegenerateInputError(
            f"kendall_tau_b: length mismatch ({len(xs)} vs {len(ys)})"
        )
    if len(xs) < 2:
        raise DegenerateInputError(
            f"kendall_tau_b: need at least 2 points, got {len(xs)}"
        )
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise DegenerateInputError("kendall_tau_b: all pairs tied on one variable")
    tau = float(_scipy_stats.kendalltau(xs, ys, variant="b").statistic)
    if math.isnan(tau):
        raise DegenerateInputError("kendall_tau_b: undefined on this input")
    return tau


def da_to_relative_ranking(
    groups: Iterable[DaSegmentGroup], threshold: float = DA_GAP_THRESHOLD
) -> list[RankedPair]:
    """Convert DA segment groups into better/worse candidate pairs.

    Every unordered pair of entries within a group whose score gap strictly
    exceeds ``threshold`` yields one :class:`RankedPair`; pairs at or below
    the threshold are dropped.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    ranked: list[RankedPair] = []
    for group in groups:
        entries = group.entries
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                a, b = entries[i], entries[j]
                if abs(a.human_score - b.human_score) <= threshold:
                    continue
                better, worse = (a, b) if a.human_score > b.human_score else (b, a)
                ranked.append(
                    RankedPair(
                        reference=group.reference,
                        better_candidate=better.candidate,
                        worse_candidate=worse.candidate,
                        lang_pair=group.lang_pair,
                        segment_id=group.segment_id,
                    )
                )
    return ranked


def kendall_wmt(
    ranked: Sequence[RankedPair],
    metric_scores: Mapping[tuple[int, str], float],
) -> float:
    """WMT-style Kendall's Tau: (concordant - discordant) / total.

    A ranked pair is concordant iff the metric strictly prefers the human
    better candidate; metric ties count as discordant.  ``metric_scores``
    maps ``(segment_id, candidate)`` to the metric score.
    """
    if not ranked:
        raise DegenerateInputError("kendall_wmt: no ranked pairs")
    concordant = 0
    for rp in ranked:
        try:
            better = metric_scores[(rp.segment_id, rp.better_candidate)]
            worse = metric_scores[(rp.segment_id, rp.worse_candidate)]
        except KeyError as exc:
            raise MissingScoreError(
                f"no metric score for segment {rp.segment_id}, "
                f"candidate {exc.args[0][1]!r}"
            ) from None
        if better > worse:
            concordant += 1
    discordant = len(ranked) - concordant
    return (concordant - discordant) / len(ranked)


def _per_lang_report(
    items_by_lang: dict[str, list],
    statistic_kind: str,
    stat_fn,
) -> EvalReport:
    per_lang: dict[str, ReportEntry] = {}
    for lang in sorted(items_by_lang):
        items = items_by_lang[lang]
        try:
            per_lang[lang] = ReportEntry(stat_fn(items), len(items))
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"{lang}: {exc}") from None
    pooled = [item for items in items_by_lang.values() for item in items]
    try:
        aggregate = ReportEntry(stat_fn(pooled), len(pooled))
    except DegenerateInputError as exc:
        raise DegenerateInputError(f"aggregate: {exc}") from None
    return EvalReport(
        statistic_kind=statistic_kind, per_lang=per_lang, aggregate=aggregate
    )


def evaluate_da(items: Iterable[ScoredSegment]) -> EvalReport:
    """Absolute Pearson per language pair plus over the pooled union."""
    by_lang: dict[str, list[ScoredSegment]] = {}
    for item in items:
        by_lang.setdefault(item.lang_pair, []).append(item)
    if not by_lang:
        raise DegenerateInputError("evaluate_da: no items")

    def stat(group: list[ScoredSegment]) -> float:
        return abs(
            pearson([i.metric_score for i in group], [i.human_score for i in group])
        )

    return _per_lang_report(by_lang, "abs_pearson", stat)


def evaluate_tau_b(items: Iterable[ScoredSegment]) -> EvalReport:
    """Tau-b per language pair plus over the pooled union."""
    by_lang: dict[str, list[ScoredSegment]] = {}
    for item in items:
        by_lang.setdefault(item.lang_pair, []).append(item)
    if not by_lang:
        raise DegenerateInputError("evaluate_tau_b: no items")

    def stat(group: list[ScoredSegment]) -> float:
        return kendall_tau_b(
            [i.metric_score for i in group], [i.human_score for i in group]
        )

    return _per_lang_report(by_lang, "kendall_tau_b", stat)


def evaluate_darr(
    ranked: Sequence[RankedPair],
    metric_scores: Mapping[tuple[int, str], float],
) -> EvalReport:
    """WMT Kendall's Tau per language pair plus over all ranked pairs."""
    by_lang: dict[str, list[RankedPair]] = {}
    for rp in ranked:
        by_lang.setdefault(rp.lang_pair, []).append(rp)
    if not by_lang:
        raise DegenerateInputError("evaluate_darr: no ranked pairs")

    def stat(group: list[RankedPair]) -> float:
        return kendall_wmt(group, metric_scores)

    return _per_lang_report(by_lang, "kendall_wmt", stat)
