"""Core domain types: sentence pairs, feature vectors, masks and reports.

Everything here is an immutable value object; instances can be shared
freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import DataError

MNLI_SIMPLEX_TOL = 1e-6


class FeatureGroup(str, Enum):
    """The four feature groups, in their fixed projection order.

    SS  - semantic similarity (1 value, 0-5 scale)
    LI  - logical inference (3 values: contradiction, neutral, entailment)
    SI  - sentence intelligibility (2 values: reference/candidate perplexity)
    LEN - word counts (2 values: reference/candidate length)
    """

    SS = "SS"
    LI = "LI"
    SI = "SI"
    LEN = "LEN"


GROUP_ORDER: tuple[FeatureGroup, ...] = (
    FeatureGroup.SS,
    FeatureGroup.LI,
    FeatureGroup.SI,
    FeatureGroup.LEN,
)

GROUP_WIDTH: dict[FeatureGroup, int] = {
    FeatureGroup.SS: 1,
    FeatureGroup.LI: 3,
    FeatureGroup.SI: 2,
    FeatureGroup.LEN: 2,
}


@dataclass(frozen=True)
class SentencePair:
    """A reference text and a candidate text, the atomic scoring unit.

    Texts are stripped of surrounding whitespace at construction and must
    be nonempty afterwards.
    """

    reference: str
    candidate: str

    def __post_init__(self):
        object.__setattr__(self, "reference", self.reference.strip())
        object.__setattr__(self, "candidate", self.candidate.strip())
        if not self.reference:
            raise DataError("sentence pair: empty reference text")
        if not self.candidate:
            raise DataError("sentence pair: empty candidate text")


@dataclass(frozen=True)
class FeatureVector:
    """The eight per-pair features feeding the aggregator.

    ``mnli_*`` is a probability distribution over the logical relation
    between reference and candidate, in the fixed class order
    contradiction / neutral / entailment.  Perplexities are of the raw
    texts; word counts come from the canonical tokenizer.
    """

    sem_sim: float
    mnli_contradiction: float
    mnli_neutral: float
    mnli_entailment: float
    ppl_ref: float
    ppl_cand: float
    len_ref: int
    len_cand: int


def validate_features(fv: FeatureVector) -> list[str]:
    """Return the list of violated invariants of ``fv`` (empty means ok).

    Violations are data, not faults: callers that must fail on invalid
    input wrap the result in :class:`~metricforge.errors.FeatureValidationError`.
    """
    violations: list[str] = []
    values = (
        fv.sem_sim,
        fv.mnli_contradiction,
        fv.mnli_neutral,
        fv.mnli_entailment,
        fv.ppl_ref,
        fv.ppl_cand,
        float(fv.len_ref),
        float(fv.len_cand),
    )
    if not all(math.isfinite(v) for v in values):
        violations.append("non-finite value")
        return violations

    mnli = (fv.mnli_contradiction, fv.mnli_neutral, fv.mnli_entailment)
    if any(p < 0.0 or p > 1.0 for p in mnli):
        violations.append("mnli probability range")
    if abs(sum(mnli) - 1.0) > MNLI_SIMPLEX_TOL:
        violations.append("mnli simplex")
    if not 0.0 <= fv.sem_sim <= 5.0:
        violations.append("sem_sim range")
    if fv.ppl_ref < 1.0:
        violations.append("ppl_ref range")
    if fv.ppl_cand < 1.0:
        violations.append("ppl_cand range")
    if fv.len_ref < 0 or int(fv.len_ref) != fv.len_ref:
        violations.append("len_ref not a nonnegative integer")
    if fv.len_cand < 0 or int(fv.len_cand) != fv.len_cand:
        violations.append("len_cand not a nonnegative integer")
    return violations


_GROUP_VALUES = {
    FeatureGroup.SS: lambda fv: (fv.sem_sim,),
    FeatureGroup.LI: lambda fv: (
        fv.mnli_contradiction,
        fv.mnli_neutral,
        fv.mnli_entailment,
    ),
    FeatureGroup.SI: lambda fv: (fv.ppl_ref, fv.ppl_cand),
    FeatureGroup.LEN: lambda fv: (float(fv.len_ref), float(fv.len_cand)),
}


@dataclass(frozen=True)
class FeatureMask:
    """A nonempty subset of feature groups selecting aggregator inputs."""

    groups: frozenset[FeatureGroup]

    def __post_init__(self):
        if not self.groups:
            raise ValueError("feature mask must include at least one group")
        object.__setattr__(self, "groups", frozenset(self.groups))

    @classmethod
    def of(cls, *groups: FeatureGroup | str) -> "FeatureMask":
        return cls(frozenset(FeatureGroup(g) for g in groups))

    @classmethod
    def parse(cls, text: str) -> "FeatureMask":
        """Parse a spec like ``"SS,LI,SI"`` (separators ``,`` or ``+``)."""
        parts = [
            p.strip().upper() for p in text.replace("+", ",").split(",") if p.strip()
        ]
        if not parts:
            raise ValueError(f"empty feature mask spec: {text!r}")
        try:
            return cls.of(*parts)
        except ValueError as exc:
            raise ValueError(f"bad feature mask spec {text!r}: {exc}") from None

    @classmethod
    def full(cls) -> "FeatureMask":
        return cls(frozenset(GROUP_ORDER))

    @property
    def ordered_groups(self) -> tuple[FeatureGroup, ...]:
        return tuple(g for g in GROUP_ORDER if g in self.groups)

    @property
    def dim(self) -> int:
        return sum(GROUP_WIDTH[g] for g in self.groups)

    def label(self) -> str:
        """Canonical display label, e.g. ``"SS+LI+SI"``."""
        return "+".join(g.value for g in self.ordered_groups)

    def __iter__(self):
        return iter(self.ordered_groups)


def project(fv: FeatureVector, mask: FeatureMask) -> list[float]:
    """Project ``fv`` onto the groups of ``mask`` in fixed group order."""
    out: list[float] = []
    for group in mask.ordered_groups:
        out.extend(_GROUP_VALUES[group](fv))
    return out


@dataclass(frozen=True)
class JudgedPair:
    """A human-scored sentence pair; score is the DA average rescaled to [0,1]."""

    pair: SentencePair
    human_score: float
    lang_pair: str
    segment_id: int
    system_id: str

    def __post_init__(self):
        if not 0.0 <= self.human_score <= 1.0:
            raise DataError(
                f"judged pair: human_score {self.human_score} outside [0,1]"
            )


@dataclass(frozen=True)
class RankedPair:
    """A human-ordered candidate pair for relative-ranking evaluation."""

    reference: str
    better_candidate: str
    worse_candidate: str
    lang_pair: str
    segment_id: int

    def __post_init__(self):
        if self.better_candidate == self.worse_candidate:
            raise DataError(
                "ranked pair: better and worse candidates are identical "
                f"(segment {self.segment_id})"
            )


@dataclass(frozen=True)
class ReportEntry:
    """One correlation statistic together with the number of items behind it."""

    statistic: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    """Correlation statistics per language pair plus a pooled aggregate.

    ``aggregate`` is computed over the union of all items, not averaged
    across languages.  ``statistic_kind`` names the protocol:
    ``abs_pearson``, ``kendall_wmt`` or ``kendall_tau_b``.
    """

    statistic_kind: str
    per_lang: dict[str, ReportEntry] = field(default_factory=dict)
    aggregate: ReportEntry = ReportEntry(0.0, 0)
