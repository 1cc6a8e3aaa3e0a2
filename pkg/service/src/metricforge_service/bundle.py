"""Model-bundle interface the HTTP layer talks to.

A bundle wraps three checkpoints: a sentence-pair similarity regressor,
a three-class entailment classifier, and a causal language model for
perplexity.  Implementations batch within a single call, run in
inference mode, and must be deterministic for fixed inputs.  The HTTP
layer owns clamping, class reordering, and response assembly."""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class ScoredText:
    """One scalar model output plus a truncation warning flag."""

    value: float
    truncated: bool = False


@dataclass(frozen=True)
class EntailmentResult:
    """Class probabilities in the bundle's own label order."""

    probs: tuple[float, float, float]
    truncated: bool = False


class ExtractorBundle(abc.ABC):
    @property
    @abc.abstractmethod
    def extractor_version(self) -> str:
        """Identifier derived from the wrapped checkpoints.

        Must change whenever any of the three checkpoints changes, so
        that caches keyed on it never mix features across models."""

    @property
    @abc.abstractmethod
    def mnli_labels(self) -> tuple[str, str, str]:
        """Class labels in the order the entailment model emits them."""

    @abc.abstractmethod
    def similarity(self, pairs: Sequence[tuple[str, str]]) -> list[ScoredText]:
        """Raw similarity score per (reference, candidate) pair."""

    @abc.abstractmethod
    def entailment(self, pairs: Sequence[tuple[str, str]]) -> list[EntailmentResult]:
        """Class probabilities per (premise, hypothesis) pair."""

    @abc.abstractmethod
    def perplexity(self, texts: Sequence[str]) -> list[ScoredText]:
        """Perplexity per text: exp of the mean token negative
        log-likelihood, including the end-of-text token."""
