"""Sentence-level BLEU and ROUGE-L baselines plus the canonical tokenizer.

All n-gram counts and precisions are exact integers/rationals; floats only
appear in the final root and brevity-penalty steps, so golden values can
be asserted exactly.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from fractions import Fraction
from typing import Iterable, Sequence

TOKENIZER_VERSION = "ws-strip-1"

# Characters stripped from token edges. ASCII punctuation plus the common
# typographic quotes/dashes/ellipsis.
_STRIP_CHARS = string.punctuation + "“”‘’«»…–—"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation.

    Tokens that are pure punctuation vanish. Deterministic; empty input
    gives an empty sequence.
    """
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_CHARS)
        if tok:
            tokens.append(tok)
    return tokens


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token sequences."""
    if not a or not b:
        return 0
    # Two-row DP; keep the shorter sequence as the inner row.
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """ROUGE-L F1 between token sequences; 0.0 if either side is empty.

    With beta=1 the F-measure reduces to ``2*LCS / (|candidate| + |reference|)``.
    """
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    return float(Fraction(2 * lcs, len(candidate) + len(reference)))


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(
    candidate: Sequence[str], references: Iterable[Sequence[str]], n: int
) -> tuple[int, int]:
    """Clipped n-gram matches and total candidate n-grams, as integers."""
    cand_counts = _ngram_counts(candidate, n)
    total = max(len(candidate) - n + 1, 0)
    if not cand_counts:
        return 0, total
    max_ref: Counter = Counter()
    for ref in references:
        for gram, count in _ngram_counts(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    matched = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
    return matched, total


def effective_reference_length(candidate_len: int, references: Iterable[Sequence[str]]) -> int:
    """Reference length closest to the candidate length; ties prefer shorter."""
    best = None
    for ref in references:
        r = len(ref)
        if best is None or abs(r - candidate_len) < abs(best - candidate_len):
            best = r
        elif abs(r - candidate_len) == abs(best - candidate_len) and r < best:
            best = r
    if best is None:
        raise ValueError("sentence_bleu requires at least one reference")
    return best


def sentence_bleu(
    candidate: Sequence[str],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    smoothing: bool = True,
) -> float:
    """Smoothed sentence-level BLEU with uniform n-gram weights.

    Modified n-gram precisions are clipped against the maximum per-reference
    count.  Smoothing (when enabled) adds one to numerator and denominator
    of a precision for n >= 2 only when the unsmoothed numerator is zero;
    unigram precision is never smoothed, so a candidate sharing no unigram
    with any reference scores 0.  The brevity penalty is
    ``exp(1 - r/c)`` for candidate length c below the effective reference
    length r (closest reference length, ties broken toward shorter).
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    if not references:
        raise ValueError("sentence_bleu requires at least one reference")
    c = len(candidate)
    if c == 0:
        return 0.0

    precisions: list[Fraction] = []
    for n in range(1, max_n + 1):
        matched, total = modified_precision(candidate, references, n)
        if matched == 0 and smoothing and n >= 2:
            matched, total = matched + 1, total + 1
        if matched == 0 or total == 0:
            return 0.0
        precisions.append(Fraction(matched, total))

    r = effective_reference_length(c, references)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)

    product = Fraction(1)
    for p in precisions:
        product *= p
    return bp * float(product) ** (1.0 / max_n)
