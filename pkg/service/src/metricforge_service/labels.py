"""Entailment class ordering.

The wire protocol fixes the class order as [contradiction, neutral,
entailment].  Checkpoints are free to emit logits in any order they
declare via their label metadata, so responses are permuted from the
checkpoint order into the protocol order before leaving the service."""

from __future__ import annotations

from typing import Sequence

PROTOCOL_LABELS = ("contradiction", "neutral", "entailment")


def protocol_permutation(labels: Sequence[str]) -> tuple[int, int, int]:
    """Map protocol positions to checkpoint positions.

    Returns a permutation ``perm`` such that ``probs[perm[k]]`` is the
    probability of ``PROTOCOL_LABELS[k]``.  Matching is case-insensitive
    and accepts decorated names like "ENTAILMENT" or "neutral (maybe)";
    ambiguous or incomplete label sets are rejected."""
    if len(labels) != 3:
        raise ValueError(f"expected 3 class labels, got {len(labels)}: {labels!r}")
    normalized = [str(label).strip().lower() for label in labels]
    perm = []
    for wanted in PROTOCOL_LABELS:
        hits = [i for i, name in enumerate(normalized) if wanted in name]
        if len(hits) != 1:
            raise ValueError(
                f"cannot locate class {wanted!r} uniquely in label set {tuple(labels)!r}"
            )
        perm.append(hits[0])
    if len(set(perm)) != 3:
        raise ValueError(f"labels map to overlapping classes: {tuple(labels)!r}")
    return (perm[0], perm[1], perm[2])


def to_protocol_order(probs: Sequence[float], labels: Sequence[str]) -> list[float]:
    """Reorder checkpoint-order probabilities into protocol order."""
    if len(probs) != 3:
        raise ValueError(f"expected 3 class probabilities, got {len(probs)}")
    perm = protocol_permutation(labels)
    return [float(probs[i]) for i in perm]
