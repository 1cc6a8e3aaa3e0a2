"""Shared fixtures: synthetic corpora, a stub extractor, warmed caches."""

from __future__ import annotations

import numpy as np
import pytest

from metricforge.cache import FeatureStore
from metricforge.core import FeatureVector, SentencePair
from metricforge.ingestion import CanonicalDaRow
from metricforge.stub import stub_feature_vector, stub_server, warm_cache

WORDS = (
    "river", "stone", "light", "wind", "trade", "vote", "press", "court",
    "road", "farm", "music", "paint", "glass", "north", "cloud", "grain",
    "steel", "paper", "coast", "field",
)


def make_da_rows(
    dataset: str,
    langs: tuple[str, ...],
    n_segments: int,
    systems: tuple[str, ...],
    rng: np.random.Generator,
    noise: float = 0.0,
) -> list[CanonicalDaRow]:
    """DA rows whose human score is an affine function of the stub's
    semantic-similarity feature (plus optional Gaussian noise), so a learned
    aggregator can recover it while word-order-sensitive baselines cannot."""
    rows = []
    for lang in langs:
        for seg in range(n_segments):
            ref = " ".join(rng.choice(WORDS, size=8))
            ref_tokens = ref.split()
            for sys_id in systems:
                keep = int(rng.integers(2, 9))
                cand_tokens = ref_tokens[:keep] + list(
                    rng.choice(WORDS, size=8 - keep)
                )
                rng.shuffle(cand_tokens)
                cand = " ".join(cand_tokens)
                fv = stub_feature_vector(SentencePair(ref, cand))
                score = 20.0 + 60.0 * fv.sem_sim / 5.0
                if noise:
                    score += float(rng.normal(0.0, noise))
                score = min(100.0, max(0.0, score))
                rows.append(
                    CanonicalDaRow(dataset, lang, seg, sys_id, ref, cand, score, 3)
                )
    return rows


def random_feature_vector(rng: np.random.Generator) -> FeatureVector:
    logits = rng.normal(size=3)
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    return FeatureVector(
        sem_sim=float(rng.uniform(0.0, 5.0)),
        mnli_contradiction=float(probs[0]),
        mnli_neutral=float(probs[1]),
        mnli_entailment=float(probs[2]),
        ppl_ref=float(np.exp(rng.uniform(0.0, 3.0))),
        ppl_cand=float(np.exp(rng.uniform(0.0, 3.0))),
        len_ref=int(rng.integers(1, 30)),
        len_cand=int(rng.integers(1, 30)),
    )


@pytest.fixture(scope="session")
def stub_url():
    with stub_server() as url:
        yield url


@pytest.fixture()
def warm_store(tmp_path):
    """A FeatureStore factory pre-filled with stub features for given pairs."""

    def build(pairs: list[SentencePair], name: str = "cache.jsonl") -> FeatureStore:
        store = FeatureStore(tmp_path / name)
        warm_cache(pairs, store)
        return store

    return build
