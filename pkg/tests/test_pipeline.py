"""Feature acquisition, calibration and batch scoring."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import random_feature_vector
from metricforge.aggregator import TrainConfig, train
from metricforge.cache import FeatureStore, pair_digest
from metricforge.core import FeatureMask, SentencePair
from metricforge.errors import (
    CacheMissError,
    DegenerateInputError,
    ExtractionError,
    ProtocolError,
    TransportError,
)
from metricforge.pipeline import (
    AblationDataset,
    AblationItem,
    ExtractorClient,
    ExtractorEndpoint,
    RetryPolicy,
    calibrate,
    count_words,
    extract_features,
    nubia_score,
    run_ablation,
    score_batch,
    self_features,
)
from metricforge.stub import (
    STUB_EXTRACTOR_VERSION,
    stub_feature_vector,
    stub_features,
    warm_cache,
)

FAST_RETRY = RetryPolicy(attempts=1, backoff=0.0)


@pytest.fixture()
def recording_fetch(monkeypatch):
    """Patch ExtractorClient.fetch to serve stub features without HTTP,
    recording every batch size."""
    batch_sizes: list[int] = []

    def fake_fetch(self, pairs):
        batch_sizes.append(len(pairs))
        return [stub_features(p) for p in pairs], STUB_EXTRACTOR_VERSION

    monkeypatch.setattr(ExtractorClient, "fetch", fake_fetch)
    return batch_sizes


def _endpoint(max_batch: int = 32) -> ExtractorEndpoint:
    return ExtractorEndpoint(
        base_url="http://unused.invalid", max_batch=max_batch, retry=FAST_RETRY
    )


def _train_stub_model(kind="linreg", mask="SS", seed=0):
    rng = np.random.default_rng(seed)
    words = ["cat", "dog", "sun", "mat", "red", "blue", "run", "sit"]
    data = []
    for _ in range(60):
        ref = " ".join(rng.choice(words, size=5))
        cand = " ".join(rng.choice(words, size=5))
        fv = stub_feature_vector(SentencePair(ref, cand))
        data.append((fv, 0.2 + 0.6 * fv.sem_sim / 5.0))
    return train(data, FeatureMask.parse(mask), kind, TrainConfig(seed=seed))


class TestCountWords:
    def test_uses_canonical_tokenizer(self):
        assert count_words("The cat, sat!") == 3
        assert count_words("...") == 0


class TestExtractFeatures:
    def test_batches_of_three_three_one(self, tmp_path, recording_fetch):
        pairs = [SentencePair(f"ref {i}", f"cand {i}") for i in range(7)]
        cache = FeatureStore(tmp_path / "c.jsonl")
        records = extract_features(pairs, _endpoint(max_batch=3), cache)
        assert recording_fetch == [3, 3, 1]
        assert len(records) == 7
        assert len(cache) == 7

    def test_results_in_input_order(self, tmp_path, recording_fetch):
        pairs = [SentencePair(f"ref {i}", f"cand {i}") for i in range(5)]
        cache = FeatureStore(tmp_path / "c.jsonl")
        records = extract_features(pairs, _endpoint(), cache)
        for pair, rec in zip(pairs, records):
            assert rec.pair_digest == pair_digest(pair.reference, pair.candidate)

    def test_duplicates_fetched_once(self, tmp_path, recording_fetch):
        pair = SentencePair("same ref", "same cand")
        cache = FeatureStore(tmp_path / "c.jsonl")
        records = extract_features([pair, pair, pair], _endpoint(), cache)
        assert sum(recording_fetch) == 1
        assert records[0] == records[1] == records[2]

    def test_cache_hits_skip_network(self, tmp_path, recording_fetch):
        pairs = [SentencePair(f"r {i}", f"c {i}") for i in range(4)]
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache(pairs[:2], cache)
        extract_features(pairs, _endpoint(), cache)
        assert sum(recording_fetch) == 2

    def test_offline_miss_raises_sorted_digests(self, tmp_path):
        pairs = [SentencePair("zz", "yy"), SentencePair("aa", "bb")]
        cache = FeatureStore(tmp_path / "c.jsonl")
        with pytest.raises(CacheMissError) as err:
            extract_features(pairs, None, cache, offline=True)
        digests = err.value.digests
        assert digests == sorted(digests)
        assert len(digests) == 2

    def test_offline_with_warm_cache_succeeds(self, tmp_path):
        pairs = [SentencePair("a b", "c d")]
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache(pairs, cache)
        records = extract_features(pairs, None, cache, offline=True)
        assert records[0].features == stub_feature_vector(pairs[0])

    def test_unreachable_endpoint_raises_transport_error(self, tmp_path):
        cache = FeatureStore(tmp_path / "c.jsonl")
        endpoint = ExtractorEndpoint(
            base_url="http://127.0.0.1:1", retry=FAST_RETRY, timeout=0.2
        )
        with pytest.raises(TransportError, match="unfetched"):
            extract_features([SentencePair("a", "b")], endpoint, cache)

    def test_invalid_payload_raises_protocol_error(self, tmp_path, monkeypatch):
        def bad_fetch(self, pairs):
            docs = [stub_features(p) for p in pairs]
            docs[0]["mnli"] = [0.9, 0.9, 0.9]  # not a distribution
            return docs, STUB_EXTRACTOR_VERSION

        monkeypatch.setattr(ExtractorClient, "fetch", bad_fetch)
        cache = FeatureStore(tmp_path / "c.jsonl")
        with pytest.raises(ProtocolError, match="invariant"):
            extract_features([SentencePair("a", "b")], _endpoint(), cache)

    def test_wire_word_counts_computed_locally(self, tmp_path, recording_fetch):
        pair = SentencePair("The cat, sat on it!", "a b c")
        cache = FeatureStore(tmp_path / "c.jsonl")
        rec = extract_features([pair], _endpoint(), cache)[0]
        assert rec.features.len_ref == 5
        assert rec.features.len_cand == 3


class TestExtractorClientAgainstStub:
    def test_health(self, stub_url):
        client = ExtractorClient(ExtractorEndpoint(base_url=stub_url))
        doc = client.health()
        assert doc["status"] == "ready"
        assert doc["extractor_version"] == STUB_EXTRACTOR_VERSION

    def test_fetch_matches_local_stub(self, stub_url):
        client = ExtractorClient(ExtractorEndpoint(base_url=stub_url))
        pairs = [SentencePair("a cat", "the cat"), SentencePair("x", "y")]
        docs, version = client.fetch(pairs)
        assert version == STUB_EXTRACTOR_VERSION
        assert docs == [stub_features(p) for p in pairs]

    def test_batch_size_limit_enforced_client_side(self, stub_url):
        client = ExtractorClient(ExtractorEndpoint(base_url=stub_url, max_batch=2))
        pairs = [SentencePair(f"r{i}", f"c{i}") for i in range(3)]
        with pytest.raises(ValueError):
            client.fetch(pairs)

    def test_unknown_path_is_protocol_error(self, stub_url):
        client = ExtractorClient(
            ExtractorEndpoint(base_url=stub_url + "/nope", retry=FAST_RETRY)
        )
        with pytest.raises(ProtocolError):
            client.health()


class TestCalibrate:
    def test_normalizes_by_self_score(self):
        res = calibrate(0.3, 0.6)
        assert res.score == 0.5
        assert res.normalized is True
        assert res.warning is None
        assert res.raw == 0.3
        assert res.self_score == 0.6

    def test_clamps_above_one(self):
        assert calibrate(0.9, 0.6).score == 1.0

    def test_clamps_below_zero(self):
        assert calibrate(-0.2, 0.6).score == 0.0

    def test_identity_ratio_is_exactly_one(self):
        raw = 0.123456789
        assert calibrate(raw, raw).score == 1.0

    def test_tiny_self_score_skips_normalization(self):
        res = calibrate(0.4, 5e-7)
        assert res.normalized is False
        assert res.warning is not None
        assert res.score == 0.4

    def test_negative_self_score_skips_normalization(self):
        res = calibrate(0.4, -0.5)
        assert res.normalized is False


class TestNubiaScore:
    def test_self_pair_scores_exactly_one(self, tmp_path):
        model = _train_stub_model()
        ref = "the cat sat on the mat"
        pair = SentencePair(ref, ref)
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache([pair], cache)
        res = nubia_score(model, pair, None, cache, offline=True)
        assert res.score == 1.0
        assert res.normalized is True

    def test_candidate_anchor_uses_candidate_self_pair(self, tmp_path):
        model = _train_stub_model()
        pair = SentencePair("the cat sat", "a cat sat")
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache(
            [pair, SentencePair(pair.candidate, pair.candidate)], cache
        )
        res = nubia_score(
            model, pair, None, cache, offline=True, self_anchor="candidate"
        )
        assert res.normalized is True
        with pytest.raises(CacheMissError):
            nubia_score(model, pair, None, cache, offline=True)  # ref anchor missing

    def test_rejects_unknown_anchor(self, tmp_path):
        model = _train_stub_model()
        cache = FeatureStore(tmp_path / "c.jsonl")
        with pytest.raises(ValueError):
            nubia_score(
                model, SentencePair("a", "b"), None, cache, self_anchor="nope"
            )

    def test_self_features_helper(self, tmp_path):
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache([SentencePair("only ref", "only ref")], cache)
        fv = self_features("only ref", None, cache, offline=True)
        assert fv.sem_sim == 5.0


class TestScoreBatch:
    def test_dedup_costs_101_lookups_for_100_candidates(
        self, tmp_path, recording_fetch
    ):
        ref = "the shared reference sentence"
        pairs = [SentencePair(ref, f"candidate number {i}") for i in range(100)]
        cache = FeatureStore(tmp_path / "c.jsonl")
        model = _train_stub_model()
        batch = score_batch(model, pairs, _endpoint(max_batch=500), cache)
        assert batch.ok
        assert sum(recording_fetch) == 101  # 100 pairs + 1 shared self anchor
        assert len(batch.results) == 100

    def test_scores_in_unit_interval(self, tmp_path, recording_fetch):
        model = _train_stub_model()
        rng = np.random.default_rng(0)
        words = ["cat", "dog", "sun", "mat"]
        pairs = [
            SentencePair(
                " ".join(rng.choice(words, size=4)),
                " ".join(rng.choice(words, size=4)),
            )
            for _ in range(20)
        ]
        batch = score_batch(model, pairs, _endpoint(), cache=FeatureStore(tmp_path / "c.jsonl"))
        for res in batch.results:
            assert 0.0 <= res.score <= 1.0

    def test_partial_cache_reports_per_item_errors(self, tmp_path):
        model = _train_stub_model()
        ok_pair = SentencePair("warm ref", "warm cand")
        missing = SentencePair("cold ref", "cold cand")
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache([ok_pair, SentencePair("warm ref", "warm ref")], cache)
        batch = score_batch(model, [ok_pair, missing], None, cache, offline=True)
        assert not batch.ok
        assert batch.results[0] is not None
        assert batch.results[1] is None
        assert [e.index for e in batch.errors] == [1]
        with pytest.raises(ExtractionError):
            batch.scores()

    def test_scores_accessor_when_clean(self, tmp_path):
        model = _train_stub_model()
        pair = SentencePair("a b c", "a b c")
        cache = FeatureStore(tmp_path / "c.jsonl")
        warm_cache([pair], cache)
        batch = score_batch(model, [pair], None, cache, offline=True)
        assert batch.scores() == [1.0]


class TestRunAblation:
    def _dataset(self, n_train=40, n_test=30):
        rng = np.random.default_rng(4)
        train_rows = []
        for _ in range(n_train):
            fv = random_feature_vector(rng)
            train_rows.append((fv, 0.2 + 0.6 * fv.sem_sim / 5.0))
        test_items = []
        for _ in range(n_test):
            fv = random_feature_vector(rng)
            test_items.append(
                AblationItem(
                    features=fv,
                    human_score=0.2 + 0.6 * fv.sem_sim / 5.0,
                    lang_pair="cs-en",
                )
            )
        return AblationDataset(train=tuple(train_rows), test=tuple(test_items))

    def test_reports_keyed_by_label(self):
        dataset = self._dataset()
        masks = [FeatureMask.parse("SS"), FeatureMask.parse("SS,LI")]
        reports, errors = run_ablation(dataset, masks, "linreg", TrainConfig())
        assert errors == {}
        assert set(reports) == {"SS", "SS+LI"}
        assert reports["SS"].per_lang["cs-en"].statistic > 0.999

    def test_duplicate_masks_trained_once(self):
        dataset = self._dataset()
        masks = [FeatureMask.parse("SS"), FeatureMask.parse("ss")]
        reports, errors = run_ablation(dataset, masks, "linreg", TrainConfig())
        assert list(reports) == ["SS"]

    def test_failures_collected_per_mask(self):
        rng = np.random.default_rng(5)
        # Constant human target makes Pearson degenerate for every mask.
        train_rows = [
            (random_feature_vector(rng), 0.2 + 0.6 * random_feature_vector(rng).sem_sim / 5.0)
            for _ in range(30)
        ]
        test_items = [
            AblationItem(random_feature_vector(rng), 0.5, "cs-en") for _ in range(20)
        ]
        dataset = AblationDataset(train=tuple(train_rows), test=tuple(test_items))
        reports, errors = run_ablation(
            dataset, [FeatureMask.parse("SS")], "linreg", TrainConfig()
        )
        assert reports == {}
        assert set(errors) == {"SS"}
        assert isinstance(errors["SS"], DegenerateInputError)

    def test_empty_mask_list_rejected(self):
        with pytest.raises(ValueError):
            run_ablation(self._dataset(), [], "linreg", TrainConfig())

    def test_calibrated_when_self_features_present(self):
        rng = np.random.default_rng(6)
        train_rows = []
        for _ in range(40):
            fv = random_feature_vector(rng)
            train_rows.append((fv, 0.2 + 0.6 * fv.sem_sim / 5.0))
        self_fv = stub_feature_vector(SentencePair("a ref", "a ref"))
        test_items = []
        for _ in range(20):
            fv = random_feature_vector(rng)
            test_items.append(
                AblationItem(
                    features=fv,
                    human_score=0.2 + 0.6 * fv.sem_sim / 5.0,
                    lang_pair="cs-en",
                    self_features=self_fv,
                )
            )
        dataset = AblationDataset(train=tuple(train_rows), test=tuple(test_items))
        reports, errors = run_ablation(
            dataset, [FeatureMask.parse("SS")], "linreg", TrainConfig()
        )
        assert errors == {}
        # calibration rescales by a constant, so correlation is unchanged
        assert reports["SS"].per_lang["cs-en"].statistic > 0.999
