"""Feature acquisition, calibration, end-to-end scoring and ablation.

Features come cache-first from a :class:`~metricforge.cache.FeatureStore`;
misses are fetched in batches from a remote extractor speaking the
``/v1/features`` wire protocol and persisted back.  Scoring normalizes the
raw regressor output by the reference's self-score and clamps to [0, 1].
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import requests

from .aggregator import TrainConfig, TrainedAggregator, predict_raw, train
from .baselines import tokenize
from .cache import FeatureRecord, FeatureStore, pair_digest
from .core import (
    EvalReport,
    FeatureMask,
    FeatureVector,
    SentencePair,
    validate_features,
)
from .errors import (
    CacheMissError,
    ExtractionError,
    MetricForgeError,
    ProtocolError,
    TransportError,
)
from .stats import ScoredSegment, evaluate_da, evaluate_tau_b

SELF_SCORE_EPSILON = 1e-6


def count_words(text: str) -> int:
    """Word count under the canonical tokenizer."""
    return len(tokenize(text))


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.5

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("retry attempts must be >= 1")


@dataclass(frozen=True)
class ExtractorEndpoint:
    """Connection parameters for a feature-extraction service."""

    base_url: str
    timeout: float = 30.0
    max_batch: int = 32
    retry: RetryPolicy = RetryPolicy()

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))


class ExtractorClient:
    """Thin HTTP client for the extractor wire protocol."""

    def __init__(self, endpoint: ExtractorEndpoint, session: requests.Session | None = None):
        self.endpoint = endpoint
        self.session = session or requests.Session()

    def health(self) -> dict:
        url = f"{self.endpoint.base_url}/v1/health"
        resp = self._request("GET", url, None)
        return resp

    def fetch(self, pairs: Sequence[SentencePair]) -> tuple[list[dict], str]:
        """POST one batch; returns (per-pair feature docs, extractor_version)."""
        if len(pairs) > self.endpoint.max_batch:
            raise ValueError(
                f"batch of {len(pairs)} exceeds max_batch {self.endpoint.max_batch}"
            )
        url = f"{self.endpoint.base_url}/v1/features"
        body = {
            "pairs": [
                {"reference": p.reference, "candidate": p.candidate} for p in pairs
            ]
        }
        doc = self._request("POST", url, body)
        features = doc.get("features")
        version = doc.get("extractor_version")
        if not isinstance(features, list) or not isinstance(version, str):
            raise ProtocolError(f"malformed extractor response from {url}")
        if len(features) != len(pairs):
            raise ProtocolError(
                f"extractor returned {len(features)} items for {len(pairs)} pairs"
            )
        return features, version

    def _request(self, method: str, url: str, body: dict | None) -> dict:
        policy = self.endpoint.retry
        last_error: Exception | None = None
        for attempt in range(policy.attempts):
            if attempt:
                time.sleep(policy.backoff * (2 ** (attempt - 1)))
            try:
                resp = self.session.request(
                    method, url, json=body, timeout=self.endpoint.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"{url} returned {resp.status_code}")
                continue
            if resp.status_code == 422:
                raise ProtocolError(f"extractor rejected request: {resp.text}")
            if resp.status_code != 200:
                raise ProtocolError(f"{url} returned {resp.status_code}: {resp.text}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned non-JSON body: {exc}") from None
        raise TransportError(
            f"{url} unreachable after {policy.attempts} attempt(s): {last_error}"
        )


def _record_from_wire(pair: SentencePair, doc: dict, version: str) -> FeatureRecord:
    try:
        mnli = doc["mnli"]
        fv = FeatureVector(
            sem_sim=float(doc["sem_sim"]),
            mnli_contradiction=float(mnli[0]),
            mnli_neutral=float(mnli[1]),
            mnli_entailment=float(mnli[2]),
            ppl_ref=float(doc["ppl_ref"]),
            ppl_cand=float(doc["ppl_cand"]),
            len_ref=count_words(pair.reference),
            len_cand=count_words(pair.candidate),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed feature payload: {exc}") from None
    violations = validate_features(fv)
    if violations:
        raise ProtocolError(
            "extractor payload violates feature invariants: " + "; ".join(violations)
        )
    return FeatureRecord.create(pair, fv, version)


def extract_features(
    pairs: Sequence[SentencePair],
    endpoint: ExtractorEndpoint | None,
    cache: FeatureStore,
    offline: bool = False,
) -> list[FeatureRecord]:
    """Cache-first feature lookup; misses are fetched in batches and persisted.

    Results come back in input order; duplicate pairs share one record.
    Offline mode with any cache miss raises :class:`CacheMissError`; a
    transport failure raises :class:`TransportError` listing the pairs it
    left unfetched (earlier batches stay persisted).
    """
    digests = [pair_digest(p.reference, p.candidate) for p in pairs]
    missing: dict[str, SentencePair] = {}
    for digest, pair in zip(digests, pairs):
        if digest not in cache and digest not in missing:
            missing[digest] = pair

    if missing:
        if offline or endpoint is None:
            raise CacheMissError(sorted(missing))
        client = ExtractorClient(endpoint)
        todo = list(missing.values())
        for start in range(0, len(todo), endpoint.max_batch):
            batch = todo[start : start + endpoint.max_batch]
            try:
                docs, version = client.fetch(batch)
            except TransportError as exc:
                unfetched = [f"({p.reference!r}, {p.candidate!r})" for p in todo[start:]]
                raise TransportError(
                    f"{exc}; unfetched pairs: {', '.join(unfetched[:5])}"
                    + ("..." if len(unfetched) > 5 else "")
                ) from None
            records = [
                _record_from_wire(pair, doc, version)
                for pair, doc in zip(batch, docs)
            ]
            cache.append(records)

    out: list[FeatureRecord] = []
    for digest in digests:
        record = cache.get(digest)
        if record is None:
            raise ExtractionError(f"feature record vanished for digest {digest}")
        out.append(record)
    return out


def self_features(
    reference: str,
    endpoint: ExtractorEndpoint | None,
    cache: FeatureStore,
    offline: bool = False,
) -> FeatureVector:
    """Features of the pair (reference, reference), cached under its own digest."""
    pair = SentencePair(reference, reference)
    return extract_features([pair], endpoint, cache, offline=offline)[0].features


@dataclass(frozen=True)
class ScoreResult:
    """A calibrated score plus the raw quantities that produced it."""

    score: float
    raw: float
    self_score: float
    normalized: bool
    warning: str | None = None


def calibrate(raw: float, self_score: float) -> ScoreResult:
    """Normalize by the self-score and clamp to [0, 1].

    Self-scores at or below the epsilon guard skip normalization (a
    degenerate regressor must not blow up the output) and record a warning.
    """
    if self_score > SELF_SCORE_EPSILON:
        value = raw / self_score
        normalized = True
        warning = None
    else:
        value = raw
        normalized = False
        warning = (
            f"self-score {self_score!r} at or below {SELF_SCORE_EPSILON}; "
            "normalization skipped"
        )
    return ScoreResult(
        score=min(1.0, max(0.0, value)),
        raw=raw,
        self_score=self_score,
        normalized=normalized,
        warning=warning,
    )


def nubia_score(
    model: TrainedAggregator,
    pair: SentencePair,
    endpoint: ExtractorEndpoint | None,
    cache: FeatureStore,
    offline: bool = False,
    self_anchor: str = "reference",
) -> ScoreResult:
    """End-to-end calibrated score for one pair.

    ``self_anchor`` picks the calibration denominator: the reference paired
    with itself (default) or the candidate paired with itself.
    """
    anchor = _anchor_text(pair, self_anchor)
    records = extract_features(
        [pair, SentencePair(anchor, anchor)], endpoint, cache, offline=offline
    )
    raw = predict_raw(model, records[0].features)
    self_raw = predict_raw(model, records[1].features)
    return calibrate(raw, self_raw)


def _anchor_text(pair: SentencePair, self_anchor: str) -> str:
    if self_anchor == "reference":
        return pair.reference
    if self_anchor == "candidate":
        return pair.candidate
    raise ValueError(f"unknown self_anchor: {self_anchor}")


@dataclass(frozen=True)
class ScoreError:
    index: int
    pair: SentencePair
    message: str


@dataclass(frozen=True)
class BatchScores:
    """Elementwise scoring results; failed items are None with a manifest entry."""

    results: list[ScoreResult | None]
    errors: list[ScoreError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def scores(self) -> list[float]:
        if self.errors:
            raise ExtractionError(
                f"{len(self.errors)} pair(s) failed to score; first: "
                f"{self.errors[0].message}"
            )
        return [r.score for r in self.results]  # type: ignore[union-attr]


def score_batch(
    model: TrainedAggregator,
    pairs: Sequence[SentencePair],
    endpoint: ExtractorEndpoint | None,
    cache: FeatureStore,
    offline: bool = False,
    self_anchor: str = "reference",
) -> BatchScores:
    """Score many pairs; self-scores are computed once per distinct anchor.

    Extraction is attempted for all pairs up front; pairs whose features
    (or anchor features) remain unavailable are reported in the error
    manifest while the rest still score.
    """
    anchors = [_anchor_text(p, self_anchor) for p in pairs]
    wanted: dict[str, SentencePair] = {}
    for pair, anchor in zip(pairs, anchors):
        wanted.setdefault(pair_digest(pair.reference, pair.candidate), pair)
        wanted.setdefault(pair_digest(anchor, anchor), SentencePair(anchor, anchor))

    batch_error: str | None = None
    try:
        extract_features(list(wanted.values()), endpoint, cache, offline=offline)
    except ExtractionError as exc:
        batch_error = str(exc)

    results: list[ScoreResult | None] = []
    errors: list[ScoreError] = []
    self_cache: dict[str, float] = {}
    for index, (pair, anchor) in enumerate(zip(pairs, anchors)):
        record = cache.get(pair_digest(pair.reference, pair.candidate))
        anchor_record = cache.get(pair_digest(anchor, anchor))
        if record is None or anchor_record is None:
            results.append(None)
            errors.append(
                ScoreError(
                    index=index,
                    pair=pair,
                    message=batch_error or "features unavailable",
                )
            )
            continue
        try:
            raw = predict_raw(model, record.features)
            if anchor not in self_cache:
                self_cache[anchor] = predict_raw(model, anchor_record.features)
            results.append(calibrate(raw, self_cache[anchor]))
        except MetricForgeError as exc:
            results.append(None)
            errors.append(ScoreError(index=index, pair=pair, message=str(exc)))
    return BatchScores(results=results, errors=errors)


@dataclass(frozen=True)
class AblationItem:
    """One test observation for the ablation driver.

    ``self_features`` enables calibration; when None the raw regressor
    output is used as the metric score.
    """

    features: FeatureVector
    human_score: float
    lang_pair: str
    self_features: FeatureVector | None = None


@dataclass(frozen=True)
class AblationDataset:
    train: tuple[tuple[FeatureVector, float], ...]
    test: tuple[AblationItem, ...]
    protocol: str = "pearson"

    def __post_init__(self):
        if self.protocol not in ("pearson", "tau_b"):
            raise ValueError(f"unsupported ablation protocol: {self.protocol}")
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))


def run_ablation(
    dataset: AblationDataset,
    masks: Sequence[FeatureMask],
    kind: str,
    config: TrainConfig,
) -> tuple[dict[str, EvalReport], dict[str, MetricForgeError]]:
    """Train and evaluate one model per feature mask.

    Every mask trains with the same seed and config.  Failures are
    collected per mask label instead of aborting the sweep; the function
    returns (reports, errors) keyed by mask label.
    """
    if not masks:
        raise ValueError("run_ablation: no masks given")
    reports: dict[str, EvalReport] = {}
    errors: dict[str, MetricForgeError] = {}
    for mask in masks:
        label = mask.label()
        if label in reports or label in errors:
            continue
        try:
            model = train(list(dataset.train), mask, kind, config)
            items = []
            for item in dataset.test:
                raw = predict_raw(model, item.features)
                if item.self_features is not None:
                    metric = calibrate(raw, predict_raw(model, item.self_features)).score
                else:
                    metric = raw
                items.append(
                    ScoredSegment(
                        lang_pair=item.lang_pair,
                        human_score=item.human_score,
                        metric_score=metric,
                    )
                )
            evaluate: Callable[[Iterable[ScoredSegment]], EvalReport]
            evaluate = evaluate_da if dataset.protocol == "pearson" else evaluate_tau_b
            reports[label] = evaluate(items)
        except MetricForgeError as exc:
            errors[label] = exc
    return reports, errors
