"""Deterministic stand-in feature extractor.

Features are pure functions of the pair texts: semantic similarity is a
monotone function of token overlap, the inference probabilities follow a
softmax over overlap-driven logits, and perplexities are hash-derived.
Useful for integration tests, warmed offline caches and demos; it speaks
the same wire protocol as a real extractor service.

Run standalone with ``python -m metricforge.stub --port 8640``.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from collections import Counter
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Sequence

from .baselines import tokenize
from .cache import FeatureRecord, FeatureStore
from .core import FeatureVector, SentencePair
from .pipeline import count_words

STUB_EXTRACTOR_VERSION = "stub-1"


def _hash01(text: str) -> float:
    """A stable value in [0, 1) derived from the text."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def token_overlap(reference: str, candidate: str) -> float:
    """Multiset token-overlap F1 in [0, 1]; 1.0 for identical token streams."""
    ref = Counter(tokenize(reference))
    cand = Counter(tokenize(candidate))
    total = sum(ref.values()) + sum(cand.values())
    if total == 0:
        return 0.0
    matched = sum(min(ref[tok], cand[tok]) for tok in cand)
    return 2.0 * matched / total


def stub_semantic_similarity(reference: str, candidate: str) -> float:
    """Monotone in token overlap, on the 0-5 scale."""
    return 5.0 * token_overlap(reference, candidate)


def stub_features(pair: SentencePair) -> dict:
    """Wire-format feature document for one pair."""
    overlap = token_overlap(pair.reference, pair.candidate)
    wiggle = _hash01(pair.reference + "\x00" + pair.candidate)
    logits = (2.0 * (1.0 - overlap), 1.0 + 0.5 * wiggle, 3.0 * overlap)
    exps = [math.exp(l) for l in logits]
    total = sum(exps)
    mnli = [e / total for e in exps]
    return {
        "sem_sim": 5.0 * overlap,
        "mnli": mnli,
        "ppl_ref": math.exp(1.0 + 3.0 * _hash01(pair.reference)),
        "ppl_cand": math.exp(1.0 + 3.0 * _hash01(pair.candidate)),
    }


def stub_feature_vector(pair: SentencePair) -> FeatureVector:
    doc = stub_features(pair)
    return FeatureVector(
        sem_sim=doc["sem_sim"],
        mnli_contradiction=doc["mnli"][0],
        mnli_neutral=doc["mnli"][1],
        mnli_entailment=doc["mnli"][2],
        ppl_ref=doc["ppl_ref"],
        ppl_cand=doc["ppl_cand"],
        len_ref=count_words(pair.reference),
        len_cand=count_words(pair.candidate),
    )


def warm_cache(pairs: Iterable[SentencePair], cache: FeatureStore) -> int:
    """Populate a cache with stub features directly (no HTTP round trip)."""
    records = [
        FeatureRecord.create(pair, stub_feature_vector(pair), STUB_EXTRACTOR_VERSION)
        for pair in pairs
    ]
    return cache.append(records)


class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):  # keep test output quiet
        pass

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(
                200, {"status": "ready", "extractor_version": STUB_EXTRACTOR_VERSION}
            )
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        if self.path != "/v1/features":
            self._send(404, {"error": f"unknown path {self.path}"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            doc = json.loads(self.rfile.read(length))
            pairs = doc["pairs"]
        except (json.JSONDecodeError, KeyError):
            self._send(422, {"errors": [{"error": "malformed request body"}]})
            return
        item_errors = []
        features = []
        for i, item in enumerate(pairs):
            ref = str(item.get("reference", "")).strip()
            cand = str(item.get("candidate", "")).strip()
            if not ref or not cand:
                item_errors.append({"index": i, "error": "empty text"})
                continue
            features.append(stub_features(SentencePair(ref, cand)))
        if item_errors:
            self._send(422, {"errors": item_errors})
            return
        self._send(
            200,
            {"features": features, "extractor_version": STUB_EXTRACTOR_VERSION},
        )


@contextmanager
def stub_server(host: str = "127.0.0.1", port: int = 0):
    """Run the stub extractor on a background thread; yields its base URL."""
    server = ThreadingHTTPServer((host, port), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://{server.server_address[0]}:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join()


def main(argv: Sequence[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Serve the stub feature extractor.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8640)
    args = parser.parse_args(argv)
    server = ThreadingHTTPServer((args.host, args.port), _StubHandler)
    print(f"stub extractor listening on http://{args.host}:{args.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
