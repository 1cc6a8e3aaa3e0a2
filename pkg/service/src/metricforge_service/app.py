"""HTTP surface: the feature-extraction wire protocol.

GET /v1/health   -> 200 {"status": "ready", "extractor_version": ...}
                    503 {"status": "loading"} until checkpoints are up
POST /v1/features-> 200 {"features": [...], "extractor_version": ...}
                    422 {"errors": [{"index": i, "error": ...}, ...]}

Checkpoints load on a background thread so the server binds its port
immediately and reports "loading" instead of hanging the first probe.
The service is stateless across requests; batching happens only within
a single request."""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Callable, Sequence

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .bundle import ExtractorBundle, ScoredText
from .config import ServiceConfig
from .labels import to_protocol_order

SEM_SIM_MIN = 0.0
SEM_SIM_MAX = 5.0


class WirePair(BaseModel):
    reference: str
    candidate: str


class FeatureRequest(BaseModel):
    pairs: list[WirePair]


class _Holder:
    """Bundle slot filled by the loader thread."""

    def __init__(self) -> None:
        self.bundle: ExtractorBundle | None = None
        self.error: str | None = None
        self.done = threading.Event()


def _error_response(status: int, errors: list[dict]) -> JSONResponse:
    return JSONResponse({"errors": errors}, status_code=status)


def _unique_texts(pairs: Sequence[tuple[str, str]]) -> list[str]:
    seen: dict[str, None] = {}
    for reference, candidate in pairs:
        seen.setdefault(reference)
        seen.setdefault(candidate)
    return list(seen)


def create_app(
    load_bundle: Callable[[], ExtractorBundle],
    config: ServiceConfig | None = None,
) -> FastAPI:
    config = config if config is not None else ServiceConfig()
    holder = _Holder()

    def _load() -> None:
        try:
            holder.bundle = load_bundle()
        except Exception as exc:
            holder.error = f"{type(exc).__name__}: {exc}"
        finally:
            holder.done.set()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        threading.Thread(target=_load, name="bundle-loader", daemon=True).start()
        yield

    app = FastAPI(title="metricforge feature extractor", lifespan=lifespan)

    def _unavailable() -> JSONResponse:
        if holder.done.is_set():
            status = f"failed: {holder.error}"
        else:
            status = "loading"
        return JSONResponse({"status": status}, status_code=503)

    @app.get("/v1/health")
    def health():
        bundle = holder.bundle
        if bundle is None:
            return _unavailable()
        return {"status": "ready", "extractor_version": bundle.extractor_version}

    @app.post("/v1/features")
    def features(request: FeatureRequest):
        bundle = holder.bundle
        if bundle is None:
            return _unavailable()
        pairs = request.pairs
        if not 1 <= len(pairs) <= config.max_batch:
            return _error_response(
                422,
                [{"error": f"batch size {len(pairs)} outside [1, {config.max_batch}]"}],
            )
        empty = [
            {"index": i, "error": "empty text"}
            for i, pair in enumerate(pairs)
            if not pair.reference.strip() or not pair.candidate.strip()
        ]
        if empty:
            return _error_response(422, empty)

        tuples = [(pair.reference, pair.candidate) for pair in pairs]
        similarities = bundle.similarity(tuples)
        entailments = bundle.entailment(tuples)
        texts = _unique_texts(tuples)
        ppl_by_text: dict[str, ScoredText] = dict(zip(texts, bundle.perplexity(texts)))

        docs = []
        for (reference, candidate), sim, ent in zip(tuples, similarities, entailments):
            ppl_ref = ppl_by_text[reference]
            ppl_cand = ppl_by_text[candidate]
            doc = {
                "sem_sim": min(SEM_SIM_MAX, max(SEM_SIM_MIN, sim.value)),
                "mnli": to_protocol_order(ent.probs, bundle.mnli_labels),
                "ppl_ref": ppl_ref.value,
                "ppl_cand": ppl_cand.value,
            }
            if sim.truncated or ent.truncated or ppl_ref.truncated or ppl_cand.truncated:
                doc["truncated"] = True
            docs.append(doc)
        return {"features": docs, "extractor_version": bundle.extractor_version}

    return app
