"""HTTP microservice exposing neural feature extraction for metricforge.

The service wraps three fine-tuned checkpoints (semantic similarity,
entailment classification, causal language modeling) behind the wire
protocol the metricforge pipeline consumes: POST /v1/features and
GET /v1/health."""

from .app import create_app
from .bundle import EntailmentResult, ExtractorBundle, ScoredText
from .config import ServiceConfig
from .labels import PROTOCOL_LABELS, protocol_permutation, to_protocol_order

__all__ = [
    "EntailmentResult",
    "ExtractorBundle",
    "PROTOCOL_LABELS",
    "ScoredText",
    "ServiceConfig",
    "create_app",
    "protocol_permutation",
    "to_protocol_order",
]
