"""Append-only JSON-Lines feature cache keyed by pair content hash.

File layout: one header line ``{"format_version", "extractor_version",
"tokenizer_version", "digest"}`` followed by one record per line.  The
``digest`` field names the hash scheme: sha256 over the NFC-normalized,
whitespace-trimmed reference and candidate joined by a NUL byte.
"""

from __future__ import annotations

import hashlib
import json
import threading
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .baselines import TOKENIZER_VERSION
from .core import FeatureVector, SentencePair, validate_features
from .errors import CacheVersionError, FeatureValidationError, FormatError

CACHE_FORMAT_VERSION = 1
DIGEST_SCHEME = "sha256/nfc-trim/v1"


def pair_digest(reference: str, candidate: str) -> str:
    """Content hash of a pair; stable under surrounding whitespace and NFC form."""
    ref = unicodedata.normalize("NFC", reference.strip()).encode("utf-8")
    cand = unicodedata.normalize("NFC", candidate.strip()).encode("utf-8")
    return hashlib.sha256(ref + b"\x00" + cand).hexdigest()


@dataclass(frozen=True)
class FeatureRecord:
    """A validated feature vector bound to its pair and extractor version."""

    pair_digest: str
    pair: SentencePair
    features: FeatureVector
    extractor_version: str

    def __post_init__(self):
        violations = validate_features(self.features)
        if violations:
            raise FeatureValidationError(violations)
        expected = pair_digest(self.pair.reference, self.pair.candidate)
        if self.pair_digest != expected:
            raise FormatError(
                f"feature record digest mismatch: {self.pair_digest} != {expected}"
            )

    @classmethod
    def create(
        cls, pair: SentencePair, features: FeatureVector, extractor_version: str
    ) -> "FeatureRecord":
        return cls(
            pair_digest=pair_digest(pair.reference, pair.candidate),
            pair=pair,
            features=features,
            extractor_version=extractor_version,
        )

    def to_json_line(self) -> str:
        doc = {
            "pair_digest": self.pair_digest,
            "reference": self.pair.reference,
            "candidate": self.pair.candidate,
            "features": {
                "sem_sim": self.features.sem_sim,
                "mnli_contradiction": self.features.mnli_contradiction,
                "mnli_neutral": self.features.mnli_neutral,
                "mnli_entailment": self.features.mnli_entailment,
                "ppl_ref": self.features.ppl_ref,
                "ppl_cand": self.features.ppl_cand,
                "len_ref": self.features.len_ref,
                "len_cand": self.features.len_cand,
            },
            "extractor_version": self.extractor_version,
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> "FeatureRecord":
        doc = json.loads(line)
        f = doc["features"]
        return cls(
            pair_digest=doc["pair_digest"],
            pair=SentencePair(doc["reference"], doc["candidate"]),
            features=FeatureVector(
                sem_sim=float(f["sem_sim"]),
                mnli_contradiction=float(f["mnli_contradiction"]),
                mnli_neutral=float(f["mnli_neutral"]),
                mnli_entailment=float(f["mnli_entailment"]),
                ppl_ref=float(f["ppl_ref"]),
                ppl_cand=float(f["ppl_cand"]),
                len_ref=int(f["len_ref"]),
                len_cand=int(f["len_cand"]),
            ),
            extractor_version=doc["extractor_version"],
        )


class FeatureStore:
    """In-memory view over an append-only cache file.

    Appends are serialized through a single lock.  Records whose
    extractor or tokenizer version disagrees with the file header are
    rejected unless the store was opened with ``allow_mixed=True``.
    """

    def __init__(self, path: str | Path, allow_mixed: bool = False):
        self.path = Path(path)
        self.allow_mixed = allow_mixed
        self.extractor_version: str | None = None
        self._records: dict[str, FeatureRecord] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            header_line = fh.readline()
            if not header_line.strip():
                return
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{self.path}: bad cache header: {exc}") from None
            if header.get("format_version") != CACHE_FORMAT_VERSION:
                raise FormatError(
                    f"{self.path}: unsupported cache format version "
                    f"{header.get('format_version')}"
                )
            if header.get("digest") != DIGEST_SCHEME:
                raise FormatError(
                    f"{self.path}: unknown digest scheme {header.get('digest')}"
                )
            if (
                header.get("tokenizer_version") != TOKENIZER_VERSION
                and not self.allow_mixed
            ):
                raise CacheVersionError(
                    f"{self.path}: cache tokenizer {header.get('tokenizer_version')} "
                    f"!= current {TOKENIZER_VERSION} (pass allow_mixed to override)"
                )
            self.extractor_version = header.get("extractor_version")
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    record = FeatureRecord.from_json_line(line)
                except (json.JSONDecodeError, KeyError) as exc:
                    raise FormatError(
                        f"{self.path}:{lineno}: bad cache record: {exc}"
                    ) from None
                if (
                    record.extractor_version != self.extractor_version
                    and not self.allow_mixed
                ):
                    raise CacheVersionError(
                        f"{self.path}:{lineno}: record extractor "
                        f"{record.extractor_version} != header {self.extractor_version}"
                    )
                self._records[record.pair_digest] = record

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, digest: str) -> bool:
        return digest in self._records

    def get(self, digest: str) -> FeatureRecord | None:
        return self._records.get(digest)

    def records(self) -> list[FeatureRecord]:
        return list(self._records.values())

    def append(self, records: Iterable[FeatureRecord]) -> int:
        """Persist new records; already-cached digests are skipped.

        Returns the number of lines written.
        """
        records = list(records)
        if not records:
            return 0
        with self._lock:
            lines: list[str] = []
            if self.extractor_version is None:
                self.extractor_version = records[0].extractor_version
                header = {
                    "format_version": CACHE_FORMAT_VERSION,
                    "extractor_version": self.extractor_version,
                    "tokenizer_version": TOKENIZER_VERSION,
                    "digest": DIGEST_SCHEME,
                }
                lines.append(json.dumps(header, sort_keys=True))
            for record in records:
                if (
                    record.extractor_version != self.extractor_version
                    and not self.allow_mixed
                ):
                    raise CacheVersionError(
                        f"cannot append extractor {record.extractor_version} record "
                        f"to {self.extractor_version} cache (pass allow_mixed)"
                    )
                if record.pair_digest in self._records:
                    continue
                self._records[record.pair_digest] = record
                lines.append(record.to_json_line())
            if not lines:
                return 0
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
            return len(lines)
