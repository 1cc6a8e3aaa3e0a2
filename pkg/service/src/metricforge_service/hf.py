"""Transformers-backed bundle wrapping published fine-tuned checkpoints.

torch and transformers are imported at construction time, not module
import time, so the rest of the package stays usable on machines
without the model dependencies installed."""

from __future__ import annotations

from typing import Sequence

from .bundle import EntailmentResult, ExtractorBundle, ScoredText
from .config import ServiceConfig

# Perplexity normalization scheme; part of extractor_version so cached
# features are invalidated if the construction ever changes.
PPL_SCHEME = "ppl-eot-v1"


class TransformersBundle(ExtractorBundle):
    def __init__(self, config: ServiceConfig):
        import torch
        from transformers import (
            AutoModelForCausalLM,
            AutoModelForSequenceClassification,
            AutoTokenizer,
        )

        self._torch = torch
        self._config = config
        self._sts_tokenizer = AutoTokenizer.from_pretrained(config.sts_checkpoint)
        self._sts_model = AutoModelForSequenceClassification.from_pretrained(
            config.sts_checkpoint
        ).eval()
        self._mnli_tokenizer = AutoTokenizer.from_pretrained(config.mnli_checkpoint)
        self._mnli_model = AutoModelForSequenceClassification.from_pretrained(
            config.mnli_checkpoint
        ).eval()
        self._lm_tokenizer = AutoTokenizer.from_pretrained(config.lm_checkpoint)
        self._lm_model = AutoModelForCausalLM.from_pretrained(config.lm_checkpoint).eval()
        if self._lm_tokenizer.eos_token_id is None:
            raise ValueError(
                f"{config.lm_checkpoint} defines no end-of-text token; "
                "perplexity needs one appended to every text"
            )

        id2label = self._mnli_model.config.id2label
        if len(id2label) != 3:
            raise ValueError(
                f"{config.mnli_checkpoint} is not a 3-class entailment model: {id2label!r}"
            )
        self._labels = tuple(id2label[i] for i in range(3))
        self._version = "|".join(
            (
                f"sts={config.sts_checkpoint}",
                f"mnli={config.mnli_checkpoint}",
                f"lm={config.lm_checkpoint}",
                PPL_SCHEME,
            )
        )

    @property
    def extractor_version(self) -> str:
        return self._version

    @property
    def mnli_labels(self) -> tuple[str, str, str]:
        return self._labels  # type: ignore[return-value]

    def _encode_pairs(self, tokenizer, pairs: Sequence[tuple[str, str]]):
        refs = [ref for ref, _ in pairs]
        cands = [cand for _, cand in pairs]
        encoded = tokenizer(
            refs,
            cands,
            truncation=True,
            max_length=self._config.max_len,
            padding=True,
            return_tensors="pt",
        )
        untruncated = tokenizer(refs, cands, truncation=False)["input_ids"]
        flags = [len(ids) > self._config.max_len for ids in untruncated]
        return encoded, flags

    def similarity(self, pairs: Sequence[tuple[str, str]]) -> list[ScoredText]:
        with self._torch.inference_mode():
            encoded, flags = self._encode_pairs(self._sts_tokenizer, pairs)
            scores = self._sts_model(**encoded).logits.squeeze(-1).tolist()
        return [ScoredText(float(s), flag) for s, flag in zip(scores, flags)]

    def entailment(self, pairs: Sequence[tuple[str, str]]) -> list[EntailmentResult]:
        with self._torch.inference_mode():
            encoded, flags = self._encode_pairs(self._mnli_tokenizer, pairs)
            logits = self._mnli_model(**encoded).logits
            probs = self._torch.softmax(logits, dim=-1).tolist()
        return [
            EntailmentResult((float(p[0]), float(p[1]), float(p[2])), flag)
            for p, flag in zip(probs, flags)
        ]

    def perplexity(self, texts: Sequence[str]) -> list[ScoredText]:
        torch = self._torch
        eos = self._lm_tokenizer.eos_token_id
        results = []
        with torch.inference_mode():
            for text in texts:
                ids = self._lm_tokenizer(text)["input_ids"]
                truncated = len(ids) > self._config.max_len - 1
                ids = ids[: self._config.max_len - 1] + [eos]
                tokens = torch.tensor([ids])
                logits = self._lm_model(tokens).logits[0]
                log_probs = torch.log_softmax(logits[:-1], dim=-1)
                targets = torch.tensor(ids[1:])
                nll = -log_probs[torch.arange(len(targets)), targets]
                results.append(ScoredText(float(torch.exp(nll.mean())), truncated))
        return results
