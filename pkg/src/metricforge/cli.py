"""Command-line surface: extract, train, eval and ablate subcommands.

Every run emits one manifest (content hashes of inputs, config digest,
seed, timestamp) for reproducibility.  Exit codes: 0 success, 1 usage,
2 data error, 3 extraction error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .aggregator import (
    LinearParams,
    TrainConfig,
    TrainedAggregator,
    load_model,
    save_model,
    train,
)
from .baselines import rouge_l, sentence_bleu, tokenize
from .cache import FeatureStore, pair_digest
from .core import EvalReport, FeatureMask, SentencePair
from .errors import DataError, ExtractionError, MetricForgeError, NumericError
from .ingestion import (
    CanonicalDaRow,
    build_split,
    parse_canonical_tsv,
    parse_flickr_judgments,
    rows_to_da_groups,
)
from .pipeline import (
    AblationDataset,
    AblationItem,
    ExtractorEndpoint,
    extract_features,
    run_ablation,
    score_batch,
)
from .stats import ScoredSegment, da_to_relative_ranking, evaluate_da, evaluate_darr, evaluate_tau_b

ENDPOINT_ENV_VAR = "METRICFORGE_ENDPOINT"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EXTRACTION = 3
EXIT_NUMERIC = 4

# The standard ablation sweep: every nonempty subset of the three neural
# feature groups, smallest first, full set last.
ABLATION_PRESET = ("LI", "SI", "SS", "LI+SI", "SS+LI", "SS+SI", "SS+LI+SI")


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_digest: str
    input_digests: dict[str, str]
    model_digest: str | None
    extractor_version: str | None
    seed: int | None
    timestamp: str

    @classmethod
    def create(
        cls,
        command: str,
        args: argparse.Namespace,
        input_paths: list[str],
        model_digest: str | None = None,
        extractor_version: str | None = None,
        seed: int | None = None,
    ) -> "RunManifest":
        resolved = {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "manifest")
        }
        config_digest = hashlib.sha256(
            json.dumps(resolved, sort_keys=True, default=str).encode()
        ).hexdigest()
        return cls(
            command=command,
            config_digest=config_digest,
            input_digests={p: _file_digest(p) for p in input_paths},
            model_digest=model_digest,
            extractor_version=extractor_version,
            seed=seed,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    def emit(self, path: str | None) -> None:
        doc = json.dumps(self.__dict__, sort_keys=True)
        if path:
            Path(path).write_text(doc + "\n", encoding="utf-8")
        else:
            print(doc, file=sys.stderr)


def _endpoint_from_args(args: argparse.Namespace) -> ExtractorEndpoint | None:
    url = args.endpoint or os.environ.get(ENDPOINT_ENV_VAR)
    if not url:
        return None
    return ExtractorEndpoint(base_url=url, max_batch=args.max_batch)


def _open_cache(args: argparse.Namespace) -> FeatureStore:
    return FeatureStore(args.cache, allow_mixed=args.allow_mixed)


def _load_rows(paths: list[str]) -> list[CanonicalDaRow]:
    rows: list[CanonicalDaRow] = []
    for path in paths:
        rows.extend(parse_canonical_tsv(path))
    return rows


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        hidden_width=args.hidden_width,
        log_perplexity=not args.raw_perplexity,
    )


def _render_table(reports: dict[str, EvalReport], title: str) -> str:
    """Fixed-width table: one row per metric, per-language columns plus AVG."""
    langs: list[str] = sorted({lang for r in reports.values() for lang in r.per_lang})
    columns = langs + ["AVG"]
    width = max(12, *(len(c) + 2 for c in columns)) if columns else 12
    name_width = max(14, *(len(n) + 2 for n in reports)) if reports else 14

    def fmt_row(name: str, cells: list[str]) -> str:
        return name.ljust(name_width) + "".join(c.rjust(width) for c in cells)

    lines = [title, fmt_row("metric", columns)]
    first = next(iter(reports.values()))
    counts = [
        f"n={first.per_lang[lang].n}" if lang in first.per_lang else "-"
        for lang in langs
    ] + [f"n={first.aggregate.n}"]
    lines.append(fmt_row("", counts))
    for name, report in reports.items():
        cells = [
            f"{report.per_lang[lang].statistic:.3f}" if lang in report.per_lang else "-"
            for lang in langs
        ]
        cells.append(f"{report.aggregate.statistic:.3f}")
        lines.append(fmt_row(name, cells))
    return "\n".join(lines)


def _reports_to_json(reports: dict[str, EvalReport]) -> dict:
    return {
        name: {
            "statistic_kind": r.statistic_kind,
            "per_lang": {
                lang: {"statistic": e.statistic, "n": e.n}
                for lang, e in sorted(r.per_lang.items())
            },
            "aggregate": {"statistic": r.aggregate.statistic, "n": r.aggregate.n},
        }
        for name, r in reports.items()
    }


def _write_json(path: str, doc: dict) -> None:
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def _baseline_scores(pair: SentencePair) -> tuple[float, float]:
    cand = tokenize(pair.candidate)
    ref = tokenize(pair.reference)
    return sentence_bleu(cand, [ref]), rouge_l(cand, ref)


def _score_pairs(
    model: TrainedAggregator, pairs: list[SentencePair], args: argparse.Namespace
) -> tuple[list[float], list[float], FeatureStore]:
    """Calibrated and raw model scores for each pair, cache-first."""
    cache = _open_cache(args)
    batch = score_batch(
        model,
        pairs,
        _endpoint_from_args(args),
        cache,
        offline=args.offline,
        self_anchor=args.self_anchor,
    )
    if batch.errors:
        first = batch.errors[0]
        raise ExtractionError(
            f"{len(batch.errors)} of {len(pairs)} pairs failed to score; "
            f"first failure (item {first.index}): {first.message}"
        )
    cal = [r.score for r in batch.results]  # type: ignore[union-attr]
    raw = [r.raw for r in batch.results]  # type: ignore[union-attr]
    return cal, raw, cache


def cmd_extract(args: argparse.Namespace) -> int:
    rows = _load_rows(args.pairs)
    pairs: list[SentencePair] = []
    seen: set[str] = set()
    for row in rows:
        for pair in (
            SentencePair(row.reference, row.candidate),
            SentencePair(row.reference, row.reference),
        ):
            digest = pair_digest(pair.reference, pair.candidate)
            if digest not in seen:
                seen.add(digest)
                pairs.append(pair)
    if args.no_self:
        pairs = [p for p in pairs if p.reference != p.candidate]

    cache = _open_cache(args)
    before = len(cache)
    extract_features(pairs, _endpoint_from_args(args), cache, offline=args.offline)
    fetched = len(cache) - before
    print(f"{fetched} fetched, {len(cache)} cached")
    manifest = RunManifest.create(
        "extract", args, args.pairs, extractor_version=cache.extractor_version
    )
    manifest.emit(args.manifest)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    rows = _load_rows(args.data)
    split = build_split(rows, args.test_dataset, require_test=False)
    cache = _open_cache(args)
    records = extract_features(
        [jp.pair for jp in split.train],
        _endpoint_from_args(args),
        cache,
        offline=args.offline,
    )
    dataset = [
        (record.features, jp.human_score)
        for record, jp in zip(records, split.train)
    ]
    mask = FeatureMask.parse(args.mask)
    kind = {"nn": "mlp", "lreg": "linreg"}[args.kind]
    config = _train_config(args)
    model = train(dataset, mask, kind, config)
    save_model(model, args.out)
    print(
        f"trained {kind} ({mask.label()}) on {len(dataset)} pairs "
        f"(test={args.test_dataset}); model -> {args.out}"
    )
    if isinstance(model.params, LinearParams):
        coeffs = ", ".join(f"{w:.10g}" for w in model.params.w)
        print(f"coefficients: [{coeffs}], intercept: {model.params.b:.10g}")
    manifest = RunManifest.create(
        "train",
        args,
        list(args.data),
        model_digest=model.digest(),
        extractor_version=cache.extractor_version,
        seed=args.seed,
    )
    manifest.emit(args.manifest)
    return EXIT_OK


def _eval_pointwise(
    model: TrainedAggregator,
    rows: list[CanonicalDaRow],
    args: argparse.Namespace,
    statistic: str,
) -> tuple[dict[str, EvalReport], list[tuple[float, float, float, float]]]:
    """Per-row scoring shared by the pearson and tau_b canonical protocols.

    Returns reports plus scatter rows (human, nubia, bleu, rouge_l).
    """
    pairs = [SentencePair(r.reference, r.candidate) for r in rows]
    cal, raw, _ = _score_pairs(model, pairs, args)
    evaluate = evaluate_da if statistic == "pearson" else evaluate_tau_b
    reports = {
        "nubia": evaluate(
            ScoredSegment(r.lang_pair, r.human_score / 100.0, c)
            for r, c in zip(rows, cal)
        ),
        "nubia-raw": evaluate(
            ScoredSegment(r.lang_pair, r.human_score / 100.0, c)
            for r, c in zip(rows, raw)
        ),
    }
    baselines = [_baseline_scores(p) for p in pairs]
    if args.baselines:
        reports["bleu"] = evaluate(
            ScoredSegment(r.lang_pair, r.human_score / 100.0, b)
            for r, (b, _) in zip(rows, baselines)
        )
        reports["rouge-l"] = evaluate(
            ScoredSegment(r.lang_pair, r.human_score / 100.0, g)
            for r, (_, g) in zip(rows, baselines)
        )
    scatter = [
        (r.human_score / 100.0, c, b, g)
        for r, c, (b, g) in zip(rows, cal, baselines)
    ]
    return reports, scatter


def _eval_darr(
    model: TrainedAggregator, rows: list[CanonicalDaRow], args: argparse.Namespace
) -> tuple[dict[str, EvalReport], list[tuple[float, float, float, float]]]:
    groups = rows_to_da_groups(rows)
    ranked = da_to_relative_ranking(groups)
    pairs = [SentencePair(r.reference, r.candidate) for r in rows]
    cal, raw, _ = _score_pairs(model, pairs, args)
    baselines = [_baseline_scores(p) for p in pairs]

    def score_map(values: list[float]) -> dict[tuple[int, str], float]:
        return {
            (row.segment_id, row.candidate): v for row, v in zip(rows, values)
        }

    reports = {
        "nubia": evaluate_darr(ranked, score_map(cal)),
        "nubia-raw": evaluate_darr(ranked, score_map(raw)),
    }
    if args.baselines:
        reports["bleu"] = evaluate_darr(ranked, score_map([b for b, _ in baselines]))
        reports["rouge-l"] = evaluate_darr(ranked, score_map([g for _, g in baselines]))
    scatter = [
        (r.human_score / 100.0, c, b, g)
        for r, c, (b, g) in zip(rows, cal, baselines)
    ]
    return reports, scatter


def _eval_flickr(
    model: TrainedAggregator, args: argparse.Namespace
) -> tuple[dict[str, EvalReport], list[tuple[float, float, float, float]]]:
    judgments = parse_flickr_judgments(args.flickr_expert, args.flickr_captions)
    # Multi-reference scoring: best calibrated score over the 5 gold captions.
    flat_pairs = [
        SentencePair(ref, j.candidate_caption)
        for j in judgments
        for ref in j.references
    ]
    cal, raw, _ = _score_pairs(model, flat_pairs, args)
    lang = "flickr8k"
    items_cal, items_raw, scatter = [], [], []
    for i, j in enumerate(judgments):
        window = slice(5 * i, 5 * i + 5)
        best_cal = max(cal[window])
        best_raw = max(raw[window])
        cand = tokenize(j.candidate_caption)
        refs = [tokenize(r) for r in j.references]
        bleu = sentence_bleu(cand, refs)
        rouge = max(rouge_l(cand, ref) for ref in refs)
        items_cal.append(ScoredSegment(lang, j.human_target, best_cal))
        items_raw.append(ScoredSegment(lang, j.human_target, best_raw))
        scatter.append((j.human_target, best_cal, bleu, rouge))
    reports = {
        "nubia": evaluate_tau_b(items_cal),
        "nubia-raw": evaluate_tau_b(items_raw),
    }
    if args.baselines:
        reports["bleu"] = evaluate_tau_b(
            ScoredSegment(lang, s.human_score, row[2])
            for s, row in zip(items_cal, scatter)
        )
        reports["rouge-l"] = evaluate_tau_b(
            ScoredSegment(lang, s.human_score, row[3])
            for s, row in zip(items_cal, scatter)
        )
    return reports, scatter


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    inputs = [args.model]
    flickr = bool(args.flickr_expert or args.flickr_captions)
    if flickr and not (args.flickr_expert and args.flickr_captions):
        raise DataError("--flickr-expert and --flickr-captions go together")
    if flickr and args.test:
        raise DataError("pass either --test or the Flickr inputs, not both")
    if not flickr and not args.test:
        raise DataError("missing --test file")

    if flickr:
        if args.protocol != "tau_b":
            raise DataError("Flickr judgments evaluate with --protocol tau_b")
        reports, scatter = _eval_flickr(model, args)
        inputs += [args.flickr_expert, args.flickr_captions]
    else:
        rows = parse_canonical_tsv(args.test)
        inputs.append(args.test)
        if args.protocol == "darr":
            reports, scatter = _eval_darr(model, rows, args)
        else:
            reports, scatter = _eval_pointwise(model, rows, args, args.protocol)

    print(_render_table(reports, f"protocol: {args.protocol}"))
    if args.dump_scatter:
        lines = ["human_score,nubia,bleu,rouge_l"]
        lines += [f"{h!r},{n!r},{b!r},{g!r}" for h, n, b, g in scatter]
        Path(args.dump_scatter).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.json:
        _write_json(args.json, {"protocol": args.protocol, "metrics": _reports_to_json(reports)})
    manifest = RunManifest.create(
        "eval", args, inputs, model_digest=model.digest()
    )
    manifest.emit(args.manifest)
    return EXIT_OK


def _parse_masks(spec: str) -> list[FeatureMask]:
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1]
        if name != "ablation":
            raise ValueError(f"unknown mask preset: {name!r} (try preset:ablation)")
        return [FeatureMask.parse(m) for m in ABLATION_PRESET]
    return [FeatureMask.parse(part) for part in spec.split(";") if part.strip()]


def cmd_ablate(args: argparse.Namespace) -> int:
    rows = _load_rows(args.data)
    split = build_split(rows, args.test_dataset)
    cache = _open_cache(args)
    endpoint = _endpoint_from_args(args)

    train_records = extract_features(
        [jp.pair for jp in split.train], endpoint, cache, offline=args.offline
    )
    test_records = extract_features(
        [jp.pair for jp in split.test], endpoint, cache, offline=args.offline
    )
    self_records = extract_features(
        [SentencePair(jp.pair.reference, jp.pair.reference) for jp in split.test],
        endpoint,
        cache,
        offline=args.offline,
    )
    dataset = AblationDataset(
        train=tuple(
            (rec.features, jp.human_score)
            for rec, jp in zip(train_records, split.train)
        ),
        test=tuple(
            AblationItem(
                features=rec.features,
                human_score=jp.human_score,
                lang_pair=jp.lang_pair,
                self_features=self_rec.features,
            )
            for rec, self_rec, jp in zip(test_records, self_records, split.test)
        ),
        protocol="pearson",
    )
    masks = _parse_masks(args.masks)
    kind = {"nn": "mlp", "lreg": "linreg"}[args.kind]
    reports, errors = run_ablation(dataset, masks, kind, _train_config(args))

    ordered = {}
    for mask in masks:
        label = mask.label()
        if label in reports:
            ordered[label] = reports[label]
    if ordered:
        print(_render_table(ordered, f"ablation ({kind}, test={args.test_dataset})"))
    for label, error in errors.items():
        print(f"mask {label}: FAILED: {error}", file=sys.stderr)
    if args.json:
        _write_json(
            args.json,
            {
                "kind": kind,
                "test_dataset": args.test_dataset,
                "reports": _reports_to_json(ordered),
                "errors": {label: str(e) for label, e in errors.items()},
            },
        )
    manifest = RunManifest.create(
        "ablate", args, list(args.data), seed=args.seed,
        extractor_version=cache.extractor_version,
    )
    manifest.emit(args.manifest)
    if errors:
        raise next(iter(errors.values()))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cache", required=True, help="feature cache JSONL path")
    p.add_argument(
        "--endpoint",
        default=None,
        help=f"extractor base URL (default: ${ENDPOINT_ENV_VAR})",
    )
    p.add_argument("--offline", action="store_true", help="never touch the network")
    p.add_argument(
        "--allow-mixed",
        action="store_true",
        help="accept cache records from other extractor versions",
    )
    p.add_argument("--max-batch", type=int, default=32)
    p.add_argument("--manifest", default=None, help="write the run manifest here")
    p.add_argument("--config", default=None, help="JSON file of flag defaults")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=("nn", "lreg"), default="nn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--hidden-width", type=int, default=10)
    p.add_argument(
        "--raw-perplexity",
        action="store_true",
        help="feed raw perplexities instead of their natural log",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metricforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[], help="warm the feature cache")
    p.add_argument("--pairs", action="append", required=True, help="canonical TSV")
    p.add_argument(
        "--no-self",
        action="store_true",
        help="skip the (reference, reference) self pairs needed for calibration",
    )
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit an aggregator on earlier-year judgments")
    p.add_argument("--data", action="append", required=True, help="canonical TSV")
    p.add_argument("--test-dataset", required=True, help="held-out dataset tag")
    p.add_argument("--mask", default="SS,LI,SI,LEN", help="feature groups, e.g. SS,LI,SI")
    p.add_argument("--out", required=True, help="model JSON output path")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="correlate a model against human judgments")
    p.add_argument("--model", required=True)
    p.add_argument("--test", default=None, help="canonical TSV")
    p.add_argument("--protocol", choices=("pearson", "darr", "tau_b"), default="pearson")
    p.add_argument("--baselines", action="store_true", help="add BLEU and ROUGE-L rows")
    p.add_argument("--dump-scatter", default=None, help="write per-item scores CSV")
    p.add_argument("--json", default=None, help="write the report as JSON")
    p.add_argument("--flickr-expert", default=None, help="expert judgments file")
    p.add_argument("--flickr-captions", default=None, help="caption id/text file")
    p.add_argument(
        "--self-anchor",
        choices=("reference", "candidate"),
        default="reference",
        help="which side's self-score calibrates the output",
    )
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate one model per feature subset")
    p.add_argument("--data", action="append", required=True, help="canonical TSV")
    p.add_argument("--test-dataset", required=True)
    p.add_argument(
        "--masks",
        default="preset:ablation",
        help="semicolon-separated masks (e.g. 'SS;SS,LI') or preset:ablation",
    )
    p.add_argument("--json", default=None, help="write reports as JSON")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise DataError(f"{args.config}: config must be a JSON object")
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise DataError(f"{args.config}: unknown option {key!r}")
        if getattr(args, attr) in (None, False):
            setattr(args, attr, value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config_file(args)
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTRACTION
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MetricForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
