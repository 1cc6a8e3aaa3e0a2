"""Parsers for the canonical judgment TSV and Flickr8K caption judgments,
plus the year-based train/test split builder.

The canonical TSV is this toolkit's own exchange format; converters from
raw shared-task distributions are out of scope.  Header (tab-separated):

    dataset lang_pair segment_id system_id reference candidate human_score n_annotators
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import JudgedPair, SentencePair
from .errors import DataError, FormatError, IngestionError, JoinError, ParseError, SplitError
from .stats import DaEntry, DaSegmentGroup

DATASET_ORDER = ("wmt15", "wmt16", "wmt17", "wmt18", "wmt19")

CANONICAL_COLUMNS = (
    "dataset",
    "lang_pair",
    "segment_id",
    "system_id",
    "reference",
    "candidate",
    "human_score",
    "n_annotators",
)


@dataclass(frozen=True)
class CanonicalDaRow:
    """One direct-assessment judgment in the canonical exchange format."""

    dataset: str
    lang_pair: str
    segment_id: int
    system_id: str
    reference: str
    candidate: str
    human_score: float
    n_annotators: int


def _check_row(row: CanonicalDaRow, where: str) -> None:
    if row.dataset not in DATASET_ORDER:
        raise ParseError(f"{where}: unknown dataset {row.dataset!r}")
    parts = row.lang_pair.split("-")
    if len(parts) != 2 or not all(parts):
        raise ParseError(f"{where}: malformed lang_pair {row.lang_pair!r}")
    if parts[1] != "en":
        raise ParseError(
            f"{where}: lang_pair {row.lang_pair!r} target is not English"
        )
    if not row.system_id:
        raise ParseError(f"{where}: empty system_id")
    if not row.reference.strip() or not row.candidate.strip():
        raise ParseError(f"{where}: empty reference or candidate")
    if not 0.0 <= row.human_score <= 100.0:
        raise ParseError(
            f"{where}: human_score {row.human_score} outside [0,100]"
        )
    if row.n_annotators < 1:
        raise ParseError(f"{where}: n_annotators must be >= 1")


def parse_canonical_tsv(path: str | Path) -> list[CanonicalDaRow]:
    """Strictly parse a canonical TSV file.

    Exactly eight tab-separated columns per row (so no embedded tabs);
    rows violating any field invariant are rejected with their line number.
    """
    path = Path(path)
    # records are separated by LF exactly; newline translation is off so
    # characters like NEL or U+2028 stay inside fields instead of
    # splitting a row apart
    with path.open(encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines == [""]:
        raise FormatError(f"{path}: empty file")
    if tuple(lines[0].split("\t")) != CANONICAL_COLUMNS:
        raise FormatError(
            f"{path}: bad header; expected {chr(9).join(CANONICAL_COLUMNS)!r}"
        )
    rows: list[CanonicalDaRow] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(CANONICAL_COLUMNS):
            raise ParseError(
                f"{path}:{lineno}: expected {len(CANONICAL_COLUMNS)} columns, "
                f"got {len(fields)}"
            )
        where = f"{path}:{lineno}"
        try:
            segment_id = int(fields[2])
        except ValueError:
            raise ParseError(f"{where}: column segment_id: not an integer") from None
        try:
            human_score = float(fields[6])
        except ValueError:
            raise ParseError(f"{where}: column human_score: not a number") from None
        try:
            n_annotators = int(fields[7])
        except ValueError:
            raise ParseError(f"{where}: column n_annotators: not an integer") from None
        row = CanonicalDaRow(
            dataset=fields[0],
            lang_pair=fields[1],
            segment_id=segment_id,
            system_id=fields[3],
            reference=fields[4],
            candidate=fields[5],
            human_score=human_score,
            n_annotators=n_annotators,
        )
        _check_row(row, where)
        rows.append(row)
    return rows


def write_canonical_tsv(rows: Iterable[CanonicalDaRow], path: str | Path) -> None:
    """Serialize rows; floats use repr so parse(write(rows)) == rows."""
    out = ["\t".join(CANONICAL_COLUMNS)]
    for i, row in enumerate(rows):
        for text in (row.dataset, row.lang_pair, row.system_id, row.reference, row.candidate):
            if "\t" in text or "\n" in text or "\r" in text:
                raise DataError(f"row {i}: embedded tab/newline in field {text!r}")
        out.append(
            "\t".join(
                (
                    row.dataset,
                    row.lang_pair,
                    str(row.segment_id),
                    row.system_id,
                    row.reference,
                    row.candidate,
                    repr(row.human_score),
                    str(row.n_annotators),
                )
            )
        )
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Split:
    train: tuple[JudgedPair, ...]
    test: tuple[JudgedPair, ...]


def _to_judged(row: CanonicalDaRow) -> JudgedPair:
    return JudgedPair(
        pair=SentencePair(row.reference, row.candidate),
        human_score=row.human_score / 100.0,
        lang_pair=row.lang_pair,
        segment_id=row.segment_id,
        system_id=row.system_id,
    )


def build_split(
    rows: Sequence[CanonicalDaRow], test_dataset: str, require_test: bool = True
) -> Split:
    """Test on one dataset, train on the union of strictly earlier years.

    wmt18 rows never enter training (they did not help), so testing on
    wmt19 trains on wmt15-17.  Human scores are rescaled to [0,1].
    Training-only callers pass ``require_test=False``.
    """
    if test_dataset not in DATASET_ORDER:
        raise SplitError(f"unknown test dataset: {test_dataset}")
    test_index = DATASET_ORDER.index(test_dataset)
    train_sets = {
        ds for ds in DATASET_ORDER[:test_index] if ds != "wmt18"
    }
    if not train_sets:
        raise SplitError(f"no training data precedes {test_dataset}")
    train = [_to_judged(r) for r in rows if r.dataset in train_sets]
    test = [_to_judged(r) for r in rows if r.dataset == test_dataset]
    if not train:
        raise SplitError(
            f"training partition for test={test_dataset} is empty "
            f"(need rows from {sorted(train_sets)})"
        )
    if require_test and not test:
        raise SplitError(f"test partition {test_dataset} is empty")
    return Split(train=tuple(train), test=tuple(test))


def rows_to_da_groups(rows: Sequence[CanonicalDaRow]) -> list[DaSegmentGroup]:
    """Group rows by (dataset, lang_pair, segment_id).

    Duplicate (segment, system) rows and mismatched references within a
    group are corpus corruption and raise :class:`IngestionError`.
    """
    grouped: dict[tuple[str, str, int], list[CanonicalDaRow]] = {}
    for row in rows:
        grouped.setdefault((row.dataset, row.lang_pair, row.segment_id), []).append(row)

    groups: list[DaSegmentGroup] = []
    for key in sorted(grouped):
        members = grouped[key]
        reference = members[0].reference
        seen_systems: set[str] = set()
        entries = []
        for row in members:
            if row.reference != reference:
                raise IngestionError(
                    f"segment {key}: conflicting references "
                    f"({reference!r} vs {row.reference!r})"
                )
            if row.system_id in seen_systems:
                raise IngestionError(
                    f"segment {key}: duplicate system {row.system_id!r}"
                )
            seen_systems.add(row.system_id)
            entries.append(
                DaEntry(
                    system_id=row.system_id,
                    candidate=row.candidate,
                    human_score=row.human_score,
                )
            )
        groups.append(
            DaSegmentGroup(
                lang_pair=key[1],
                segment_id=key[2],
                reference=reference,
                entries=tuple(entries),
            )
        )
    return groups


@dataclass(frozen=True)
class CaptionJudgment:
    """One expert-judged caption with its image's five gold references."""

    image_id: str
    candidate_caption: str
    references: tuple[str, ...]
    expert_scores: tuple[int, ...]

    def __post_init__(self):
        if len(self.references) != 5:
            raise DataError(
                f"caption judgment {self.image_id}: need exactly 5 references, "
                f"got {len(self.references)}"
            )
        if len(self.expert_scores) != 3:
            raise DataError(
                f"caption judgment {self.image_id}: need exactly 3 expert scores"
            )
        if any(not 1 <= s <= 4 for s in self.expert_scores):
            raise DataError(
                f"caption judgment {self.image_id}: scores outside [1,4]: "
                f"{self.expert_scores}"
            )

    @property
    def human_target(self) -> float:
        return sum(self.expert_scores) / 3.0


def parse_flickr_judgments(
    expert_path: str | Path, captions_path: str | Path
) -> list[CaptionJudgment]:
    """Join expert judgments to caption texts and gold references.

    Expert file rows: ``image_id caption_id score1 score2 score3``
    (whitespace-separated).  Captions file rows: ``caption_id<TAB>text``;
    an image's five gold captions carry ids ``<image_id>#0``..``#4``.
    """
    captions_path = Path(captions_path)
    captions: dict[str, str] = {}
    for lineno, line in enumerate(
        captions_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[1].strip():
            raise ParseError(f"{captions_path}:{lineno}: expected 'caption_id<TAB>text'")
        captions[parts[0].strip()] = parts[1].strip()

    expert_path = Path(expert_path)
    judgments: list[CaptionJudgment] = []
    for lineno, line in enumerate(
        expert_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ParseError(
                f"{expert_path}:{lineno}: expected image_id, caption_id and "
                f"3 scores; got {len(fields)} fields"
            )
        image_id, caption_id = fields[0], fields[1]
        try:
            scores = tuple(int(s) for s in fields[2:])
        except ValueError:
            raise ParseError(
                f"{expert_path}:{lineno}: scores must be integers"
            ) from None
        if caption_id not in captions:
            raise JoinError(
                f"{expert_path}:{lineno}: caption id {caption_id!r} not in "
                f"{captions_path}"
            )
        references = []
        for k in range(5):
            ref_id = f"{image_id}#{k}"
            if ref_id not in captions:
                raise JoinError(
                    f"{expert_path}:{lineno}: missing gold caption {ref_id!r}"
                )
            references.append(captions[ref_id])
        judgments.append(
            CaptionJudgment(
                image_id=image_id,
                candidate_caption=captions[caption_id],
                references=tuple(references),
                expert_scores=scores,
            )
        )
    return judgments
