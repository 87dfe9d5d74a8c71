"""Agreement tables and intra-rater consistency from yes/no rating logs.

A rater agrees with a reference annotator when their answer matches the
answer implied by the item's category: BOTH implies yes, NONE implies no,
and the single-annotator categories imply yes exactly for that annotator.
Category averages pool raw counts across raters (sum of agreements over sum
of totals) before rounding to a whole percent; for a balanced design this
equals the mean of per-rater percentages, and it stays robust when raters
answered different numbers of items.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .patches import CATEGORIES, RatingItem

ANSWERS = ("yes", "no")
DEFAULT_ANNOTATORS = ("A1", "A2")


@dataclass(frozen=True)
class RatingResponse:
    """One rater's answer to one item, stamped at arrival time."""

    rater_id: str
    item_id: str
    answer: str
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.rater_id or not self.item_id:
            raise ValueError("rater_id and item_id must be nonempty")
        if self.answer not in ANSWERS:
            raise ValueError(f"answer must be one of {ANSWERS}, got {self.answer!r}")
        object.__setattr__(self, "timestamp", float(self.timestamp))


def implied_answer(category: str, reference: str, annotators=DEFAULT_ANNOTATORS) -> str:
    """The reference annotator's own answer to an item of this category."""
    first, second = annotators
    if reference not in (first, second):
        raise ValueError(f"reference {reference!r} is not one of {annotators}")
    if category == "BOTH":
        return "yes"
    if category == "NONE":
        return "no"
    if category == "A1_ONLY":
        return "yes" if reference == first else "no"
    if category == "A2_ONLY":
        return "yes" if reference == second else "no"
    raise ValueError(f"unknown category {category!r}")


def _natural_key(text: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", text)]


@dataclass(frozen=True)
class AgreementTable:
    """Per-category, per-rater agreement counts against one reference.

    counts[category][rater] = (agree, total) over base items only (probe
    duplicates never enter the tallies). average_pct pools counts across
    raters. Responses from the reference annotator themselves are split out
    into self_counts rather than mixed into the rater columns.
    """

    reference: str
    raters: tuple
    counts: dict
    average_pct: dict
    self_counts: dict = field(default_factory=dict)

    def pooled(self, category: str):
        agree = sum(self.counts[category].get(r, (0, 0))[0] for r in self.raters)
        total = sum(self.counts[category].get(r, (0, 0))[1] for r in self.raters)
        return agree, total


def first_response_wins(responses):
    """Drop all but the earliest-arriving response per (rater, item)."""
    seen = set()
    kept = []
    for resp in responses:
        key = (resp.rater_id, resp.item_id)
        if key in seen:
            continue
        seen.add(key)
        kept.append(resp)
    return kept


def agreement_table(
    responses,
    items,
    reference: str,
    annotators=DEFAULT_ANNOTATORS,
) -> AgreementTable:
    """Tally agreement with the reference annotator's implied answers."""
    by_id = {}
    for it in items:
        if isinstance(it, RatingItem):
            by_id[it.item_id] = it
        else:
            raise TypeError("items must be RatingItem instances")
    counts = {cat: {} for cat in CATEGORIES}
    self_counts = {cat: (0, 0) for cat in CATEGORIES}
    for resp in first_response_wins(responses):
        item = by_id.get(resp.item_id)
        if item is None:
            raise ValueError(f"response references unknown item {resp.item_id!r}")
        if item.duplicate_of is not None:
            continue
        agree = int(resp.answer == implied_answer(item.category, reference, annotators))
        if resp.rater_id == reference:
            a, t = self_counts[item.category]
            self_counts[item.category] = (a + agree, t + 1)
            continue
        a, t = counts[item.category].get(resp.rater_id, (0, 0))
        counts[item.category][resp.rater_id] = (a + agree, t + 1)

    raters = sorted(
        {r for per_cat in counts.values() for r in per_cat}, key=_natural_key
    )
    average_pct = {}
    for cat in CATEGORIES:
        agree = sum(v[0] for v in counts[cat].values())
        total = sum(v[1] for v in counts[cat].values())
        average_pct[cat] = int(round(100.0 * agree / total)) if total else 0
    return AgreementTable(
        reference=reference,
        raters=tuple(raters),
        counts=counts,
        average_pct=average_pct,
        self_counts=self_counts,
    )


@dataclass(frozen=True)
class ConsistencyEntry:
    """One rater's self-consistency over duplicated probe items."""

    matched: int
    answered_pairs: int
    excluded_pairs: int

    @property
    def ratio(self):
        if self.answered_pairs == 0:
            return None
        return self.matched / self.answered_pairs


def intra_rater_consistency(responses, items) -> dict:
    """Fraction of duplicate pairs each rater answered the same way twice.

    A pair counts only when the rater answered both the base item and its
    duplicate; pairs with either side unanswered are excluded and counted.
    """
    pairs = [(it.duplicate_of, it.item_id) for it in items if it.duplicate_of]
    answers = {}
    for resp in first_response_wins(responses):
        answers[(resp.rater_id, resp.item_id)] = resp.answer
    raters = sorted({r for r, _ in answers}, key=_natural_key)
    out = {}
    for rater in raters:
        matched = answered = excluded = 0
        for base_id, dup_id in pairs:
            first = answers.get((rater, base_id))
            second = answers.get((rater, dup_id))
            if first is None or second is None:
                excluded += 1
                continue
            answered += 1
            matched += int(first == second)
        out[rater] = ConsistencyEntry(matched, answered, excluded)
    return out


def agreement_csv_text(table: AgreementTable) -> str:
    """The agreement table as CSV text: one row per category, one column
    per rater holding agree counts, and a pooled whole-percent average."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", *table.raters, "average_pct"])
    for cat in CATEGORIES:
        row = [cat]
        for rater in table.raters:
            row.append(table.counts[cat].get(rater, (0, 0))[0])
        row.append(table.average_pct[cat])
        writer.writerow(row)
    return buf.getvalue()


def export_agreement_csv(table: AgreementTable, path) -> None:
    """Write agreement_csv_text(table) to a file, byte-deterministic."""
    Path(path).write_text(agreement_csv_text(table), encoding="utf-8")


def response_to_json(resp: RatingResponse) -> str:
    return json.dumps(
        {
            "rater_id": resp.rater_id,
            "item_id": resp.item_id,
            "answer": resp.answer,
            "timestamp": resp.timestamp,
        },
        sort_keys=True,
    )


def response_from_json(line: str) -> RatingResponse:
    obj = json.loads(line)
    return RatingResponse(
        rater_id=obj["rater_id"],
        item_id=obj["item_id"],
        answer=obj["answer"],
        timestamp=obj.get("timestamp", 0.0),
    )


def read_response_log(path) -> list:
    """Read a JSONL response log, one response per line, in arrival order.

    A trailing partial line (from a crash mid-write) is ignored.
    """
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            out.append(response_from_json(line))
        except (json.JSONDecodeError, KeyError):
            continue
    return out


def append_response_log(path, resp: RatingResponse, fileobj=None) -> None:
    """Append one response line and flush it to disk before returning."""
    if fileobj is not None:
        fileobj.write(response_to_json(resp) + "\n")
        fileobj.flush()
        os.fsync(fileobj.fileno())
        return
    with open(path, "a", encoding="utf-8") as f:
        f.write(response_to_json(resp) + "\n")
        f.flush()
        os.fsync(f.fileno())
