"""Compose, verbalize, and parse step-by-step rationales.

Rendered text follows a fixed three-part shape so that extraction can invert
rendering exactly: a positive sentence, an optional negative sentence, and a
closing answer sentence. Clause templates must not contain the literal
separator "; " or the section lead phrases.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import ConceptBank, DatasetManifest
from .errors import ConfigError, RenderError
from .instance_trees import InstancePaths

log = logging.getLogger(__name__)

POSITIVE_LEAD = "The image shows that "
NEGATIVE_LEAD = "It can be observed that the {subject} lacks the following features: "
CLOSING = "Therefore, the {subject} in the image is {answer}."
CLAUSE_SEP = "; "

_NEGATIVE_ANCHOR = "It can be observed that the "
_NEGATIVE_ANCHOR_TAIL = " lacks the following features: "
_CLOSING_ANCHOR = "Therefore, the "

VARIANTS = ("wise", "shuffled", "captioning", "instance_only", "category_only")

POSITIVE = "+"
NEGATIVE = "-"


@dataclass(frozen=True)
class RenderTemplates:
    """Per-dataset rendering knobs: the subject noun and the task prompt."""

    subject: str = "object"
    prompt: str = ""

    def task_prompt(self) -> str:
        return self.prompt or f"Identify the {self.subject} in the image."


@dataclass(frozen=True)
class Step:
    concept_id: int
    polarity: str             # POSITIVE or NEGATIVE
    clause: str = ""


@dataclass
class MCoTRecord:
    """One rationale: ordered polarity-tagged steps plus rendered text."""

    instance_id: str
    answer: str
    steps: list[Step]
    complete: bool
    vacuous: bool = False
    prompt: str = ""
    rationale_text: str = ""

    @property
    def step_count(self) -> int:
        return len(self.steps)

    def positive_steps(self) -> list[Step]:
        return [s for s in self.steps if s.polarity == POSITIVE]

    def negative_steps(self) -> list[Step]:
        return [s for s in self.steps if s.polarity == NEGATIVE]


def compose_mcot(paths: InstancePaths, answer: str) -> MCoTRecord:
    """Concatenate the affirmation chain and the elimination chain."""
    steps = ([Step(c, POSITIVE) for c in paths.affirmation]
             + [Step(c, NEGATIVE) for c in paths.elimination])
    vacuous = not steps
    if vacuous:
        log.warning("instance %s produced a vacuous rationale (no steps)",
                    paths.instance_id)
    return MCoTRecord(
        instance_id=paths.instance_id,
        answer=answer,
        steps=steps,
        complete=paths.complete,
        vacuous=vacuous,
    )


def verbalize(record: MCoTRecord, bank: ConceptBank,
              templates: RenderTemplates) -> MCoTRecord:
    """Render every step's clause and assemble the rationale paragraph."""
    rendered_steps = []
    for step in record.steps:
        if not 0 <= step.concept_id < bank.bank_size:
            raise RenderError(f"no concept {step.concept_id} in bank")
        concept = bank[step.concept_id]
        clause = (concept.render_positive() if step.polarity == POSITIVE
                  else concept.render_negative())
        if not clause:
            raise RenderError(f"concept {concept.name!r} renders empty clause")
        rendered_steps.append(replace(step, clause=clause))

    parts = []
    pos = [s.clause for s in rendered_steps if s.polarity == POSITIVE]
    neg = [s.clause for s in rendered_steps if s.polarity == NEGATIVE]
    if pos:
        parts.append(POSITIVE_LEAD + CLAUSE_SEP.join(pos) + ".")
    if neg:
        parts.append(NEGATIVE_LEAD.format(subject=templates.subject)
                     + CLAUSE_SEP.join(neg) + ".")
    parts.append(CLOSING.format(subject=templates.subject, answer=record.answer))

    out = replace_record(record)
    out.steps = rendered_steps
    out.prompt = templates.task_prompt()
    out.rationale_text = " ".join(parts)
    return out


def replace_record(record: MCoTRecord) -> MCoTRecord:
    return MCoTRecord(
        instance_id=record.instance_id,
        answer=record.answer,
        steps=list(record.steps),
        complete=record.complete,
        vacuous=record.vacuous,
        prompt=record.prompt,
        rationale_text=record.rationale_text,
    )


def _section_spans(text: str) -> tuple[str | None, str | None]:
    """Positive and negative clause blocks, located by the fixed anchors."""
    i_pos = text.find(POSITIVE_LEAD)
    i_neg = text.find(_NEGATIVE_ANCHOR, i_pos + 1 if i_pos >= 0 else 0)
    i_close = text.find(_CLOSING_ANCHOR, max(i_pos, i_neg) + 1)

    def end_after(start: int) -> int:
        later = [x for x in (i_neg, i_close) if x > start]
        return min(later) if later else len(text)

    pos_block = None
    if i_pos >= 0:
        pos_block = text[i_pos + len(POSITIVE_LEAD):end_after(i_pos)].strip()
    neg_block = None
    if i_neg >= 0:
        tail = text.find(_NEGATIVE_ANCHOR_TAIL, i_neg)
        if tail >= 0:
            neg_block = text[tail + len(_NEGATIVE_ANCHOR_TAIL):end_after(tail)].strip()
    return pos_block, neg_block


def _strip_period(block: str) -> str:
    return block[:-1].strip() if block.endswith(".") else block


def extract_clauses(rationale_text: str,
                    bank: ConceptBank) -> tuple[list[Step], list[str]]:
    """Invert :func:`verbalize`: recover ordered steps plus unmatched clauses."""
    pos_map = {c.render_positive(): c.id for c in bank.concepts}
    neg_map = {c.render_negative(): c.id for c in bank.concepts}

    steps: list[Step] = []
    unmatched: list[str] = []
    pos_block, neg_block = _section_spans(rationale_text)
    for block, mapping, polarity in ((pos_block, pos_map, POSITIVE),
                                     (neg_block, neg_map, NEGATIVE)):
        if not block:
            continue
        for clause in _strip_period(block).split(CLAUSE_SEP):
            clause = clause.strip()
            if not clause:
                continue
            if clause in mapping:
                steps.append(Step(mapping[clause], polarity, clause))
            else:
                unmatched.append(clause)
    return steps, unmatched


# ---------------------------------------------------------------------------
# Stage-1 concept QA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QARecord:
    instance_id: str
    question: str
    answer: str
    concept_id: int
    polarity: str = POSITIVE


def emit_concept_qa(annotations: np.ndarray, bank: ConceptBank,
                    manifest: DatasetManifest,
                    include_negative: bool = False) -> list[QARecord]:
    """One QA pair per positively annotated (instance, concept).

    ``include_negative`` additionally emits pairs for absent concepts, answered
    with the concept's negative clause; this is an extension beyond the
    affirmative default.
    """
    annotations = np.asarray(annotations)
    records = []
    for i, iid in enumerate(manifest.instance_ids):
        for m in np.flatnonzero(annotations[i] == 1):
            concept = bank[int(m)]
            records.append(QARecord(iid, concept.render_question(),
                                    concept.render_answer(), int(m)))
        if include_negative:
            for m in np.flatnonzero(annotations[i] == 0):
                concept = bank[int(m)]
                records.append(QARecord(iid, concept.render_question(),
                                        concept.render_negative(), int(m),
                                        polarity=NEGATIVE))
    return records


def save_qa_records(records: list[QARecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "image": r.instance_id,
                "question": r.question,
                "answer": r.answer,
                "concept_id": r.concept_id,
                "polarity": r.polarity,
            }, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Instruction-dataset emission
# ---------------------------------------------------------------------------

def shuffle_steps(record: MCoTRecord, rng: np.random.Generator) -> MCoTRecord:
    """Permute steps within each polarity section (sections cannot interleave
    in the rendered text, and a record's steps stay positives-first)."""
    out = replace_record(record)
    pos = record.positive_steps()
    neg = record.negative_steps()
    out.steps = ([pos[i] for i in rng.permutation(len(pos))]
                 + [neg[i] for i in rng.permutation(len(neg))])
    return out


def captioning_record(instance_id: str, answer: str,
                      instance_annotations: np.ndarray) -> MCoTRecord:
    """All present concepts in bank order; caption-style, not tree-guided."""
    steps = [Step(int(m), POSITIVE)
             for m in np.flatnonzero(np.asarray(instance_annotations) == 1)]
    return MCoTRecord(instance_id=instance_id, answer=answer, steps=steps,
                      complete=True, vacuous=not steps)


def write_instruction_dataset(records: list[MCoTRecord],
                              path: str | Path) -> None:
    """Line-delimited conversation records; see README for the field contract."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "image": r.instance_id,
                "conversations": [
                    {"from": "human", "value": r.prompt},
                    {"from": "gpt", "value": r.rationale_text},
                ],
                "answer": r.answer,
                "complete": r.complete,
            }, ensure_ascii=False) + "\n")


def check_variant(variant: str, seed: int | None) -> None:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
    if variant == "shuffled" and seed is None:
        raise ConfigError("variant 'shuffled' is stochastic and needs --seed")
