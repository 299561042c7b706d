"""Reading response data and writing fitted parameters.

Input is jsonlines, one subject per line::

    {"subject_id": "pedro", "responses": {"q1": 1, "q2": 0}}

Blank lines are skipped and unanswered items are simply left out.

Output is ``best_parameters.json``::

    {"model": "1pl",
     "diff": [...], "disc": [...], "guess": [...], "lambda": [...],
     "ability": [...],
     "item_ids": {"0": "q1", ...}, "subject_ids": {"0": "pedro", ...},
     "scales": {"diff": [...], "ability": [...], ...}}

Item arrays follow item index order and ``ability`` follows subject index
order; the two id maps link positions back to ids. ``disc``, ``guess`` and
``lambda`` appear only for models that have them, ``scales`` only for
variational fits (standard deviations of the unconstrained guide, so
``disc`` is on the log scale and ``guess``/``lambda`` on the logit scale).
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import ResponsePatternDataset, build
from .errors import FormatError, ParseError
from .models import ItemParams

PARAMETERS_FILE = "best_parameters.json"
TRAINING_LOG_FILE = "training_log.csv"


def _iter_lines(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from enumerate(fh, start=1)
    else:
        yield from enumerate(source, start=1)


def iter_rows(source):
    """Yield ``(subject_id, responses)`` per non-blank line of a jsonlines source."""
    for lineno, line in _iter_lines(source):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=lineno, column=exc.colno) from None
        if not isinstance(record, dict):
            raise ParseError("expected a JSON object", line=lineno, column=1)
        if "subject_id" not in record or "responses" not in record:
            raise ParseError('object needs "subject_id" and "responses" fields', line=lineno)
        subject_id, responses = record["subject_id"], record["responses"]
        if not isinstance(subject_id, str):
            raise ParseError("subject_id must be a string", line=lineno)
        if not isinstance(responses, dict):
            raise ParseError("responses must be an object", line=lineno)
        for item_id, value in responses.items():
            if isinstance(value, bool) or value not in (0, 1):
                raise FormatError(f"line {lineno}: response to {item_id!r} must be 0 or 1, got {value!r}")
        yield lineno, subject_id, responses


def read_jsonlines(source) -> ResponsePatternDataset:
    """Read a dataset from a path or an iterable of lines."""
    rows, seen = [], {}
    for lineno, subject_id, responses in iter_rows(source):
        if subject_id in seen:
            raise FormatError(
                f"line {lineno}: duplicate subject id {subject_id!r} (first on line {seen[subject_id]})"
            )
        seen[subject_id] = lineno
        rows.append((subject_id, responses))
    if not rows:
        raise FormatError("no subjects")
    return build(rows)


def dumps_jsonlines(dataset: ResponsePatternDataset) -> str:
    buf = _io.StringIO()
    for subject_id, responses in dataset.to_rows():
        buf.write(json.dumps({"subject_id": subject_id, "responses": responses}, ensure_ascii=False))
        buf.write("\n")
    return buf.getvalue()


def write_jsonlines(dataset: ResponsePatternDataset, path) -> Path:
    path = Path(path)
    path.write_text(dumps_jsonlines(dataset), encoding="utf-8")
    return path


@dataclass
class ParametersDocument:
    model: str
    item_ids: list
    subject_ids: list
    diff: list
    ability: list
    disc: list | None = None
    guess: list | None = None
    lam: list | None = None
    scales: dict = field(default_factory=dict)

    def __post_init__(self):
        n_items, n_subj = len(self.item_ids), len(self.subject_ids)
        if len(set(self.item_ids)) != n_items or len(set(self.subject_ids)) != n_subj:
            raise FormatError("ids must be unique")
        for key, values in self._item_arrays():
            if len(values) != n_items:
                raise FormatError(f"{key} has {len(values)} entries for {n_items} items")
        if len(self.ability) != n_subj:
            raise FormatError(f"ability has {len(self.ability)} entries for {n_subj} subjects")
        for key, values in self.scales.items():
            expected = n_subj if key == "ability" else n_items
            if len(values) != expected:
                raise FormatError(f"scale {key} has {len(values)} entries, expected {expected}")

    def _item_arrays(self):
        for key in ("diff", "disc", "guess", "lam"):
            values = getattr(self, key)
            if values is not None:
                yield ("lambda" if key == "lam" else key), values

    def to_json(self) -> dict:
        out = {"model": self.model}
        for key, values in self._item_arrays():
            out[key] = [float(v) for v in values]
        out["ability"] = [float(v) for v in self.ability]
        out["item_ids"] = {str(k): v for k, v in enumerate(self.item_ids)}
        out["subject_ids"] = {str(k): v for k, v in enumerate(self.subject_ids)}
        if self.scales:
            out["scales"] = {k: [float(v) for v in vals] for k, vals in self.scales.items()}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ParametersDocument":
        try:
            item_ids = _positions(data["item_ids"], "item_ids")
            subject_ids = _positions(data["subject_ids"], "subject_ids")
            return cls(
                model=data["model"],
                item_ids=item_ids,
                subject_ids=subject_ids,
                diff=list(data["diff"]),
                ability=list(data["ability"]),
                disc=data.get("disc"),
                guess=data.get("guess"),
                lam=data.get("lambda"),
                scales=dict(data.get("scales", {})),
            )
        except KeyError as exc:
            raise FormatError(f"parameters document lacks {exc.args[0]!r}") from None

    def item_params(self) -> ItemParams:
        return ItemParams(self.diff, self.disc, self.guess, self.lam)


def _positions(mapping: dict, name: str) -> list:
    """Invert an ``{"index": id}`` map, checking indices form 0..n-1 exactly once."""
    try:
        indexed = {int(k): v for k, v in mapping.items()}
    except ValueError:
        raise FormatError(f"{name} keys must be integer positions") from None
    if sorted(indexed) != list(range(len(mapping))):
        raise FormatError(f"{name} positions must be 0..{len(mapping) - 1}, each once")
    return [indexed[k] for k in range(len(mapping))]


_SCALE_KEYS = {"difficulty": "diff", "discrimination": "disc", "guessing": "guess", "feasibility": "lambda", "ability": "ability"}


def document_from_params(dataset, items, abilities, model_name: str, scales=None) -> ParametersDocument:
    def tolist(arr):
        return None if arr is None else np.asarray(arr, float).tolist()

    named = {_SCALE_KEYS[k]: tolist(v) for k, v in (scales or {}).items()}
    ordered = {k: named[k] for k in ("diff", "disc", "guess", "lambda", "ability") if k in named}
    return ParametersDocument(
        model=model_name,
        item_ids=list(dataset.item_ids),
        subject_ids=list(dataset.subject_ids),
        diff=tolist(items.difficulty),
        ability=tolist(abilities.ability),
        disc=tolist(items.discrimination),
        guess=tolist(items.guessing),
        lam=tolist(items.feasibility),
        scales=ordered,
    )


def document_from_fit(dataset, report, model_name: str) -> ParametersDocument:
    return document_from_params(dataset, report.items, report.abilities, model_name, report.scales)


def dumps_parameters(doc: ParametersDocument) -> str:
    # floats are written with repr, the shortest text that round-trips exactly
    return json.dumps(doc.to_json(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def save_document(doc: ParametersDocument, path) -> Path:
    path = Path(path)
    path.write_text(dumps_parameters(doc), encoding="utf-8")
    return path


def write_parameters(doc: ParametersDocument, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return save_document(doc, out_dir / PARAMETERS_FILE)


def read_parameters(path) -> ParametersDocument:
    path = Path(path)
    if path.is_dir():
        path = path / PARAMETERS_FILE
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None
    return ParametersDocument.from_json(data)


def write_training_log(report, path) -> Path:
    """CSV with columns ``epoch,loss,seconds``."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "seconds"])
        for epoch, loss, sec in report.log_rows():
            writer.writerow([epoch, repr(float(loss)), f"{sec:.6f}"])
    return path
