"""On-disk data formats: concept banks, dataset manifests, and binary matrices.

All loaders validate invariants on the way in; everything returned is meant to
be treated as immutable and is safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

MATRIX_MAGIC = "WISEMAT1"

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
_UNIT_NORM_TOL = 1e-5


# ---------------------------------------------------------------------------
# Concept bank
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Concept:
    """One nameable visual concept plus its verbalization templates.

    Templates may contain a single ``{}`` slot which is filled with the
    concept name at render time; templates without a slot are used verbatim.
    """

    id: int
    name: str
    positive_template: str
    negative_template: str
    question_template: str
    answer_text: str

    def _fill(self, template: str) -> str:
        return template.replace("{}", self.name)

    def render_positive(self) -> str:
        return self._fill(self.positive_template)

    def render_negative(self) -> str:
        return self._fill(self.negative_template)

    def render_question(self) -> str:
        return self._fill(self.question_template)

    def render_answer(self) -> str:
        return self._fill(self.answer_text)


@dataclass(frozen=True)
class ConceptBank:
    """Ordered concept set; ids are dense 0..M-1 and index the list."""

    concepts: tuple[Concept, ...]

    def __post_init__(self) -> None:
        ids = [c.id for c in self.concepts]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate concept ids: {dupes}")
        if ids != list(range(len(ids))):
            raise ValidationError(
                f"concept ids must be dense 0..{len(ids) - 1}, got {ids}"
            )
        for c in self.concepts:
            for fname in ("positive_template", "negative_template",
                          "question_template", "answer_text"):
                if not getattr(c, fname):
                    raise ValidationError(f"concept {c.id}: empty {fname}")

    @property
    def bank_size(self) -> int:
        return len(self.concepts)

    def __len__(self) -> int:
        return len(self.concepts)

    def __getitem__(self, concept_id: int) -> Concept:
        return self.concepts[concept_id]


_CONCEPT_FIELDS = ("id", "name", "positive_template", "negative_template",
                   "question_template", "answer_text")


def load_concept_bank(path: str | Path) -> ConceptBank:
    """Load a line-delimited concept bank; one JSON object per line."""
    path = Path(path)
    concepts = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: bad concept record: {exc}") from exc
            missing = [f for f in _CONCEPT_FIELDS if f not in obj]
            if missing:
                raise ParseError(f"{path}:{lineno}: missing fields {missing}")
            concepts.append(Concept(**{f: obj[f] for f in _CONCEPT_FIELDS}))
    # sort by id so file order does not matter; density is validated after
    concepts.sort(key=lambda c: c.id)
    return ConceptBank(tuple(concepts))


def save_concept_bank(bank: ConceptBank, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for c in bank.concepts:
            fh.write(json.dumps({f: getattr(c, f) for f in _CONCEPT_FIELDS},
                                ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

_SPLITS = ("train", "test")


@dataclass
class DatasetManifest:
    """Instance ids, labels, class names and the train/test split marks."""

    instance_ids: list[str]
    labels: np.ndarray  # (n,) int64
    class_names: list[str]
    splits: list[str]   # per instance, "train" or "test"

    _per_class: dict[int, np.ndarray] = field(init=False, repr=False)
    _row_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.instance_ids)
        if not (len(self.labels) == len(self.splits) == n):
            raise ValidationError("manifest fields disagree on instance count")
        if len(set(self.instance_ids)) != n:
            raise ValidationError("duplicate instance ids in manifest")
        if n == 0:
            raise ValidationError("manifest has no instances")
        bad = [s for s in self.splits if s not in _SPLITS]
        if bad:
            raise ValidationError(f"unknown split markers: {sorted(set(bad))}")
        n_classes = len(self.class_names)
        if self.labels.min() < 0 or self.labels.max() >= n_classes:
            raise ValidationError(
                f"labels must lie in 0..{n_classes - 1}")
        train_mask = np.array([s == "train" for s in self.splits])
        for cls in range(n_classes):
            if not np.any(train_mask & (self.labels == cls)):
                raise ValidationError(
                    f"class {cls} ({self.class_names[cls]}) has no train instance")
        self._per_class = {
            cls: np.flatnonzero(self.labels == cls) for cls in range(n_classes)
        }
        self._row_of = {iid: i for i, iid in enumerate(self.instance_ids)}

    @property
    def n_instances(self) -> int:
        return len(self.instance_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def per_class_index(self) -> dict[int, np.ndarray]:
        """Partition of all instance rows by class label."""
        return self._per_class

    def row_of(self, instance_id: str) -> int:
        return self._row_of[instance_id]

    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(np.array([s == "train" for s in self.splits]))

    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(np.array([s == "test" for s in self.splits]))

    def class_train_indices(self, cls: int) -> np.ndarray:
        rows = self._per_class[cls]
        return rows[np.array([self.splits[i] == "train" for i in rows], dtype=bool)]


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load a manifest: a header line with class names, then one instance per line."""
    path = Path(path)
    ids: list[str] = []
    labels: list[int] = []
    splits: list[str] = []
    class_names: list[str] | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
            if class_names is None:
                if "class_names" not in obj:
                    raise ParseError(
                        f"{path}:{lineno}: first record must carry class_names")
                class_names = list(obj["class_names"])
                continue
            for fname in ("id", "label", "split"):
                if fname not in obj:
                    raise ParseError(f"{path}:{lineno}: missing field {fname!r}")
            ids.append(str(obj["id"]))
            labels.append(int(obj["label"]))
            splits.append(str(obj["split"]))
    if class_names is None:
        raise ParseError(f"{path}: empty manifest")
    return DatasetManifest(ids, np.array(labels, dtype=np.int64), class_names, splits)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"class_names": manifest.class_names},
                            ensure_ascii=False) + "\n")
        for iid, label, split in zip(manifest.instance_ids,
                                     manifest.labels.tolist(), manifest.splits):
            fh.write(json.dumps({"id": iid, "label": label, "split": split},
                                ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Binary matrix container (text header + raw little-endian payload)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixFile:
    data: np.ndarray     # 2-D, dtype '<f4' or 'u1'
    dtype_name: str      # "f32" | "u8"
    normalized: bool


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-per-item embedding block; ``kind`` tags image vs concept rows."""

    data: np.ndarray     # (rows, dim) float32
    kind: str            # "image" | "concept"
    normalized: bool

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _payload_path(path: Path) -> Path:
    return path.with_name(path.name + ".bin")


def write_matrix(path: str | Path, array: np.ndarray, *,
                 normalized: bool = False) -> None:
    """Write the 2-file pair: text header at ``path``, payload at ``path.bin``."""
    path = Path(path)
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {array.shape}")
    if array.dtype == np.uint8:
        dtype_name = "u8"
        payload = np.ascontiguousarray(array, dtype="u1")
    else:
        dtype_name = "f32"
        payload = np.ascontiguousarray(array, dtype="<f4")
    rows, cols = array.shape
    header = (f"{MATRIX_MAGIC}\nrows {rows}\ncols {cols}\n"
              f"dtype {dtype_name}\nnormalized {int(normalized)}\n")
    path.write_text(header, encoding="ascii")
    _payload_path(path).write_bytes(payload.tobytes())


def load_matrix(path: str | Path, expected_cols: int | None = None) -> MatrixFile:
    """Load and validate a matrix pair written by :func:`write_matrix`."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except FileNotFoundError:
        raise ParseError(f"{path}: no such matrix header") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path}: header is not ASCII text") from None
    if not lines or lines[0] != MATRIX_MAGIC:
        raise ParseError(f"{path}:1: bad magic, expected {MATRIX_MAGIC!r}")
    fields: dict[str, str] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'key value', got {line!r}")
        fields[parts[0]] = parts[1]
    for key in ("rows", "cols", "dtype", "normalized"):
        if key not in fields:
            raise ParseError(f"{path}: header missing {key!r}")
    try:
        rows, cols = int(fields["rows"]), int(fields["cols"])
    except ValueError as exc:
        raise ParseError(f"{path}: non-integer shape in header") from exc
    if rows < 0 or cols < 0:
        raise ParseError(f"{path}: negative shape in header")
    dtype_name = fields["dtype"]
    if dtype_name not in _DTYPES:
        raise ParseError(f"{path}: unknown dtype {dtype_name!r}")
    if fields["normalized"] not in ("0", "1"):
        raise ParseError(f"{path}: normalized flag must be 0 or 1")
    normalized = fields["normalized"] == "1"

    dtype = _DTYPES[dtype_name]
    try:
        raw = _payload_path(path).read_bytes()
    except FileNotFoundError:
        raise ParseError(f"{path}: payload file {_payload_path(path).name} "
                         f"is missing") from None
    expected_len = rows * cols * dtype.itemsize
    if len(raw) != expected_len:
        raise ValidationError(
            f"{path}: payload holds {len(raw)} bytes, header claims {expected_len}")
    data = np.frombuffer(raw, dtype=dtype).reshape(rows, cols)
    if dtype_name == "f32" and not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: non-finite entries")
    if expected_cols is not None and cols != expected_cols:
        raise ValidationError(f"{path}: expected {expected_cols} columns, got {cols}")
    if normalized:
        norms = np.linalg.norm(data.astype(np.float64), axis=1)
        if rows and np.max(np.abs(norms - 1.0)) > _UNIT_NORM_TOL:
            raise ValidationError(
                f"{path}: normalized flag set but row norms stray from 1")
    return MatrixFile(data=data, dtype_name=dtype_name, normalized=normalized)


def load_score_matrix(path: str | Path, expected_cols: int | None = None) -> np.ndarray:
    mat = load_matrix(path, expected_cols)
    if mat.dtype_name != "f32":
        raise ValidationError(f"{path}: score matrix must be f32")
    return mat.data


def load_annotation_matrix(path: str | Path,
                           expected_cols: int | None = None) -> np.ndarray:
    mat = load_matrix(path, expected_cols)
    if mat.dtype_name != "u8":
        raise ValidationError(f"{path}: annotation matrix must be u8")
    if mat.data.size and mat.data.max() > 1:
        bad = int(mat.data.max())
        raise ValidationError(f"{path}: non-binary annotation entry {bad}")
    return mat.data


def load_embedding_matrix(path: str | Path, kind: str,
                          expected_dim: int | None = None) -> EmbeddingMatrix:
    if kind not in ("image", "concept"):
        raise ValidationError(f"unknown embedding kind {kind!r}")
    mat = load_matrix(path, expected_dim)
    if mat.dtype_name != "f32":
        raise ValidationError(f"{path}: embeddings must be f32")
    return EmbeddingMatrix(data=mat.data, kind=kind, normalized=mat.normalized)
