import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from embed_extract.cli import main
from embed_extract.extract import ExtractionJob, run_extraction


def _write_bank(path: Path, n: int) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for m in range(n):
            fh.write(json.dumps({"id": m, "name": f"f{m}",
                                 "positive_template": "has {}",
                                 "negative_template": "lacks {}",
                                 "question_template": "is {}?",
                                 "answer_text": "yes"}) + "\n")


def _write_manifest(path: Path, ids, labels, class_names) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"class_names": class_names}) + "\n")
        for iid, label in zip(ids, labels):
            fh.write(json.dumps({"id": iid, "label": label,
                                 "split": "train"}) + "\n")


def _write_images(folder: Path, ids) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(5)
    for iid in ids:
        pixels = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
        Image.fromarray(pixels, "RGB").save(folder / f"{iid}.png")


@pytest.fixture()
def workspace(tmp_path):
    ids = [f"img{i}" for i in range(3)]
    _write_images(tmp_path / "images", ids)
    _write_bank(tmp_path / "bank.jsonl", 4)
    _write_manifest(tmp_path / "manifest.jsonl", ids, [0, 0, 1], ["a", "b"])
    return tmp_path, ids


def _job(base: Path, name="out", **kwargs) -> ExtractionJob:
    return ExtractionJob(image_dir=base / "images",
                         bank_path=base / "bank.jsonl",
                         out_dir=base / name,
                         manifest_path=base / "manifest.jsonl",
                         model="hash", **kwargs)


def test_shapes_follow_manifest_and_bank(workspace):
    base, ids = workspace
    written = run_extraction(_job(base))
    from conceptchain.corpus import load_embedding_matrix
    images = load_embedding_matrix(written["images"], "image")
    concepts = load_embedding_matrix(written["concepts"], "concept")
    assert images.rows == 3 and concepts.rows == 4
    assert images.dim == concepts.dim
    assert images.normalized and concepts.normalized


def test_row_norms_unit_within_tolerance(workspace):
    base, _ = workspace
    written = run_extraction(_job(base))
    from conceptchain.corpus import load_embedding_matrix
    for key, kind in (("images", "image"), ("concepts", "concept")):
        data = load_embedding_matrix(written[key], kind).data
        norms = np.linalg.norm(data.astype(np.float64), axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-5


def test_scores_stay_in_cosine_range(workspace):
    base, _ = workspace
    written = run_extraction(_job(base))
    from conceptchain.corpus import load_embedding_matrix
    from conceptchain.salience import compute_concept_scores
    images = load_embedding_matrix(written["images"], "image")
    concepts = load_embedding_matrix(written["concepts"], "concept")
    scores = compute_concept_scores(images, concepts)
    assert scores.shape == (3, 4)
    assert np.all(scores >= -1.0 - 1e-5) and np.all(scores <= 1.0 + 1e-5)


def test_rerun_is_byte_identical(workspace):
    base, _ = workspace
    first = run_extraction(_job(base, "one"))
    second = run_extraction(_job(base, "two"))
    for key in first:
        assert Path(first[key]).read_bytes() == Path(second[key]).read_bytes()
        payload_a = Path(str(first[key]) + ".bin")
        if payload_a.exists():
            assert payload_a.read_bytes() == \
                Path(str(second[key]) + ".bin").read_bytes()


def test_row_order_matches_manifest(workspace):
    base, ids = workspace
    written = run_extraction(_job(base))
    lines = Path(written["manifest"]).read_text().splitlines()
    rows = [line.split()[2] for line in lines if line.startswith("row ")]
    assert rows == ids


def test_undecodable_image_is_skipped_without_manifest(workspace):
    base, ids = workspace
    (base / "images" / "broken.png").write_bytes(b"not an image")
    job = _job(base, "skip")
    job.manifest_path = None  # fall back to sorted folder order
    written = run_extraction(job)
    text = Path(written["manifest"]).read_text()
    assert "skipped broken" in text
    from conceptchain.corpus import load_embedding_matrix
    assert load_embedding_matrix(written["images"], "image").rows == len(ids)


def test_missing_manifest_image_is_an_error(workspace):
    base, _ = workspace
    (base / "images" / "img2.png").unlink()
    with pytest.raises(FileNotFoundError, match="img2"):
        run_extraction(_job(base, "missing"))


def test_class_name_embeddings_optional(workspace):
    base, _ = workspace
    written = run_extraction(_job(base, "cls", class_names=True))
    from conceptchain.corpus import load_embedding_matrix
    cls = load_embedding_matrix(written["class_names"], "concept")
    assert cls.rows == 2


def test_cli_end_to_end(workspace, capsys):
    base, _ = workspace
    code = main(["--images", str(base / "images"),
                 "--bank", str(base / "bank.jsonl"),
                 "--manifest", str(base / "manifest.jsonl"),
                 "--model", "hash",
                 "--out", str(base / "cli_out")])
    assert code == 0
    printed = capsys.readouterr().out
    assert "image_embeddings.wmat" in printed
    assert (base / "cli_out" / "concept_embeddings.wmat.bin").exists()


def test_cli_bad_bank_is_error(workspace, capsys):
    base, _ = workspace
    bad = base / "bad_bank.jsonl"
    bad.write_text('{"id": 0, "name": "a"}\n{"id": 2, "name": "b"}\n')
    code = main(["--images", str(base / "images"), "--bank", str(bad),
                 "--model", "hash", "--out", str(base / "bad_out")])
    assert code == 2
    assert "dense" in capsys.readouterr().err
