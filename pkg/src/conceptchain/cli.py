"""Command-line entry point: synth, annotate, priors, generate, evaluate.

Configuration precedence is flags over config file over defaults, and the
effective configuration is always written into the output directory. Repeated
runs with an identical configuration produce byte-identical artifacts; no
artifact carries a timestamp. Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline, synth
from .corpus import (load_annotation_matrix, load_concept_bank,
                     load_embedding_matrix, load_manifest, load_score_matrix,
                     write_matrix)
from .errors import ConfigError, PipelineError
from .instance_trees import save_instance_paths
from .prior import save_prior_paths
from .rationale import (MCoTRecord, RenderTemplates, VARIANTS, emit_concept_qa,
                        extract_clauses, save_qa_records,
                        write_instruction_dataset)
from .salience import ProbeHyper, load_probe, save_calibration, save_probe
from .supervisors import (eval_cbm, eval_dt, eval_nbc, format_reports,
                          format_stats, interpretability, mcot_stats)

log = logging.getLogger(__name__)

_DEFAULTS: dict[str, dict] = {
    "synth": {"preset": None, "classes": 3, "concepts": 4, "per_class": 10,
              "per_class_test": 0, "noise": 0.0, "seed": 0, "force": False},
    "annotate": {"mode": "scored", "l2": 1e-3, "learning_rate": 1.0,
                 "max_epochs": 5000, "tol": 1e-6, "shared_threshold": False,
                 "force": False},
    "priors": {"force": False},
    "generate": {"variant": "wise", "seed": None, "subject": "object",
                 "prompt": None, "split": "train", "affirm_mode": "all_present",
                 "jobs": 1, "qa": False, "qa_negative": False, "force": False},
    "evaluate": {"table": False, "per_instance_dt": False, "force": False},
}


def _flag(parser: argparse.ArgumentParser, name: str, **kwargs) -> None:
    parser.add_argument(name, default=None, **kwargs)


def _bool_flag(parser: argparse.ArgumentParser, name: str, help: str) -> None:
    parser.add_argument(name, action="store_const", const=True, default=None,
                        help=help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptchain",
        description="Generate step-by-step classification rationales from "
                    "concept-bottleneck annotations.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO instead of WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic fixture")
    p.add_argument("--out", required=True)
    _flag(p, "--preset", choices=["tri"], help="named fixture preset")
    _flag(p, "--classes", type=int)
    _flag(p, "--concepts", type=int)
    _flag(p, "--per-class", type=int, dest="per_class")
    _flag(p, "--per-class-test", type=int, dest="per_class_test")
    _flag(p, "--noise", type=float)
    _flag(p, "--seed", type=int)
    _flag(p, "--config")
    _bool_flag(p, "--force", "overwrite a non-empty output directory")

    p = sub.add_parser("annotate", help="score, train probe, annotate, calibrate")
    p.add_argument("--bank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _flag(p, "--scores")
    _flag(p, "--image-embeddings", dest="image_embeddings")
    _flag(p, "--concept-embeddings", dest="concept_embeddings")
    _flag(p, "--mode", choices=list(pipeline.MODES))
    _flag(p, "--gt-annotations", dest="gt_annotations")
    _flag(p, "--l2", type=float)
    _flag(p, "--learning-rate", type=float, dest="learning_rate")
    _flag(p, "--max-epochs", type=int, dest="max_epochs")
    _flag(p, "--tol", type=float)
    _bool_flag(p, "--shared-threshold",
               "one pooled threshold instead of one per concept")
    _flag(p, "--config")
    _bool_flag(p, "--force", "overwrite a non-empty output directory")

    p = sub.add_parser("priors", help="dump the prior matrix and prior paths")
    p.add_argument("--bank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--probabilities", required=True)
    p.add_argument("--out", required=True)
    _flag(p, "--config")
    _bool_flag(p, "--force", "overwrite a non-empty output directory")

    p = sub.add_parser("generate", help="build trees and emit the rationale dataset")
    p.add_argument("--bank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--probabilities", required=True)
    p.add_argument("--out", required=True)
    _flag(p, "--variant", choices=list(VARIANTS))
    _flag(p, "--seed", type=int)
    _flag(p, "--subject")
    _flag(p, "--prompt")
    _flag(p, "--split", choices=["train", "test", "all"])
    _flag(p, "--affirm-mode", dest="affirm_mode",
          choices=["all_present", "tree_path"])
    _flag(p, "--jobs", type=int)
    _flag(p, "--gt-annotations", dest="gt_annotations",
          help="ground truth for the precision columns of the stats")
    _bool_flag(p, "--qa", "also emit the stage-1 concept QA dataset")
    _bool_flag(p, "--qa-negative", "include absent concepts in the QA dataset")
    _flag(p, "--config")
    _bool_flag(p, "--force", "overwrite a non-empty output directory")

    p = sub.add_parser("evaluate", help="run the weak supervisors and metrics")
    p.add_argument("--bank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    _flag(p, "--scores")
    _flag(p, "--probe")
    _flag(p, "--gt-annotations", dest="gt_annotations")
    _flag(p, "--rationales", help="JSONL of rationales to score for "
                                  "interpretability")
    _bool_flag(p, "--table", "print aligned result tables")
    _bool_flag(p, "--per-instance-dt",
               "average DT interpretability per instance instead of pooling")
    _flag(p, "--config")
    _bool_flag(p, "--force", "overwrite a non-empty output directory")
    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    cmd = args.command
    merged = dict(_DEFAULTS[cmd])
    config_path = getattr(args, "config", None)
    if config_path:
        file_cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = set(file_cfg) - set(merged)
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        merged.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if value is not None:
            merged[key] = value
        elif key not in merged:
            merged[key] = None
    return merged


def _prepare_out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    if out.exists() and any(out.iterdir()) and not cfg.get("force"):
        raise ConfigError(f"output dir {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_provenance(out: Path, command: str, cfg: dict) -> None:
    record = {"command": command}
    record.update({k: cfg[k] for k in sorted(cfg)})
    (out / "run_config.json").write_text(
        json.dumps(record, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    out = _prepare_out_dir(cfg)
    if cfg["preset"] == "tri":
        config = synth.tri_config()
    else:
        config = synth.SynthConfig(
            n_classes=cfg["classes"], n_concepts=cfg["concepts"],
            per_class=cfg["per_class"], per_class_test=cfg["per_class_test"],
            pattern_noise_rate=cfg["noise"], seed=cfg["seed"])
    dataset = synth.generate_synthetic(config)
    synth.write_synthetic(dataset, out, config)
    _write_provenance(out, "synth", cfg)
    print(f"wrote fixture ({dataset.manifest.n_instances} instances, "
          f"{dataset.bank.bank_size} concepts) to {out}")
    return 0


def cmd_annotate(cfg: dict) -> int:
    out = _prepare_out_dir(cfg)
    bank = load_concept_bank(cfg["bank"])
    manifest = load_manifest(cfg["manifest"])
    scores = (load_score_matrix(cfg["scores"], bank.bank_size)
              if cfg.get("scores") else None)
    image_emb = concept_emb = None
    if cfg.get("image_embeddings"):
        image_emb = load_embedding_matrix(cfg["image_embeddings"], "image")
        concept_emb = load_embedding_matrix(cfg["concept_embeddings"], "concept") \
            if cfg.get("concept_embeddings") else None
    gt = (load_annotation_matrix(cfg["gt_annotations"], bank.bank_size)
          if cfg.get("gt_annotations") else None)
    hyper = ProbeHyper(l2_strength=cfg["l2"], learning_rate=cfg["learning_rate"],
                       max_epochs=cfg["max_epochs"], tol=cfg["tol"])

    result = pipeline.run_annotate(
        manifest, bank, scores=scores, image_embeddings=image_emb,
        concept_embeddings=concept_emb, mode=cfg["mode"], gt_annotations=gt,
        hyper=hyper, shared_threshold=bool(cfg["shared_threshold"]))

    if result.scores is not None and not cfg.get("scores"):
        write_matrix(out / "scores.wmat", result.scores)
    if result.probe is not None:
        save_probe(result.probe, out / "probe.wmat")
    write_matrix(out / "annotations_raw.wmat", result.raw_annotations)
    write_matrix(out / "probabilities.wmat",
                 result.calibration.probabilities.astype(np.float32))
    save_calibration(result.calibration, out / "calibration.jsonl")
    write_matrix(out / "annotations_refined.wmat", result.refined)
    _write_provenance(out, "annotate", cfg)
    kept = int(result.refined.sum())
    total = int(result.raw_annotations.sum())
    print(f"annotated {manifest.n_instances} instances; refinement kept "
          f"{kept}/{total} positives")
    return 0


def cmd_priors(cfg: dict) -> int:
    out = _prepare_out_dir(cfg)
    bank = load_concept_bank(cfg["bank"])
    manifest = load_manifest(cfg["manifest"])
    annotations = load_annotation_matrix(cfg["annotations"], bank.bank_size)
    probabilities = load_score_matrix(cfg["probabilities"], bank.bank_size)

    from .prior import build_all_prior_trees, compute_prior
    prior = compute_prior(probabilities, manifest)
    paths = build_all_prior_trees(prior, annotations, manifest)
    write_matrix(out / "prior.wmat", prior.astype(np.float32))
    save_prior_paths(paths, manifest, out / "prior_paths.jsonl")
    _write_provenance(out, "priors", cfg)
    for p in paths:
        print(f"{manifest.class_names[p.class_id]}: path={list(p.concepts)} "
              f"gini={p.terminal_gini:.4f}")
    return 0


def cmd_generate(cfg: dict) -> int:
    out = _prepare_out_dir(cfg)
    bank = load_concept_bank(cfg["bank"])
    manifest = load_manifest(cfg["manifest"])
    annotations = load_annotation_matrix(cfg["annotations"], bank.bank_size)
    probabilities = load_score_matrix(cfg["probabilities"], bank.bank_size)
    gt = (load_annotation_matrix(cfg["gt_annotations"], bank.bank_size)
          if cfg.get("gt_annotations") else None)
    templates = RenderTemplates(subject=cfg["subject"],
                                prompt=cfg["prompt"] or "")

    result = pipeline.run_generate(
        manifest, bank, annotations, probabilities, templates=templates,
        variant=cfg["variant"], seed=cfg["seed"], split=cfg["split"],
        affirm_mode=cfg["affirm_mode"], jobs=cfg["jobs"], gt_annotations=gt)

    write_matrix(out / "prior.wmat", result.prior.astype(np.float32))
    save_prior_paths(result.prior_paths, manifest, out / "prior_paths.jsonl")
    save_instance_paths(result.instance_paths, out / "instance_paths.jsonl")
    write_instruction_dataset(result.records, out / "dataset.jsonl")
    if cfg["qa"]:
        qa = emit_concept_qa(annotations, bank, manifest,
                             include_negative=bool(cfg["qa_negative"]))
        save_qa_records(qa, out / "qa.jsonl")
    stats = result.stats
    (out / "stats.json").write_text(json.dumps({
        "pos_precision": stats.pos_precision,
        "neg_precision": stats.neg_precision,
        "in_cot": stats.in_cot,
        "x_cot": stats.x_cot,
        "bank": stats.bank,
        "records": len(result.records),
        "complete": sum(1 for r in result.records if r.complete),
        "bank_insufficient": sum(1 for p in result.instance_paths
                                 if p.bank_insufficient),
    }, indent=2) + "\n", encoding="utf-8")
    _write_provenance(out, "generate", cfg)

    insufficient = sum(1 for p in result.instance_paths if p.bank_insufficient)
    print(f"emitted {len(result.records)} records "
          f"({insufficient} bank-insufficient) to {out / 'dataset.jsonl'}")
    print(format_stats(stats))
    return 0


def _load_rationales(path: str) -> list[tuple[str, str]]:
    pairs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            text = obj.get("rationale")
            if text is None:
                turns = obj.get("conversations", [])
                text = next((t["value"] for t in turns if t.get("from") == "gpt"), "")
            pairs.append((str(obj["image"]), text))
    return pairs


def cmd_evaluate(cfg: dict) -> int:
    out = _prepare_out_dir(cfg)
    bank = load_concept_bank(cfg["bank"])
    manifest = load_manifest(cfg["manifest"])
    annotations = load_annotation_matrix(cfg["annotations"], bank.bank_size)
    gt = (load_annotation_matrix(cfg["gt_annotations"], bank.bank_size)
          if cfg.get("gt_annotations") else None)

    reports = []
    if cfg.get("scores") and cfg.get("probe"):
        scores = load_score_matrix(cfg["scores"], bank.bank_size)
        probe = load_probe(cfg["probe"])
        reports.append(eval_cbm(probe, scores, manifest, gt))
    reports.append(eval_dt(annotations, manifest, gt,
                           per_instance_average=bool(cfg["per_instance_dt"])))
    reports.append(eval_nbc(annotations, manifest, gt))

    lines = [format_reports(reports)]
    rationale_block = None
    if cfg.get("rationales"):
        pairs = _load_rationales(cfg["rationales"])
        records = []
        unmatched_total = 0
        for iid, text in pairs:
            steps, unmatched = extract_clauses(text, bank)
            unmatched_total += len(unmatched)
            records.append(MCoTRecord(instance_id=iid, answer="", steps=steps,
                                      complete=True))
        target = gt if gt is not None else annotations
        score = interpretability(records, target, manifest, unmatched_total)
        stats = mcot_stats(records, target, bank, manifest)
        rationale_block = {
            "interpretability": score,
            "unmatched_clauses": unmatched_total,
            "pos_precision": stats.pos_precision,
            "neg_precision": stats.neg_precision,
            "in_cot": stats.in_cot,
            "x_cot": stats.x_cot,
            "bank": stats.bank,
        }
        lines.append(f"rationale interpretability: "
                     f"{'-' if score is None else f'{score:.2f}'} "
                     f"({unmatched_total} unmatched clauses)")
        if cfg["table"]:
            lines.append(format_stats(stats))

    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    with (out / "report.jsonl").open("w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps({"method": r.method, "accuracy": r.accuracy,
                                 "interpretability": r.interpretability}) + "\n")
        if rationale_block is not None:
            fh.write(json.dumps({"method": "rationales", **rationale_block}) + "\n")
    _write_provenance(out, "evaluate", cfg)
    print(text, end="")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "annotate": cmd_annotate,
    "priors": cmd_priors,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
