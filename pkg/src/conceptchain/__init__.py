"""conceptchain: concept-bottleneck annotations to step-by-step rationales."""

from .corpus import (Concept, ConceptBank, DatasetManifest, EmbeddingMatrix,
                     load_annotation_matrix, load_concept_bank,
                     load_embedding_matrix, load_manifest, load_score_matrix,
                     save_concept_bank, save_manifest, write_matrix)
from .errors import (ConfigError, DivergenceError, ParseError, PipelineError,
                     RenderError, ValidationError)
from .instance_trees import (InstancePaths, build_affirmation_tree,
                             build_elimination_tree, build_instance_paths,
                             prior_subpath, retrieve_hard_negatives)
from .pipeline import run_annotate, run_generate
from .prior import DecisionPath, build_prior_tree, compute_prior
from .rationale import (MCoTRecord, QARecord, RenderTemplates, Step,
                        compose_mcot, emit_concept_qa, extract_clauses,
                        verbalize)
from .salience import (CalibrationModel, Probe, ProbeHyper, annotate,
                       calibrate, choose_threshold, compute_concept_scores,
                       refine_annotations, train_probe)
from .supervisors import (MCoTStats, SupervisorReport, eval_cbm, eval_dt,
                          eval_nbc, interpretability, mcot_stats)
from .synth import SynthConfig, generate_synthetic, tri_config, tri_fixture
from .trees import TreeNode, gini_from_counts, induce_tree

__version__ = "0.1.0"
