"""decoyforge: decoy-augmented protein-ligand corpora and pretraining.

Pipeline: parse structures, curate complexes, generate/ingest RMSD-annotated
decoy poses, persist sharded datasets, and pretrain a distance-based
message-passing encoder with a weighted contrastive loss plus a denoising
regularizer, then fine-tune it for binding-affinity regression.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .curation import ComplexRecord, FilterConfig, RejectionReport, curate_corpus, curate_entry
from .decoys import DecoyGenConfig, DecoyPose, generate_decoys, ingest_poses, rmsd
from .encoder import EncoderConfig, encode, init_params
from .graphs import ComplexGraph, build_graph, perturb_ligand
from .objective import ContrastiveConfig, DsmConfig, beta, info_nce_pair, total_loss
from .store import Dataset, sample_pretrain_batch, write_dataset
from .structure import Structure, extract_ligands, parse_structure
from .training import MetricReport, TrainConfig, evaluate, finetune, pretrain

__all__ = [
    "__version__", "KERNEL_BACKEND",
    "Structure", "parse_structure", "extract_ligands",
    "FilterConfig", "ComplexRecord", "RejectionReport", "curate_entry", "curate_corpus",
    "DecoyPose", "DecoyGenConfig", "rmsd", "generate_decoys", "ingest_poses",
    "ComplexGraph", "build_graph", "perturb_ligand",
    "Dataset", "write_dataset", "sample_pretrain_batch",
    "EncoderConfig", "init_params", "encode",
    "ContrastiveConfig", "DsmConfig", "beta", "info_nce_pair", "total_loss",
    "TrainConfig", "MetricReport", "pretrain", "finetune", "evaluate",
]
