"""Lossless speculative decoding for block-wise masked-diffusion LMs."""

from .core import (
    MASK,
    BlockState,
    GenerationConfig,
    Marginals,
    SequenceState,
    UnmaskSchedule,
    format_config,
    parse_config,
    remaining_nfe_without_speculation,
    validate_sequence,
)
from .model import ToyDenoiser, forward, forward_batched, train_from_corpus
from .drafting import (
    DraftBlock,
    DraftFormula,
    DraftGraphSpec,
    RankingView,
    build_graph,
    export_dot,
    materialize,
    parse_graph,
    rank,
    spawn_drafts,
)
from .verification import VerifyOutcome, advance, nfe_saving_factor, verify
from .calibration import (
    CalibrationRecord,
    CandidateTable,
    build_table,
    calibrate_graph,
    collect_records,
    select_subgraph,
)
from .engine import (
    GenerationResult,
    RunReport,
    check_lossless,
    compute_speedup,
    generate_speculative,
    generate_vanilla,
    per_block_summary,
    profile_stages,
)
from .batch import build_mask, build_position_ids

__version__ = "0.1.0"

__all__ = [
    "MASK",
    "BlockState",
    "SequenceState",
    "Marginals",
    "UnmaskSchedule",
    "GenerationConfig",
    "validate_sequence",
    "remaining_nfe_without_speculation",
    "format_config",
    "parse_config",
    "ToyDenoiser",
    "train_from_corpus",
    "forward",
    "forward_batched",
    "RankingView",
    "DraftFormula",
    "DraftGraphSpec",
    "DraftBlock",
    "rank",
    "build_graph",
    "materialize",
    "spawn_drafts",
    "parse_graph",
    "export_dot",
    "advance",
    "verify",
    "VerifyOutcome",
    "nfe_saving_factor",
    "CalibrationRecord",
    "CandidateTable",
    "collect_records",
    "build_table",
    "select_subgraph",
    "calibrate_graph",
    "generate_vanilla",
    "generate_speculative",
    "GenerationResult",
    "RunReport",
    "check_lossless",
    "compute_speedup",
    "per_block_summary",
    "profile_stages",
    "build_mask",
    "build_position_ids",
]
