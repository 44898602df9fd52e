"""Region-focused static malware features and a from-scratch classifier."""

from .snapshot import (
    BasicBlock,
    Cfg,
    DecodeError,
    DisassemblySnapshot,
    EmptyCfgError,
    FunctionRecord,
    ImportedApi,
    Instruction,
    SchemaError,
    Section,
    Stage,
    StringEntry,
    build_cfg,
    load_snapshot,
    parse_snapshot,
)
from .preprocess import merge_chains, preprocess, remove_loops
from .strings import OverrideFormatError, RankedString, heuristic_score, load_overrides, rank_strings
from .xrefs import (
    CallXrefGraph,
    FunctionLimitError,
    build_xref_graph,
    map_api_to_nodes,
    map_string_to_nodes,
    simple_paths,
)
from .regions import (
    RegionSelection,
    SelectionCase,
    Subgraph,
    bfs_order,
    extract_subgraph,
    select_seed_nodes,
)
from .features import (
    FeatureDims,
    IdfTable,
    NodeSignature,
    VECTOR_DIM,
    assemble_vector,
    hash_tokens,
    node_signature,
    nop_count,
    opcode_stream,
    section_ratio_flag,
    sequence_tokens,
    signature_vector,
    top_trigrams,
)
from .classifier import (
    EmptyDatasetError,
    Metrics,
    ModelParams,
    ScalerParams,
    ShapeError,
    TrainConfig,
    bce_loss,
    evaluate,
    fit_scaler,
    forward,
    train,
    transform,
)
from .pipeline import ExtractionResult, PipelineConfig, extract_features

__version__ = "0.1.0"
