"""Long-document reranking toolkit: segmentation, block selection, budgeted
assembly, ranking metrics and attention-relevance alignment analysis."""

from keyb2._core import (
    AlignmentResult,
    AssembledInput,
    AssemblyConfig,
    Block,
    Bm25Params,
    CostEstimate,
    DataError,
    Document,
    IdfTable,
    Lang,
    NdcgGain,
    PunctClass,
    Query,
    ScoredBlock,
    SegmentationConfig,
    Token,
    TokenSeq,
    UsageError,
    alignment_over_pairs,
    aras,
    assemble,
    average_precision,
    block_boundaries,
    bm25_score,
    build_idf,
    chunk_indices,
    estimate,
    mock_score,
    ndcg_at_k,
    paired_t_test,
    pick_top_blocks,
    precision_at_k,
    relative_change,
    render_prompt,
    segment,
    select_bm25,
    spearman,
    truncate_tokens,
    unit_tokenize,
    word_tokenize,
)

__all__ = [
    "AlignmentResult",
    "AssembledInput",
    "AssemblyConfig",
    "Block",
    "Bm25Params",
    "CostEstimate",
    "DataError",
    "Document",
    "IdfTable",
    "Lang",
    "NdcgGain",
    "PunctClass",
    "Query",
    "ScoredBlock",
    "SegmentationConfig",
    "Token",
    "TokenSeq",
    "UsageError",
    "alignment_over_pairs",
    "aras",
    "assemble",
    "average_precision",
    "block_boundaries",
    "bm25_score",
    "build_idf",
    "chunk_indices",
    "estimate",
    "mock_score",
    "ndcg_at_k",
    "paired_t_test",
    "pick_top_blocks",
    "precision_at_k",
    "relative_change",
    "render_prompt",
    "segment",
    "select_bm25",
    "spearman",
    "truncate_tokens",
    "unit_tokenize",
    "word_tokenize",
]

__version__ = "0.1.0"
