"""Context-driven index trimming.

A trimmable vector-similarity index family (flat, IVF, HNSW) plus a rule
engine that judges whether retrieved contexts are consistent with a query,
accumulates witnesses for conflicting pairs, and cuts the offending
similarity links out of the index. Ships with a retrieval-augmented QA
harness and an offline synthetic benchmark.
"""
from __future__ import annotations

from . import errors
from .embedding import EmbedderSpec, embed_batch, embed_corpus, embed_text
from .errors import CditError, InputError
from .harness import (
    EchoGenerator,
    EvalReport,
    ItemResult,
    PipelineConfig,
    RemoteGenerator,
    build_answer_prompt,
    make_conflict_corpus,
    make_generator,
    rewrite_query,
    rough_match,
    run_pipeline,
    witness_qa_items,
)
from .index import (
    KIND_FLAT,
    KIND_HNSW,
    KIND_IVF,
    CutSet,
    FlatIndex,
    HNSWIndex,
    HnswParams,
    IVFFlatIndex,
    IndexConfig,
    IvfParams,
    SearchResult,
    build,
    cut,
    load,
    save,
    search,
)
from .judge import (
    Judgement,
    RemoteJudge,
    RuleJudge,
    build_extraction_prompt,
    build_judge_prompt,
    extract_components,
    judge_consistency,
    parse_extraction_reply,
    parse_judge_reply,
)
from .model import (
    Choice,
    Components,
    PairKey,
    QAItem,
    Sentence,
    load_corpus,
    load_qa_dataset,
    make_pair_key,
    save_corpus,
    save_qa_dataset,
)
from .rules import (
    DEFAULT_LEXICON,
    PHI1,
    PHI2,
    RULES_BY_NAME,
    CMDRule,
    Lexicon,
    compare_components,
    load_lexicon,
    save_lexicon,
)
from .trimmer import (
    QueryCache,
    TrimReport,
    WitnessStore,
    accumulate_witness,
    apply_threshold_cuts,
    has_similar_query,
    judge_contexts,
    load_query_cache,
    load_witness_store,
    run_trim,
    save_query_cache,
    save_witness_store,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "CditError",
    "InputError",
    # model
    "Choice",
    "Components",
    "PairKey",
    "QAItem",
    "Sentence",
    "load_corpus",
    "load_qa_dataset",
    "make_pair_key",
    "save_corpus",
    "save_qa_dataset",
    # embedding
    "EmbedderSpec",
    "embed_batch",
    "embed_corpus",
    "embed_text",
    # rules
    "DEFAULT_LEXICON",
    "PHI1",
    "PHI2",
    "RULES_BY_NAME",
    "CMDRule",
    "Lexicon",
    "compare_components",
    "load_lexicon",
    "save_lexicon",
    # judge
    "Judgement",
    "RemoteJudge",
    "RuleJudge",
    "build_extraction_prompt",
    "build_judge_prompt",
    "extract_components",
    "judge_consistency",
    "parse_extraction_reply",
    "parse_judge_reply",
    # index
    "KIND_FLAT",
    "KIND_HNSW",
    "KIND_IVF",
    "CutSet",
    "FlatIndex",
    "HNSWIndex",
    "HnswParams",
    "IVFFlatIndex",
    "IndexConfig",
    "IvfParams",
    "SearchResult",
    "build",
    "cut",
    "load",
    "save",
    "search",
    # trimmer
    "QueryCache",
    "TrimReport",
    "WitnessStore",
    "accumulate_witness",
    "apply_threshold_cuts",
    "has_similar_query",
    "judge_contexts",
    "load_query_cache",
    "load_witness_store",
    "run_trim",
    "save_query_cache",
    "save_witness_store",
    # harness
    "EchoGenerator",
    "EvalReport",
    "ItemResult",
    "PipelineConfig",
    "RemoteGenerator",
    "build_answer_prompt",
    "make_conflict_corpus",
    "make_generator",
    "rewrite_query",
    "rough_match",
    "run_pipeline",
    "witness_qa_items",
    "__version__",
]
