from kgf.grounding.fuzzy import fuzzy_ratio, indel_distance, lcs_length
from kgf.grounding.lexicon import Lexicon, default_lexicon, tokenize
from kgf.grounding.matching import (
    GroundingConfig,
    GroundingReport,
    MatchResult,
    Status,
    Technique,
    ground_triples,
    stage1_match,
    stage2_match,
    stage3_match,
    summarize,
)

__all__ = [
    "fuzzy_ratio", "indel_distance", "lcs_length", "Lexicon", "default_lexicon", "tokenize",
    "GroundingConfig", "GroundingReport", "MatchResult", "Status", "Technique",
    "ground_triples", "stage1_match", "stage2_match", "stage3_match", "summarize",
]
