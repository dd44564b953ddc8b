"""Multi-criteria judging and consensus."""

from .consensus import (
    ALGORITHMS,
    DEFAULT_TIER_WEIGHTS,
    ConsensusResult,
    bft,
    bft_quorum,
    raft,
    weighted_majority,
)
from .pipeline import JudgePipeline, Verdict, fabrication_reason
from .scoring import (
    PROFILES,
    VOTES,
    Judge,
    JudgeProfile,
    JudgeScore,
    MissingCriterion,
    Tier,
    Vote,
    entropy_bits,
    profile_for,
    score_output,
    vote_for,
)
