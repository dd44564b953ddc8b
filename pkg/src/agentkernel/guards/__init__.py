"""Quality guards: drift, metric gaming, self-improvement bounds and contracts."""

from .contracts import (
    DEFAULT_CONTRACTS,
    QUALITY_THRESHOLD,
    Contract,
    ContractContext,
    ContractRegistry,
    Violation,
    blocked_match,
)
from .drift import (
    DRIFT_THRESHOLD,
    DriftMonitor,
    DriftOutcome,
    DriftState,
    histogram,
    jsd,
    kl_bits,
)
from .goodhart import (
    EvaluationRecord,
    GoodhartAction,
    GoodhartConfig,
    GoodhartReport,
    Risk,
    Signal,
    apply_goodhart_action,
    detect_goodhart,
    normalized_entropy,
    risk_for,
)
from .trilemma import (
    FROZEN_DOMAINS,
    ConfigStore,
    Origin,
    TrilemmaConfig,
    WriteRequest,
    check_firewall,
    clamp_q_delta,
    state_hash,
)
