"""Runtime kernel for a persistent global-workspace agent.

A single broadcast state is rebuilt every tick from working memory,
external input, retrieved long-term memory, and an immutable persona
directive. Specialized prompt nodes propose, critique, and arbitrate
candidate thoughts; an entropy-based drive raises sampling temperature
when recent thinking collapses into one semantic cluster; and an
append-only vector archive absorbs compressed history so the agent can
run indefinitely.
"""

from .backend import (
    Backend,
    CallRecord,
    ChatRequest,
    OpenAIChatClient,
    ScriptedBackend,
    ScriptedRule,
    hash_embedding,
)
from .config import AppConfig, load_config
from .drive import (
    ClusterSet,
    DriveConfig,
    ThoughtVector,
    cosine_distance,
    generation_temperature,
    membership_probabilities,
    shannon_entropy,
    update_clusters,
    window_entropy,
)
from .engine import ApiEvent, Engine, EngineSnapshot, canonical_line, load_run_log
from .errors import (
    BackendRejected,
    BackendUnavailable,
    CompressionError,
    GwaError,
    MalformedOutput,
    NodeFailure,
    StartupError,
)
from .memory import CompressionConfig, MemoryRecord, MemoryStore, bifurcate, token_count
from .nodes import (
    Arbitration,
    CandidateSet,
    CritiqueItem,
    CritiqueSet,
    TemplateSet,
    parse_arbitration,
    parse_candidates,
    parse_critiques,
    parse_recall_targets,
)
from .service import EventBus, build_app
from .workspace import (
    PENDING_MARKER,
    RESOLVED_MARKER,
    CoreSelf,
    GenesisState,
    GlobalState,
    InputBuffer,
    InputMessage,
    ShortTermMemory,
    StmEntry,
    apply_response,
    apply_think_more,
    assemble_global_state,
    render_state,
)

__version__ = "0.1.0"

__all__ = [
    "ApiEvent",
    "AppConfig",
    "Arbitration",
    "Backend",
    "BackendRejected",
    "BackendUnavailable",
    "CallRecord",
    "CandidateSet",
    "ChatRequest",
    "ClusterSet",
    "CompressionConfig",
    "CompressionError",
    "CoreSelf",
    "CritiqueItem",
    "CritiqueSet",
    "DriveConfig",
    "Engine",
    "EngineSnapshot",
    "EventBus",
    "GenesisState",
    "GlobalState",
    "GwaError",
    "InputBuffer",
    "InputMessage",
    "MalformedOutput",
    "MemoryRecord",
    "MemoryStore",
    "NodeFailure",
    "OpenAIChatClient",
    "PENDING_MARKER",
    "RESOLVED_MARKER",
    "ScriptedBackend",
    "ScriptedRule",
    "ShortTermMemory",
    "StartupError",
    "StmEntry",
    "TemplateSet",
    "ThoughtVector",
    "apply_response",
    "apply_think_more",
    "assemble_global_state",
    "bifurcate",
    "build_app",
    "canonical_line",
    "cosine_distance",
    "generation_temperature",
    "hash_embedding",
    "load_config",
    "load_run_log",
    "membership_probabilities",
    "parse_arbitration",
    "parse_candidates",
    "parse_critiques",
    "parse_recall_targets",
    "render_state",
    "shannon_entropy",
    "token_count",
    "update_clusters",
    "window_entropy",
]
