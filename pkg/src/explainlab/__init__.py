"""Multimodal and LLM-based explanations of educational recommendations.

A library plus an HTTP service for delivering condition-filtered
explanation components (text, tags, hierarchy, graph, radar, overlap
diagram, chatbot), running rule-constrained grounded chat sessions, and
instrumenting experiments over which components learners see.
"""

from .components import (
    ComponentKind,
    ExplanationBundle,
    build_bundle,
    build_graph,
    build_hierarchy,
    build_radar,
    build_tags,
    build_textual,
    build_venn,
)
from .chat import (
    ChatOrchestrator,
    ChatSession,
    ContextBlock,
    Participant,
    ParticipantKind,
    PromptEnvelope,
    RuleSet,
    ValidationReport,
    assemble_prompt,
    context_snapshot,
    fetch_facts,
    validate_response,
)
from .experiments import (
    Assignment,
    ExperimentCondition,
    ExperimentService,
    InteractionEvent,
    SurveyResponse,
    fnv1a_64,
)
from .llm import EchoTransport, HttpTransport, LlmConfig, ScriptedTransport
from .model import (
    CourseStructure,
    DomainIndex,
    Fact,
    LearnerProfile,
    LearningGoal,
    LearningRecommendation,
    RecommendedItem,
    StructureNode,
    Topic,
    TopicRelation,
    depth_first_topic_order,
    validate_recommendation,
)
from .store import DocumentStore, EventLog, ImportReport

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "ChatOrchestrator",
    "ChatSession",
    "ComponentKind",
    "ContextBlock",
    "CourseStructure",
    "DocumentStore",
    "DomainIndex",
    "EchoTransport",
    "EventLog",
    "ExperimentCondition",
    "ExperimentService",
    "ExplanationBundle",
    "Fact",
    "HttpTransport",
    "ImportReport",
    "InteractionEvent",
    "LearnerProfile",
    "LearningGoal",
    "LearningRecommendation",
    "LlmConfig",
    "Participant",
    "ParticipantKind",
    "PromptEnvelope",
    "RecommendedItem",
    "RuleSet",
    "ScriptedTransport",
    "StructureNode",
    "SurveyResponse",
    "Topic",
    "TopicRelation",
    "ValidationReport",
    "assemble_prompt",
    "build_bundle",
    "build_graph",
    "build_hierarchy",
    "build_radar",
    "build_tags",
    "build_textual",
    "build_venn",
    "context_snapshot",
    "depth_first_topic_order",
    "fetch_facts",
    "fnv1a_64",
    "validate_recommendation",
    "validate_response",
]
