"""Chat sessions: contextualized prompts, guardrails, multi-agent routing.

A session is a totally ordered message log shared by a learner, optional
mentors, and one or more LLM agents. Prompts are assembled from fixed
blocks (rules, then interface context, then grounding facts, then a
bounded history window, then the user turn) so identical state always
produces identical provider requests. Model output never enters the
history unvalidated: rejected responses are replaced by a fixed refusal
and the raw text goes to the event log for researchers.
"""

from __future__ import annotations

import re
import threading
import time
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .components import KIND_ORDER, ComponentKind, ExplanationBundle
from .errors import (
    ComponentNotVisibleError,
    ConfigurationError,
    MembershipError,
    NotFoundError,
    PreconditionError,
    ProviderError,
    ReferentialError,
    SchemaError,
)
from .llm import HttpTransport, LlmConfig, Transport, send_chat_completion
from .model import DomainIndex, Fact, LearningRecommendation, _Reader, _require_clean

REFUSAL_TEXT = "I can only answer based on the recommended materials."
FAILURE_NOTICE = "The language model provider could not be reached. Please try again."
DEFAULT_HISTORY_WINDOW = 10
RETRY_LIMIT = 2
RETRY_BACKOFF_SECONDS = 0.5

SECTION_TITLES = {
    ComponentKind.TEXTUAL: "Textual explanation",
    ComponentKind.TAGS: "Tags",
    ComponentKind.HIERARCHY: "Hierarchy",
    ComponentKind.GRAPH: "Topic graph",
    ComponentKind.RADAR: "Radar chart",
    ComponentKind.VENN: "Venn diagram",
}

FACTS_HEADING = "## Facts"


class ParticipantKind(str, Enum):
    LEARNER = "learner"
    MENTOR = "mentor"
    LLM = "llm"


class CheckKind(str, Enum):
    FORBIDDEN_PATTERN = "forbidden_pattern"
    GROUNDED_LINKS = "grounded_links"
    RELEVANCE = "relevance"
    MAX_LENGTH = "max_length"


class Verdict(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Participant:
    participant_id: str
    kind: ParticipantKind
    llm_config: LlmConfig | None = None

    def __post_init__(self):
        if self.kind is ParticipantKind.LLM and self.llm_config is None:
            raise ConfigurationError(f"llm participant {self.participant_id!r} needs an llm_config")
        if self.kind is not ParticipantKind.LLM and self.llm_config is not None:
            raise ConfigurationError(f"human participant {self.participant_id!r} must not carry an llm_config")

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "Participant":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        pid = r.str_("participant_id", allow_empty=False)
        kind_raw = r.str_("kind", allow_empty=False)
        kind = None
        if kind_raw:
            try:
                kind = ParticipantKind(kind_raw)
            except ValueError:
                problems.append(f"{r._at('kind')}: expected one of {[k.value for k in ParticipantKind]}")
        config = None
        if r.data.get("llm_config") is not None:
            try:
                config = LlmConfig.from_dict(r.data["llm_config"])
            except SchemaError as exc:
                problems.extend(f"{r._at('llm_config')}.{p}" for p in exc.problems)
        r.reject_unknown(("participant_id", "kind", "llm_config"))
        _require_clean(problems)
        assert kind is not None
        try:
            return cls(participant_id=pid, kind=kind, llm_config=config)
        except ConfigurationError as exc:
            raise SchemaError([f"{path or 'participant'}: {exc}"]) from exc

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "kind": self.kind.value,
            "llm_config": self.llm_config.to_dict() if self.llm_config else None,
        }


@dataclass(frozen=True)
class PreRule:
    rule_id: str
    text: str


@dataclass(frozen=True)
class PostRule:
    rule_id: str
    check_kind: CheckKind
    parameter: str | int | None = None

    def __post_init__(self):
        if self.check_kind is CheckKind.FORBIDDEN_PATTERN:
            if not isinstance(self.parameter, str):
                raise ConfigurationError(
                    f"rule {self.rule_id!r}: forbidden_pattern needs a pattern string"
                )
            try:
                re.compile(self.parameter, re.IGNORECASE)
            except re.error as exc:
                raise ConfigurationError(f"rule {self.rule_id!r}: invalid pattern ({exc})") from exc
        if self.check_kind is CheckKind.MAX_LENGTH and (
            isinstance(self.parameter, bool) or not isinstance(self.parameter, int) or self.parameter < 0
        ):
            raise ConfigurationError(f"rule {self.rule_id!r}: max_length needs a non-negative integer")


@dataclass(frozen=True)
class RuleSet:
    """Human-defined control: pre-rules enter the prompt, post-rules gate output."""

    ruleset_id: str
    pre_rules: tuple[PreRule, ...] = ()
    post_rules: tuple[PostRule, ...] = ()

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "RuleSet":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        ruleset_id = r.str_("ruleset_id", allow_empty=False)
        seen_ids: set[str] = set()

        pre_rules: list[PreRule] = []
        for i, raw in enumerate(r.list_("pre_rules", required=False)):
            rr = _Reader(raw, f"{r._at('pre_rules')}[{i}]", problems)
            rule_id = rr.str_("rule_id", allow_empty=False)
            text = rr.str_("text", allow_empty=False)
            rr.reject_unknown(("rule_id", "text"))
            if rule_id in seen_ids:
                problems.append(f"{rr.path}.rule_id: duplicate rule_id {rule_id!r}")
            seen_ids.add(rule_id)
            pre_rules.append(PreRule(rule_id=rule_id, text=text))

        post_rules: list[PostRule] = []
        for i, raw in enumerate(r.list_("post_rules", required=False)):
            rr = _Reader(raw, f"{r._at('post_rules')}[{i}]", problems)
            rule_id = rr.str_("rule_id", allow_empty=False)
            kind_raw = rr.str_("check_kind", allow_empty=False)
            parameter = rr.data.get("parameter")
            rr.reject_unknown(("rule_id", "check_kind", "parameter"))
            if rule_id in seen_ids:
                problems.append(f"{rr.path}.rule_id: duplicate rule_id {rule_id!r}")
            seen_ids.add(rule_id)
            kind = None
            if kind_raw:
                try:
                    kind = CheckKind(kind_raw)
                except ValueError:
                    problems.append(
                        f"{rr.path}.check_kind: expected one of {[k.value for k in CheckKind]}"
                    )
            if kind is not None:
                try:
                    post_rules.append(PostRule(rule_id=rule_id, check_kind=kind, parameter=parameter))
                except ConfigurationError as exc:
                    problems.append(f"{rr.path}.parameter: {exc}")

        r.reject_unknown(("ruleset_id", "pre_rules", "post_rules"))
        _require_clean(problems)
        return cls(ruleset_id=ruleset_id, pre_rules=tuple(pre_rules), post_rules=tuple(post_rules))

    def to_dict(self) -> dict:
        return {
            "ruleset_id": self.ruleset_id,
            "pre_rules": [{"rule_id": p.rule_id, "text": p.text} for p in self.pre_rules],
            "post_rules": [
                {"rule_id": p.rule_id, "check_kind": p.check_kind.value, "parameter": p.parameter}
                for p in self.post_rules
            ],
        }


EMPTY_RULESET = RuleSet(ruleset_id="empty")


@dataclass(frozen=True)
class ChatMessage:
    seq: int
    sender: str
    recipients: tuple[str, ...]
    content: str
    grounding_refs: tuple[str, ...] = ()
    created_at: str = ""

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "ChatMessage":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        seq = r.int_("seq")
        sender = r.str_("sender", allow_empty=False)
        recipients = tuple(
            item for item in r.list_("recipients") if isinstance(item, str) and item
        )
        if not recipients:
            problems.append(f"{r._at('recipients')}: must be a non-empty list of ids")
        content = r.str_("content", allow_empty=False)
        refs = tuple(item for item in r.list_("grounding_refs", required=False) if isinstance(item, str))
        created_at = r.str_("created_at", required=False)
        r.reject_unknown(("seq", "sender", "recipients", "content", "grounding_refs", "created_at"))
        _require_clean(problems)
        return cls(
            seq=seq,
            sender=sender,
            recipients=recipients,
            content=content,
            grounding_refs=refs,
            created_at=created_at,
        )

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "sender": self.sender,
            "recipients": list(self.recipients),
            "content": self.content,
            "grounding_refs": list(self.grounding_refs),
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class ContextBlock:
    """Rendered interface context injected into every prompt.

    ``component_text`` and ``fact_text`` stay separable so the prompt
    envelope can expose them as distinct blocks; ``terms`` carries the
    topic titles and tags the relevance check matches against.
    """

    component_text: str
    fact_text: str
    source_kinds: tuple[ComponentKind, ...]
    terms: tuple[str, ...] = ()

    @property
    def rendered(self) -> str:
        if self.component_text and self.fact_text:
            return self.component_text + "\n\n" + self.fact_text
        return self.component_text or self.fact_text

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "ContextBlock":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        component_text = r.str_("component_text", required=False)
        fact_text = r.str_("fact_text", required=False)
        kinds: list[ComponentKind] = []
        for i, raw in enumerate(r.list_("source_kinds", required=False)):
            try:
                kinds.append(ComponentKind(raw))
            except ValueError:
                problems.append(f"{r._at('source_kinds')}[{i}]: unknown component kind {raw!r}")
        terms = tuple(t for t in r.list_("terms", required=False) if isinstance(t, str))
        r.reject_unknown(("component_text", "fact_text", "source_kinds", "terms"))
        _require_clean(problems)
        return cls(
            component_text=component_text,
            fact_text=fact_text,
            source_kinds=tuple(kinds),
            terms=terms,
        )

    def to_dict(self) -> dict:
        return {
            "component_text": self.component_text,
            "fact_text": self.fact_text,
            "source_kinds": [k.value for k in self.source_kinds],
            "terms": list(self.terms),
        }


@dataclass(frozen=True)
class ChatSession:
    session_id: str
    condition_id: str
    participants: tuple[Participant, ...]
    context: ContextBlock
    facts: tuple[Fact, ...] = ()
    history: tuple[ChatMessage, ...] = ()
    next_seq: int = 1

    def participant(self, participant_id: str) -> Participant | None:
        for p in self.participants:
            if p.participant_id == participant_id:
                return p
        return None

    def learner_id(self) -> str:
        for p in self.participants:
            if p.kind is ParticipantKind.LEARNER:
                return p.participant_id
        raise ConfigurationError("session has no learner participant")

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "ChatSession":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        session_id = r.str_("session_id", allow_empty=False)
        condition_id = r.str_("condition_id", allow_empty=False)
        participants: list[Participant] = []
        for i, raw in enumerate(r.list_("participants")):
            try:
                participants.append(Participant.from_dict(raw, path=f"{r._at('participants')}[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        context = ContextBlock(component_text="", fact_text="", source_kinds=())
        if "context" in r.data:
            try:
                context = ContextBlock.from_dict(r.data["context"], path=r._at("context"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        facts: list[Fact] = []
        for i, raw in enumerate(r.list_("facts", required=False)):
            try:
                facts.append(Fact.from_dict(raw, path=f"{r._at('facts')}[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        history: list[ChatMessage] = []
        for i, raw in enumerate(r.list_("history", required=False)):
            try:
                history.append(ChatMessage.from_dict(raw, path=f"{r._at('history')}[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        next_seq = r.int_("next_seq", required=False, default=len(history) + 1)
        r.reject_unknown(
            ("session_id", "condition_id", "participants", "context", "facts", "history", "next_seq")
        )
        if not any(p.kind is ParticipantKind.LEARNER for p in participants):
            problems.append(f"{r._at('participants')}: at least one learner required")
        expected = list(range(1, next_seq))
        if [m.seq for m in history] != expected:
            problems.append(f"{r._at('history')}: sequence numbers must be exactly 1..{next_seq - 1}")
        member_ids = {p.participant_id for p in participants}
        for i, message in enumerate(history):
            strangers = ({message.sender} | set(message.recipients)) - member_ids
            if strangers:
                problems.append(
                    f"{r._at('history')}[{i}]: non-participant ids {sorted(strangers)}"
                )
        _require_clean(problems)
        return cls(
            session_id=session_id,
            condition_id=condition_id,
            participants=tuple(participants),
            context=context,
            facts=tuple(facts),
            history=tuple(history),
            next_seq=next_seq,
        )

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "condition_id": self.condition_id,
            "participants": [p.to_dict() for p in self.participants],
            "context": self.context.to_dict(),
            "facts": [f.to_dict() for f in self.facts],
            "history": [m.to_dict() for m in self.history],
            "next_seq": self.next_seq,
        }


@dataclass(frozen=True)
class PromptEnvelope:
    """Blocks in fixed order; rules, context and facts fuse into one system message."""

    rule_block: str
    context_block: str
    fact_block: str
    history_window: tuple[ChatMessage, ...]
    user_turn: str
    serialized_messages: tuple[dict, ...]


@dataclass(frozen=True)
class RuleViolation:
    rule_id: str
    check_kind: CheckKind
    evidence: str

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "check_kind": self.check_kind.value, "evidence": self.evidence}


@dataclass(frozen=True)
class ValidationReport:
    verdict: Verdict
    violations: tuple[RuleViolation, ...]

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPTED

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "violations": [v.to_dict() for v in self.violations]}


def _render_tags(payload: dict) -> str:
    lines = []
    for entry in payload.get("entries", []):
        label = entry.get("label", "")
        link = entry.get("hyperlink", "")
        lines.append(f"- {label} ({link})" if link else f"- {label}")
    return "\n".join(lines)


def _render_hierarchy(payload: dict) -> str:
    lines: list[str] = []

    def walk(node: dict, depth: int) -> None:
        marker = " [recommended]" if node.get("recommended") else ""
        lines.append(f"{'  ' * depth}- {node.get('title', '')}{marker}")
        for child in node.get("children", []):
            walk(child, depth + 1)

    walk(payload.get("root", {}), 0)
    return "\n".join(lines)


def _render_graph(payload: dict) -> str:
    lines = ["topics: " + ", ".join(n.get("label", "") for n in payload.get("nodes", []))]
    for edge in payload.get("edges", []):
        lines.append(f"{edge.get('from')} -> {edge.get('to')}: {edge.get('label')}")
    return "\n".join(lines)


def _render_radar(payload: dict) -> str:
    return "\n".join(f"{a.get('name')}: {a.get('value'):.3f}" for a in payload.get("axes", []))


def _render_venn(payload: dict) -> str:
    names = [s.get("name", "") for s in payload.get("sets", [])]
    lines = []
    for region in payload.get("regions", []):
        mask = region.get("membership_mask", "")
        label = " & ".join(names[i] for i, bit in enumerate(mask) if bit == "1")
        lines.append(f"{label}: {region.get('overlay', '')}")
    return "\n".join(lines)


_RENDERERS: dict[ComponentKind, Callable[[dict], str]] = {
    ComponentKind.TEXTUAL: lambda p: p.get("body", ""),
    ComponentKind.TAGS: _render_tags,
    ComponentKind.HIERARCHY: _render_hierarchy,
    ComponentKind.GRAPH: _render_graph,
    ComponentKind.RADAR: _render_radar,
    ComponentKind.VENN: _render_venn,
}


def _collect_terms(bundle: ExplanationBundle, facts: Sequence[Fact]) -> tuple[str, ...]:
    """Topic titles and tags visible in the context, for the relevance check."""
    terms: set[str] = set()
    payloads = bundle.payloads
    tags_payload = payloads.get(ComponentKind.TAGS)
    if tags_payload:
        terms.update(e.get("label", "") for e in tags_payload.get("entries", []))
    graph_payload = payloads.get(ComponentKind.GRAPH)
    if graph_payload:
        terms.update(n.get("label", "") for n in graph_payload.get("nodes", []))
    hierarchy_payload = payloads.get(ComponentKind.HIERARCHY)
    if hierarchy_payload:
        stack = [hierarchy_payload.get("root", {})]
        while stack:
            node = stack.pop()
            terms.add(node.get("title", ""))
            stack.extend(node.get("children", []))
    for fact in facts:
        if fact.key.endswith("title"):
            terms.add(fact.value)
    return tuple(sorted(t for t in terms if t))


def context_snapshot(bundle: ExplanationBundle, facts: Sequence[Fact] = ()) -> ContextBlock:
    """Renders the visible payloads plus facts into deterministic prompt text.

    One titled section per visible payload, in component order, then a
    Facts section with one ``key: value`` line per fact in input order.
    """
    sections: list[str] = []
    kinds: list[ComponentKind] = []
    for kind in KIND_ORDER:
        payload = bundle.payloads.get(kind)
        if payload is None or kind is ComponentKind.CHATBOT:
            continue
        kinds.append(kind)
        sections.append(f"## {SECTION_TITLES[kind]}\n{_RENDERERS[kind](payload)}")
    fact_text = ""
    if facts:
        fact_lines = "\n".join(f"{fact.key}: {fact.value}" for fact in facts)
        fact_text = f"{FACTS_HEADING}\n{fact_lines}"
    return ContextBlock(
        component_text="\n\n".join(sections),
        fact_text=fact_text,
        source_kinds=tuple(kinds),
        terms=_collect_terms(bundle, facts),
    )


def fetch_facts(rec: LearningRecommendation, index: DomainIndex) -> list[Fact]:
    """The recommendation's own facts plus per-topic facts from the store.

    Own facts come first, then for each recommended topic (in rank order)
    a title fact, a description fact when the description is non-empty,
    and a hyperlink fact when a hyperlink exists; each derived fact's
    source_ref is the topic id.
    """
    facts = list(rec.facts)
    for item in rec.items_by_rank():
        topic = index.topics.get(item.topic_id)
        if topic is None:
            raise ReferentialError(f"unresolved topic_id {item.topic_id!r}")
        facts.append(Fact(key=f"{topic.id} title", value=topic.title, source_ref=topic.id))
        if topic.description:
            facts.append(Fact(key=f"{topic.id} description", value=topic.description, source_ref=topic.id))
        if topic.hyperlink:
            facts.append(Fact(key=f"{topic.id} hyperlink", value=topic.hyperlink, source_ref=topic.id))
    return facts


def assemble_prompt(
    session: ChatSession,
    user_message: str,
    rules: RuleSet | None = None,
    history_window: int = DEFAULT_HISTORY_WINDOW,
) -> PromptEnvelope:
    """Deterministic prompt assembly: rules, context, facts, window, turn.

    The three leading blocks concatenate into a single system message;
    history maps llm senders to assistant turns and humans to user turns.
    """
    if not user_message:
        raise PreconditionError("user_message must be non-empty")
    rules = rules or EMPTY_RULESET
    rule_block = "\n".join(rule.text for rule in rules.pre_rules)
    context_block = session.context.component_text
    fact_block = session.context.fact_text
    window = session.history[-history_window:] if history_window > 0 else ()

    kinds = {p.participant_id: p.kind for p in session.participants}
    messages: list[dict] = []
    system_content = "\n\n".join(block for block in (rule_block, context_block, fact_block) if block)
    if system_content:
        messages.append({"role": "system", "content": system_content})
    for message in window:
        role = "assistant" if kinds.get(message.sender) is ParticipantKind.LLM else "user"
        messages.append({"role": role, "content": message.content})
    messages.append({"role": "user", "content": user_message})

    return PromptEnvelope(
        rule_block=rule_block,
        context_block=context_block,
        fact_block=fact_block,
        history_window=tuple(window),
        user_turn=user_message,
        serialized_messages=tuple(messages),
    )


_LINK_PATTERN = re.compile(r"http\S+")


def validate_response(
    raw: str,
    rules: RuleSet,
    facts: Sequence[Fact],
    context: ContextBlock,
) -> ValidationReport:
    """Applies every post-rule and lists every violation; never raises.

    forbidden_pattern rejects on a case-insensitive match anywhere.
    grounded_links rejects any maximal ``http...`` substring that does
    not appear verbatim inside some fact value. relevance requires a
    whole-word match of at least one context term. max_length bounds the
    raw character count.
    """
    violations: list[RuleViolation] = []
    for rule in rules.post_rules:
        if rule.check_kind is CheckKind.FORBIDDEN_PATTERN:
            match = re.search(str(rule.parameter), raw, re.IGNORECASE)
            if match:
                violations.append(RuleViolation(rule.rule_id, rule.check_kind, match.group(0)))
        elif rule.check_kind is CheckKind.GROUNDED_LINKS:
            for link in _LINK_PATTERN.findall(raw):
                if not any(link in fact.value for fact in facts):
                    violations.append(RuleViolation(rule.rule_id, rule.check_kind, link))
        elif rule.check_kind is CheckKind.RELEVANCE:
            matched = any(
                re.search(rf"\b{re.escape(term)}\b", raw, re.IGNORECASE)
                for term in context.terms
                if term
            )
            if not matched:
                violations.append(RuleViolation(rule.rule_id, rule.check_kind, raw[:80]))
        elif rule.check_kind is CheckKind.MAX_LENGTH:
            limit = int(rule.parameter)  # type: ignore[arg-type]
            if len(raw) > limit:
                violations.append(RuleViolation(rule.rule_id, rule.check_kind, raw[limit : limit + 60]))
    verdict = Verdict.ACCEPTED if not violations else Verdict.REJECTED
    return ValidationReport(verdict=verdict, violations=tuple(violations))


def _grounding_refs_used(raw: str, facts: Sequence[Fact]) -> tuple[str, ...]:
    """source_refs of facts whose value appears in the accepted response."""
    lowered = raw.lower()
    return tuple(sorted({f.source_ref for f in facts if f.value and f.value.lower() in lowered}))


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ChatOrchestrator:
    """Serializes all mutation per session and drives the LLM round-trips.

    Distinct sessions proceed concurrently; within one session every
    post runs under that session's lock, so histories stay gap-free.
    """

    DEFAULT_AGENT_ID = "assistant"

    def __init__(
        self,
        store,
        transport: Transport | None = None,
        *,
        clock: Callable[[], str] = _utc_now,
        sleep: Callable[[float], None] = time.sleep,
        secrets: Mapping[str, str] | None = None,
        id_factory: Callable[[], str] | None = None,
    ):
        self._store = store
        self._transport = transport if transport is not None else HttpTransport()
        self._clock = clock
        self._sleep = sleep
        self._secrets = secrets
        self._id_factory = id_factory or (lambda: uuid.uuid4().hex)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def load_session(self, session_id: str) -> ChatSession:
        doc = self._store.get("sessions", session_id)
        if doc is None:
            raise NotFoundError(f"session {session_id!r} does not exist")
        return ChatSession.from_dict(doc)

    def _save_session(self, session: ChatSession) -> None:
        self._store.put("sessions", session.session_id, session.to_dict())

    def create_session(
        self,
        learner_id: str,
        condition,
        bundle: ExplanationBundle,
        facts: Sequence[Fact] = (),
        extra_participants: Sequence[Participant] = (),
    ) -> ChatSession:
        """New session under a chatbot-visible condition.

        Participants are the learner, a default agent configured from the
        condition, then the extras in declared order. The context snapshot
        is taken once at creation.
        """
        if ComponentKind.CHATBOT not in condition.visible_components:
            raise ComponentNotVisibleError(
                f"condition {condition.condition_id!r} does not show the chatbot"
            )
        if bundle.condition_id != condition.condition_id:
            raise ConfigurationError(
                f"bundle was built under condition {bundle.condition_id!r}, "
                f"not {condition.condition_id!r}"
            )
        if not condition.llm_config_ref:
            raise ConfigurationError(
                f"condition {condition.condition_id!r} has no llm_config_ref"
            )
        config_doc = self._store.get("llm_configs", condition.llm_config_ref)
        if config_doc is None:
            raise NotFoundError(f"llm config {condition.llm_config_ref!r} does not exist")
        agent = Participant(
            participant_id=self.DEFAULT_AGENT_ID,
            kind=ParticipantKind.LLM,
            llm_config=LlmConfig.from_dict(config_doc),
        )
        participants = (
            Participant(participant_id=learner_id, kind=ParticipantKind.LEARNER),
            agent,
            *extra_participants,
        )
        session = ChatSession(
            session_id=self._id_factory(),
            condition_id=condition.condition_id,
            participants=participants,
            context=context_snapshot(bundle, facts),
            facts=tuple(facts),
            history=(),
            next_seq=1,
        )
        self._save_session(session)
        return session

    def post_message(
        self,
        session_id: str,
        sender_id: str,
        recipients: Sequence[str],
        content: str,
        rules: RuleSet | None = None,
        history_window: int = DEFAULT_HISTORY_WINDOW,
    ) -> list[ChatMessage]:
        """Appends the sender's message and every triggered agent reply.

        Each llm recipient (in participant declaration order) gets a
        prompt assembled from the pre-message snapshot; accepted output
        is appended verbatim, rejected output is replaced by the fixed
        refusal, provider failures (after retries) by a failure notice.
        """
        if not content:
            raise SchemaError(["content: must be non-empty"])
        rules = rules or EMPTY_RULESET
        with self._session_lock(session_id):
            session = self.load_session(session_id)
            if session.participant(sender_id) is None:
                raise MembershipError(f"sender {sender_id!r} is not a session participant")
            if not recipients:
                raise MembershipError("recipients must be non-empty")
            for recipient in recipients:
                if session.participant(recipient) is None:
                    raise MembershipError(f"recipient {recipient!r} is not a session participant")

            snapshot = session
            appended: list[ChatMessage] = []

            def append(message: ChatMessage) -> None:
                nonlocal session
                session = replace(
                    session, history=session.history + (message,), next_seq=message.seq + 1
                )
                appended.append(message)

            append(
                ChatMessage(
                    seq=session.next_seq,
                    sender=sender_id,
                    recipients=tuple(recipients),
                    content=content,
                    grounding_refs=(),
                    created_at=self._clock(),
                )
            )

            recipient_set = set(recipients)
            agents = [
                p
                for p in session.participants
                if p.kind is ParticipantKind.LLM and p.participant_id in recipient_set
            ]
            for agent in agents:
                envelope = assemble_prompt(snapshot, content, rules, history_window)
                reply_content, refs = self._agent_reply(
                    envelope, agent, rules, snapshot, session.session_id, session.next_seq
                )
                append(
                    ChatMessage(
                        seq=session.next_seq,
                        sender=agent.participant_id,
                        recipients=(sender_id,),
                        content=reply_content,
                        grounding_refs=refs,
                        created_at=self._clock(),
                    )
                )

            self._save_session(session)
            learner = session.learner_id()
            for message in appended:
                self._store.append_event(
                    {
                        "type": "interaction",
                        "participant_id": learner,
                        "kind": "chat_turn",
                        "target": {
                            "component": ComponentKind.CHATBOT.value,
                            "element": f"{session.session_id}:{message.seq}",
                        },
                        "occurred_at": message.created_at,
                    }
                )
            return appended

    def _agent_reply(
        self,
        envelope: PromptEnvelope,
        agent: Participant,
        rules: RuleSet,
        snapshot: ChatSession,
        session_id: str,
        seq: int,
    ) -> tuple[str, tuple[str, ...]]:
        assert agent.llm_config is not None
        try:
            raw = self._call_with_retries(envelope, agent.llm_config)
        except ProviderError as exc:
            self._store.append_event(
                {
                    "type": "provider_failure",
                    "session_id": session_id,
                    "seq": seq,
                    "agent": agent.participant_id,
                    "error": str(exc),
                }
            )
            return FAILURE_NOTICE, ()
        report = validate_response(raw, rules, snapshot.facts, snapshot.context)
        if report.accepted:
            return raw, _grounding_refs_used(raw, snapshot.facts)
        self._store.append_event(
            {
                "type": "chat_rejection",
                "session_id": session_id,
                "seq": seq,
                "agent": agent.participant_id,
                "raw_text": raw,
                "report": report.to_dict(),
            }
        )
        return REFUSAL_TEXT, ()

    def _call_with_retries(self, envelope: PromptEnvelope, config: LlmConfig) -> str:
        retries = 0
        while True:
            try:
                return send_chat_completion(
                    list(envelope.serialized_messages), config, self._transport, self._secrets
                )
            except ProviderError as exc:
                if not exc.retriable or retries >= RETRY_LIMIT:
                    raise
                retries += 1
                self._sleep(RETRY_BACKOFF_SECONDS)

    def messages_after(self, session_id: str, after: int) -> list[ChatMessage]:
        session = self.load_session(session_id)
        return [m for m in session.history if m.seq > after]
