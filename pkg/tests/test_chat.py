"""Chat orchestration: snapshots, prompt assembly, guardrails, routing."""

import itertools
import json
import random

import pytest

from explainlab.chat import (
    ChatMessage,
    ChatOrchestrator,
    ChatSession,
    CheckKind,
    ContextBlock,
    FAILURE_NOTICE,
    Participant,
    ParticipantKind,
    PostRule,
    REFUSAL_TEXT,
    RuleSet,
    assemble_prompt,
    context_snapshot,
    fetch_facts,
    validate_response,
)
from explainlab.components import ComponentKind, bundle_from_index
from explainlab.errors import (
    ComponentNotVisibleError,
    MembershipError,
    NotFoundError,
    PreconditionError,
)
from explainlab.llm import CountingTransport, EchoTransport, LlmConfig, ScriptedTransport
from explainlab.model import Fact

from conftest import LLM_CONFIG_DOC, make_condition, make_ruleset

ECHO_CONFIG = LlmConfig.from_dict(LLM_CONFIG_DOC)


def _bundle(index, kinds=tuple(ComponentKind)):
    rec = index.recommendations["rec-1"]
    return bundle_from_index(index, rec, "cond-full", kinds)


# --- context snapshots ---------------------------------------------------------


class TestContextSnapshot:
    def test_tags_only_no_facts_has_one_section(self, index):
        bundle = _bundle(index, (ComponentKind.TAGS,))
        context = context_snapshot(bundle, [])
        assert context.rendered.count("## ") == 1
        assert "## Tags" in context.rendered
        assert "## Facts" not in context.rendered
        assert context.source_kinds == (ComponentKind.TAGS,)

    def test_empty_bundle_two_facts_renders_facts_only(self, index):
        bundle = _bundle(index, ())
        facts = [Fact("k1", "v1", "a"), Fact("k2", "v2", "a")]
        context = context_snapshot(bundle, facts)
        assert context.component_text == ""
        assert context.rendered.splitlines() == ["## Facts", "k1: v1", "k2: v2"]

    def test_sections_follow_component_order(self, index):
        bundle = _bundle(index)
        context = context_snapshot(bundle, [])
        positions = [
            context.rendered.index(f"## {title}")
            for title in (
                "Textual explanation",
                "Tags",
                "Hierarchy",
                "Topic graph",
                "Radar chart",
                "Venn diagram",
            )
        ]
        assert positions == sorted(positions)

    def test_deterministic_bytes(self, index):
        bundle = _bundle(index)
        facts = [Fact("k", "v", "a")]
        assert context_snapshot(bundle, facts).rendered == context_snapshot(bundle, facts).rendered

    def test_terms_include_titles_and_tags(self, index):
        context = context_snapshot(_bundle(index), [])
        assert "Linear Equations" in context.terms
        assert "algebra" in context.terms


# --- fact fetching ---------------------------------------------------------------


class TestFetchFacts:
    def test_two_linked_topics_give_six_derived_facts(self, index):
        from explainlab.model import LearningRecommendation, RecommendedItem

        rec = LearningRecommendation(
            id="rec-1",
            learner_id="learner-1",
            goal_id="goal-1",
            items=(RecommendedItem("a", 1, 0.9), RecommendedItem("b", 2, 0.8)),
        )
        facts = fetch_facts(rec, index)
        assert len(facts) == 6
        assert [f.source_ref for f in facts] == ["a", "a", "a", "b", "b", "b"]
        assert facts[0].key == "a title" and facts[0].value == "Linear Equations"
        assert facts[2].key == "a hyperlink"

    def test_topic_without_hyperlink_has_no_hyperlink_fact(self, index, rec):
        facts = fetch_facts(rec, index)
        c_facts = [f for f in facts if f.source_ref == "c"]
        assert [f.key for f in c_facts] == ["c title", "c description"]

    def test_own_facts_come_first(self, index, rec):
        facts = fetch_facts(rec, index)
        assert facts[0].key == "difficulty"
        assert facts[0].source_ref == "rec-1"

    def test_unresolved_topic_raises(self, index):
        from explainlab.errors import ReferentialError
        from explainlab.model import LearningRecommendation, RecommendedItem

        rec = LearningRecommendation(
            id="r", learner_id="l", goal_id="g", items=(RecommendedItem("ghost", 1, 0.5),)
        )
        with pytest.raises(ReferentialError):
            fetch_facts(rec, index)


# --- prompt assembly ---------------------------------------------------------------


def _session_with_history(index, message_count: int) -> ChatSession:
    participants = (
        Participant("learner-1", ParticipantKind.LEARNER),
        Participant("assistant", ParticipantKind.LLM, ECHO_CONFIG),
    )
    history = []
    for seq in range(1, message_count + 1):
        sender = "learner-1" if seq % 2 == 1 else "assistant"
        history.append(
            ChatMessage(
                seq=seq,
                sender=sender,
                recipients=("assistant",) if sender == "learner-1" else ("learner-1",),
                content=f"message {seq}",
                created_at="2026-01-01T00:00:00+00:00",
            )
        )
    bundle = _bundle(index)
    facts = fetch_facts(index.recommendations["rec-1"], index)
    return ChatSession(
        session_id="s-1",
        condition_id="cond-full",
        participants=participants,
        context=context_snapshot(bundle, facts),
        facts=tuple(facts),
        history=tuple(history),
        next_seq=message_count + 1,
    )


class TestAssemblePrompt:
    def test_empty_rules_empty_history(self, index):
        session = _session_with_history(index, 0)
        envelope = assemble_prompt(session, "hello")
        assert len(envelope.serialized_messages) == 2
        system, user = envelope.serialized_messages
        assert system["role"] == "system"
        assert system["content"] == session.context.rendered
        assert user == {"role": "user", "content": "hello"}

    def test_window_keeps_last_ten_of_twelve(self, index):
        session = _session_with_history(index, 12)
        envelope = assemble_prompt(session, "next question", history_window=10)
        assert [m.seq for m in envelope.history_window] == list(range(3, 13))
        # wire view: system + 10 history + user turn
        assert len(envelope.serialized_messages) == 12

    def test_rule_order_preserved(self, index):
        session = _session_with_history(index, 0)
        rules = make_ruleset()
        envelope = assemble_prompt(session, "hi", rules)
        system = envelope.serialized_messages[0]["content"]
        first = system.index(rules.pre_rules[0].text)
        second = system.index(rules.pre_rules[1].text)
        assert first < second

    def test_block_order_rules_context_facts(self, index):
        session = _session_with_history(index, 0)
        rules = make_ruleset()
        envelope = assemble_prompt(session, "hi", rules)
        system = envelope.serialized_messages[0]["content"]
        rule_at = system.index(rules.pre_rules[0].text)
        context_at = system.index("## Textual explanation")
        facts_at = system.index("## Facts")
        assert rule_at < context_at < facts_at

    def test_roles_follow_sender_kinds(self, index):
        session = _session_with_history(index, 4)
        envelope = assemble_prompt(session, "q")
        roles = [m["role"] for m in envelope.serialized_messages[1:-1]]
        assert roles == ["user", "assistant", "user", "assistant"]

    def test_repeated_assembly_is_byte_identical(self, index):
        session = _session_with_history(index, 7)
        rules = make_ruleset()
        blobs = {
            json.dumps(assemble_prompt(session, "same question", rules).serialized_messages)
            for _ in range(25)
        }
        assert len(blobs) == 1

    def test_empty_message_rejected(self, index):
        session = _session_with_history(index, 0)
        with pytest.raises(PreconditionError):
            assemble_prompt(session, "")


# --- response validation --------------------------------------------------------------


def _context_with_terms(*terms) -> ContextBlock:
    return ContextBlock(component_text="", fact_text="", source_kinds=(), terms=tuple(terms))


FACTS = (
    Fact("a title", "Linear Equations", "a"),
    Fact("a hyperlink", "https://course.example/linear", "a"),
)


def _rules(*post_rules) -> RuleSet:
    return RuleSet(ruleset_id="t", post_rules=tuple(post_rules))


class TestValidateResponse:
    def test_empty_rules_accepts_anything(self):
        report = validate_response("anything at all", _rules(), FACTS, _context_with_terms())
        assert report.accepted

    def test_ungrounded_link_rejected_with_evidence(self):
        rule = PostRule("g", CheckKind.GROUNDED_LINKS)
        raw = "look at http://evil.example/page now"
        report = validate_response(raw, _rules(rule), FACTS, _context_with_terms())
        assert not report.accepted
        assert report.violations[0].check_kind is CheckKind.GROUNDED_LINKS
        assert report.violations[0].evidence == "http://evil.example/page"

    def test_grounded_link_accepted(self):
        rule = PostRule("g", CheckKind.GROUNDED_LINKS)
        raw = "see https://course.example/linear for details"
        report = validate_response(raw, _rules(rule), FACTS, _context_with_terms())
        assert report.accepted

    def test_forbidden_pattern_case_insensitive(self):
        rule = PostRule("f", CheckKind.FORBIDDEN_PATTERN, parameter=r"final grade")
        report = validate_response("Your FINAL GRADE is A", _rules(rule), FACTS, _context_with_terms())
        assert not report.accepted
        assert report.violations[0].evidence == "FINAL GRADE"

    def test_relevance_requires_whole_word_term(self):
        rule = PostRule("r", CheckKind.RELEVANCE)
        context = _context_with_terms("Linear Equations", "algebra")
        ok = validate_response("Algebra is fun", _rules(rule), FACTS, context)
        assert ok.accepted
        bad = validate_response("The weather is nice", _rules(rule), FACTS, context)
        assert not bad.accepted
        # substring inside a longer word does not count
        partial = validate_response("algebraic topology", _rules(rule), FACTS, context)
        assert not partial.accepted

    def test_max_length(self):
        rule = PostRule("m", CheckKind.MAX_LENGTH, parameter=10)
        report = validate_response("x" * 11, _rules(rule), FACTS, _context_with_terms())
        assert not report.accepted

    def test_all_violations_listed(self):
        rules = _rules(
            PostRule("f", CheckKind.FORBIDDEN_PATTERN, parameter="secret"),
            PostRule("m", CheckKind.MAX_LENGTH, parameter=5),
        )
        report = validate_response("a secret message", rules, FACTS, _context_with_terms())
        assert {v.rule_id for v in report.violations} == {"f", "m"}

    def test_adding_rules_never_unrejects(self):
        pool = [
            PostRule("f1", CheckKind.FORBIDDEN_PATTERN, parameter="alpha"),
            PostRule("f2", CheckKind.FORBIDDEN_PATTERN, parameter="beta"),
            PostRule("g", CheckKind.GROUNDED_LINKS),
            PostRule("r", CheckKind.RELEVANCE),
            PostRule("m", CheckKind.MAX_LENGTH, parameter=20),
        ]
        texts = [
            "alpha beta",
            "clean text about Linear Equations",
            "http://unknown.example",
            "a perfectly ordinary but rather long sentence exceeding limits",
            "short",
        ]
        rng = random.Random(4242)
        context = _context_with_terms("Linear Equations")
        for _ in range(200):
            raw = rng.choice(texts)
            smaller = rng.sample(pool, rng.randint(0, len(pool) - 1))
            extra = [r for r in pool if r not in smaller]
            larger = smaller + rng.sample(extra, rng.randint(1, len(extra)))
            small_report = validate_response(raw, _rules(*smaller), FACTS, context)
            large_report = validate_response(raw, _rules(*larger), FACTS, context)
            if not small_report.accepted:
                assert not large_report.accepted


# --- orchestration -----------------------------------------------------------------


def build_env(loaded_store, transport, extra_participants=()):
    condition = make_condition()
    index = loaded_store.domain_index()
    rec = index.recommendations["rec-1"]
    bundle = bundle_from_index(index, rec, condition.condition_id, condition.visible_components)
    facts = fetch_facts(rec, index)
    sleeps: list[float] = []
    counter = itertools.count(1)
    orchestrator = ChatOrchestrator(
        loaded_store,
        transport,
        clock=lambda: "2026-02-03T10:00:00+00:00",
        sleep=sleeps.append,
        id_factory=lambda: f"session-{next(counter)}",
    )
    session = orchestrator.create_session(
        "learner-1", condition, bundle, facts, extra_participants
    )
    return orchestrator, session, sleeps


def extra_agent(agent_id="tutor-2"):
    return Participant(agent_id, ParticipantKind.LLM, ECHO_CONFIG)


class TestCreateSession:
    def test_learner_plus_default_agent(self, loaded_store):
        _, session, _ = build_env(loaded_store, EchoTransport())
        assert [p.participant_id for p in session.participants] == ["learner-1", "assistant"]
        assert session.history == ()
        assert session.next_seq == 1

    def test_chatbot_hidden_is_configuration_error(self, loaded_store, index):
        condition = make_condition("cond-no-chat", (ComponentKind.TAGS,))
        rec = index.recommendations["rec-1"]
        bundle = bundle_from_index(index, rec, "cond-no-chat", condition.visible_components)
        orchestrator = ChatOrchestrator(loaded_store, EchoTransport())
        with pytest.raises(ComponentNotVisibleError):
            orchestrator.create_session("learner-1", condition, bundle, [])

    def test_mentor_and_two_agents_in_declared_order(self, loaded_store):
        mentor = Participant("mentor-1", ParticipantKind.MENTOR)
        _, session, _ = build_env(loaded_store, EchoTransport(), (mentor, extra_agent()))
        assert [p.participant_id for p in session.participants] == [
            "learner-1",
            "assistant",
            "mentor-1",
            "tutor-2",
        ]
        assert len(session.participants) == 4

    def test_session_is_persisted(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        loaded = orchestrator.load_session(session.session_id)
        assert loaded == session


class TestPostMessage:
    def test_two_agents_three_messages_two_calls(self, loaded_store):
        transport = CountingTransport(EchoTransport())
        orchestrator, session, _ = build_env(loaded_store, transport, (extra_agent(),))
        appended = orchestrator.post_message(
            session.session_id,
            "learner-1",
            ["assistant", "tutor-2"],
            "Tell me about Linear Equations",
            make_ruleset(),
        )
        assert [m.seq for m in appended] == [1, 2, 3]
        assert [m.sender for m in appended] == ["learner-1", "assistant", "tutor-2"]
        assert transport.calls == 2
        reloaded = orchestrator.load_session(session.session_id)
        assert reloaded.next_seq == 4
        assert [m.seq for m in reloaded.history] == [1, 2, 3]

    def test_mentor_only_no_provider_calls(self, loaded_store):
        transport = CountingTransport(EchoTransport())
        mentor = Participant("mentor-1", ParticipantKind.MENTOR)
        orchestrator, session, _ = build_env(loaded_store, transport, (mentor,))
        appended = orchestrator.post_message(
            session.session_id, "learner-1", ["mentor-1"], "Can you help?", make_ruleset()
        )
        assert len(appended) == 1
        assert transport.calls == 0

    def test_echo_reply_carries_grounding_refs(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        appended = orchestrator.post_message(
            session.session_id,
            "learner-1",
            ["assistant"],
            "Tell me about Linear Equations",
            make_ruleset(),
        )
        reply = appended[1]
        assert reply.content == "Tell me about Linear Equations"
        assert "a" in reply.grounding_refs

    def test_forbidden_response_replaced_by_refusal(self, loaded_store):
        transport = ScriptedTransport(["Your final grade will be 100%"])
        orchestrator, session, _ = build_env(loaded_store, transport)
        appended = orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], "What about Linear Equations?",
            make_ruleset(),
        )
        assert appended[1].content == REFUSAL_TEXT
        assert appended[1].grounding_refs == ()
        reloaded = orchestrator.load_session(session.session_id)
        assert all("final grade" not in m.content for m in reloaded.history)
        rejections = [
            r for _, r in loaded_store.event_log.read_all() if r.get("type") == "chat_rejection"
        ]
        assert len(rejections) == 1
        assert rejections[0]["raw_text"] == "Your final grade will be 100%"
        assert rejections[0]["report"]["verdict"] == "rejected"

    def test_provider_failure_appends_notice_after_retries(self, loaded_store):
        transport = ScriptedTransport([500, 500, 500])
        orchestrator, session, sleeps = build_env(loaded_store, transport)
        appended = orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], "hello Linear Equations",
            make_ruleset(),
        )
        assert appended[1].content == FAILURE_NOTICE
        assert sleeps == [0.5, 0.5]

    def test_non_retriable_error_fails_fast(self, loaded_store):
        transport = ScriptedTransport([401])
        orchestrator, session, sleeps = build_env(loaded_store, transport)
        appended = orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], "hello Linear Equations",
            make_ruleset(),
        )
        assert appended[1].content == FAILURE_NOTICE
        assert sleeps == []

    def test_unknown_sender_rejected(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        with pytest.raises(MembershipError):
            orchestrator.post_message(session.session_id, "stranger", ["assistant"], "hi")

    def test_unknown_recipient_rejected(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        with pytest.raises(MembershipError):
            orchestrator.post_message(session.session_id, "learner-1", ["nobody"], "hi")

    def test_missing_session_not_found(self, loaded_store):
        orchestrator = ChatOrchestrator(loaded_store, EchoTransport())
        with pytest.raises(NotFoundError):
            orchestrator.post_message("ghost", "learner-1", ["assistant"], "hi")

    def test_chat_turn_events_logged_per_message(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], "about Linear Equations",
            make_ruleset(),
        )
        turns = [
            r
            for _, r in loaded_store.event_log.read_all()
            if r.get("type") == "interaction" and r.get("kind") == "chat_turn"
        ]
        assert len(turns) == 2
        elements = [t["target"]["element"] for t in turns]
        assert elements == [f"{session.session_id}:1", f"{session.session_id}:2"]


class TestPolling:
    def test_messages_after_filters_by_seq(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], "about Linear Equations",
            make_ruleset(),
        )
        later = orchestrator.messages_after(session.session_id, 1)
        assert [m.seq for m in later] == [2]
        assert orchestrator.messages_after(session.session_id, 2) == []


class TestSessionRoundTrip:
    def test_session_doc_round_trips(self, loaded_store):
        orchestrator, session, _ = build_env(loaded_store, EchoTransport())
        orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], "about Linear Equations",
            make_ruleset(),
        )
        doc = loaded_store.get("sessions", session.session_id)
        restored = ChatSession.from_dict(doc)
        assert restored.to_dict() == doc


class TestRuleConstruction:
    def test_forbidden_pattern_requires_valid_pattern(self):
        from explainlab.errors import ConfigurationError

        with pytest.raises(ConfigurationError):
            PostRule("f", CheckKind.FORBIDDEN_PATTERN, parameter=None)
        with pytest.raises(ConfigurationError):
            PostRule("f", CheckKind.FORBIDDEN_PATTERN, parameter="([unclosed")

    def test_max_length_requires_non_negative_int(self):
        from explainlab.errors import ConfigurationError

        with pytest.raises(ConfigurationError):
            PostRule("m", CheckKind.MAX_LENGTH, parameter="long")
        with pytest.raises(ConfigurationError):
            PostRule("m", CheckKind.MAX_LENGTH, parameter=-1)
        PostRule("m", CheckKind.MAX_LENGTH, parameter=0)

    def test_ruleset_from_dict_reports_bad_parameters(self):
        from explainlab.errors import SchemaError

        with pytest.raises(SchemaError) as err:
            RuleSet.from_dict(
                {
                    "ruleset_id": "r",
                    "post_rules": [
                        {"rule_id": "f", "check_kind": "forbidden_pattern", "parameter": "([bad"},
                        {"rule_id": "m", "check_kind": "max_length", "parameter": "oops"},
                    ],
                }
            )
        assert len(err.value.problems) == 2
        assert all(".parameter" in p for p in err.value.problems)

    def test_ruleset_rejects_duplicate_rule_ids(self):
        from explainlab.errors import SchemaError

        with pytest.raises(SchemaError) as err:
            RuleSet.from_dict(
                {
                    "ruleset_id": "r",
                    "pre_rules": [{"rule_id": "x", "text": "a"}],
                    "post_rules": [{"rule_id": "x", "check_kind": "relevance", "parameter": None}],
                }
            )
        assert any("duplicate rule_id" in p for p in err.value.problems)


class TestChatTurnReconciliation:
    def test_chat_turn_events_and_messages_are_one_to_one(self, loaded_store):
        orchestrator, first, _ = build_env(loaded_store, EchoTransport())
        orchestrator.post_message(
            first.session_id, "learner-1", ["assistant"], "about Linear Equations", make_ruleset()
        )
        second = orchestrator.create_session(
            "learner-1",
            make_condition(),
            _bundle(loaded_store.domain_index()),
            fetch_facts(loaded_store.domain_index().recommendations["rec-1"], loaded_store.domain_index()),
        )
        orchestrator.post_message(
            second.session_id, "learner-1", ["assistant"], "about Polynomials", make_ruleset()
        )
        orchestrator.post_message(
            second.session_id, "learner-1", ["assistant"], "more about Polynomials", make_ruleset()
        )

        turn_elements = sorted(
            record["target"]["element"]
            for _, record in loaded_store.event_log.read_all()
            if record.get("type") == "interaction" and record.get("kind") == "chat_turn"
        )
        message_keys = sorted(
            f"{session_id}:{message['seq']}"
            for session_id, doc in loaded_store.iter_documents("sessions")
            for message in doc["history"]
        )
        assert turn_elements == message_keys
        assert len(turn_elements) == len(set(turn_elements))
