"""Rule-constrained chat with stub providers: prompts, guardrails, routing.

Shows how a session prompt is assembled (rules, then interface context,
then facts, then history), and what happens when a model response breaks
the grounding rules.

Run with: python demos/grounded_chat.py
"""

import os
import tempfile

from explainlab import (
    ChatOrchestrator,
    ComponentKind,
    DocumentStore,
    EchoTransport,
    Participant,
    ParticipantKind,
    RuleSet,
    ScriptedTransport,
    assemble_prompt,
    fetch_facts,
)
from explainlab.chat import CheckKind, PostRule, PreRule
from explainlab.components import bundle_from_index
from explainlab.experiments import ExperimentCondition
from explainlab.llm import LlmConfig

os.environ.setdefault("DEMO_LLM_KEY", "demo-key")

LLM_CONFIG = {
    "provider_base_url": "https://llm.example/v1",
    "model_name": "tutor-model",
    "temperature": 0.0,
    "max_output_tokens": 256,
    "api_key_ref": "DEMO_LLM_KEY",
}

RULES = RuleSet(
    ruleset_id="demo-rules",
    pre_rules=(
        PreRule("tone", "Answer in plain language suitable for a learner."),
        PreRule("scope", "Only discuss the recommended materials."),
    ),
    post_rules=(
        PostRule("grounded", CheckKind.GROUNDED_LINKS),
        PostRule("on-topic", CheckKind.RELEVANCE),
        PostRule("no-grades", CheckKind.FORBIDDEN_PATTERN, parameter=r"final grade"),
    ),
)

# reuse the fixture dataset from the test suite's canonical bundle
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from conftest import fixture_bundle_dict  # noqa: E402

with tempfile.TemporaryDirectory() as workdir:
    store = DocumentStore(os.path.join(workdir, "data"))
    assert store.import_bundle(fixture_bundle_dict()).ok
    store.put("rulesets", "demo-rules", RULES.to_dict())
    store.put("llm_configs", "demo-model", LLM_CONFIG)

    condition = ExperimentCondition(
        condition_id="demo-chat",
        visible_components=(ComponentKind.TAGS, ComponentKind.RADAR, ComponentKind.CHATBOT),
        rules_ref="demo-rules",
        llm_config_ref="demo-model",
    )
    store.put("conditions", condition.condition_id, condition.to_dict())

    index = store.domain_index()
    rec = index.recommendations["rec-1"]
    bundle = bundle_from_index(index, rec, condition.condition_id, condition.visible_components)
    facts = fetch_facts(rec, index)

    # --- what the model actually receives -----------------------------------

    orchestrator = ChatOrchestrator(store, EchoTransport())
    session = orchestrator.create_session("learner-1", condition, bundle, facts)
    envelope = assemble_prompt(session, "What are Linear Equations?", RULES)
    print("=== system message sent to the provider ===")
    print(envelope.serialized_messages[0]["content"])
    print()
    print("=== user turn ===")
    print(envelope.serialized_messages[-1]["content"])

    # --- guardrails in action -------------------------------------------------

    print("\n=== scripted provider: hallucinated link, then leaked pattern, then a good answer ===")
    scripted = ScriptedTransport(
        [
            "Read more at http://not-in-the-database.example/page",
            "I checked and your final grade is already decided.",
            # note: link matching is verbatim, so the URL cannot carry trailing punctuation
            "Linear Equations introduce solving for x, see https://course.example/linear",
        ]
    )
    orchestrator = ChatOrchestrator(store, scripted)
    session = orchestrator.create_session("learner-1", condition, bundle, facts)

    for question in (
        "Where can I read about Linear Equations?",
        "How will this affect my grades for Polynomials?",
        "Give me a one-line summary of Linear Equations.",
    ):
        appended = orchestrator.post_message(
            session.session_id, "learner-1", ["assistant"], question, RULES
        )
        print(f"\nlearner > {question}")
        print(f"assistant > {appended[1].content}")
        if appended[1].grounding_refs:
            print(f"           (grounded on: {', '.join(appended[1].grounding_refs)})")

    print("\n=== rejected raw texts live only in the research event log ===")
    for _, record in store.event_log.read_all():
        if record.get("type") == "chat_rejection":
            checks = {v["check_kind"] for v in record["report"]["violations"]}
            print(f"  seq {record['seq']}: {sorted(checks)} -> {record['raw_text'][:60]}...")

    # --- multi-agent routing ----------------------------------------------------

    print("\n=== one learner turn fanned out to two agents ===")
    second_agent = Participant("socrates", ParticipantKind.LLM, LlmConfig.from_dict(LLM_CONFIG))
    orchestrator = ChatOrchestrator(store, EchoTransport())
    session = orchestrator.create_session(
        "learner-1", condition, bundle, facts, extra_participants=(second_agent,)
    )
    appended = orchestrator.post_message(
        session.session_id,
        "learner-1",
        ["assistant", "socrates"],
        "Compare Polynomials with Linear Equations.",
        RULES,
    )
    for message in appended:
        print(f"  seq {message.seq}: {message.sender} -> {', '.join(message.recipients)}")
