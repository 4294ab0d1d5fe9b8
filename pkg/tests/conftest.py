"""Shared fixtures: a small algebra course with known set arithmetic.

The recommendation covers topics {a, b, c} toward a goal requiring
{a, b, c, d}; the learner is interested in {b, e} and has completed {a}.
Those numbers drive the hand-computed radar expectations used throughout
the suite.
"""

from __future__ import annotations

import pytest

from explainlab.components import ComponentKind
from explainlab.chat import PostRule, PreRule, RuleSet, CheckKind
from explainlab.experiments import ExperimentCondition
from explainlab.model import (
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
    RelationKind,
)
from explainlab.store import DocumentStore

ALL_KINDS = tuple(ComponentKind)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}")


def make_topics() -> dict[str, Topic]:
    return {
        "a": Topic(
            id="a",
            title="Linear Equations",
            description="Solving first-degree equations.",
            tags=("algebra", "equations"),
            hyperlink="https://course.example/linear",
        ),
        "b": Topic(
            id="b",
            title="Quadratic Functions",
            description="Parabolas and their roots.",
            tags=("algebra", "functions"),
            hyperlink="https://course.example/quadratic",
        ),
        "c": Topic(
            id="c",
            title="Polynomials",
            description="Working with polynomial expressions.",
            tags=("algebra",),
        ),
        "d": Topic(
            id="d",
            title="Factoring",
            description="Decomposing expressions into factors.",
            tags=("algebra", "equations"),
        ),
        "e": Topic(
            id="e",
            title="Set Theory",
            description="Sets, unions and intersections.",
            tags=("foundations",),
            hyperlink="https://course.example/sets",
        ),
    }


def make_structure() -> CourseStructure:
    return CourseStructure(
        structure_id="algebra-course",
        root=StructureNode(
            node_id="n-root",
            title="Algebra Course",
            children=(
                StructureNode(
                    node_id="n-1",
                    title="Equations",
                    children=(
                        StructureNode(node_id="n-1a", title="Linear Equations", topic_id="a"),
                        StructureNode(node_id="n-1b", title="Quadratic Functions", topic_id="b"),
                    ),
                ),
                StructureNode(
                    node_id="n-2",
                    title="Expressions",
                    children=(
                        StructureNode(node_id="n-2a", title="Polynomials", topic_id="c"),
                        StructureNode(node_id="n-2b", title="Factoring", topic_id="d"),
                    ),
                ),
            ),
        ),
    )


def make_relations() -> tuple[TopicRelation, ...]:
    return (
        TopicRelation(from_topic="a", to_topic="b", kind=RelationKind.SIMILARITY, weight=0.9),
        TopicRelation(from_topic="b", to_topic="c", kind=RelationKind.PREREQUISITE, weight=0.6),
        TopicRelation(from_topic="c", to_topic="d", kind=RelationKind.PART_OF, weight=0.7),
        TopicRelation(from_topic="a", to_topic="e", kind=RelationKind.SIMILARITY, weight=0.4),
    )


def make_goal() -> LearningGoal:
    return LearningGoal(
        goal_id="goal-1", title="Algebra Basics", required_topics=frozenset({"a", "b", "c", "d"})
    )


def make_profile() -> LearnerProfile:
    return LearnerProfile(
        learner_id="learner-1",
        interest_topics=frozenset({"b", "e"}),
        completed_topics=frozenset({"a"}),
        preference_tags=frozenset({"algebra"}),
    )


def make_recommendation() -> LearningRecommendation:
    return LearningRecommendation(
        id="rec-1",
        learner_id="learner-1",
        goal_id="goal-1",
        items=(
            RecommendedItem(topic_id="a", rank=1, score=0.9),
            RecommendedItem(topic_id="b", rank=2, score=0.8),
            RecommendedItem(topic_id="c", rank=3, score=0.7),
        ),
        facts=(
            Fact(key="difficulty", value="introductory", source_ref="rec-1"),
        ),
    )


def make_index() -> DomainIndex:
    rec = make_recommendation()
    return DomainIndex(
        topics=make_topics(),
        goals={"goal-1": make_goal()},
        profiles={"learner-1": make_profile()},
        structures={"algebra-course": make_structure()},
        relations=make_relations(),
        recommendations={"rec-1": rec},
    )


def fixture_bundle_dict() -> dict:
    """The same dataset in canonical bundle form, for import tests."""
    return {
        "topics": [t.to_dict() for t in make_topics().values()],
        "relations": [r.to_dict() for r in make_relations()],
        "goals": [make_goal().to_dict()],
        "profiles": [make_profile().to_dict()],
        "structures": [make_structure().to_dict()],
        "recommendations": [make_recommendation().to_dict()],
    }


def make_ruleset() -> RuleSet:
    return RuleSet(
        ruleset_id="default-rules",
        pre_rules=(
            PreRule(rule_id="tone", text="Answer in plain language suitable for a learner."),
            PreRule(rule_id="scope", text="Only discuss the recommended materials."),
        ),
        post_rules=(
            PostRule(rule_id="no-grades", check_kind=CheckKind.FORBIDDEN_PATTERN, parameter=r"final grade"),
            PostRule(rule_id="grounded", check_kind=CheckKind.GROUNDED_LINKS),
            PostRule(rule_id="on-topic", check_kind=CheckKind.RELEVANCE),
            PostRule(rule_id="short", check_kind=CheckKind.MAX_LENGTH, parameter=2000),
        ),
    )


def make_condition(
    condition_id: str = "cond-full",
    kinds: tuple[ComponentKind, ...] = ALL_KINDS,
    llm_config_ref: str | None = "echo-model",
) -> ExperimentCondition:
    return ExperimentCondition(
        condition_id=condition_id,
        visible_components=kinds,
        rules_ref="default-rules",
        llm_config_ref=llm_config_ref if ComponentKind.CHATBOT in kinds else None,
    )


LLM_CONFIG_DOC = {
    "provider_base_url": "https://llm.example/v1",
    "model_name": "tutor-model",
    "temperature": 0.0,
    "max_output_tokens": 256,
    "api_key_ref": "EXPLAINLAB_TEST_KEY",
}


@pytest.fixture(autouse=True)
def _llm_test_key(monkeypatch):
    monkeypatch.setenv("EXPLAINLAB_TEST_KEY", "test-key")


@pytest.fixture
def topics():
    return make_topics()


@pytest.fixture
def structure():
    return make_structure()


@pytest.fixture
def relations():
    return make_relations()


@pytest.fixture
def goal():
    return make_goal()


@pytest.fixture
def profile():
    return make_profile()


@pytest.fixture
def rec():
    return make_recommendation()


@pytest.fixture
def index():
    return make_index()


@pytest.fixture
def store(tmp_path) -> DocumentStore:
    return DocumentStore(tmp_path / "data")


@pytest.fixture
def loaded_store(store) -> DocumentStore:
    """Store pre-populated with the fixture dataset plus chat configuration."""
    report = store.import_bundle(fixture_bundle_dict())
    assert report.ok, report.problems
    store.put("rulesets", "default-rules", make_ruleset().to_dict())
    store.put("llm_configs", "echo-model", dict(LLM_CONFIG_DOC))
    condition = make_condition()
    store.put("conditions", condition.condition_id, condition.to_dict())
    return store
