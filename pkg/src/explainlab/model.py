"""Educational domain entities consumed by every other module.

All types are immutable value objects with canonical dict round-trips.
Canonical field names equal the attribute names, except topic relations
where the JSON keys ``from``/``to`` map to ``from_topic``/``to_topic``
(``from`` is reserved in Python).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from .errors import SchemaError, StructuralError


class RelationKind(str, Enum):
    PREREQUISITE = "prerequisite"
    SIMILARITY = "similarity"
    PART_OF = "part_of"


class _Reader:
    """Pulls typed fields from a raw dict, collecting problems instead of raising."""

    def __init__(self, data: Any, path: str, problems: list[str]):
        self.path = path
        self.problems = problems
        if isinstance(data, Mapping):
            self.data: Mapping[str, Any] = data
        else:
            self.data = {}
            problems.append(f"{path or 'document'}: expected a JSON object")

    def _at(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def str_(self, key: str, *, required: bool = True, allow_empty: bool = True, default: str = "") -> str:
        if key not in self.data or self.data[key] is None:
            if required:
                self.problems.append(f"{self._at(key)}: required")
            return default
        value = self.data[key]
        if not isinstance(value, str):
            self.problems.append(f"{self._at(key)}: expected string")
            return default
        if not allow_empty and not value:
            self.problems.append(f"{self._at(key)}: must be non-empty")
        return value

    def opt_str(self, key: str) -> str | None:
        if key not in self.data or self.data[key] is None:
            return None
        value = self.data[key]
        if not isinstance(value, str):
            self.problems.append(f"{self._at(key)}: expected string or null")
            return None
        return value

    def num(self, key: str, *, required: bool = True, default: float = 0.0) -> float:
        if key not in self.data:
            if required:
                self.problems.append(f"{self._at(key)}: required")
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.problems.append(f"{self._at(key)}: expected finite number")
            return default
        return float(value)

    def int_(self, key: str, *, required: bool = True, default: int = 0) -> int:
        if key not in self.data:
            if required:
                self.problems.append(f"{self._at(key)}: required")
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, int):
            self.problems.append(f"{self._at(key)}: expected integer")
            return default
        return value

    def list_(self, key: str, *, required: bool = True) -> list:
        if key not in self.data:
            if required:
                self.problems.append(f"{self._at(key)}: required")
            return []
        value = self.data[key]
        if not isinstance(value, list):
            self.problems.append(f"{self._at(key)}: expected array")
            return []
        return value

    def str_set(self, key: str, *, required: bool = True) -> frozenset[str]:
        """Reads an array of unique strings; duplicates are schema problems."""
        seen: list[str] = []
        for i, item in enumerate(self.list_(key, required=required)):
            if not isinstance(item, str) or not item:
                self.problems.append(f"{self._at(key)}[{i}]: expected non-empty string")
            elif item in seen:
                self.problems.append(f"{self._at(key)}[{i}]: duplicate entry {item!r}")
            else:
                seen.append(item)
        return frozenset(seen)

    def reject_unknown(self, known: tuple[str, ...]) -> None:
        for key in self.data:
            if key not in known:
                self.problems.append(f"{self._at(key)}: unknown field")


def _require_clean(problems: list[str]) -> None:
    if problems:
        raise SchemaError(problems)


@dataclass(frozen=True)
class Topic:
    """A learnable unit of content; the thing recommendations point at."""

    id: str
    title: str
    description: str = ""
    tags: tuple[str, ...] = ()
    hyperlink: str | None = None

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "Topic":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        ident = r.str_("id", allow_empty=False)
        title = r.str_("title", allow_empty=False)
        description = r.str_("description", required=False)
        hyperlink = r.opt_str("hyperlink")
        tags: list[str] = []
        for i, tag in enumerate(r.list_("tags", required=False)):
            if not isinstance(tag, str) or not tag:
                problems.append(f"{r._at('tags')}[{i}]: expected non-empty string")
            elif tag in tags:
                problems.append(f"{r._at('tags')}[{i}]: duplicate tag {tag!r}")
            else:
                tags.append(tag)
        r.reject_unknown(("id", "title", "description", "tags", "hyperlink"))
        _require_clean(problems)
        return cls(id=ident, title=title, description=description, tags=tuple(tags), hyperlink=hyperlink)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "tags": list(self.tags),
            "hyperlink": self.hyperlink,
        }


@dataclass(frozen=True)
class RecommendedItem:
    topic_id: str
    rank: int
    score: float

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "RecommendedItem":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        topic_id = r.str_("topic_id", allow_empty=False)
        rank = r.int_("rank")
        score = r.num("score")
        if rank < 1:
            problems.append(f"{r._at('rank')}: must be a positive integer")
        r.reject_unknown(("topic_id", "rank", "score"))
        _require_clean(problems)
        return cls(topic_id=topic_id, rank=rank, score=score)

    def to_dict(self) -> dict:
        return {"topic_id": self.topic_id, "rank": self.rank, "score": self.score}


@dataclass(frozen=True)
class Fact:
    """A grounding statement tied to the database record it came from."""

    key: str
    value: str
    source_ref: str

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "Fact":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        key = r.str_("key", allow_empty=False)
        value = r.str_("value")
        source_ref = r.str_("source_ref", allow_empty=False)
        r.reject_unknown(("key", "value", "source_ref"))
        _require_clean(problems)
        return cls(key=key, value=value, source_ref=source_ref)

    def to_dict(self) -> dict:
        return {"key": self.key, "value": self.value, "source_ref": self.source_ref}


@dataclass(frozen=True)
class LearningRecommendation:
    """Ranked recommended topics plus grounding facts; the object being explained."""

    id: str
    learner_id: str
    goal_id: str
    items: tuple[RecommendedItem, ...]
    facts: tuple[Fact, ...] = ()

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "LearningRecommendation":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        ident = r.str_("id", allow_empty=False)
        learner_id = r.str_("learner_id", allow_empty=False)
        goal_id = r.str_("goal_id", allow_empty=False)
        items: list[RecommendedItem] = []
        for i, raw in enumerate(r.list_("items")):
            try:
                items.append(RecommendedItem.from_dict(raw, path=f"{r._at('items')}[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        facts: list[Fact] = []
        for i, raw in enumerate(r.list_("facts", required=False)):
            try:
                facts.append(Fact.from_dict(raw, path=f"{r._at('facts')}[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        r.reject_unknown(("id", "learner_id", "goal_id", "items", "facts"))
        _require_clean(problems)
        return cls(id=ident, learner_id=learner_id, goal_id=goal_id, items=tuple(items), facts=tuple(facts))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "learner_id": self.learner_id,
            "goal_id": self.goal_id,
            "items": [item.to_dict() for item in self.items],
            "facts": [fact.to_dict() for fact in self.facts],
        }

    def topic_ids(self) -> frozenset[str]:
        return frozenset(item.topic_id for item in self.items)

    def items_by_rank(self) -> tuple[RecommendedItem, ...]:
        return tuple(sorted(self.items, key=lambda item: item.rank))


@dataclass(frozen=True)
class LearnerProfile:
    learner_id: str
    interest_topics: frozenset[str] = frozenset()
    completed_topics: frozenset[str] = frozenset()
    preference_tags: frozenset[str] = frozenset()

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "LearnerProfile":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        learner_id = r.str_("learner_id", allow_empty=False)
        interests = r.str_set("interest_topics", required=False)
        completed = r.str_set("completed_topics", required=False)
        preference_tags = r.str_set("preference_tags", required=False)
        r.reject_unknown(("learner_id", "interest_topics", "completed_topics", "preference_tags"))
        _require_clean(problems)
        return cls(
            learner_id=learner_id,
            interest_topics=interests,
            completed_topics=completed,
            preference_tags=preference_tags,
        )

    def to_dict(self) -> dict:
        return {
            "learner_id": self.learner_id,
            "interest_topics": sorted(self.interest_topics),
            "completed_topics": sorted(self.completed_topics),
            "preference_tags": sorted(self.preference_tags),
        }


@dataclass(frozen=True)
class LearningGoal:
    goal_id: str
    title: str
    required_topics: frozenset[str]

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "LearningGoal":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        goal_id = r.str_("goal_id", allow_empty=False)
        title = r.str_("title", allow_empty=False)
        required = r.str_set("required_topics")
        if "required_topics" in r.data and isinstance(r.data["required_topics"], list) and not required:
            problems.append(f"{r._at('required_topics')}: must be non-empty")
        r.reject_unknown(("goal_id", "title", "required_topics"))
        _require_clean(problems)
        return cls(goal_id=goal_id, title=title, required_topics=required)

    def to_dict(self) -> dict:
        return {"goal_id": self.goal_id, "title": self.title, "required_topics": sorted(self.required_topics)}


@dataclass(frozen=True)
class StructureNode:
    """One node of a teacher-authored material tree; child order is the intended sequence."""

    node_id: str
    title: str
    hyperlink: str | None = None
    topic_id: str | None = None
    children: tuple["StructureNode", ...] = ()

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "StructureNode":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        node_id = r.str_("node_id", allow_empty=False)
        title = r.str_("title")
        hyperlink = r.opt_str("hyperlink")
        topic_id = r.opt_str("topic_id")
        children: list[StructureNode] = []
        for i, raw in enumerate(r.list_("children", required=False)):
            try:
                children.append(StructureNode.from_dict(raw, path=f"{r._at('children')}[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        r.reject_unknown(("node_id", "title", "hyperlink", "topic_id", "children"))
        _require_clean(problems)
        return cls(node_id=node_id, title=title, hyperlink=hyperlink, topic_id=topic_id, children=tuple(children))

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "title": self.title,
            "hyperlink": self.hyperlink,
            "topic_id": self.topic_id,
            "children": [child.to_dict() for child in self.children],
        }


@dataclass(frozen=True)
class CourseStructure:
    """The teacher's original arrangement of the materials, as a tree."""

    structure_id: str
    root: StructureNode

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "CourseStructure":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        structure_id = r.str_("structure_id", allow_empty=False)
        root: StructureNode | None = None
        if "root" not in r.data:
            problems.append(f"{r._at('root')}: required")
        else:
            try:
                root = StructureNode.from_dict(r.data["root"], path=r._at("root"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        r.reject_unknown(("structure_id", "root"))
        if root is not None:
            seen: set[str] = set()
            stack = [root]
            while stack:
                node = stack.pop()
                if node.node_id in seen:
                    problems.append(f"{r._at('root')}: duplicate node_id {node.node_id!r}")
                seen.add(node.node_id)
                stack.extend(node.children)
        _require_clean(problems)
        assert root is not None
        return cls(structure_id=structure_id, root=root)

    def to_dict(self) -> dict:
        return {"structure_id": self.structure_id, "root": self.root.to_dict()}


@dataclass(frozen=True)
class TopicRelation:
    """A weighted, typed edge between two topics."""

    from_topic: str
    to_topic: str
    kind: RelationKind
    weight: float

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "TopicRelation":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        from_topic = r.str_("from", allow_empty=False)
        to_topic = r.str_("to", allow_empty=False)
        kind_raw = r.str_("kind", allow_empty=False)
        weight = r.num("weight")
        kind = None
        if kind_raw:
            try:
                kind = RelationKind(kind_raw)
            except ValueError:
                problems.append(f"{r._at('kind')}: expected one of {[k.value for k in RelationKind]}")
        if from_topic and from_topic == to_topic:
            problems.append(f"{r._at('to')}: relation endpoints must differ")
        if not (0.0 < weight <= 1.0):
            problems.append(f"{r._at('weight')}: must lie in (0, 1]")
        r.reject_unknown(("from", "to", "kind", "weight"))
        _require_clean(problems)
        assert kind is not None
        return cls(from_topic=from_topic, to_topic=to_topic, kind=kind, weight=weight)

    def to_dict(self) -> dict:
        return {"from": self.from_topic, "to": self.to_topic, "kind": self.kind.value, "weight": self.weight}

    @property
    def relation_id(self) -> str:
        """Store identity; relations carry no id of their own."""
        return f"{self.from_topic}~{self.to_topic}~{self.kind.value}"


@dataclass(frozen=True)
class DomainIndex:
    """Read-only resolver over stored entities, shared by validators and builders."""

    topics: Mapping[str, Topic] = field(default_factory=dict)
    goals: Mapping[str, LearningGoal] = field(default_factory=dict)
    profiles: Mapping[str, LearnerProfile] = field(default_factory=dict)
    structures: Mapping[str, CourseStructure] = field(default_factory=dict)
    relations: tuple[TopicRelation, ...] = ()
    recommendations: Mapping[str, LearningRecommendation] = field(default_factory=dict)

    def ref_exists(self, ref: str) -> bool:
        return (
            ref in self.topics
            or ref in self.goals
            or ref in self.profiles
            or ref in self.structures
            or ref in self.recommendations
        )


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def to_dict(self) -> dict:
        return {"path": self.path, "message": self.message}


@dataclass(frozen=True)
class IntegrityReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def validate_recommendation(
    rec: LearningRecommendation, index: DomainIndex | None = None
) -> IntegrityReport:
    """Reports every violated recommendation invariant; never raises.

    With ``index=None`` only local invariants are checked (rank shape,
    score range, fact keys); referential checks need a resolver.
    Pure and idempotent: equal inputs yield equal reports.
    """
    found: list[Violation] = []
    n = len(rec.items)

    seen_ranks: set[int] = set()
    for i, item in enumerate(rec.items):
        if item.rank in seen_ranks:
            found.append(Violation(f"items[{i}].rank", f"duplicate rank {item.rank}"))
        seen_ranks.add(item.rank)
        if not (1 <= item.rank <= n):
            found.append(Violation(f"items[{i}].rank", f"rank {item.rank} outside 1..{n}"))
        if not (0.0 <= item.score <= 1.0) or not math.isfinite(item.score):
            found.append(Violation(f"items[{i}].score", f"score {item.score} outside [0,1]"))
    for missing in sorted(set(range(1, n + 1)) - seen_ranks):
        found.append(Violation("items", f"missing rank {missing}"))

    for i, fact in enumerate(rec.facts):
        if not fact.key:
            found.append(Violation(f"facts[{i}].key", "fact key must be non-empty"))

    if index is not None:
        for i, item in enumerate(rec.items):
            if item.topic_id not in index.topics:
                found.append(Violation(f"items[{i}].topic_id", f"unresolved topic_id {item.topic_id}"))
        if rec.goal_id not in index.goals:
            found.append(Violation("goal_id", f"unresolved goal_id {rec.goal_id}"))
        if rec.learner_id not in index.profiles:
            found.append(Violation("learner_id", f"unresolved learner_id {rec.learner_id}"))
        for i, fact in enumerate(rec.facts):
            if not index.ref_exists(fact.source_ref):
                found.append(Violation(f"facts[{i}].source_ref", f"unresolved source_ref {fact.source_ref}"))

    return IntegrityReport(violations=tuple(found))


def depth_first_topic_order(structure: CourseStructure) -> list[str]:
    """Canonical linearization of the teacher structure.

    Pre-order traversal respecting child order; nodes without a topic
    contribute nothing; a topic reused at several nodes keeps its first
    (earliest) position.
    """
    ordered: list[str] = []
    seen_topics: set[str] = set()
    seen_nodes: set[str] = set()
    stack = [structure.root]
    while stack:
        node = stack.pop()
        if node.node_id in seen_nodes:
            raise StructuralError(f"node {node.node_id!r} reached twice; structure is not a tree")
        seen_nodes.add(node.node_id)
        if node.topic_id and node.topic_id not in seen_topics:
            seen_topics.add(node.topic_id)
            ordered.append(node.topic_id)
        stack.extend(reversed(node.children))
    return ordered
