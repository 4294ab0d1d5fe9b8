"""Builders for the explanation component payloads.

Seven component kinds exist; six are computed here as pure, deterministic
payloads (the chatbot is a conversation, not a payload). Every builder
sorts its output so identical inputs serialize to identical bytes, and
each payload carries a ``{"kind": ..., "version": 1}`` envelope that is
the wire contract for the UI and for chat context snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import ComponentBuildError, DimensionError, PreconditionError
from .model import (
    CourseStructure,
    DomainIndex,
    LearnerProfile,
    LearningGoal,
    LearningRecommendation,
    StructureNode,
    Topic,
    TopicRelation,
    depth_first_topic_order,
)

PAYLOAD_VERSION = 1

NEIGHBOR_WEIGHT_THRESHOLD = 0.5

RADAR_AXIS_ORDER = (
    "goal_coverage",
    "profile_overlap",
    "novelty",
    "tag_diversity",
    "structure_adherence",
)


class ComponentKind(str, Enum):
    """The seven explanation modalities, in canonical serialization order."""

    TEXTUAL = "textual"
    TAGS = "tags"
    HIERARCHY = "hierarchy"
    GRAPH = "graph"
    RADAR = "radar"
    VENN = "venn"
    CHATBOT = "chatbot"


KIND_ORDER: tuple[ComponentKind, ...] = tuple(ComponentKind)


def _envelope(kind: ComponentKind, fields: dict) -> dict:
    payload = {"kind": kind.value, "version": PAYLOAD_VERSION}
    payload.update(fields)
    return payload


@dataclass(frozen=True)
class TextualExplanation:
    """Markdown prose; length is the display's problem, not the schema's."""

    body: str

    def to_payload(self) -> dict:
        return _envelope(ComponentKind.TEXTUAL, {"body": self.body})


@dataclass(frozen=True)
class TagEntry:
    label: str
    hyperlink: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "hyperlink": self.hyperlink}


@dataclass(frozen=True)
class TagExplanation:
    entries: tuple[TagEntry, ...]

    def to_payload(self) -> dict:
        return _envelope(ComponentKind.TAGS, {"entries": [e.to_dict() for e in self.entries]})


@dataclass(frozen=True)
class HierarchyNode:
    node_id: str
    title: str
    hyperlink: str
    recommended: bool
    expanded: bool
    children: tuple["HierarchyNode", ...] = ()

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "title": self.title,
            "hyperlink": self.hyperlink,
            "recommended": self.recommended,
            "expanded": self.expanded,
            "children": [child.to_dict() for child in self.children],
        }


@dataclass(frozen=True)
class HierarchyView:
    root: HierarchyNode

    def to_payload(self) -> dict:
        return _envelope(ComponentKind.HIERARCHY, {"root": self.root.to_dict()})


@dataclass(frozen=True)
class GraphNode:
    topic_id: str
    label: str
    recommended: bool

    def to_dict(self) -> dict:
        return {"topic_id": self.topic_id, "label": self.label, "recommended": self.recommended}


@dataclass(frozen=True)
class GraphEdge:
    from_topic: str
    to_topic: str
    kind: str
    weight: float
    label: str

    def to_dict(self) -> dict:
        return {
            "from": self.from_topic,
            "to": self.to_topic,
            "kind": self.kind,
            "weight": self.weight,
            "label": self.label,
        }


@dataclass(frozen=True)
class GraphExplanation:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]

    def to_payload(self) -> dict:
        return _envelope(
            ComponentKind.GRAPH,
            {"nodes": [n.to_dict() for n in self.nodes], "edges": [e.to_dict() for e in self.edges]},
        )


@dataclass(frozen=True)
class RadarAxis:
    name: str
    value: float

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value}


@dataclass(frozen=True)
class RadarChart:
    axes: tuple[RadarAxis, ...]

    def to_payload(self) -> dict:
        return _envelope(ComponentKind.RADAR, {"axes": [a.to_dict() for a in self.axes]})

    def value(self, name: str) -> float:
        for axis in self.axes:
            if axis.name == name:
                return axis.value
        raise KeyError(name)


@dataclass(frozen=True)
class VennRegion:
    """One exclusive region: exactly the elements in the masked sets and no others."""

    membership_mask: str
    members: tuple[str, ...]
    count: int
    overlay: str

    def to_dict(self) -> dict:
        return {
            "membership_mask": self.membership_mask,
            "members": list(self.members),
            "count": self.count,
            "overlay": self.overlay,
        }


@dataclass(frozen=True)
class VennDiagram:
    set_names: tuple[str, ...]
    sets: tuple[frozenset[str], ...]
    regions: tuple[VennRegion, ...]

    def to_payload(self) -> dict:
        return _envelope(
            ComponentKind.VENN,
            {
                "sets": [
                    {"name": name, "members": sorted(members)}
                    for name, members in zip(self.set_names, self.sets)
                ],
                "regions": [r.to_dict() for r in self.regions],
            },
        )


@dataclass(frozen=True)
class ExplanationBundle:
    """Component payloads visible under one experiment condition."""

    condition_id: str
    payloads: Mapping[ComponentKind, dict]

    def to_dict(self) -> dict:
        ordered = {
            kind.value: self.payloads[kind] for kind in KIND_ORDER if kind in self.payloads
        }
        return {"condition_id": self.condition_id, "payloads": ordered}


def _resolve_topics(rec: LearningRecommendation, topics: Mapping[str, Topic]) -> list[Topic]:
    """Recommended topics in rank order; duplicates keep their first slot."""
    resolved: list[Topic] = []
    seen: set[str] = set()
    for item in rec.items_by_rank():
        if item.topic_id in seen:
            continue
        seen.add(item.topic_id)
        topic = topics.get(item.topic_id)
        if topic is None:
            raise PreconditionError(f"unresolved topic_id {item.topic_id!r}")
        resolved.append(topic)
    return resolved


def build_textual(
    rec: LearningRecommendation,
    profile: LearnerProfile,
    goal: LearningGoal,
    topics: Mapping[str, Topic],
) -> TextualExplanation:
    """Template-rendered Markdown; byte-identical for identical inputs."""
    ranked = _resolve_topics(rec, topics)
    t_rec = rec.topic_ids()
    covered = len(t_rec & goal.required_topics)
    overlap = len(t_rec & profile.interest_topics)
    completed = len(t_rec & profile.completed_topics)

    lines = [
        f"### Why these materials for **{goal.title}**",
        "",
        f"This recommendation contains **{len(ranked)} topics**:",
        "",
    ]
    for position, topic in enumerate(ranked, start=1):
        lines.append(f"{position}. **{topic.title}**")
    lines.extend(
        [
            "",
            f"- Goal coverage: {covered} of the {len(goal.required_topics)} topics "
            f"required by *{goal.title}* are included.",
            f"- Interest overlap: {overlap} of the recommended topics match your interests.",
            f"- Already completed: {completed} of the recommended topics are in your completed list.",
        ]
    )
    return TextualExplanation(body="\n".join(lines))


def build_tags(rec: LearningRecommendation, topics: Mapping[str, Topic]) -> TagExplanation:
    """Union of tags over recommended topics, deduplicated and sorted.

    A tag links to the hyperlink of the first (by rank) recommended topic
    carrying it; no hyperlink there means an empty link.
    """
    ranked = _resolve_topics(rec, topics)
    first_carrier: dict[str, Topic] = {}
    for topic in ranked:
        for tag in topic.tags:
            first_carrier.setdefault(tag, topic)
    entries = tuple(
        TagEntry(label=tag, hyperlink=first_carrier[tag].hyperlink or "")
        for tag in sorted(first_carrier)
    )
    return TagExplanation(entries=entries)


def build_hierarchy(rec: LearningRecommendation, structure: CourseStructure) -> HierarchyView:
    """Shape-preserving view of the teacher structure.

    ``recommended`` marks nodes whose topic is in the recommendation;
    ``expanded`` is true exactly on ancestors of recommended nodes plus
    the root.
    """
    t_rec = rec.topic_ids()

    def walk(node: StructureNode) -> tuple[HierarchyNode, bool]:
        children: list[HierarchyNode] = []
        subtree_hit = False
        for child in node.children:
            view, hit = walk(child)
            children.append(view)
            subtree_hit = subtree_hit or hit
        recommended = node.topic_id is not None and node.topic_id in t_rec
        view = HierarchyNode(
            node_id=node.node_id,
            title=node.title,
            hyperlink=node.hyperlink or "",
            recommended=recommended,
            expanded=subtree_hit,
            children=tuple(children),
        )
        return view, recommended or subtree_hit

    root_view, _ = walk(structure.root)
    root_view = HierarchyNode(
        node_id=root_view.node_id,
        title=root_view.title,
        hyperlink=root_view.hyperlink,
        recommended=root_view.recommended,
        expanded=True,
        children=root_view.children,
    )
    return HierarchyView(root=root_view)


def build_graph(
    rec: LearningRecommendation,
    relations: Sequence[TopicRelation],
    topics: Mapping[str, Topic],
) -> GraphExplanation:
    """Relation subgraph around the recommended topics.

    Edges between two recommended topics are always kept; edges reaching
    one step outside are kept only when their weight clears the neighbor
    threshold. Nodes and edges are sorted by id.
    """
    t_rec = rec.topic_ids()
    kept: list[TopicRelation] = []
    for rel in relations:
        inside = (rel.from_topic in t_rec) + (rel.to_topic in t_rec)
        if inside == 2 or (inside == 1 and rel.weight >= NEIGHBOR_WEIGHT_THRESHOLD):
            kept.append(rel)

    node_ids = set(t_rec)
    for rel in kept:
        node_ids.add(rel.from_topic)
        node_ids.add(rel.to_topic)

    nodes = []
    for topic_id in sorted(node_ids):
        topic = topics.get(topic_id)
        if topic is None:
            raise PreconditionError(f"unresolved topic_id {topic_id!r}")
        nodes.append(GraphNode(topic_id=topic_id, label=topic.title, recommended=topic_id in t_rec))

    edges = tuple(
        GraphEdge(
            from_topic=rel.from_topic,
            to_topic=rel.to_topic,
            kind=rel.kind.value,
            weight=rel.weight,
            label=f"{rel.kind.value} ({rel.weight:.2f})",
        )
        for rel in sorted(kept, key=lambda r: (r.from_topic, r.to_topic, r.kind.value))
    )
    return GraphExplanation(nodes=tuple(nodes), edges=edges)


def count_inversions(sequence: Sequence[int]) -> int:
    """Number of out-of-order pairs, via merge sort (O(n log n))."""
    items = list(sequence)
    if len(items) < 2:
        return 0

    def sort(part: list[int]) -> tuple[list[int], int]:
        if len(part) < 2:
            return part, 0
        mid = len(part) // 2
        left, inv_left = sort(part[:mid])
        right, inv_right = sort(part[mid:])
        merged: list[int] = []
        inversions = inv_left + inv_right
        i = j = 0
        while i < len(left) and j < len(right):
            if left[i] <= right[j]:
                merged.append(left[i])
                i += 1
            else:
                merged.append(right[j])
                j += 1
                inversions += len(left) - i
        merged.extend(left[i:])
        merged.extend(right[j:])
        return merged, inversions

    return sort(items)[1]


def structure_adherence(rec: LearningRecommendation, structure: CourseStructure) -> float:
    """Inversion-based agreement between recommendation order and teacher order.

    1.0 means the recommendation follows the depth-first material order
    exactly; 0.0 means it is fully reversed. Fewer than two shared topics
    yield 1.0 by convention.
    """
    teacher_order = depth_first_topic_order(structure)
    position = {topic_id: i for i, topic_id in enumerate(teacher_order)}
    seen: set[str] = set()
    sequence: list[int] = []
    for item in rec.items_by_rank():
        if item.topic_id in position and item.topic_id not in seen:
            seen.add(item.topic_id)
            sequence.append(position[item.topic_id])
    n = len(sequence)
    if n < 2:
        return 1.0
    pairs = n * (n - 1) // 2
    return 1.0 - count_inversions(sequence) / pairs


def build_radar(
    rec: LearningRecommendation,
    profile: LearnerProfile,
    goal: LearningGoal,
    structure: CourseStructure,
    topics: Mapping[str, Topic],
) -> RadarChart:
    """Five fixed axes, each in [0, 1].

    goal_coverage: fraction of the goal's required topics that are
    recommended. profile_overlap: fraction of recommended topics matching
    the learner's interests. novelty: fraction not yet completed.
    tag_diversity: distinct tags over total tag slots across items (0
    with no tags). structure_adherence: inversion agreement with the
    teacher order (1 with fewer than two shared topics).
    """
    if not goal.required_topics:
        raise PreconditionError("goal has no required topics")
    if not rec.items:
        raise PreconditionError("recommendation has no items")

    t_rec = rec.topic_ids()
    goal_coverage = len(t_rec & goal.required_topics) / len(goal.required_topics)
    profile_overlap = len(t_rec & profile.interest_topics) / len(t_rec)
    novelty = 1.0 - len(t_rec & profile.completed_topics) / len(t_rec)

    slots = 0
    distinct: set[str] = set()
    for item in rec.items:
        topic = topics.get(item.topic_id)
        if topic is None:
            raise PreconditionError(f"unresolved topic_id {item.topic_id!r}")
        slots += len(topic.tags)
        distinct.update(topic.tags)
    tag_diversity = len(distinct) / slots if slots else 0.0

    adherence = structure_adherence(rec, structure)

    values = {
        "goal_coverage": goal_coverage,
        "profile_overlap": profile_overlap,
        "novelty": novelty,
        "tag_diversity": tag_diversity,
        "structure_adherence": adherence,
    }
    return RadarChart(axes=tuple(RadarAxis(name, values[name]) for name in RADAR_AXIS_ORDER))


def build_venn(named_sets: Sequence[tuple[str, Iterable[str]]]) -> VennDiagram:
    """Exclusive-region decomposition of two or three named sets.

    One region per non-empty membership mask (2^k - 1 in total, empty
    ones included), ordered by mask value; a region holds exactly the
    elements belonging to precisely the masked sets.
    """
    if not (2 <= len(named_sets) <= 3):
        raise DimensionError(f"expected 2 or 3 sets, got {len(named_sets)}")
    names = tuple(name for name, _ in named_sets)
    if len(set(names)) != len(names):
        raise DimensionError("set names must be distinct")
    sets = tuple(frozenset(members) for _, members in named_sets)

    k = len(sets)
    regions: list[VennRegion] = []
    for mask_value in range(1, 2**k):
        mask = format(mask_value, f"0{k}b")  # char i == membership in set i
        included = [sets[i] for i in range(k) if mask[i] == "1"]
        excluded = [sets[i] for i in range(k) if mask[i] == "0"]
        members = frozenset.intersection(*included)
        for other in excluded:
            members -= other
        ordered = tuple(sorted(members))
        regions.append(
            VennRegion(
                membership_mask=mask,
                members=ordered,
                count=len(ordered),
                overlay=f"{len(ordered)} topics",
            )
        )
    regions.sort(key=lambda region: int(region.membership_mask, 2))
    return VennDiagram(set_names=names, sets=sets, regions=tuple(regions))


#: Default named sets for the bundled overlap diagram: the recommendation
#: against the goal requirements and the learner's interests.
VENN_SET_RECOMMENDED = "Recommended"
VENN_SET_GOAL = "Goal"
VENN_SET_INTERESTS = "Interests"


def build_bundle(
    rec: LearningRecommendation,
    profile: LearnerProfile,
    goal: LearningGoal,
    structure: CourseStructure | None,
    relations: Sequence[TopicRelation],
    topics: Mapping[str, Topic],
    condition_id: str,
    visible_components: Iterable[ComponentKind],
) -> ExplanationBundle:
    """Builds exactly the visible non-chatbot payloads, nothing else.

    Hidden components are skipped entirely. Builder errors propagate
    wrapped with the failing kind. ``structure`` may be None as long as
    neither the hierarchy nor the radar is visible.
    """
    visible = set(visible_components)
    payloads: dict[ComponentKind, dict] = {}

    def need_structure() -> CourseStructure:
        if structure is None:
            raise PreconditionError("no course structure available")
        return structure

    for kind in KIND_ORDER:
        if kind not in visible or kind is ComponentKind.CHATBOT:
            continue
        try:
            if kind is ComponentKind.TEXTUAL:
                payloads[kind] = build_textual(rec, profile, goal, topics).to_payload()
            elif kind is ComponentKind.TAGS:
                payloads[kind] = build_tags(rec, topics).to_payload()
            elif kind is ComponentKind.HIERARCHY:
                payloads[kind] = build_hierarchy(rec, need_structure()).to_payload()
            elif kind is ComponentKind.GRAPH:
                payloads[kind] = build_graph(rec, relations, topics).to_payload()
            elif kind is ComponentKind.RADAR:
                payloads[kind] = build_radar(rec, profile, goal, need_structure(), topics).to_payload()
            elif kind is ComponentKind.VENN:
                payloads[kind] = build_venn(
                    [
                        (VENN_SET_RECOMMENDED, rec.topic_ids()),
                        (VENN_SET_GOAL, goal.required_topics),
                        (VENN_SET_INTERESTS, profile.interest_topics),
                    ]
                ).to_payload()
        except Exception as exc:  # noqa: BLE001 - annotated and re-raised
            raise ComponentBuildError(kind.value, exc) from exc
    return ExplanationBundle(condition_id=condition_id, payloads=payloads)


def bundle_from_index(
    index: DomainIndex,
    rec: LearningRecommendation,
    condition_id: str,
    visible_components: Iterable[ComponentKind],
) -> ExplanationBundle:
    """Convenience wrapper resolving profile/goal/structure from an index."""
    profile = index.profiles.get(rec.learner_id)
    goal = index.goals.get(rec.goal_id)
    if profile is None:
        raise PreconditionError(f"unresolved learner_id {rec.learner_id!r}")
    if goal is None:
        raise PreconditionError(f"unresolved goal_id {rec.goal_id!r}")
    structure = _pick_structure(index, rec)
    return build_bundle(
        rec,
        profile,
        goal,
        structure,
        index.relations,
        index.topics,
        condition_id,
        visible_components,
    )


def _pick_structure(index: DomainIndex, rec: LearningRecommendation) -> CourseStructure | None:
    """The structure mentioning the most recommended topics; first id wins ties."""
    if not index.structures:
        return None
    t_rec = rec.topic_ids()

    def coverage(structure: CourseStructure) -> int:
        return len(t_rec & set(depth_first_topic_order(structure)))

    best_id = min(
        index.structures,
        key=lambda sid: (-coverage(index.structures[sid]), sid),
    )
    return index.structures[best_id]
