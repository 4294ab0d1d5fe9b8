"""Walk through the six explanation payloads on a tiny algebra course.

Run with: python demos/explanation_components.py
"""

import json

from explainlab import (
    ComponentKind,
    CourseStructure,
    LearnerProfile,
    LearningGoal,
    LearningRecommendation,
    RecommendedItem,
    StructureNode,
    Topic,
    TopicRelation,
    build_bundle,
    build_radar,
    build_venn,
)
from explainlab.model import RelationKind

# --- a small course -----------------------------------------------------------

topics = {
    "linear": Topic(
        id="linear",
        title="Linear Equations",
        description="Solving first-degree equations.",
        tags=("algebra", "equations"),
        hyperlink="https://course.example/linear",
    ),
    "quadratic": Topic(
        id="quadratic",
        title="Quadratic Functions",
        description="Parabolas and their roots.",
        tags=("algebra", "functions"),
        hyperlink="https://course.example/quadratic",
    ),
    "poly": Topic(id="poly", title="Polynomials", description="Polynomial arithmetic.", tags=("algebra",)),
    "factoring": Topic(id="factoring", title="Factoring", description="Splitting into factors.", tags=("algebra",)),
}

structure = CourseStructure(
    structure_id="algebra",
    root=StructureNode(
        node_id="root",
        title="Algebra Course",
        children=(
            StructureNode(node_id="ch1", title="Equations", children=(
                StructureNode(node_id="ch1a", title="Linear", topic_id="linear"),
                StructureNode(node_id="ch1b", title="Quadratic", topic_id="quadratic"),
            )),
            StructureNode(node_id="ch2", title="Expressions", children=(
                StructureNode(node_id="ch2a", title="Polynomials", topic_id="poly"),
                StructureNode(node_id="ch2b", title="Factoring", topic_id="factoring"),
            )),
        ),
    ),
)

relations = (
    TopicRelation("linear", "quadratic", RelationKind.SIMILARITY, 0.9),
    TopicRelation("quadratic", "poly", RelationKind.PREREQUISITE, 0.6),
    TopicRelation("poly", "factoring", RelationKind.PART_OF, 0.7),
)

goal = LearningGoal(
    goal_id="goal-algebra",
    title="Algebra Basics",
    required_topics=frozenset({"linear", "quadratic", "poly", "factoring"}),
)
profile = LearnerProfile(
    learner_id="dana",
    interest_topics=frozenset({"quadratic"}),
    completed_topics=frozenset({"linear"}),
    preference_tags=frozenset({"algebra"}),
)
rec = LearningRecommendation(
    id="rec-demo",
    learner_id="dana",
    goal_id="goal-algebra",
    items=(
        RecommendedItem("linear", 1, 0.95),
        RecommendedItem("quadratic", 2, 0.80),
        RecommendedItem("poly", 3, 0.65),
    ),
)

# --- the full bundle: one payload per visible component ------------------------

bundle = build_bundle(
    rec, profile, goal, structure, relations, topics,
    condition_id="demo-all",
    visible_components=tuple(ComponentKind),
)
print("payload kinds:", ", ".join(k.value for k in bundle.payloads))

print("\n--- textual ---")
print(bundle.payloads[ComponentKind.TEXTUAL]["body"])

print("\n--- tags (click targets with hyperlinks) ---")
for entry in bundle.payloads[ComponentKind.TAGS]["entries"]:
    print(f"  {entry['label']:<12} {entry['hyperlink'] or '(no link)'}")

print("\n--- hierarchy (ancestors of recommended nodes come pre-expanded) ---")


def show(node, depth=0):
    flags = []
    if node["recommended"]:
        flags.append("recommended")
    if node["expanded"]:
        flags.append("expanded")
    suffix = f" [{', '.join(flags)}]" if flags else ""
    print("  " * depth + f"- {node['title']}{suffix}")
    for child in node["children"]:
        show(child, depth + 1)


show(bundle.payloads[ComponentKind.HIERARCHY]["root"])

print("\n--- graph (edges between recommended topics, strong neighbors kept) ---")
for edge in bundle.payloads[ComponentKind.GRAPH]["edges"]:
    print(f"  {edge['from']} -> {edge['to']}  {edge['label']}")

print("\n--- radar (five axes, all in [0,1]) ---")
chart = build_radar(rec, profile, goal, structure, topics)
for axis in chart.axes:
    bar = "#" * round(axis.value * 20)
    print(f"  {axis.name:<20} {axis.value:.3f} {bar}")

print("\n--- venn (exclusive regions with overlays) ---")
diagram = build_venn(
    [
        ("Recommended", rec.topic_ids()),
        ("Goal", goal.required_topics),
        ("Interests", profile.interest_topics),
    ]
)
names = diagram.set_names
for region in diagram.regions:
    label = " & ".join(names[i] for i, bit in enumerate(region.membership_mask) if bit == "1")
    members = ", ".join(region.members) if region.members else "-"
    print(f"  {label:<36} {region.overlay:<10} {members}")

print("\n--- wire form of one payload ---")
print(json.dumps(bundle.payloads[ComponentKind.RADAR], indent=2))
