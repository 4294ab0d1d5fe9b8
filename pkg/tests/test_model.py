"""Domain entity invariants, validation reports, and the teacher-order traversal."""

import pytest

from explainlab.errors import SchemaError, StructuralError
from explainlab.model import (
    CourseStructure,
    LearningRecommendation,
    RecommendedItem,
    StructureNode,
    Topic,
    TopicRelation,
    depth_first_topic_order,
    validate_recommendation,
)

from conftest import make_recommendation


class TestSchemas:
    def test_topic_round_trip(self, topics):
        topic = topics["a"]
        assert Topic.from_dict(topic.to_dict()) == topic

    def test_topic_requires_title(self):
        with pytest.raises(SchemaError) as err:
            Topic.from_dict({"id": "x", "title": ""})
        assert any("title" in p for p in err.value.problems)

    def test_topic_rejects_duplicate_tags(self):
        with pytest.raises(SchemaError) as err:
            Topic.from_dict({"id": "x", "title": "X", "tags": ["t", "t"]})
        assert any("duplicate tag" in p for p in err.value.problems)

    def test_unknown_field_rejected(self):
        with pytest.raises(SchemaError) as err:
            Topic.from_dict({"id": "x", "title": "X", "surprise": 1})
        assert any("unknown field" in p for p in err.value.problems)

    def test_relation_endpoints_must_differ(self):
        with pytest.raises(SchemaError):
            TopicRelation.from_dict({"from": "a", "to": "a", "kind": "similarity", "weight": 0.5})

    def test_relation_weight_range(self):
        with pytest.raises(SchemaError):
            TopicRelation.from_dict({"from": "a", "to": "b", "kind": "similarity", "weight": 0.0})
        with pytest.raises(SchemaError):
            TopicRelation.from_dict({"from": "a", "to": "b", "kind": "similarity", "weight": 1.2})

    def test_goal_requires_topics(self):
        with pytest.raises(SchemaError):
            Topic.from_dict({"id": "", "title": "x"})

    def test_structure_rejects_duplicate_node_ids(self):
        with pytest.raises(SchemaError) as err:
            CourseStructure.from_dict(
                {
                    "structure_id": "s",
                    "root": {
                        "node_id": "n",
                        "title": "r",
                        "children": [{"node_id": "n", "title": "c", "children": []}],
                    },
                }
            )
        assert any("duplicate node_id" in p for p in err.value.problems)

    def test_recommendation_round_trip(self, rec):
        assert LearningRecommendation.from_dict(rec.to_dict()) == rec


class TestValidateRecommendation:
    def test_valid_fixture_is_ok(self, rec, index):
        report = validate_recommendation(rec, index)
        assert report.ok
        assert report.violations == ()

    def test_duplicate_rank_reported(self, index):
        rec = LearningRecommendation(
            id="r",
            learner_id="learner-1",
            goal_id="goal-1",
            items=(
                RecommendedItem("a", 1, 0.5),
                RecommendedItem("b", 1, 0.5),
                RecommendedItem("c", 2, 0.5),
            ),
        )
        report = validate_recommendation(rec, index)
        assert not report.ok
        assert any("duplicate rank 1" in v.message for v in report.violations)

    def test_unresolved_topic_reported(self, index):
        rec = LearningRecommendation(
            id="r",
            learner_id="learner-1",
            goal_id="goal-1",
            items=(RecommendedItem("ghost", 1, 0.5),),
        )
        report = validate_recommendation(rec, index)
        assert any("unresolved topic_id ghost" in v.message for v in report.violations)
        assert any(v.path == "items[0].topic_id" for v in report.violations)

    def test_rank_gap_reported(self, index):
        rec = LearningRecommendation(
            id="r",
            learner_id="learner-1",
            goal_id="goal-1",
            items=(RecommendedItem("a", 1, 0.5), RecommendedItem("b", 3, 0.5)),
        )
        report = validate_recommendation(rec, index)
        assert any("missing rank 2" in v.message for v in report.violations)
        assert any("rank 3 outside 1..2" in v.message for v in report.violations)

    def test_score_out_of_range_reported(self):
        rec = LearningRecommendation(
            id="r", learner_id="l", goal_id="g", items=(RecommendedItem("a", 1, 1.5),)
        )
        report = validate_recommendation(rec)
        assert any("outside [0,1]" in v.message for v in report.violations)

    def test_validation_is_idempotent(self, index):
        rec = LearningRecommendation(
            id="r",
            learner_id="nobody",
            goal_id="nothing",
            items=(RecommendedItem("ghost", 2, 2.0),),
        )
        first = validate_recommendation(rec, index)
        second = validate_recommendation(rec, index)
        assert first == second

    def test_unresolved_source_ref_reported(self, index):
        rec = make_recommendation()
        bad = LearningRecommendation(
            id=rec.id,
            learner_id=rec.learner_id,
            goal_id=rec.goal_id,
            items=rec.items,
            facts=rec.facts + (rec.facts[0].__class__(key="k", value="v", source_ref="nowhere"),),
        )
        report = validate_recommendation(bad, index)
        assert any("unresolved source_ref nowhere" in v.message for v in report.violations)


class TestDepthFirstOrder:
    def test_single_node(self):
        structure = CourseStructure(
            structure_id="s", root=StructureNode(node_id="n", title="t", topic_id="a")
        )
        assert depth_first_topic_order(structure) == ["a"]

    def test_hand_traced_preorder(self):
        # root(no topic) -> [n1(topic a), n2(no topic) -> [n3(topic b)]]
        structure = CourseStructure(
            structure_id="s",
            root=StructureNode(
                node_id="root",
                title="r",
                children=(
                    StructureNode(node_id="n1", title="1", topic_id="a"),
                    StructureNode(
                        node_id="n2",
                        title="2",
                        children=(StructureNode(node_id="n3", title="3", topic_id="b"),),
                    ),
                ),
            ),
        )
        assert depth_first_topic_order(structure) == ["a", "b"]

    def test_first_occurrence_wins(self):
        structure = CourseStructure(
            structure_id="s",
            root=StructureNode(
                node_id="root",
                title="r",
                children=(
                    StructureNode(node_id="n1", title="1", topic_id="a"),
                    StructureNode(node_id="n2", title="2", topic_id="b"),
                    StructureNode(node_id="n3", title="3", topic_id="a"),
                ),
            ),
        )
        assert depth_first_topic_order(structure) == ["a", "b"]

    def test_fixture_order(self, structure):
        assert depth_first_topic_order(structure) == ["a", "b", "c", "d"]

    def test_output_bounded_and_duplicate_free(self, structure):
        order = depth_first_topic_order(structure)
        node_count = 7
        assert len(order) <= node_count
        assert len(order) == len(set(order))

    def test_cycle_detected(self):
        # Hand-build a node that is its own child; from_dict would refuse this.
        inner = StructureNode(node_id="n", title="t")
        cyclic = StructureNode(node_id="n", title="t", children=(inner,))
        structure = CourseStructure.__new__(CourseStructure)
        object.__setattr__(structure, "structure_id", "s")
        object.__setattr__(structure, "root", cyclic)
        with pytest.raises(StructuralError):
            depth_first_topic_order(structure)


class TestDomainIndex:
    def test_ref_exists_covers_all_collections(self, index):
        assert index.ref_exists("a")
        assert index.ref_exists("goal-1")
        assert index.ref_exists("learner-1")
        assert index.ref_exists("algebra-course")
        assert index.ref_exists("rec-1")
        assert not index.ref_exists("ghost")
