"""A miniature study: conditions, hash assignment, telemetry, survey, export.

Run with: python demos/experiment_run.py
"""

import json
import os
import sys
import tempfile

from explainlab import ComponentKind, DocumentStore, ExperimentCondition, ExperimentService
from explainlab.experiments import EventKind, EventTarget, SurveyDimension, SurveyResponse, fnv1a_64

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from conftest import fixture_bundle_dict, make_ruleset  # noqa: E402

with tempfile.TemporaryDirectory() as workdir:
    store = DocumentStore(os.path.join(workdir, "data"))
    assert store.import_bundle(fixture_bundle_dict()).ok
    store.put("rulesets", "default-rules", make_ruleset().to_dict())

    service = ExperimentService(store)

    # two arms: everything visible vs. a single text panel
    service.define_condition(
        ExperimentCondition(
            condition_id="arm-rich",
            visible_components=tuple(
                k for k in ComponentKind if k is not ComponentKind.CHATBOT
            ),
            rules_ref="default-rules",
        )
    )
    service.define_condition(
        ExperimentCondition(
            condition_id="arm-minimal",
            visible_components=(ComponentKind.TEXTUAL,),
            rules_ref="default-rules",
        )
    )

    # deterministic assignment: the hash decides, not the arrival order
    print("assignments (restart-stable, fnv1a over the participant id):")
    for participant in ("ada", "grace", "alan", "edsger", "barbara", "donald"):
        assignment = service.assign_participant(participant, ["arm-rich", "arm-minimal"])
        bucket = fnv1a_64(participant) % 2
        print(f"  {participant:<8} -> {assignment.condition_id}  (hash bucket {bucket})")

    # balance at scale
    counts = {"arm-rich": 0, "arm-minimal": 0}
    for i in range(1000):
        counts[service.assign_participant(f"p{i}", ["arm-rich", "arm-minimal"]).condition_id] += 1
    print(f"\n1000 synthetic participants split: {counts}")

    # telemetry: append-only interaction stream
    service.log_event(
        "ada", EventKind.CLICK, EventTarget(ComponentKind.TAGS, "tag:algebra"),
        "2026-02-03T09:00:00+00:00",
    )
    service.log_event(
        "ada", EventKind.EXPAND, EventTarget(ComponentKind.HIERARCHY, "node:ch1"),
        "2026-02-03T09:00:04+00:00",
    )
    service.log_event(
        "ada", EventKind.HOVER, EventTarget(ComponentKind.VENN, "region:110"),
        "2026-02-03T09:00:09+00:00",
    )

    # the four survey dimensions; an amended answer leaves an audit event
    service.record_survey(SurveyResponse("ada", SurveyDimension.ACCEPTANCE, "q-accept-1", 4))
    service.record_survey(SurveyResponse("ada", SurveyDimension.MOTIVATION, "q-motiv-1", 5))
    service.record_survey(SurveyResponse("ada", SurveyDimension.ACCEPTANCE, "q-accept-1", 5))

    archive = service.export_dataset(participant_ids=["ada"])
    print("\nexport for participant 'ada':")
    for stream in ("assignments", "events", "surveys"):
        print(f"  {stream}.jsonl")
        for line in archive.to_jsonl(stream).splitlines():
            print(f"    {line}")

    amendments = [r for _, r in store.event_log.read_all() if r.get("type") == "survey_amendment"]
    print(f"\nsurvey amendments on record: {len(amendments)}")
    print(f"  {json.dumps(amendments[0])}")
