"""Drive the whole HTTP surface against a live loopback server.

Starts the service on an ephemeral port with the echo stub standing in
for the LLM provider, then walks the researcher and learner flows.

Run with: python demos/http_walkthrough.py
"""

import json
import os
import sys
import tempfile

import httpx

from explainlab.api import ServerConfig, serve
from explainlab.llm import EchoTransport

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from conftest import LLM_CONFIG_DOC, fixture_bundle_dict, make_condition, make_ruleset  # noqa: E402

os.environ["EXPLAINLAB_ADMIN_TOKEN"] = "demo-admin-secret"
os.environ.setdefault("EXPLAINLAB_TEST_KEY", "demo-key")
ADMIN = {"X-Admin-Token": "demo-admin-secret"}

with tempfile.TemporaryDirectory() as workdir:
    config_path = os.path.join(workdir, "conditions.json")
    with open(config_path, "w") as handle:
        json.dump(
            {
                "rulesets": [make_ruleset().to_dict()],
                "llm_configs": [dict(LLM_CONFIG_DOC, config_id="echo-model")],
                "conditions": [make_condition("cond-full").to_dict()],
                "assignment_conditions": ["cond-full"],
                "survey_items": [
                    {"item_id": "q-motiv-1", "dimension": "motivation",
                     "text": "The explanations made me want to explore more."}
                ],
            },
            handle,
        )

    handle_ = serve(
        ServerConfig(port=0, data_dir=os.path.join(workdir, "data"), config_path=config_path),
        transport=EchoTransport(),
    )
    base = f"http://127.0.0.1:{handle_.port}"
    print(f"service up at {base}")

    try:
        with httpx.Client(base_url=base, timeout=10.0) as client:
            print("health:", client.get("/api/health").json())

            # researcher: load the dataset and enroll a learner
            report = client.post("/api/admin/import", json=fixture_bundle_dict(), headers=ADMIN).json()
            print("import:", report)
            assignment = client.post(
                "/api/admin/participants", json={"participant_id": "learner-1"}, headers=ADMIN
            ).json()
            print("enrolled:", assignment["participant_id"], "->", assignment["condition_id"])
            auth = {"Authorization": f"Bearer {assignment['token']}"}

            # learner: fetch the condition-filtered bundle
            bundle = client.get("/api/bundle/rec-1", headers=auth).json()
            print("bundle payloads:", list(bundle["payloads"]), "| chatbot:", bundle["chatbot_visible"])

            # learner: chat with the (stubbed) assistant
            session = client.post(
                "/api/chat/sessions", json={"recommendation_id": "rec-1"}, headers=auth
            ).json()
            posted = client.post(
                f"/api/chat/sessions/{session['session_id']}/messages",
                json={"recipients": ["assistant"], "content": "Tell me about Linear Equations"},
                headers=auth,
            ).json()
            for message in posted["messages"]:
                print(f"  chat seq {message['seq']} {message['sender']}: {message['content'][:50]}")

            # interface telemetry and a survey answer
            client.post(
                "/api/events",
                json={"events": [{"kind": "click",
                                  "target": {"component": "tags", "element": "tag:algebra"},
                                  "occurred_at": "2026-02-03T09:00:00+00:00"}]},
                headers=auth,
            )
            client.post(
                "/api/survey",
                json={"dimension": "motivation", "item_id": "q-motiv-1", "rating": 5},
                headers=auth,
            )

            # researcher: pull the archive
            export = client.get("/api/admin/export", headers=ADMIN)
            print("export:", len(export.content), "bytes of zip")
    finally:
        handle_.stop()
    print("stopped cleanly:", not handle_.running())
