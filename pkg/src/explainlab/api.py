"""HTTP boundary for the explanation service.

Exposes bundles, chat, telemetry, surveys and admin operations over
JSON. Participants authenticate with the opaque bearer token minted at
assignment time; endpoints never trust client-supplied participant ids.
Every error answers with the same shape: status, code, message and
optional field-path details.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import socket
import threading
import time
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path
from typing import Any, Sequence

import uvicorn
from fastapi import Body, FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import chat as chat_module
from .chat import ChatOrchestrator, Participant, RuleSet
from .components import ComponentKind, bundle_from_index
from .errors import (
    ComponentBuildError,
    ComponentNotVisibleError,
    ConfigurationError,
    ExplainLabError,
    FormatError,
    MembershipError,
    NotFoundError,
    PreconditionError,
    ProviderError,
    ReferentialError,
    SchemaError,
    StartupError,
    UnassignedError,
    UsageError,
)
from .experiments import (
    ExperimentCondition,
    ExperimentService,
    SurveyDimension,
    SurveyItem,
    SurveyResponse,
    parse_event_payload,
)
from .llm import Transport
from .store import DocumentStore, parse_bundle_text

DEFAULT_POLL_TIMEOUT_SECONDS = 25.0
DEFAULT_POLL_INTERVAL_SECONDS = 0.05

ADMIN_TOKEN_HEADER = "x-admin-token"

#: ordered (exception, status, code); first isinstance match wins, so
#: subclasses must precede their bases.
_ERROR_MAP: tuple[tuple[type, int, str], ...] = (
    (SchemaError, 422, "validation_error"),
    (ComponentNotVisibleError, 409, "component_not_visible"),
    (ConfigurationError, 422, "configuration_error"),
    (UnassignedError, 409, "unassigned_participant"),
    (MembershipError, 403, "forbidden"),
    (NotFoundError, 404, "not_found"),
    (FormatError, 400, "format_error"),
    (UsageError, 400, "bad_request"),
    (ComponentBuildError, 422, "component_build_failed"),
    (PreconditionError, 422, "precondition_failed"),
    (ReferentialError, 422, "referential_error"),
    (ProviderError, 502, "provider_error"),
)


class ApiFault(Exception):
    """Error raised inside endpoints with an explicit HTTP mapping."""

    def __init__(self, status: int, code: str, message: str, details: list | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details


def _fault_body(status: int, code: str, message: str, details: list | None = None) -> dict:
    body: dict[str, Any] = {"status": status, "code": code, "message": message}
    if details:
        body["details"] = details
    return body


@dataclass
class AppContext:
    store: DocumentStore
    experiments: ExperimentService
    orchestrator: ChatOrchestrator
    admin_token: str
    assignment_conditions: list[str]
    poll_timeout: float = DEFAULT_POLL_TIMEOUT_SECONDS
    poll_interval: float = DEFAULT_POLL_INTERVAL_SECONDS
    tokens: dict[str, str] = field(default_factory=dict)

    def refresh_tokens(self) -> None:
        self.tokens = {
            doc["token"]: participant_id
            for participant_id, doc in self.store.iter_documents("assignments")
            if doc.get("token")
        }


def load_config_file(store: DocumentStore, path: str | Path) -> tuple[list[str], list[SurveyItem]]:
    """Loads conditions, rulesets, llm configs and survey items at startup."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise StartupError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StartupError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise StartupError("config: expected a JSON object")

    try:
        for i, raw in enumerate(data.get("rulesets", [])):
            ruleset = RuleSet.from_dict(raw, path=f"rulesets[{i}]")
            store.put("rulesets", ruleset.ruleset_id, ruleset.to_dict())
        for i, raw in enumerate(data.get("llm_configs", [])):
            if not isinstance(raw, dict) or not raw.get("config_id"):
                raise StartupError(f"config: llm_configs[{i}].config_id is required")
            config_id = raw["config_id"]
            doc = {k: v for k, v in raw.items() if k != "config_id"}
            store.put("llm_configs", config_id, doc)
        condition_ids: list[str] = []
        for i, raw in enumerate(data.get("conditions", [])):
            condition = ExperimentCondition.from_dict(raw, path=f"conditions[{i}]")
            store.put("conditions", condition.condition_id, condition.to_dict())
            condition_ids.append(condition.condition_id)
    except SchemaError as exc:
        raise StartupError(f"config: {'; '.join(exc.problems)}") from exc

    assignment = data.get("assignment_conditions", condition_ids)
    if not isinstance(assignment, list) or not all(isinstance(c, str) for c in assignment):
        raise StartupError("config: assignment_conditions must be a list of condition ids")

    items: list[SurveyItem] = []
    for i, raw in enumerate(data.get("survey_items", [])):
        if not isinstance(raw, dict) or not raw.get("item_id") or not raw.get("dimension"):
            raise StartupError(f"config: survey_items[{i}] needs item_id and dimension")
        try:
            dimension = SurveyDimension(raw["dimension"])
        except ValueError:
            raise StartupError(f"config: survey_items[{i}].dimension is unknown") from None
        items.append(SurveyItem(item_id=raw["item_id"], dimension=dimension, text=raw.get("text", "")))
    return assignment, items


def create_app(
    store: DocumentStore,
    *,
    admin_token: str,
    assignment_conditions: Sequence[str] = (),
    survey_items: Sequence[SurveyItem] = (),
    transport: Transport | None = None,
    poll_timeout: float = DEFAULT_POLL_TIMEOUT_SECONDS,
    poll_interval: float = DEFAULT_POLL_INTERVAL_SECONDS,
    **orchestrator_kwargs,
) -> FastAPI:
    """Builds the application; the transport is injectable for stub providers."""
    if not admin_token:
        raise StartupError("admin_token: must be non-empty")
    context = AppContext(
        store=store,
        experiments=ExperimentService(store, survey_items=survey_items),
        orchestrator=ChatOrchestrator(store, transport, **orchestrator_kwargs),
        admin_token=admin_token,
        assignment_conditions=list(assignment_conditions),
        poll_timeout=poll_timeout,
        poll_interval=poll_interval,
    )
    context.refresh_tokens()

    app = FastAPI(title="explainlab", docs_url=None, redoc_url=None)
    app.state.context = context

    @app.exception_handler(ApiFault)
    async def _handle_fault(_req: Request, exc: ApiFault) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content=_fault_body(exc.status, exc.code, exc.message, exc.details),
        )

    @app.exception_handler(ExplainLabError)
    async def _handle_domain_error(_req: Request, exc: ExplainLabError) -> JSONResponse:
        for exc_type, status, code in _ERROR_MAP:
            if isinstance(exc, exc_type):
                details = list(exc.problems) if isinstance(exc, SchemaError) else None
                return JSONResponse(
                    status_code=status,
                    content=_fault_body(status, code, str(exc), details),
                )
        return JSONResponse(status_code=500, content=_fault_body(500, "internal_error", str(exc)))

    def require_participant(request: Request) -> str:
        auth = request.headers.get("authorization", "")
        if not auth.startswith("Bearer "):
            raise ApiFault(401, "unauthorized", "missing bearer token")
        participant_id = context.tokens.get(auth[len("Bearer ") :])
        if participant_id is None:
            raise ApiFault(401, "unauthorized", "unknown token")
        return participant_id

    def require_admin(request: Request) -> None:
        if request.headers.get(ADMIN_TOKEN_HEADER, "") != context.admin_token:
            raise ApiFault(401, "unauthorized", "missing or invalid admin token")

    def condition_for(participant_id: str) -> ExperimentCondition:
        assignment = context.experiments.assignment_of(participant_id)
        if assignment is None:
            raise UnassignedError(f"participant {participant_id!r} has no assignment")
        condition = context.experiments.get_condition(assignment.condition_id)
        if condition is None:
            raise ConfigurationError(f"assigned condition {assignment.condition_id!r} is not defined")
        return condition

    def build_bundle_for(participant_id: str, recommendation_id: str):
        condition = condition_for(participant_id)
        index = context.store.domain_index()
        rec = index.recommendations.get(recommendation_id)
        if rec is None:
            raise NotFoundError(f"recommendation {recommendation_id!r} does not exist")
        bundle = bundle_from_index(index, rec, condition.condition_id, condition.visible_components)
        return condition, index, rec, bundle

    def ruleset_for(condition: ExperimentCondition) -> RuleSet:
        doc = context.store.get("rulesets", condition.rules_ref)
        if doc is None:
            raise ConfigurationError(f"ruleset {condition.rules_ref!r} is not defined")
        return RuleSet.from_dict(doc)

    # -- health -------------------------------------------------------------

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    # -- bundles ------------------------------------------------------------

    @app.get("/api/bundle/{recommendation_id}")
    def get_bundle(recommendation_id: str, request: Request) -> dict:
        participant_id = require_participant(request)
        condition, _, _, bundle = build_bundle_for(participant_id, recommendation_id)
        body = bundle.to_dict()
        body["chatbot_visible"] = ComponentKind.CHATBOT in condition.visible_components
        return body

    # -- chat ---------------------------------------------------------------

    @app.post("/api/chat/sessions")
    def create_session(request: Request, payload: dict = Body(...)) -> dict:
        participant_id = require_participant(request)
        recommendation_id = payload.get("recommendation_id")
        if not isinstance(recommendation_id, str) or not recommendation_id:
            raise SchemaError(["recommendation_id: required"])
        extras = []
        for i, raw in enumerate(payload.get("extra_participants", [])):
            extras.append(Participant.from_dict(raw, path=f"extra_participants[{i}]"))
        condition, index, rec, bundle = build_bundle_for(participant_id, recommendation_id)
        facts = chat_module.fetch_facts(rec, index)
        session = context.orchestrator.create_session(
            participant_id, condition, bundle, facts, extras
        )
        return {
            "session_id": session.session_id,
            "condition_id": session.condition_id,
            "participants": [p.to_dict() for p in session.participants],
            "next_seq": session.next_seq,
        }

    @app.post("/api/chat/sessions/{session_id}/messages")
    def post_message(session_id: str, request: Request, payload: dict = Body(...)) -> dict:
        participant_id = require_participant(request)
        session = context.orchestrator.load_session(session_id)
        if session.participant(participant_id) is None:
            raise MembershipError(f"{participant_id!r} is not a participant of this session")
        recipients = payload.get("recipients")
        content = payload.get("content")
        if not isinstance(recipients, list) or not recipients:
            raise SchemaError(["recipients: must be a non-empty list"])
        if not isinstance(content, str) or not content:
            raise SchemaError(["content: must be non-empty"])
        condition = context.experiments.get_condition(session.condition_id)
        if condition is None:
            raise ConfigurationError(f"condition {session.condition_id!r} is not defined")
        appended = context.orchestrator.post_message(
            session_id,
            participant_id,
            recipients,
            content,
            ruleset_for(condition),
            history_window=condition.history_window,
        )
        return {"messages": [m.to_dict() for m in appended]}

    @app.get("/api/chat/sessions/{session_id}/messages")
    async def poll_messages(
        session_id: str, request: Request, after: int = Query(default=0)
    ) -> dict:
        participant_id = require_participant(request)
        session = context.orchestrator.load_session(session_id)
        if session.participant(participant_id) is None:
            raise MembershipError(f"{participant_id!r} is not a participant of this session")
        deadline = time.monotonic() + context.poll_timeout
        while True:
            messages = context.orchestrator.messages_after(session_id, after)
            if messages or time.monotonic() >= deadline:
                return {"messages": [m.to_dict() for m in messages]}
            await asyncio.sleep(context.poll_interval)

    # -- telemetry and surveys ------------------------------------------------

    @app.post("/api/events", status_code=204)
    def post_events(request: Request, payload: dict = Body(...)) -> Response:
        participant_id = require_participant(request)
        raw_events = payload.get("events")
        if not isinstance(raw_events, list) or not raw_events:
            raise SchemaError(["events: must be a non-empty list"])
        parsed = []
        problems: list[str] = []
        for i, raw in enumerate(raw_events):
            try:
                parsed.append(parse_event_payload(raw, path=f"events[{i}]"))
            except SchemaError as exc:
                problems.extend(exc.problems)
        if problems:
            raise SchemaError(problems)
        context.experiments.log_event_batch(participant_id, parsed)
        return Response(status_code=204)

    @app.post("/api/survey", status_code=204)
    def post_survey(request: Request, payload: dict = Body(...)) -> Response:
        participant_id = require_participant(request)
        problems = []
        dimension_raw = payload.get("dimension")
        item_id = payload.get("item_id")
        rating = payload.get("rating")
        dimension = None
        if not isinstance(dimension_raw, str):
            problems.append("dimension: required")
        else:
            try:
                dimension = SurveyDimension(dimension_raw)
            except ValueError:
                problems.append(f"dimension: unknown dimension {dimension_raw!r}")
        if not isinstance(item_id, str) or not item_id:
            problems.append("item_id: required")
        if isinstance(rating, bool) or not isinstance(rating, int):
            problems.append("rating: expected integer")
        if problems:
            raise SchemaError(problems)
        context.experiments.record_survey(
            SurveyResponse(
                participant_id=participant_id,
                dimension=dimension,
                item_id=item_id,
                rating=rating,
            )
        )
        return Response(status_code=204)

    # -- admin ----------------------------------------------------------------

    @app.post("/api/admin/participants")
    def enroll_participant(request: Request, payload: dict = Body(...)) -> dict:
        require_admin(request)
        participant_id = payload.get("participant_id")
        if not isinstance(participant_id, str) or not participant_id:
            raise SchemaError(["participant_id: required"])
        condition_ids = payload.get("condition_ids") or context.assignment_conditions
        if not isinstance(condition_ids, list) or not condition_ids:
            raise ConfigurationError("no assignment conditions configured")
        assignment = context.experiments.assign_participant(participant_id, condition_ids)
        context.tokens[assignment.token] = assignment.participant_id
        return assignment.to_dict()

    @app.post("/api/admin/conditions")
    def define_condition(request: Request, payload: dict = Body(...)) -> dict:
        require_admin(request)
        condition = ExperimentCondition.from_dict(payload.get("condition"), path="condition")
        replace = bool(payload.get("replace", False))
        context.experiments.define_condition(condition, replace=replace)
        return condition.to_dict()

    @app.post("/api/admin/import")
    async def import_bundle(request: Request) -> dict:
        require_admin(request)
        body = await request.body()
        data = parse_bundle_text(body.decode("utf-8"))
        report = context.store.import_bundle(data)
        return report.to_dict()

    @app.get("/api/admin/export")
    def export_dataset(request: Request) -> StreamingResponse:
        require_admin(request)
        archive = context.experiments.export_dataset()
        return StreamingResponse(
            BytesIO(archive.to_zip_bytes()),
            media_type="application/zip",
            headers={"Content-Disposition": "attachment; filename=export.zip"},
        )

    return app


# -- server lifecycle ---------------------------------------------------------


@dataclass
class ServerConfig:
    port: int = 8080
    data_dir: str = "data"
    config_path: str | None = None
    admin_token_env: str = "EXPLAINLAB_ADMIN_TOKEN"
    host: str = "127.0.0.1"


class ServiceHandle:
    """A running server with a blocking stop; exposes the bound port."""

    def __init__(self, server: uvicorn.Server, thread: threading.Thread, port: int):
        self._server = server
        self._thread = thread
        self.port = port

    def stop(self, timeout: float = 10.0) -> None:
        self._server.should_exit = True
        self._thread.join(timeout)

    def running(self) -> bool:
        return self._thread.is_alive()


def build_app_from_config(config: ServerConfig, transport: Transport | None = None) -> FastAPI:
    admin_token = os.environ.get(config.admin_token_env, "")
    if not admin_token:
        raise StartupError(f"admin_token_env: environment variable {config.admin_token_env!r} is not set")
    store = DocumentStore(config.data_dir)
    assignment_conditions: list[str] = []
    survey_items: list[SurveyItem] = []
    if config.config_path:
        assignment_conditions, survey_items = load_config_file(store, config.config_path)
    return create_app(
        store,
        admin_token=admin_token,
        assignment_conditions=assignment_conditions,
        survey_items=survey_items,
        transport=transport,
    )


def serve(config: ServerConfig, transport: Transport | None = None) -> ServiceHandle:
    """Starts the service on a pre-bound socket; raises StartupError when it cannot."""
    app = build_app_from_config(config, transport)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        sock.bind((config.host, config.port))
    except OSError as exc:
        sock.close()
        raise StartupError(f"port: cannot bind {config.host}:{config.port} ({exc})") from exc
    sock.listen(128)
    port = sock.getsockname()[1]

    uv_config = uvicorn.Config(app, log_level="warning", lifespan="off")
    server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started and thread.is_alive() and time.monotonic() < deadline:
        time.sleep(0.01)
    if not server.started:
        raise StartupError("server failed to start")
    return ServiceHandle(server, thread, port)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="explainlab-serve", description="Run the explanation service.")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--config", default=None, help="conditions file (JSON)")
    parser.add_argument(
        "--admin-token-env",
        default="EXPLAINLAB_ADMIN_TOKEN",
        help="name of the environment variable holding the admin secret",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--stub-llm",
        action="store_true",
        help="answer chat completions with a local echo stub instead of a real provider",
    )
    args = parser.parse_args(argv)

    transport: Transport | None = None
    if args.stub_llm:
        from .llm import EchoTransport

        transport = EchoTransport()

    config = ServerConfig(
        port=args.port,
        data_dir=args.data_dir,
        config_path=args.config,
        admin_token_env=args.admin_token_env,
        host=args.host,
    )
    try:
        handle = serve(config, transport)
    except StartupError as exc:
        print(f"error: {exc}")
        return 1
    print(f"explainlab listening on http://{config.host}:{handle.port}")
    try:
        while handle.running():
            time.sleep(0.2)
    except KeyboardInterrupt:
        handle.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
