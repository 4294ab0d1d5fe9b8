"""Experiment conditions, deterministic assignment, telemetry and surveys.

A condition declares which explanation components a learner sees and
which chatbot configuration applies. Participants are assigned by
hashing their id (FNV-1a, 64-bit) over an ordered condition list, so an
assignment never depends on process state and survives restarts.
Interaction events are append-only; survey answers may be amended but
every amendment leaves an audit event.
"""

from __future__ import annotations

import secrets as secrets_module
import zipfile
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from io import BytesIO
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .components import ComponentKind
from .errors import ConfigurationError, SchemaError, UnassignedError
from .model import _Reader, _require_clean
from .store import DocumentStore, canonical_json

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK_64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_HISTORY_WINDOW = 10

EXPORT_STREAMS = ("assignments", "events", "surveys", "transcripts")


def fnv1a_64(data: str) -> int:
    """64-bit FNV-1a hash; the assignment function must never change."""
    value = FNV_OFFSET_BASIS
    for byte in data.encode("utf-8"):
        value ^= byte
        value = (value * FNV_PRIME) & _MASK_64
    return value


class SurveyDimension(str, Enum):
    ACCEPTANCE = "acceptance"
    USER_FRIENDLINESS = "user_friendliness"
    INFO_RETRIEVAL_EASE = "info_retrieval_ease"
    MOTIVATION = "motivation"


class EventKind(str, Enum):
    CLICK = "click"
    HOVER = "hover"
    EXPAND = "expand"
    COLLAPSE = "collapse"
    CHAT_TURN = "chat_turn"
    COMPONENT_VIEW = "component_view"


@dataclass(frozen=True)
class ExperimentCondition:
    """Which components are visible and which chatbot settings apply."""

    condition_id: str
    visible_components: tuple[ComponentKind, ...]
    rules_ref: str
    llm_config_ref: str | None = None
    history_window: int = DEFAULT_HISTORY_WINDOW

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "ExperimentCondition":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        condition_id = r.str_("condition_id", allow_empty=False)
        kinds: list[ComponentKind] = []
        for i, raw in enumerate(r.list_("visible_components")):
            try:
                kind = ComponentKind(raw)
            except ValueError:
                problems.append(f"{r._at('visible_components')}[{i}]: unknown component kind {raw!r}")
                continue
            if kind in kinds:
                problems.append(f"{r._at('visible_components')}[{i}]: duplicate kind {kind.value!r}")
            else:
                kinds.append(kind)
        if "visible_components" in r.data and isinstance(r.data["visible_components"], list) and not kinds:
            problems.append(f"{r._at('visible_components')}: must be non-empty")
        rules_ref = r.str_("rules_ref", allow_empty=False)
        llm_config_ref = r.opt_str("llm_config_ref")
        history_window = r.int_("history_window", required=False, default=DEFAULT_HISTORY_WINDOW)
        if history_window < 1:
            problems.append(f"{r._at('history_window')}: must be a positive integer")
        if ComponentKind.CHATBOT in kinds and not llm_config_ref:
            problems.append(
                f"{r._at('llm_config_ref')}: required when the chatbot is visible"
            )
        r.reject_unknown(
            ("condition_id", "visible_components", "rules_ref", "llm_config_ref", "history_window")
        )
        _require_clean(problems)
        return cls(
            condition_id=condition_id,
            visible_components=tuple(kinds),
            rules_ref=rules_ref,
            llm_config_ref=llm_config_ref,
            history_window=history_window,
        )

    def to_dict(self) -> dict:
        return {
            "condition_id": self.condition_id,
            "visible_components": [k.value for k in self.visible_components],
            "rules_ref": self.rules_ref,
            "llm_config_ref": self.llm_config_ref,
            "history_window": self.history_window,
        }


@dataclass(frozen=True)
class Assignment:
    participant_id: str
    condition_id: str
    assigned_at: str
    token: str

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "condition_id": self.condition_id,
            "assigned_at": self.assigned_at,
            "token": self.token,
        }

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "Assignment":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        participant_id = r.str_("participant_id", allow_empty=False)
        condition_id = r.str_("condition_id", allow_empty=False)
        assigned_at = r.str_("assigned_at", required=False)
        token = r.str_("token", required=False)
        r.reject_unknown(("participant_id", "condition_id", "assigned_at", "token"))
        _require_clean(problems)
        return cls(
            participant_id=participant_id,
            condition_id=condition_id,
            assigned_at=assigned_at,
            token=token,
        )


@dataclass(frozen=True)
class EventTarget:
    component: ComponentKind
    element: str

    def to_dict(self) -> dict:
        return {"component": self.component.value, "element": self.element}


@dataclass(frozen=True)
class InteractionEvent:
    event_id: int
    participant_id: str
    kind: EventKind
    target: EventTarget
    occurred_at: str

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "participant_id": self.participant_id,
            "kind": self.kind.value,
            "target": self.target.to_dict(),
            "occurred_at": self.occurred_at,
        }


@dataclass(frozen=True)
class SurveyItem:
    item_id: str
    dimension: SurveyDimension
    text: str = ""


@dataclass(frozen=True)
class SurveyResponse:
    participant_id: str
    dimension: SurveyDimension
    item_id: str
    rating: int

    @classmethod
    def from_dict(cls, data: Any, path: str = "") -> "SurveyResponse":
        problems: list[str] = []
        r = _Reader(data, path, problems)
        participant_id = r.str_("participant_id", allow_empty=False)
        dimension_raw = r.str_("dimension", allow_empty=False)
        dimension = None
        if dimension_raw:
            try:
                dimension = SurveyDimension(dimension_raw)
            except ValueError:
                problems.append(f"{r._at('dimension')}: unknown dimension {dimension_raw!r}")
        item_id = r.str_("item_id", allow_empty=False)
        rating = r.int_("rating")
        if not (1 <= rating <= 5):
            problems.append(f"{r._at('rating')}: {rating} outside 1..5")
        r.reject_unknown(("participant_id", "dimension", "item_id", "rating"))
        _require_clean(problems)
        assert dimension is not None
        return cls(participant_id=participant_id, dimension=dimension, item_id=item_id, rating=rating)

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "dimension": self.dimension.value,
            "item_id": self.item_id,
            "rating": self.rating,
        }


def parse_event_payload(data: Any, path: str = "") -> tuple[EventKind, EventTarget, str]:
    """Validates one telemetry event body (everything but ids the server owns)."""
    problems: list[str] = []
    r = _Reader(data, path, problems)
    kind_raw = r.str_("kind", allow_empty=False)
    kind = None
    if kind_raw:
        try:
            kind = EventKind(kind_raw)
        except ValueError:
            problems.append(f"{r._at('kind')}: unknown event kind {kind_raw!r}")
    target = None
    target_reader = _Reader(r.data.get("target"), r._at("target"), problems)
    component_raw = target_reader.str_("component", allow_empty=False)
    element = target_reader.str_("element", required=False)
    target_reader.reject_unknown(("component", "element"))
    if component_raw:
        try:
            target = EventTarget(component=ComponentKind(component_raw), element=element)
        except ValueError:
            problems.append(f"{r._at('target')}.component: unknown component kind {component_raw!r}")
    occurred_at = r.str_("occurred_at", allow_empty=False)
    r.reject_unknown(("kind", "target", "occurred_at"))
    _require_clean(problems)
    assert kind is not None and target is not None
    return kind, target, occurred_at


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ExperimentService:
    """Owns conditions, assignments, telemetry streams and survey capture."""

    def __init__(
        self,
        store: DocumentStore,
        *,
        clock: Callable[[], str] = _utc_now,
        token_factory: Callable[[], str] | None = None,
        survey_items: Sequence[SurveyItem] = (),
    ):
        self._store = store
        self._clock = clock
        self._token_factory = token_factory or (lambda: secrets_module.token_urlsafe(16))
        self._survey_items = {item.item_id: item for item in survey_items}

    # -- conditions ---------------------------------------------------------

    def define_condition(self, condition: ExperimentCondition, *, replace: bool = False) -> ExperimentCondition:
        existing = self._store.get("conditions", condition.condition_id)
        if existing is not None and not replace:
            raise ConfigurationError(
                f"condition {condition.condition_id!r} already exists; pass replace to overwrite"
            )
        self._store.put("conditions", condition.condition_id, condition.to_dict())
        return condition

    def get_condition(self, condition_id: str) -> ExperimentCondition | None:
        doc = self._store.get("conditions", condition_id)
        return ExperimentCondition.from_dict(doc) if doc is not None else None

    # -- assignment ---------------------------------------------------------

    def assign_participant(self, participant_id: str, condition_ids: Sequence[str]) -> Assignment:
        """Deterministic, restart-stable assignment; existing ones never move."""
        if not condition_ids:
            raise ConfigurationError("condition list must be non-empty")
        existing = self._store.get("assignments", participant_id)
        if existing is not None:
            return Assignment.from_dict(existing)
        chosen = condition_ids[fnv1a_64(participant_id) % len(condition_ids)]
        if self._store.get("conditions", chosen) is None:
            raise ConfigurationError(f"condition {chosen!r} is not defined")
        assignment = Assignment(
            participant_id=participant_id,
            condition_id=chosen,
            assigned_at=self._clock(),
            token=self._token_factory(),
        )
        self._store.put("assignments", participant_id, assignment.to_dict())
        return assignment

    def assignment_of(self, participant_id: str) -> Assignment | None:
        doc = self._store.get("assignments", participant_id)
        return Assignment.from_dict(doc) if doc is not None else None

    def _require_assigned(self, participant_id: str) -> Assignment:
        assignment = self.assignment_of(participant_id)
        if assignment is None:
            raise UnassignedError(f"participant {participant_id!r} has no assignment")
        return assignment

    # -- telemetry ----------------------------------------------------------

    def log_event(
        self,
        participant_id: str,
        kind: EventKind,
        target: EventTarget,
        occurred_at: str,
    ) -> InteractionEvent:
        """Appends one interaction to the participant's stream; nothing ever leaves it."""
        self._require_assigned(participant_id)
        record = {
            "type": "interaction",
            "participant_id": participant_id,
            "kind": kind.value,
            "target": target.to_dict(),
            "occurred_at": occurred_at,
        }
        position = self._store.append_event(record)
        return InteractionEvent(
            event_id=position,
            participant_id=participant_id,
            kind=kind,
            target=target,
            occurred_at=occurred_at,
        )

    def log_event_batch(
        self, participant_id: str, events: Sequence[tuple[EventKind, EventTarget, str]]
    ) -> list[InteractionEvent]:
        """Validates first, then appends all; a bad entry blocks the whole batch."""
        self._require_assigned(participant_id)
        return [self.log_event(participant_id, kind, target, at) for kind, target, at in events]

    # -- surveys ------------------------------------------------------------

    def record_survey(self, response: SurveyResponse) -> SurveyResponse:
        """Stores the answer; re-answering overwrites and logs an amendment."""
        if not (1 <= response.rating <= 5):
            raise SchemaError([f"rating: {response.rating} outside 1..5"])
        self._require_assigned(response.participant_id)
        if self._survey_items:
            item = self._survey_items.get(response.item_id)
            if item is None:
                raise SchemaError([f"item_id: unknown survey item {response.item_id!r}"])
            if item.dimension is not response.dimension:
                raise SchemaError(
                    [f"dimension: item {response.item_id!r} belongs to {item.dimension.value!r}"]
                )
        doc_id = f"{response.participant_id}~{response.item_id}"
        previous = self._store.get("surveys", doc_id)
        self._store.put("surveys", doc_id, response.to_dict())
        if previous is not None:
            self._store.append_event(
                {
                    "type": "survey_amendment",
                    "participant_id": response.participant_id,
                    "item_id": response.item_id,
                    "previous_rating": previous.get("rating"),
                    "new_rating": response.rating,
                    "occurred_at": self._clock(),
                }
            )
        return response

    # -- export -------------------------------------------------------------

    def export_dataset(
        self,
        participant_ids: Iterable[str] | None = None,
        start: str | None = None,
        end: str | None = None,
    ) -> "ExportArchive":
        """Line-delimited records for researchers, deterministically ordered.

        Filters: a participant set and an inclusive ISO-timestamp range
        (applied to assignment/event/message times). An empty result is a
        valid archive with four empty streams.
        """
        wanted = set(participant_ids) if participant_ids is not None else None

        def in_range(stamp: str) -> bool:
            if start is not None and stamp < start:
                return False
            if end is not None and stamp > end:
                return False
            return True

        assignments = []
        for participant_id, doc in self._store.iter_documents("assignments"):
            if wanted is not None and participant_id not in wanted:
                continue
            if not in_range(doc.get("assigned_at", "")):
                continue
            line = {k: v for k, v in doc.items() if k != "token"}
            assignments.append(line)
        assignments.sort(key=lambda d: d["participant_id"])

        events = []
        rejections: dict[tuple[str, int], dict] = {}
        for position, record in self._store.event_log.read_all():
            if record.get("type") == "chat_rejection":
                rejections[(record.get("session_id", ""), int(record.get("seq", 0)))] = {
                    "raw_text": record.get("raw_text", ""),
                    "report": record.get("report", {}),
                }
                continue
            if record.get("type") != "interaction":
                continue
            participant_id = record.get("participant_id", "")
            if wanted is not None and participant_id not in wanted:
                continue
            if not in_range(record.get("occurred_at", "")):
                continue
            events.append(
                {
                    "event_id": position,
                    "participant_id": participant_id,
                    "kind": record.get("kind"),
                    "target": record.get("target"),
                    "occurred_at": record.get("occurred_at"),
                }
            )
        events.sort(key=lambda d: (d["participant_id"], d["event_id"]))

        surveys = []
        for _, doc in self._store.iter_documents("surveys"):
            if wanted is not None and doc.get("participant_id") not in wanted:
                continue
            surveys.append(doc)
        surveys.sort(key=lambda d: (d["participant_id"], d["item_id"]))

        transcripts = []
        for session_id, doc in self._store.iter_documents("sessions"):
            learner_id = next(
                (
                    p.get("participant_id")
                    for p in doc.get("participants", [])
                    if p.get("kind") == "learner"
                ),
                "",
            )
            if wanted is not None and learner_id not in wanted:
                continue
            for message in doc.get("history", []):
                if not in_range(message.get("created_at", "")):
                    continue
                transcripts.append(
                    {
                        "session_id": session_id,
                        "learner_id": learner_id,
                        "seq": message.get("seq"),
                        "sender": message.get("sender"),
                        "recipients": message.get("recipients"),
                        "content": message.get("content"),
                        "grounding_refs": message.get("grounding_refs"),
                        "created_at": message.get("created_at"),
                        "rejection": rejections.get((session_id, int(message.get("seq", 0)))),
                    }
                )
        transcripts.sort(key=lambda d: (d["learner_id"], d["session_id"], d["seq"]))

        return ExportArchive(
            assignments=tuple(assignments),
            events=tuple(events),
            surveys=tuple(surveys),
            transcripts=tuple(transcripts),
        )


@dataclass(frozen=True)
class ExportArchive:
    """Four .jsonl record streams; serialization is canonical and repeatable."""

    assignments: tuple[dict, ...]
    events: tuple[dict, ...]
    surveys: tuple[dict, ...]
    transcripts: tuple[dict, ...]

    def stream(self, name: str) -> tuple[dict, ...]:
        if name not in EXPORT_STREAMS:
            raise KeyError(name)
        return getattr(self, name)

    def to_jsonl(self, name: str) -> str:
        return "".join(canonical_json(record) + "\n" for record in self.stream(name))

    def write_dir(self, directory: str | Path) -> Path:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        for name in EXPORT_STREAMS:
            (path / f"{name}.jsonl").write_text(self.to_jsonl(name), encoding="utf-8")
        return path

    def to_zip_bytes(self) -> bytes:
        """Zip with pinned metadata so identical content means identical bytes."""
        buffer = BytesIO()
        with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_DEFLATED) as archive:
            for name in EXPORT_STREAMS:
                info = zipfile.ZipInfo(f"{name}.jsonl", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                archive.writestr(info, self.to_jsonl(name))
        return buffer.getvalue()
