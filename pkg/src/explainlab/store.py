"""File-backed document store plus an append-only event log.

One JSON document per entity under ``<data_dir>/<collection>/<id>.json``,
written canonically (sorted keys, compact separators) so document
equality is byte equality. Events live in ``<data_dir>/events.log`` as
length-prefixed records; the log accepts appends and nothing else.
Designed to run from a researcher's laptop: no server, no daemons.
"""

from __future__ import annotations

import json
import os
import re
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

from . import chat, llm, model
from .errors import (
    AppendOnlyError,
    FormatError,
    SchemaError,
    UsageError,
)

_SAFE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._~@-]*$")

BUNDLE_COLLECTIONS = ("topics", "relations", "goals", "profiles", "structures", "recommendations")

#: collection name -> parser returning a typed object (None: owned elsewhere)
_PARSERS: dict[str, Callable[[Any], Any] | None] = {
    "topics": model.Topic.from_dict,
    "relations": model.TopicRelation.from_dict,
    "goals": model.LearningGoal.from_dict,
    "profiles": model.LearnerProfile.from_dict,
    "structures": model.CourseStructure.from_dict,
    "recommendations": model.LearningRecommendation.from_dict,
    "rulesets": chat.RuleSet.from_dict,
    "llm_configs": llm.LlmConfig.from_dict,
    "sessions": chat.ChatSession.from_dict,
    # experiment-owned shapes are bound lazily; experiments imports this module
    "conditions": None,
    "assignments": None,
    "surveys": None,
}


def _experiment_parser(collection: str) -> Callable[[Any], Any]:
    from . import experiments

    return {
        "conditions": experiments.ExperimentCondition.from_dict,
        "assignments": experiments.Assignment.from_dict,
        "surveys": experiments.SurveyResponse.from_dict,
    }[collection]

COLLECTIONS = tuple(_PARSERS)


def canonical_json(document: Mapping[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def parse_document(collection: str, document: Any):
    """Returns the typed object for a collection document."""
    if collection not in _PARSERS:
        raise UsageError(f"unknown collection {collection!r}")
    parser = _PARSERS[collection] or _experiment_parser(collection)
    parsed = parser(document)
    if collection == "recommendations":
        report = model.validate_recommendation(parsed, index=None)
        if not report.ok:
            raise SchemaError(f"{v.path}: {v.message}" for v in report.violations)
    return parsed


class EventLog:
    """Append-only sequence of JSON records, length-prefixed on disk.

    Positions start at 1 and strictly increase. A partially written tail
    record (crash mid-append) is dropped at open time. Updates and
    deletes are refused by construction.
    """

    _PREFIX = struct.Struct(">I")

    def __init__(self, path: Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._count = 0
        self._valid_bytes = 0
        self._recover()

    def _recover(self) -> None:
        if not self._path.exists():
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.touch()
            return
        raw = self._path.read_bytes()
        offset = 0
        count = 0
        while offset + self._PREFIX.size <= len(raw):
            (length,) = self._PREFIX.unpack_from(raw, offset)
            end = offset + self._PREFIX.size + length
            if end > len(raw):
                break  # torn tail write; ignore it
            offset = end
            count += 1
        self._count = count
        self._valid_bytes = offset
        if offset < len(raw):
            with open(self._path, "r+b") as handle:
                handle.truncate(offset)

    def append(self, record: Mapping[str, Any]) -> int:
        """Appends one record and returns its 1-based position."""
        payload = canonical_json(record).encode("utf-8")
        with self._lock:
            with open(self._path, "ab") as handle:
                handle.write(self._PREFIX.pack(len(payload)))
                handle.write(payload)
                handle.flush()
                os.fsync(handle.fileno())
            self._count += 1
            self._valid_bytes += self._PREFIX.size + len(payload)
            return self._count

    def update(self, position: int, record: Mapping[str, Any]) -> None:
        raise AppendOnlyError(f"event log refuses update at position {position}")

    def delete(self, position: int) -> None:
        raise AppendOnlyError(f"event log refuses delete at position {position}")

    def __len__(self) -> int:
        with self._lock:
            return self._count

    def read_all(self) -> Iterator[tuple[int, dict]]:
        """Yields (position, record) pairs in append order."""
        with self._lock:
            raw = self._path.read_bytes()[: self._valid_bytes]
        offset = 0
        position = 0
        while offset + self._PREFIX.size <= len(raw):
            (length,) = self._PREFIX.unpack_from(raw, offset)
            start = offset + self._PREFIX.size
            end = start + length
            if end > len(raw):
                break
            position += 1
            yield position, json.loads(raw[start:end].decode("utf-8"))
            offset = end


class DocumentStore:
    """Durable store for all entities; writes are atomic per document."""

    def __init__(self, data_dir: str | Path):
        self._root = Path(data_dir)
        self._root.mkdir(parents=True, exist_ok=True)
        self._collection_locks = {name: threading.Lock() for name in COLLECTIONS}
        self.event_log = EventLog(self._root / "events.log")

    def _collection_dir(self, collection: str) -> Path:
        if collection not in COLLECTIONS:
            raise UsageError(f"unknown collection {collection!r}")
        return self._root / collection

    @staticmethod
    def _check_id(doc_id: str) -> None:
        if not isinstance(doc_id, str) or not _SAFE_ID.match(doc_id):
            raise SchemaError([f"id: {doc_id!r} is not a safe document id"])

    def put(self, collection: str, doc_id: str, document: Mapping[str, Any]) -> None:
        """Validates and atomically replaces the document (write-then-rename)."""
        directory = self._collection_dir(collection)
        self._check_id(doc_id)
        parse_document(collection, document)
        payload = canonical_json(document).encode("utf-8")
        with self._collection_locks[collection]:
            directory.mkdir(parents=True, exist_ok=True)
            final = directory / f"{doc_id}.json"
            temp = directory / f".{doc_id}.json.tmp"
            with open(temp, "wb") as handle:
                handle.write(payload)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(temp, final)

    def get(self, collection: str, doc_id: str) -> dict | None:
        """Latest committed version, or None; absence is not an error."""
        directory = self._collection_dir(collection)
        path = directory / f"{doc_id}.json"
        if not _SAFE_ID.match(doc_id) or not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def list_ids(self, collection: str) -> list[str]:
        directory = self._collection_dir(collection)
        if not directory.exists():
            return []
        return sorted(p.stem for p in directory.glob("*.json") if not p.name.startswith("."))

    def iter_documents(self, collection: str) -> Iterator[tuple[str, dict]]:
        for doc_id in self.list_ids(collection):
            doc = self.get(collection, doc_id)
            if doc is not None:
                yield doc_id, doc

    def append_event(self, record: Mapping[str, Any]) -> int:
        return self.event_log.append(record)

    def domain_index(self) -> model.DomainIndex:
        """Typed view over the educational collections; rebuilt per call."""
        topics = {doc_id: model.Topic.from_dict(doc) for doc_id, doc in self.iter_documents("topics")}
        goals = {
            doc_id: model.LearningGoal.from_dict(doc) for doc_id, doc in self.iter_documents("goals")
        }
        profiles = {
            doc_id: model.LearnerProfile.from_dict(doc)
            for doc_id, doc in self.iter_documents("profiles")
        }
        structures = {
            doc_id: model.CourseStructure.from_dict(doc)
            for doc_id, doc in self.iter_documents("structures")
        }
        relations = tuple(
            model.TopicRelation.from_dict(doc) for _, doc in self.iter_documents("relations")
        )
        recommendations = {
            doc_id: model.LearningRecommendation.from_dict(doc)
            for doc_id, doc in self.iter_documents("recommendations")
        }
        return model.DomainIndex(
            topics=topics,
            goals=goals,
            profiles=profiles,
            structures=structures,
            relations=relations,
            recommendations=recommendations,
        )

    # -- bundle import / export -------------------------------------------

    def import_bundle(self, source: str | Path | Mapping[str, Any]) -> "ImportReport":
        """All-or-nothing import of a canonical bundle.

        Either every document lands and referential closure verifies, or
        nothing is committed and the report lists every problem, dangling
        references included.
        """
        data = _load_bundle_source(source)
        staged, problems = _stage_bundle(data)
        problems.extend(_closure_problems(staged, self.domain_index()))
        if problems:
            return ImportReport(ok=False, committed={}, problems=tuple(problems))
        committed: dict[str, int] = {}
        for collection, docs in staged.items():
            for doc_id, obj in docs.items():
                self.put(collection, doc_id, obj.to_dict())
            committed[collection] = len(docs)
        return ImportReport(ok=True, committed=committed, problems=())

    def export_bundle(self) -> dict:
        """Canonical bundle of the educational collections, arrays sorted by id."""
        return {
            "topics": [doc for _, doc in self.iter_documents("topics")],
            "relations": [doc for _, doc in self.iter_documents("relations")],
            "goals": [doc for _, doc in self.iter_documents("goals")],
            "profiles": [doc for _, doc in self.iter_documents("profiles")],
            "structures": [doc for _, doc in self.iter_documents("structures")],
            "recommendations": [doc for _, doc in self.iter_documents("recommendations")],
        }


@dataclass(frozen=True)
class ImportReport:
    ok: bool
    committed: Mapping[str, int]
    problems: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "committed": dict(self.committed), "problems": list(self.problems)}


def _load_bundle_source(source: str | Path | Mapping[str, Any]) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read bundle file: {exc}") from exc
    return parse_bundle_text(text)


def parse_bundle_text(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"bundle is not valid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise FormatError("bundle must be a JSON object with per-collection arrays")
    return data


def _normalize_scores(rec: model.LearningRecommendation) -> model.LearningRecommendation:
    """Min-max rescales scores into [0,1]; in-range inputs pass through unchanged."""
    scores = [item.score for item in rec.items]
    if not scores or all(0.0 <= s <= 1.0 for s in scores):
        return rec
    low, high = min(scores), max(scores)
    if high == low:
        rescaled = [1.0 for _ in scores]
    else:
        rescaled = [(s - low) / (high - low) for s in scores]
    items = tuple(
        model.RecommendedItem(topic_id=item.topic_id, rank=item.rank, score=score)
        for item, score in zip(rec.items, rescaled)
    )
    return model.LearningRecommendation(
        id=rec.id, learner_id=rec.learner_id, goal_id=rec.goal_id, items=items, facts=rec.facts
    )


def _stage_bundle(data: Mapping[str, Any]) -> tuple[dict[str, dict[str, Any]], list[str]]:
    """Parses every bundle document; returns staged objects keyed by id."""
    problems: list[str] = []
    staged: dict[str, dict[str, Any]] = {name: {} for name in BUNDLE_COLLECTIONS}
    for key in data:
        if key not in BUNDLE_COLLECTIONS:
            problems.append(f"{key}: unknown bundle collection")

    id_getters = {
        "topics": lambda o: o.id,
        "relations": lambda o: o.relation_id,
        "goals": lambda o: o.goal_id,
        "profiles": lambda o: o.learner_id,
        "structures": lambda o: o.structure_id,
        "recommendations": lambda o: o.id,
    }
    for collection in BUNDLE_COLLECTIONS:
        raw_docs = data.get(collection, [])
        if not isinstance(raw_docs, list):
            problems.append(f"{collection}: expected array")
            continue
        parser = _PARSERS[collection]
        for i, raw in enumerate(raw_docs):
            try:
                obj = parser(raw)
            except SchemaError as exc:
                problems.extend(f"{collection}[{i}].{p}" for p in exc.problems)
                continue
            if collection == "recommendations":
                obj = _normalize_scores(obj)
                report = model.validate_recommendation(obj, index=None)
                if not report.ok:
                    problems.extend(f"{collection}[{i}].{v.path}: {v.message}" for v in report.violations)
                    continue
            doc_id = id_getters[collection](obj)
            if doc_id in staged[collection]:
                problems.append(f"{collection}[{i}]: duplicate id {doc_id!r}")
            staged[collection][doc_id] = obj
    return staged, problems


def _closure_problems(staged: Mapping[str, Mapping[str, Any]], existing: model.DomainIndex) -> list[str]:
    """Dangling references across staged plus already-stored documents."""
    topics = set(staged["topics"]) | set(existing.topics)
    goals = set(staged["goals"]) | set(existing.goals)
    profiles = set(staged["profiles"]) | set(existing.profiles)
    structures = set(staged["structures"]) | set(existing.structures)
    recommendations = set(staged["recommendations"]) | set(existing.recommendations)
    any_ref = topics | goals | profiles | structures | recommendations

    problems: list[str] = []

    for rel_id, rel in staged["relations"].items():
        for endpoint in (rel.from_topic, rel.to_topic):
            if endpoint not in topics:
                problems.append(f"relations[{rel_id}]: unresolved topic {endpoint!r}")

    for goal_id, goal in staged["goals"].items():
        for topic_id in sorted(goal.required_topics):
            if topic_id not in topics:
                problems.append(f"goals[{goal_id}]: unresolved topic {topic_id!r}")

    for learner_id, profile in staged["profiles"].items():
        for topic_id in sorted(profile.interest_topics | profile.completed_topics):
            if topic_id not in topics:
                problems.append(f"profiles[{learner_id}]: unresolved topic {topic_id!r}")

    for rec_id, rec in staged["recommendations"].items():
        for item in rec.items:
            if item.topic_id not in topics:
                problems.append(f"recommendations[{rec_id}]: unresolved topic_id {item.topic_id!r}")
        if rec.goal_id not in goals:
            problems.append(f"recommendations[{rec_id}]: unresolved goal_id {rec.goal_id!r}")
        if rec.learner_id not in profiles:
            problems.append(f"recommendations[{rec_id}]: unresolved learner_id {rec.learner_id!r}")
        for fact in rec.facts:
            if fact.source_ref not in any_ref:
                problems.append(f"recommendations[{rec_id}]: unresolved source_ref {fact.source_ref!r}")

    return problems


def canonicalize_bundle(data: Mapping[str, Any]) -> dict:
    """The canonical form a bundle reaches after one import/export cycle."""
    staged, problems = _stage_bundle(data)
    if problems:
        raise SchemaError(problems)
    out: dict[str, list] = {}
    for collection in BUNDLE_COLLECTIONS:
        out[collection] = [staged[collection][doc_id].to_dict() for doc_id in sorted(staged[collection])]
    return out
