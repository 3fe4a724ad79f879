"""Persistent service registry with semantic search over task descriptions.

Persistence is an append-only JSON-lines log plus a compacted snapshot; store
state is a pure function of the log, so crash recovery is replay.  Search
uses a deterministic hashed tf-idf embedder over 256 buckets: no external
database, no model downloads, reproducible rankings.  Mutations funnel
through a single writer lock while readers work lock-free against the latest
immutable record map.

The idf table is recomputed on every publish (O(N * D) rebuild); at registry
scale that is cheap and keeps vectors exactly consistent with the corpus.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from datetime import datetime
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict

from svcforge.attributes import (
    ATTRIBUTE_ROWS,
    Comment,
    FeedbackRecord,
    NodeSpec,
    ServiceRecord,
    ValidationReport,
    total_cost,
    utcnow,
    validate_record,
)

EMBEDDING_DIMS = 256
LOG_FILE = "log.jsonl"
SNAPSHOT_FILE = "snapshot.json"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class UnknownUriError(KeyError):
    pass


class UnknownNodeFilterError(ValueError):
    pass


class PublishRejectedError(ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        paths = ", ".join(v.path for v in report.errors)
        super().__init__(f"record failed validation: {paths}")


class RegistryLogEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: int
    op: Literal["upsert", "feedback"]
    payload: dict


# ---------------------------------------------------------------------------
# Hashed tf-idf embedding
# ---------------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def token_bucket(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % EMBEDDING_DIMS


def _term_counts(text: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for token in tokenize(text):
        counts[token] = counts.get(token, 0) + 1
    return counts


def _idf_table(corpus_counts: list[dict[str, int]]) -> dict[str, float]:
    """Smoothed idf over the corpus: ln((1+N)/(1+df)) + 1."""
    n_docs = len(corpus_counts)
    df: dict[str, int] = {}
    for counts in corpus_counts:
        for token in counts:
            df[token] = df.get(token, 0) + 1
    return {
        token: math.log((1 + n_docs) / (1 + doc_freq)) + 1.0 for token, doc_freq in df.items()
    }


def _vectorize(counts: dict[str, int], idf: dict[str, float], n_docs: int) -> list[float]:
    unseen_idf = math.log(1.0 + n_docs) + 1.0  # df = 0 under the smoothed formula
    vector = [0.0] * EMBEDDING_DIMS
    for token, tf in counts.items():
        vector[token_bucket(token)] += tf * idf.get(token, unseen_idf)
    norm = math.sqrt(sum(component * component for component in vector))
    if norm > 0:
        vector = [component / norm for component in vector]
    return vector


def cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


def embedding_text(record: ServiceRecord) -> str:
    return record.task_info.revised_task_detail or record.task_info.task_detail


# ---------------------------------------------------------------------------
# Verification checklist
# ---------------------------------------------------------------------------


class VerificationCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    check: str
    status: Literal["pass", "not-applicable", "fail"]
    detail: str = ""


class VerificationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    service_uri: str
    verifier: str
    verified_at: datetime
    checks: list[VerificationCheck]

    @property
    def passed(self) -> bool:
        return all(check.status != "fail" for check in self.checks)


def _row_status(record: ServiceRecord, row: str) -> tuple[str, str]:
    """Completeness status of one attribute-taxonomy row for a record."""
    profiles = list(record.profiles.values())

    def all_profiles(getter, positive=True):
        if not profiles:
            return "fail", "no runtime profile"
        values = [getter(p) for p in profiles]
        if positive and any(v <= 0 for v in values):
            return "fail", f"non-positive value: {min(values)}"
        return "pass", ""

    if row == "task_category":
        return ("pass", "") if record.task_info.task_category else ("fail", "empty")
    if row == "task_detail":
        return ("pass", "") if record.task_info.task_detail else ("fail", "empty")
    if row == "accuracy":
        if record.task_info.accuracy:
            return "pass", ""
        return "not-applicable", "no benchmarks documented"
    if row == "cpu_usage":
        return all_profiles(lambda p: p.resource.cpu_time_ms_per_req)
    if row == "cpu_ram_usage":
        return all_profiles(lambda p: p.resource.cpu_ram_peak_mb)
    if row == "device_usage":
        if profiles and any(p.resource.device_time_ms_per_req > 0 for p in profiles):
            return "pass", ""
        return ("not-applicable", "no accelerator lane measured") if profiles else ("fail", "no runtime profile")
    if row == "device_ram_usage":
        if profiles and any(p.resource.device_ram_peak_mb > 0 for p in profiles):
            return "pass", ""
        return ("not-applicable", "no accelerator lane measured") if profiles else ("fail", "no runtime profile")
    if row == "disk_io":
        return all_profiles(
            lambda p: p.resource.disk_read_bytes_per_req + p.resource.disk_write_bytes_per_req
        )
    if row == "service_storage_size":
        return ("pass", "") if record.storage_size_bytes > 0 else ("fail", "zero storage size")
    if row == "energy_consumption":
        return all_profiles(
            lambda p: min(p.resource.energy_idle_w, p.resource.energy_active_j_per_req)
        )
    if row == "input_data_size":
        return all_profiles(lambda p: p.resource.input_bytes_avg)
    if row == "output_data_size":
        return all_profiles(lambda p: p.resource.output_bytes_avg)
    if row == "inference_time":
        return all_profiles(lambda p: p.latency.inference_ms.p50)
    if row == "initialization_time":
        return all_profiles(lambda p: p.latency.init_ms)
    if row == "eviction_time":
        return all_profiles(lambda p: p.latency.eviction_ms)
    if row == "cooperative_inference":
        if record.coop_capable and not any(p.coop_profiles for p in profiles):
            return "fail", "declared capable without a validated split"
        return "pass", "capable" if record.coop_capable else "validated not capable"
    if row == "feedback":
        return "pass", ""
    if row == "xai_support":
        if any(p.xai_profiles for p in profiles):
            return "pass", ""
        return "not-applicable", "no techniques tested"
    if row in ("initialization_cost", "keepalive_cost", "execution_cost"):
        billing = record.billing
        if billing.init_cost_credits == billing.keepalive_credits_per_s == billing.exec_cost_credits == 0:
            return "fail", "billing profile missing"
        return "pass", ""
    raise KeyError(row)


def completeness_checks(record: ServiceRecord) -> list[VerificationCheck]:
    checks = []
    for row in ATTRIBUTE_ROWS:
        status, detail = _row_status(record, row)
        checks.append(VerificationCheck(check=f"attribute:{row}", status=status, detail=detail))
    checks.append(
        VerificationCheck(
            check="has_node_profile",
            status="pass" if record.profiles else "fail",
            detail="" if record.profiles else "no node profile",
        )
    )
    provenance_ok = bool(record.provenance.provider_name)
    checks.append(
        VerificationCheck(
            check="has_provenance",
            status="pass" if provenance_ok else "fail",
            detail="" if provenance_ok else "provider_name missing",
        )
    )
    return checks


# ---------------------------------------------------------------------------
# The store
# ---------------------------------------------------------------------------


class QueryFilters(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_category: str | None = None
    node_id: str | None = None
    max_p50_ms: float | None = None
    max_total_cost: float | None = None
    cost_uptime_s: float = 0.0
    cost_exec_count: int = 0


class RegistryStore:
    """Single-writer, replayed-from-log service registry."""

    def __init__(
        self,
        directory: Path | str,
        vocabulary: tuple[str, ...] | None = None,
        known_nodes: dict[str, NodeSpec] | None = None,
    ):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / LOG_FILE
        self.snapshot_path = self.directory / SNAPSHOT_FILE
        self.vocabulary = vocabulary
        self.known_nodes = known_nodes
        self._lock = threading.RLock()
        self._records: dict[str, ServiceRecord] = {}
        self._vectors: dict[str, list[float]] = {}
        self._idf: dict[str, float] = {}
        self._seq = 0
        self._verifications: dict[str, VerificationReport] = {}
        self._load()

    # -- persistence -------------------------------------------------------

    def _load(self) -> None:
        records: dict[str, ServiceRecord] = {}
        seq = 0
        if self.snapshot_path.exists():
            snapshot = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            seq = int(snapshot.get("last_seq", 0))
            for item in snapshot.get("records", []):
                record = ServiceRecord.model_validate(item)
                records[record.service_uri] = record
        if self.log_path.exists():
            with self.log_path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = RegistryLogEntry.model_validate_json(line)
                    if entry.seq <= seq:
                        continue  # snapshot wins on replay overlap
                    seq = entry.seq
                    self._apply(records, entry)
        self._records = records
        self._seq = seq
        self._rebuild_index()

    def _apply(self, records: dict[str, ServiceRecord], entry: RegistryLogEntry) -> None:
        if entry.op == "upsert":
            record = ServiceRecord.model_validate(entry.payload)
            records[record.service_uri] = record
        elif entry.op == "feedback":
            uri = entry.payload["uri"]
            record = records.get(uri)
            if record is None:
                return
            records[uri] = self._with_feedback(record, entry.payload["event"])

    @staticmethod
    def _with_feedback(record: ServiceRecord, event: dict) -> ServiceRecord:
        feedback = record.feedback
        kind = event["kind"]
        if kind == "like":
            feedback = feedback.model_copy(update={"likes": feedback.likes + 1})
        elif kind == "dislike":
            feedback = feedback.model_copy(update={"dislikes": feedback.dislikes + 1})
        elif kind == "comment":
            comment = Comment(
                author=event.get("author", ""),
                text=event.get("text", ""),
                timestamp=event["timestamp"],
            )
            feedback = feedback.model_copy(update={"comments": [*feedback.comments, comment]})
        else:
            raise ValueError(f"unknown feedback kind: {kind}")
        return record.model_copy(update={"feedback": feedback})

    def _append_log(self, op: str, payload: dict) -> RegistryLogEntry:
        entry = RegistryLogEntry(seq=self._seq + 1, op=op, payload=payload)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(entry.model_dump_json() + "\n")
        self._seq = entry.seq
        return entry

    def compact_log(self) -> Path:
        """Fold the log into the snapshot; state is identical afterwards."""
        with self._lock:
            snapshot = {
                "last_seq": self._seq,
                "records": [record.model_dump(mode="json") for record in self._records.values()],
            }
            tmp_path = self.snapshot_path.with_suffix(".tmp")
            tmp_path.write_text(json.dumps(snapshot), encoding="utf-8")
            tmp_path.replace(self.snapshot_path)
            # Crash between these two steps is safe: replay skips seq <= last_seq.
            self.log_path.write_text("", encoding="utf-8")
            return self.snapshot_path

    # -- embedding index ----------------------------------------------------

    def _rebuild_index(self) -> None:
        counts = {uri: _term_counts(embedding_text(r)) for uri, r in self._records.items()}
        self._idf = _idf_table(list(counts.values()))
        self._vectors = {
            uri: _vectorize(c, self._idf, len(counts)) for uri, c in counts.items()
        }

    def embed_text(self, text: str) -> list[float]:
        """Deterministic hashed tf-idf vector under the current corpus idf."""
        return _vectorize(_term_counts(text), self._idf, len(self._records))

    # -- operations ---------------------------------------------------------

    def publish_record(self, record: ServiceRecord) -> str:
        report = validate_record(
            record,
            vocabulary=self.vocabulary or (),
            known_nodes=self.known_nodes,
        )
        if not report.ok:
            raise PublishRejectedError(report)
        with self._lock:
            existing = self._records.get(record.service_uri)
            if existing is not None and existing.model_dump(mode="json") == record.model_dump(
                mode="json"
            ):
                return record.service_uri  # idempotent re-publish
            self._append_log("upsert", record.model_dump(mode="json"))
            records = dict(self._records)
            records[record.service_uri] = record
            self._records = records
            self._rebuild_index()
        return record.service_uri

    def get(self, uri: str) -> ServiceRecord:
        record = self._records.get(uri)
        if record is None:
            raise UnknownUriError(uri)
        return record

    def list_records(self, offset: int = 0, limit: int | None = None) -> list[ServiceRecord]:
        ordered = [self._records[uri] for uri in sorted(self._records)]
        end = offset + limit if limit is not None else None
        return ordered[offset:end]

    def __len__(self) -> int:
        return len(self._records)

    def record_feedback(
        self, uri: str, kind: str, author: str = "", text: str = ""
    ) -> FeedbackRecord:
        if kind not in ("like", "dislike", "comment"):
            raise ValueError(f"unknown feedback kind: {kind}")
        with self._lock:
            record = self._records.get(uri)
            if record is None:
                raise UnknownUriError(uri)
            event = {"kind": kind, "author": author, "text": text}
            if kind == "comment":
                event["timestamp"] = utcnow().isoformat()
            self._append_log("feedback", {"uri": uri, "event": event})
            updated = self._with_feedback(record, event)
            records = dict(self._records)
            records[uri] = updated
            self._records = records
        return updated.feedback

    def semantic_search(self, query: str, k: int) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        query_vector = self.embed_text(query)
        vectors = self._vectors
        scored = [(uri, cosine(query_vector, vector)) for uri, vector in vectors.items()]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:k]

    def query_records(self, filters: QueryFilters) -> list[ServiceRecord]:
        records = self._records
        if filters.max_p50_ms is not None and filters.node_id is None:
            raise ValueError("max_p50_ms filter requires node_id")
        if filters.node_id is not None:
            known = {node_id for record in records.values() for node_id in record.profiles}
            if self.known_nodes is not None:
                known |= set(self.known_nodes)
            if filters.node_id not in known:
                raise UnknownNodeFilterError(filters.node_id)

        matched = []
        for record in records.values():
            if filters.task_category and record.task_info.task_category != filters.task_category:
                continue
            if filters.node_id is not None:
                profile = record.profiles.get(filters.node_id)
                if profile is None:
                    continue
                if (
                    filters.max_p50_ms is not None
                    and profile.latency.inference_ms.p50 > filters.max_p50_ms
                ):
                    continue
            if filters.max_total_cost is not None:
                cost = total_cost(record.billing, filters.cost_uptime_s, filters.cost_exec_count)
                if cost > filters.max_total_cost:
                    continue
            matched.append(record)

        if filters.node_id is not None:
            matched.sort(
                key=lambda r: (r.profiles[filters.node_id].latency.inference_ms.p50, r.service_uri)
            )
        else:
            matched.sort(key=lambda r: r.service_uri)
        return matched

    def verify_record(self, uri: str, verifier: str = "") -> VerificationReport:
        record = self.get(uri)
        report = VerificationReport(
            service_uri=uri,
            verifier=verifier,
            verified_at=utcnow(),
            checks=completeness_checks(record),
        )
        with self._lock:
            self._verifications[uri] = report
        return report

    def last_verification(self, uri: str) -> VerificationReport | None:
        return self._verifications.get(uri)
