"""Domain types for the service registry and the cost / cross-node arithmetic.

Every orchestration-relevant attribute of a published service lives in one of
the types below, grouped the way orchestrators consume them: functionality,
resource, latency, flexibility, trustworthiness and billing.  The module also
owns record validation (violations are data, not exceptions) and the two bits
of arithmetic orchestrators need before they ever deploy anything: total
billing cost and frequency-proportional latency scaling between nodes.

All types are frozen pydantic models: immutable after construction and safe
to share across threads.  Canonical serialization is UTF-8 JSON with the
snake_case field names declared here; unknown fields are preserved in lenient
mode and rejected in strict mode (see :func:`parse_strict`).
"""

from __future__ import annotations

import re
from datetime import datetime, timezone
from typing import Literal

from pydantic import BaseModel, ConfigDict

SERVICE_URI_PATTERN = re.compile(r"^[a-z0-9._/-]+:[a-zA-Z0-9._-]+$")

# Seed vocabulary: the task categories the attribute taxonomy names explicitly,
# normalized to kebab-case.  Deployments extend this via configuration; an
# unknown category is a validation warning, never an error.
DEFAULT_TASK_VOCABULARY = (
    "image-classification",
    "object-detection",
    "depth-estimation",
    "text-classification",
)


class _Model(BaseModel):
    """Base for all registry value objects.

    frozen: immutable after construction.  extra="allow": lenient parsing
    keeps unknown fields so they survive a round-trip; strict parsing rejects
    them afterwards via :func:`find_unknown_fields`.
    """

    model_config = ConfigDict(frozen=True, extra="allow")


class AccuracyEntry(_Model):
    benchmark_name: str = ""
    metric_name: str
    value: float
    unit: str = "fraction"  # "fraction" values must lie in [0, 1]


class TaskInfo(_Model):
    task_category: str
    task_detail: str
    revised_task_detail: str = ""
    accuracy: list[AccuracyEntry] = []


class ResourceProfile(_Model):
    """Measured per-request resource footprint of a service on one node."""

    cpu_time_ms_per_req: float = 0.0
    device_time_ms_per_req: float = 0.0  # 0 on CPU-only nodes
    cpu_ram_peak_mb: float = 0.0
    device_ram_peak_mb: float = 0.0
    disk_read_bytes_per_req: float = 0.0
    disk_write_bytes_per_req: float = 0.0
    energy_idle_w: float = 0.0
    energy_active_j_per_req: float = 0.0
    input_bytes_avg: float = 0.0
    output_bytes_avg: float = 0.0


class LatencyStats(_Model):
    mean: float
    p50: float
    p95: float
    p99: float
    max: float


class LatencyProfile(_Model):
    inference_ms: LatencyStats
    init_ms: float
    eviction_ms: float


class BillingProfile(_Model):
    init_cost_credits: float = 0.0
    keepalive_credits_per_s: float = 0.0
    exec_cost_credits: float = 0.0


class CoopInferenceProfile(_Model):
    """One validated layer split: the service executes [start_layer, end_layer]."""

    start_layer: int
    end_layer: int
    resource: ResourceProfile
    latency_ms: float  # p50 of the split's short pressure run


class XaiProfile(_Model):
    technique: str
    supported: bool
    failure_reason: str | None = None
    resource: ResourceProfile | None = None  # present iff supported
    latency_ms: float | None = None


class Comment(_Model):
    author: str
    text: str
    timestamp: datetime


class FeedbackRecord(_Model):
    likes: int = 0
    dislikes: int = 0
    comments: list[Comment] = []


class NodePricing(_Model):
    credits_per_alive_s: float = 0.0
    credits_per_cpu_s: float = 0.0
    credits_per_device_s: float = 0.0


class NodeSpec(_Model):
    """Hardware / network / power / pricing description of one node."""

    node_id: str
    cpu_freq_ghz: float
    cpu_cores: int
    device_kind: Literal["none", "gpu-like"] = "none"
    device_freq_ghz: float = 0.0
    cpu_ram_mb: float = 0.0
    device_ram_mb: float = 0.0
    disk_bw_mbps: float = 0.0  # megabytes/second
    network_bw_mbps: float = 0.0  # megabits/second
    idle_power_w: float = 0.0
    active_power_w: float = 0.0
    pricing: NodePricing = NodePricing()


class WorkloadSummary(_Model):
    """What the pressure run actually did, recorded for reproducibility."""

    concurrency: int
    total_requests: int | None = None
    duration_s: float | None = None
    payload_generator: str = ""
    seed: int = 0
    warmup_requests: int = 0


class RuntimeProfile(_Model):
    node_id: str
    resource: ResourceProfile
    latency: LatencyProfile
    coop_profiles: list[CoopInferenceProfile] = []
    xai_profiles: list[XaiProfile] = []
    measured_at: datetime
    workload: WorkloadSummary


class LocReport(_Model):
    """Non-blank, non-comment line counts: shared base vs generated vs hand-edited."""

    loc_common: int = 0
    loc_generated: int = 0
    loc_manual: int = 0


class Provenance(_Model):
    generated_at: datetime
    provider_name: str
    loc_report: LocReport = LocReport()


class ServiceRecord(_Model):
    """One published service: everything an orchestrator needs to pick it."""

    service_uri: str  # "repo/name:tag", unique registry key
    model_id: str
    task_info: TaskInfo
    storage_size_bytes: int = 0
    billing: BillingProfile = BillingProfile()
    profiles: dict[str, RuntimeProfile] = {}
    feedback: FeedbackRecord = FeedbackRecord()
    coop_capable: bool = False
    xai_techniques: list[str] = []
    provenance: Provenance


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


# ---------------------------------------------------------------------------
# Attribute taxonomy completeness map
# ---------------------------------------------------------------------------

# Row -> (category, field paths that realize it).  A row counts as populated
# when every listed path is populated (or explicitly not applicable, e.g.
# device rows on a CPU-only node).
ATTRIBUTE_ROWS: dict[str, tuple[str, tuple[str, ...]]] = {
    "task_category": ("functionality", ("task_info.task_category",)),
    "task_detail": ("functionality", ("task_info.task_detail",)),
    "accuracy": ("functionality", ("task_info.accuracy",)),
    "cpu_usage": ("resource", ("profiles.*.resource.cpu_time_ms_per_req",)),
    "cpu_ram_usage": ("resource", ("profiles.*.resource.cpu_ram_peak_mb",)),
    "device_usage": ("resource", ("profiles.*.resource.device_time_ms_per_req",)),
    "device_ram_usage": ("resource", ("profiles.*.resource.device_ram_peak_mb",)),
    "disk_io": (
        "resource",
        (
            "profiles.*.resource.disk_read_bytes_per_req",
            "profiles.*.resource.disk_write_bytes_per_req",
        ),
    ),
    "service_storage_size": ("resource", ("storage_size_bytes",)),
    "energy_consumption": (
        "resource",
        (
            "profiles.*.resource.energy_idle_w",
            "profiles.*.resource.energy_active_j_per_req",
        ),
    ),
    "input_data_size": ("resource", ("profiles.*.resource.input_bytes_avg",)),
    "output_data_size": ("resource", ("profiles.*.resource.output_bytes_avg",)),
    "inference_time": ("latency", ("profiles.*.latency.inference_ms",)),
    "initialization_time": ("latency", ("profiles.*.latency.init_ms",)),
    "eviction_time": ("latency", ("profiles.*.latency.eviction_ms",)),
    "cooperative_inference": ("flexibility", ("coop_capable", "profiles.*.coop_profiles")),
    "feedback": ("trustworthiness", ("feedback",)),
    "xai_support": ("trustworthiness", ("xai_techniques", "profiles.*.xai_profiles")),
    "initialization_cost": ("billing", ("billing.init_cost_credits",)),
    "keepalive_cost": ("billing", ("billing.keepalive_credits_per_s",)),
    "execution_cost": ("billing", ("billing.exec_cost_credits",)),
}


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


class Violation(_Model):
    path: str
    message: str
    severity: Literal["error", "warning"] = "error"


class ValidationReport(_Model):
    violations: list[Violation] = []

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self) -> int:
        return len(self.violations)


def _check_resource(resource: ResourceProfile, path: str, out: list[Violation]) -> None:
    for name in type(resource).model_fields:
        value = getattr(resource, name)
        if value < 0:
            out.append(Violation(path=f"{path}.{name}", message="must be >= 0"))


def _check_latency_stats(stats: LatencyStats, path: str, out: list[Violation]) -> None:
    for name in type(stats).model_fields:
        if getattr(stats, name) < 0:
            out.append(Violation(path=f"{path}.{name}", message="must be >= 0"))
    if not (stats.p50 <= stats.p95 <= stats.p99 <= stats.max):
        out.append(Violation(path=path, message="percentiles must satisfy p50 <= p95 <= p99 <= max"))
    if stats.mean > stats.max:
        out.append(Violation(path=f"{path}.mean", message="mean cannot exceed max"))


def _check_billing(billing: BillingProfile, path: str, out: list[Violation]) -> None:
    for name in type(billing).model_fields:
        if getattr(billing, name) < 0:
            out.append(Violation(path=f"{path}.{name}", message="must be >= 0"))


def validate_node_spec(node: NodeSpec, path: str = "") -> list[Violation]:
    out: list[Violation] = []
    prefix = f"{path}." if path else ""
    if node.cpu_freq_ghz <= 0:
        out.append(Violation(path=f"{prefix}cpu_freq_ghz", message="must be > 0"))
    if node.cpu_cores <= 0:
        out.append(Violation(path=f"{prefix}cpu_cores", message="must be > 0"))
    if node.idle_power_w < 0:
        out.append(Violation(path=f"{prefix}idle_power_w", message="must be >= 0"))
    if node.active_power_w < node.idle_power_w:
        out.append(Violation(path=f"{prefix}active_power_w", message="must be >= idle_power_w"))
    if node.device_kind == "none":
        if node.device_freq_ghz != 0 or node.device_ram_mb != 0:
            out.append(
                Violation(
                    path=f"{prefix}device_kind",
                    message="device fields must be 0 when device_kind is none",
                )
            )
    else:
        if node.device_freq_ghz <= 0:
            out.append(Violation(path=f"{prefix}device_freq_ghz", message="must be > 0 for device nodes"))
    for name in type(node.pricing).model_fields:
        if getattr(node.pricing, name) < 0:
            out.append(Violation(path=f"{prefix}pricing.{name}", message="must be >= 0"))
    return out


def validate_record(
    record: ServiceRecord,
    vocabulary: tuple[str, ...] = DEFAULT_TASK_VOCABULARY,
    known_nodes: dict[str, NodeSpec] | None = None,
) -> ValidationReport:
    """Check every record invariant and return the violations (empty = valid).

    Deterministic, never raises: broken data comes back as a report with one
    entry per violated invariant, each naming the offending field path.  An
    unknown task category is a warning; everything else is an error.  When
    ``known_nodes`` is given, profile node references and device-field
    consistency are checked against the fleet.
    """
    out: list[Violation] = []

    if not SERVICE_URI_PATTERN.match(record.service_uri):
        out.append(
            Violation(
                path="service_uri",
                message="must match ^[a-z0-9._/-]+:[a-zA-Z0-9._-]+$",
            )
        )
    if not record.model_id:
        out.append(Violation(path="model_id", message="must be non-empty"))

    if not record.task_info.task_category:
        out.append(Violation(path="task_info.task_category", message="must be non-empty"))
    elif vocabulary and record.task_info.task_category not in vocabulary:
        out.append(
            Violation(
                path="task_info.task_category",
                message=f"category {record.task_info.task_category!r} not in configured vocabulary",
                severity="warning",
            )
        )
    for i, entry in enumerate(record.task_info.accuracy):
        if entry.unit == "fraction" and not (0.0 <= entry.value <= 1.0):
            out.append(
                Violation(
                    path=f"task_info.accuracy[{i}].value",
                    message="fraction values must lie in [0, 1]",
                )
            )

    if record.storage_size_bytes < 0:
        out.append(Violation(path="storage_size_bytes", message="must be >= 0"))
    _check_billing(record.billing, "billing", out)

    if record.feedback.likes < 0:
        out.append(Violation(path="feedback.likes", message="must be >= 0"))
    if record.feedback.dislikes < 0:
        out.append(Violation(path="feedback.dislikes", message="must be >= 0"))

    any_coop = False
    for node_id, profile in record.profiles.items():
        path = f"profiles.{node_id}"
        if profile.node_id != node_id:
            out.append(Violation(path=f"{path}.node_id", message="must equal its profiles key"))
        node = None
        if known_nodes is not None:
            node = known_nodes.get(profile.node_id)
            if node is None:
                out.append(Violation(path=f"{path}.node_id", message="references an unknown node"))
        _check_resource(profile.resource, f"{path}.resource", out)
        if node is not None and node.device_kind == "none":
            if profile.resource.device_time_ms_per_req != 0 or profile.resource.device_ram_peak_mb != 0:
                out.append(
                    Violation(
                        path=f"{path}.resource",
                        message="device fields must be 0 on CPU-only nodes",
                    )
                )
        _check_latency_stats(profile.latency.inference_ms, f"{path}.latency.inference_ms", out)
        if profile.latency.init_ms < 0:
            out.append(Violation(path=f"{path}.latency.init_ms", message="must be >= 0"))
        if profile.latency.eviction_ms < 0:
            out.append(Violation(path=f"{path}.latency.eviction_ms", message="must be >= 0"))
        for i, coop in enumerate(profile.coop_profiles):
            if not (0 <= coop.start_layer <= coop.end_layer):
                out.append(
                    Violation(
                        path=f"{path}.coop_profiles[{i}]",
                        message="requires 0 <= start_layer <= end_layer",
                    )
                )
            _check_resource(coop.resource, f"{path}.coop_profiles[{i}].resource", out)
        if profile.coop_profiles:
            any_coop = True
        for i, xai in enumerate(profile.xai_profiles):
            if xai.supported and xai.resource is None:
                out.append(
                    Violation(
                        path=f"{path}.xai_profiles[{i}].resource",
                        message="supported techniques must carry a resource profile",
                    )
                )
            if not xai.supported and not xai.failure_reason:
                out.append(
                    Violation(
                        path=f"{path}.xai_profiles[{i}].failure_reason",
                        message="unsupported techniques must state a failure reason",
                    )
                )
            if not xai.supported and xai.resource is not None:
                out.append(
                    Violation(
                        path=f"{path}.xai_profiles[{i}].resource",
                        message="unsupported techniques must not carry a resource profile",
                    )
                )

    if record.profiles and record.coop_capable != any_coop:
        out.append(
            Violation(
                path="coop_capable",
                message="must reflect whether any profile carries a validated layer split",
            )
        )

    return ValidationReport(violations=out)


# ---------------------------------------------------------------------------
# Billing and cross-node arithmetic
# ---------------------------------------------------------------------------


def total_cost(billing: BillingProfile, uptime_s: float, exec_count: int) -> float:
    """Total credits for keeping a service alive and executing it.

    total = init + keepalive * uptime + exec * count
    """
    if uptime_s < 0:
        raise ValueError("uptime_s must be >= 0")
    if exec_count < 0:
        raise ValueError("exec_count must be >= 0")
    return (
        billing.init_cost_credits
        + billing.keepalive_credits_per_s * uptime_s
        + billing.exec_cost_credits * exec_count
    )


def scale_inference_time(
    measured_ms: float,
    from_node: NodeSpec,
    to_node: NodeSpec,
    lane: Literal["cpu", "device"] = "cpu",
) -> float:
    """Estimate on-node inference time on another node from a measurement.

    Processing time is proportional to lane usage divided by the lane's clock
    frequency, so t_to = measured_ms * f_from / f_to.  The result is an
    estimate for placement decisions only; it is never written back into a
    RuntimeProfile as if it were measured.
    """
    if lane == "device":
        if from_node.device_kind == "none" or to_node.device_kind == "none":
            raise ValueError("device lane requires an accelerator on both nodes")
        f_from, f_to = from_node.device_freq_ghz, to_node.device_freq_ghz
    else:
        f_from, f_to = from_node.cpu_freq_ghz, to_node.cpu_freq_ghz
    if f_from <= 0 or f_to <= 0:
        raise ValueError("frequencies must be > 0")
    return measured_ms * f_from / f_to


# ---------------------------------------------------------------------------
# Canonical serialization helpers
# ---------------------------------------------------------------------------


class UnknownFieldError(ValueError):
    def __init__(self, paths: list[str]):
        self.paths = paths
        super().__init__(f"unknown fields: {', '.join(paths)}")


def find_unknown_fields(model: BaseModel, path: str = "") -> list[str]:
    """Recursively collect paths of fields that are not part of the schema."""
    found: list[str] = []
    extra = getattr(model, "__pydantic_extra__", None) or {}
    for key in extra:
        found.append(f"{path}.{key}" if path else key)
    for name in type(model).model_fields:
        value = getattr(model, name)
        child_path = f"{path}.{name}" if path else name
        if isinstance(value, BaseModel):
            found.extend(find_unknown_fields(value, child_path))
        elif isinstance(value, list):
            for i, item in enumerate(value):
                if isinstance(item, BaseModel):
                    found.extend(find_unknown_fields(item, f"{child_path}[{i}]"))
        elif isinstance(value, dict):
            for key, item in value.items():
                if isinstance(item, BaseModel):
                    found.extend(find_unknown_fields(item, f"{child_path}.{key}"))
    return found


def parse_strict(cls: type[BaseModel], data) -> BaseModel:
    """Parse canonical JSON (text or dict), rejecting unknown fields."""
    model = (
        cls.model_validate_json(data) if isinstance(data, (str, bytes)) else cls.model_validate(data)
    )
    unknown = find_unknown_fields(model)
    if unknown:
        raise UnknownFieldError(unknown)
    return model


def parse_lenient(cls: type[BaseModel], data) -> BaseModel:
    """Parse canonical JSON (text or dict), preserving unknown fields."""
    if isinstance(data, (str, bytes)):
        return cls.model_validate_json(data)
    return cls.model_validate(data)


def dump_json(model: BaseModel) -> str:
    return model.model_dump_json()
