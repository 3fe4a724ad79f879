"""Runtime validation: deploy a service, measure initialization, pressure-test
it, validate cooperative inference and XAI compatibility, evict it, and
assemble the per-node runtime profile.

Load generation keeps exactly N requests in flight from worker threads while
a sampler polls container stats concurrently; warmup requests are excluded
from every statistic.  Percentiles use the deterministic nearest-rank rule
p_q = sorted[ceil(q/100 * n) - 1] throughout.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime

import httpx
from pydantic import BaseModel, ConfigDict, model_validator

from svcforge.attributes import (
    CoopInferenceProfile,
    LatencyProfile,
    LatencyStats,
    NodeSpec,
    ResourceProfile,
    RuntimeProfile,
    WorkloadSummary,
    XaiProfile,
    utcnow,
)
from svcforge.engines import ContainerEngine, ContainerHandle, ImageRef, StatsSample

DEFAULT_HEALTH_POLL_INTERVAL_S = 0.1
DEFAULT_HEALTH_TIMEOUT_S = 120.0
DEFAULT_STATS_INTERVAL_S = 0.25
DEFAULT_IDLE_SAMPLE_S = 5.0
DEFAULT_FAILURE_BUDGET = 0.01  # abort when errors exceed 1% of planned requests
SHORT_RUN_REQUESTS = 5  # pressure depth for per-split / per-technique profiles

PROBE_INPUT = [1, 2, 3]


class ValidationPhaseError(Exception):
    """A runtime-validation step failed (health timeout, bad workload, ...)."""


class WorkloadSpec(BaseModel):
    """Pressure-test definition; exactly one stopping rule must be set."""

    model_config = ConfigDict(frozen=True)

    concurrency: int = 1
    total_requests: int | None = None
    duration_s: float | None = None
    payload_generator: str = "toy-vector"
    seed: int = 0
    warmup_requests: int | None = None  # default: max(3, concurrency)

    @model_validator(mode="after")
    def _exactly_one_stopping_rule(self):
        if (self.total_requests is None) == (self.duration_s is None):
            raise ValueError("set exactly one of total_requests or duration_s")
        if self.total_requests is not None and self.total_requests <= 0:
            raise ValueError("total_requests must be >= 1")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        return self

    @property
    def warmup(self) -> int:
        if self.warmup_requests is not None:
            return self.warmup_requests
        return max(3, self.concurrency)

    def summary(self) -> WorkloadSummary:
        return WorkloadSummary(
            concurrency=self.concurrency,
            total_requests=self.total_requests,
            duration_s=self.duration_s,
            payload_generator=self.payload_generator,
            seed=self.seed,
            warmup_requests=self.warmup,
        )


# ---------------------------------------------------------------------------
# Payload generators
# ---------------------------------------------------------------------------


def _toy_vector_generator(seed: int):
    def generate(i: int) -> dict:
        rng = random.Random(seed * 1_000_003 + i)
        return {"input": [rng.randint(-9, 9) for _ in range(4)]}

    return generate


def _constant_bytes_generator(seed: int, size: int):
    base = {"input": [1, 2, 3]}
    overhead = len(json.dumps({**base, "pad": ""}, separators=(",", ":")).encode())
    if size < overhead:
        raise ValueError(f"constant-bytes size must be >= {overhead}")

    payload = {**base, "pad": "x" * (size - overhead)}

    def generate(i: int) -> dict:
        return payload

    return generate


def resolve_payload_generator(name: str, seed: int):
    """Named generator, e.g. "toy-vector" or "constant-bytes:1000"."""
    kind, _, arg = name.partition(":")
    if kind == "toy-vector":
        return _toy_vector_generator(seed)
    if kind == "constant-bytes":
        return _constant_bytes_generator(seed, int(arg or "1000"))
    raise ValueError(f"unknown payload generator: {name!r}")


# ---------------------------------------------------------------------------
# Latency statistics (nearest-rank)
# ---------------------------------------------------------------------------


def nearest_rank(sorted_samples: list[float], q: float) -> float:
    index = math.ceil(q / 100.0 * len(sorted_samples)) - 1
    return sorted_samples[max(0, index)]


def compute_latency_stats(samples: list[float]) -> LatencyStats:
    if not samples:
        raise ValueError("cannot compute statistics of an empty sample set")
    ordered = sorted(samples)
    return LatencyStats(
        mean=sum(ordered) / len(ordered),
        p50=nearest_rank(ordered, 50),
        p95=nearest_rank(ordered, 95),
        p99=nearest_rank(ordered, 99),
        max=ordered[-1],
    )


# ---------------------------------------------------------------------------
# Energy model
# ---------------------------------------------------------------------------


class EnergyEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    idle_w: float
    mean_w: float
    active_j_total: float
    active_j_per_req: float | None = None
    estimate: bool = True  # power-model derivation, not a hardware counter


def estimate_energy(
    trace: list[StatsSample], node: NodeSpec, request_count: int | None = None
) -> EnergyEstimate:
    """Integrate P(t) = idle + (active - idle) * util(t) over the stats trace.

    Left-rectangle integration over sample intervals: energy floors at
    idle_power * duration when the container sits idle.
    """
    if len(trace) < 2:
        raise ValueError("need at least 2 stats samples")
    if node.idle_power_w == 0 and node.active_power_w == 0:
        raise ValueError(f"node {node.node_id} has no power model configured")
    span = node.active_power_w - node.idle_power_w
    total_j = 0.0
    for current, following in zip(trace, trace[1:]):
        dt = following.t - current.t
        if dt < 0:
            raise ValueError("stats trace must be time-ordered")
        total_j += (node.idle_power_w + span * current.cpu_util) * dt
    duration = trace[-1].t - trace[0].t
    return EnergyEstimate(
        idle_w=node.idle_power_w,
        mean_w=total_j / duration if duration > 0 else node.idle_power_w,
        active_j_total=total_j,
        active_j_per_req=(total_j / request_count) if request_count else None,
    )


# ---------------------------------------------------------------------------
# Health polling and deployment
# ---------------------------------------------------------------------------


def health_poll(endpoint: str, timeout_s: float = 1.0) -> bool:
    """True iff GET /health answers ok within the timeout; failures are False."""
    try:
        response = httpx.get(f"http://{endpoint}/health", timeout=timeout_s)
        return response.status_code == 200 and response.json().get("status") == "ok"
    except (httpx.HTTPError, ValueError):
        return False


@dataclass
class InitReport:
    node_id: str
    init_ms: float
    storage_size_bytes: int
    idle_w: float
    handle: ContainerHandle
    idle_trace: list[StatsSample] = field(default_factory=list)


def deploy_and_init(
    engine: ContainerEngine,
    image: ImageRef,
    node: NodeSpec,
    poll_interval_s: float = DEFAULT_HEALTH_POLL_INTERVAL_S,
    timeout_s: float = DEFAULT_HEALTH_TIMEOUT_S,
    idle_sample_s: float = DEFAULT_IDLE_SAMPLE_S,
    idle_sample_interval_s: float = 0.5,
) -> InitReport:
    """Start the container, wait for health, then sample idle power.

    init_ms runs from the start_container call to the first successful health
    poll.  A health timeout raises with the container logs attached.
    """
    t0 = time.perf_counter()
    handle = engine.start_container(image, node)
    deadline = t0 + timeout_s
    while True:
        if health_poll(handle.endpoint):
            init_ms = (time.perf_counter() - t0) * 1000.0
            break
        if time.perf_counter() >= deadline:
            logs = engine.logs(handle)
            try:
                engine.stop_and_remove(handle)
            except Exception:
                pass
            raise ValidationPhaseError(
                f"service on {node.node_id} not healthy after {timeout_s:.0f}s; logs:\n{logs}"
            )
        time.sleep(poll_interval_s)

    idle_trace = [engine.sample_stats(handle)]
    idle_deadline = time.perf_counter() + idle_sample_s
    while time.perf_counter() < idle_deadline:
        time.sleep(idle_sample_interval_s)
        idle_trace.append(engine.sample_stats(handle))
    idle_w = estimate_energy(idle_trace, node).mean_w

    return InitReport(
        node_id=node.node_id,
        init_ms=init_ms,
        storage_size_bytes=engine.image_size(image.tag if isinstance(image, ImageRef) else image),
        idle_w=idle_w,
        handle=handle,
        idle_trace=idle_trace,
    )


# ---------------------------------------------------------------------------
# Pressure testing
# ---------------------------------------------------------------------------


class PressureReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    node_id: str
    latencies_ms: list[float]
    input_bytes: list[int]
    output_bytes: list[int]
    stats_trace: list[StatsSample]
    error_count: int
    started_at: datetime
    finished_at: datetime
    valid: bool
    invalid_reason: str | None = None
    resource: ResourceProfile
    inference_ms: LatencyStats
    workload: WorkloadSummary


def _default_request_builder(payload: dict) -> tuple[str, dict]:
    return "/infer", payload


def run_pressure_test(
    endpoint: str,
    workload: WorkloadSpec,
    engine: ContainerEngine,
    handle: ContainerHandle,
    node: NodeSpec,
    failure_budget: float = DEFAULT_FAILURE_BUDGET,
    stats_interval_s: float = DEFAULT_STATS_INTERVAL_S,
    request_builder=None,
) -> PressureReport:
    """Sustain `concurrency` in-flight requests until the stopping rule.

    Derived per-request resource figures divide counter deltas over the
    pressure window by the number of successful requests, which attributes
    idle-period noise to the window (known, documented bias).
    """
    build_request = request_builder or _default_request_builder
    generate = resolve_payload_generator(workload.payload_generator, workload.seed)
    base_url = f"http://{endpoint}"

    # Warmup: excluded from all statistics, runs before the stats window opens.
    with httpx.Client(timeout=30.0) as client:
        for i in range(workload.warmup):
            path, payload = build_request(generate(-1 - i))
            try:
                client.post(base_url + path, json=payload)
            except httpx.HTTPError:
                pass

    latencies: list[float] = []
    input_bytes: list[int] = []
    output_bytes: list[int] = []
    errors = 0
    issued = 0
    lock = threading.Lock()
    abort = threading.Event()
    deadline = time.perf_counter() + workload.duration_s if workload.duration_s else None
    planned = workload.total_requests
    budget = max(1, int(math.ceil(failure_budget * planned))) if planned else None

    def next_index() -> int | None:
        nonlocal issued
        with lock:
            if planned is not None and issued >= planned:
                return None
            index = issued
            issued += 1
            return index

    def worker() -> None:
        nonlocal errors
        with httpx.Client(timeout=30.0) as client:
            while not abort.is_set():
                if deadline is not None and time.perf_counter() >= deadline:
                    return
                index = next_index()
                if index is None:
                    return
                path, payload = build_request(generate(index))
                body = json.dumps(payload, separators=(",", ":")).encode()
                t0 = time.perf_counter()
                try:
                    response = client.post(
                        base_url + path,
                        content=body,
                        headers={"Content-Type": "application/json"},
                    )
                    elapsed_ms = (time.perf_counter() - t0) * 1000.0
                    ok = response.status_code == 200
                except httpx.HTTPError:
                    ok = False
                with lock:
                    if ok:
                        latencies.append(elapsed_ms)
                        input_bytes.append(len(body))
                        output_bytes.append(len(response.content))
                    else:
                        errors += 1
                        if budget is not None and errors > budget:
                            abort.set()

    stats_trace: list[StatsSample] = [engine.sample_stats(handle)]
    stop_sampler = threading.Event()

    def sampler() -> None:
        while not stop_sampler.wait(stats_interval_s):
            stats_trace.append(engine.sample_stats(handle))

    started_at = utcnow()
    sampler_thread = threading.Thread(target=sampler, daemon=True)
    sampler_thread.start()
    workers = [threading.Thread(target=worker, daemon=True) for _ in range(workload.concurrency)]
    for thread in workers:
        thread.start()
    for thread in workers:
        thread.join()
    stop_sampler.set()
    sampler_thread.join()
    stats_trace.append(engine.sample_stats(handle))
    finished_at = utcnow()

    successes = len(latencies)
    aborted = abort.is_set()
    valid = not aborted and successes > 0
    invalid_reason = None
    if aborted:
        invalid_reason = f"error budget exceeded: {errors} errors"
    elif successes == 0:
        invalid_reason = "no successful requests"

    first, last = stats_trace[0], stats_trace[-1]
    per_req = lambda delta: delta / successes if successes else 0.0
    try:
        energy = estimate_energy(stats_trace, node, successes or None)
        energy_j_per_req = energy.active_j_per_req or 0.0
        idle_w = energy.idle_w
    except ValueError:
        energy_j_per_req = 0.0
        idle_w = node.idle_power_w

    resource = ResourceProfile(
        cpu_time_ms_per_req=per_req(last.cpu_time_total_ms - first.cpu_time_total_ms),
        device_time_ms_per_req=0.0,
        cpu_ram_peak_mb=max(s.mem_rss_mb for s in stats_trace),
        device_ram_peak_mb=max(s.device_mem_mb for s in stats_trace),
        disk_read_bytes_per_req=per_req(last.blk_read_bytes - first.blk_read_bytes),
        disk_write_bytes_per_req=per_req(last.blk_write_bytes - first.blk_write_bytes),
        energy_idle_w=idle_w,
        energy_active_j_per_req=energy_j_per_req,
        input_bytes_avg=sum(input_bytes) / successes if successes else 0.0,
        output_bytes_avg=sum(output_bytes) / successes if successes else 0.0,
    )
    inference_ms = (
        compute_latency_stats(latencies)
        if latencies
        else LatencyStats(mean=0, p50=0, p95=0, p99=0, max=0)
    )

    return PressureReport(
        node_id=node.node_id,
        latencies_ms=latencies,
        input_bytes=input_bytes,
        output_bytes=output_bytes,
        stats_trace=stats_trace,
        error_count=errors,
        started_at=started_at,
        finished_at=finished_at,
        valid=valid,
        invalid_reason=invalid_reason,
        resource=resource,
        inference_ms=inference_ms,
        workload=workload.summary(),
    )


# ---------------------------------------------------------------------------
# Cooperative inference validation
# ---------------------------------------------------------------------------


@dataclass
class CoopValidation:
    profiles: list[CoopInferenceProfile]
    excluded: list[dict]  # {"split": k, "reason": ...}
    supported: bool  # service exposes /infer_partial at all


def _post_json(client: httpx.Client, url: str, payload: dict) -> httpx.Response:
    return client.post(url, json=payload)


def validate_cooperative_inference(
    endpoint: str,
    splits: list[int],
    engine: ContainerEngine,
    handle: ContainerHandle,
    node: NodeSpec,
    layer_count: int | None = None,
    probe_input: list[int] | None = None,
    short_run_requests: int = SHORT_RUN_REQUESTS,
) -> CoopValidation:
    """Check each split point by exact composition equality, then profile it.

    For split k the client half runs layers [0, k-1] and the service half
    [k, L-1]; the split passes iff feeding the first half's output through
    the second reproduces the full /infer output exactly (canonical JSON,
    integer arithmetic makes this sound).
    """
    base_url = f"http://{endpoint}"
    probe = probe_input or PROBE_INPUT
    with httpx.Client(timeout=30.0) as client:
        if layer_count is None:
            metrics = client.get(f"{base_url}/metrics").json()
            layer_count = int(metrics["layer_count"])

        for k in splits:
            if not 1 <= k <= layer_count - 1:
                raise ValueError(f"split {k} outside [1, {layer_count - 1}]")

        probe_response = _post_json(client, f"{base_url}/infer", {"input": probe})
        if probe_response.status_code != 200:
            raise ValidationPhaseError(f"/infer probe failed: {probe_response.status_code}")
        full_output = probe_response.json()["output"]

        support_check = _post_json(
            client,
            f"{base_url}/infer_partial",
            {"input": probe, "start_layer": 0, "end_layer": layer_count - 1},
        )
        if support_check.status_code == 404:
            return CoopValidation(profiles=[], excluded=[], supported=False)

        profiles: list[CoopInferenceProfile] = []
        excluded: list[dict] = []
        for k in splits:
            first_half = _post_json(
                client,
                f"{base_url}/infer_partial",
                {"input": probe, "start_layer": 0, "end_layer": k - 1},
            )
            if first_half.status_code != 200:
                excluded.append({"split": k, "reason": f"client half failed: {first_half.status_code}"})
                continue
            second_half = _post_json(
                client,
                f"{base_url}/infer_partial",
                {
                    "input": first_half.json()["output"],
                    "start_layer": k,
                    "end_layer": layer_count - 1,
                },
            )
            if second_half.status_code != 200:
                excluded.append({"split": k, "reason": f"service half failed: {second_half.status_code}"})
                continue
            composed = second_half.json()["output"]
            if json.dumps(composed) != json.dumps(full_output):
                excluded.append({"split": k, "reason": "composition does not equal full inference"})
                continue

            run = run_pressure_test(
                endpoint,
                WorkloadSpec(concurrency=1, total_requests=short_run_requests, warmup_requests=1),
                engine,
                handle,
                node,
                request_builder=lambda payload, k=k: (
                    "/infer_partial",
                    {**payload, "start_layer": k, "end_layer": layer_count - 1},
                ),
            )
            profiles.append(
                CoopInferenceProfile(
                    start_layer=k,
                    end_layer=layer_count - 1,
                    resource=run.resource,
                    latency_ms=run.inference_ms.p50,
                )
            )
        return CoopValidation(profiles=profiles, excluded=excluded, supported=True)


# ---------------------------------------------------------------------------
# XAI compatibility validation
# ---------------------------------------------------------------------------


def validate_xai_compat(
    endpoint: str,
    techniques: list[str],
    engine: ContainerEngine,
    handle: ContainerHandle,
    node: NodeSpec,
    probe_input: list[int] | None = None,
    short_run_requests: int = SHORT_RUN_REQUESTS,
) -> list[XaiProfile]:
    """Probe each technique; failures become unsupported profiles, not errors."""
    base_url = f"http://{endpoint}"
    probe = probe_input or PROBE_INPUT
    profiles: list[XaiProfile] = []
    with httpx.Client(timeout=30.0) as client:
        for technique in techniques:
            try:
                response = _post_json(client, f"{base_url}/xai/{technique}", {"input": probe})
            except httpx.HTTPError as exc:
                profiles.append(
                    XaiProfile(technique=technique, supported=False, failure_reason=str(exc))
                )
                continue
            if response.status_code == 200:
                run = run_pressure_test(
                    endpoint,
                    WorkloadSpec(
                        concurrency=1, total_requests=short_run_requests, warmup_requests=1
                    ),
                    engine,
                    handle,
                    node,
                    request_builder=lambda payload, t=technique: (f"/xai/{t}", payload),
                )
                profiles.append(
                    XaiProfile(
                        technique=technique,
                        supported=True,
                        resource=run.resource,
                        latency_ms=run.inference_ms.p50,
                    )
                )
                continue
            body = {}
            try:
                body = response.json()
            except ValueError:
                pass
            if response.status_code == 507 or body.get("status") == "insufficient-memory":
                reason = "memory shortage"
            elif response.status_code == 404:
                reason = "technique not available"
            else:
                reason = f"http {response.status_code}"
            profiles.append(XaiProfile(technique=technique, supported=False, failure_reason=reason))
    return profiles


# ---------------------------------------------------------------------------
# Eviction and profile assembly
# ---------------------------------------------------------------------------


def evict_service(engine: ContainerEngine, handle: ContainerHandle) -> float:
    return engine.stop_and_remove(handle)


def assemble_runtime_profile(
    init: InitReport,
    pressure: PressureReport,
    coop: CoopValidation | None,
    xai: list[XaiProfile],
    eviction_ms: float,
    node: NodeSpec,
) -> RuntimeProfile:
    """Stitch the phase reports of one (service, node) run into a profile."""
    if not pressure.valid:
        raise ValidationPhaseError(f"pressure report invalid: {pressure.invalid_reason}")
    if init.node_id != node.node_id or pressure.node_id != node.node_id:
        raise ValidationPhaseError(
            f"mixed node ids: init={init.node_id} pressure={pressure.node_id} node={node.node_id}"
        )
    resource = pressure.resource.model_copy(update={"energy_idle_w": init.idle_w})
    return RuntimeProfile(
        node_id=node.node_id,
        resource=resource,
        latency=LatencyProfile(
            inference_ms=pressure.inference_ms,
            init_ms=init.init_ms,
            eviction_ms=eviction_ms,
        ),
        coop_profiles=list(coop.profiles) if coop else [],
        xai_profiles=xai,
        measured_at=pressure.finished_at,
        workload=pressure.workload,
    )


@dataclass
class NodeRunResult:
    profile: RuntimeProfile
    init: InitReport
    pressure: PressureReport
    coop: CoopValidation | None
    xai: list[XaiProfile]
    eviction_ms: float


def validate_service_on_node(
    engine: ContainerEngine,
    image: ImageRef,
    node: NodeSpec,
    workload: WorkloadSpec,
    splits: list[int] | None = None,
    xai_techniques: list[str] | None = None,
    idle_sample_s: float = DEFAULT_IDLE_SAMPLE_S,
    health_timeout_s: float = DEFAULT_HEALTH_TIMEOUT_S,
) -> NodeRunResult:
    """The full per-node run: deploy, pressure, coop, xai, evict, assemble."""
    init = deploy_and_init(
        engine, image, node, idle_sample_s=idle_sample_s, timeout_s=health_timeout_s
    )
    handle = init.handle
    try:
        pressure = run_pressure_test(handle.endpoint, workload, engine, handle, node)
        coop = None
        if splits:
            coop = validate_cooperative_inference(
                handle.endpoint, splits, engine, handle, node
            )
        xai = (
            validate_xai_compat(handle.endpoint, xai_techniques, engine, handle, node)
            if xai_techniques
            else []
        )
    except Exception:
        try:
            engine.stop_and_remove(handle)
        except Exception:
            pass
        raise
    eviction_ms = evict_service(engine, handle)
    profile = assemble_runtime_profile(init, pressure, coop, xai, eviction_ms, node)
    return NodeRunResult(
        profile=profile,
        init=init,
        pressure=pressure,
        coop=coop,
        xai=xai,
        eviction_ms=eviction_ms,
    )
