from __future__ import annotations

from pathlib import Path

import pytest

from svcforge.attributes import (
    BillingProfile,
    FeedbackRecord,
    LatencyProfile,
    LatencyStats,
    LocReport,
    NodePricing,
    NodeSpec,
    Provenance,
    ResourceProfile,
    RuntimeProfile,
    ServiceRecord,
    TaskInfo,
    WorkloadSummary,
    utcnow,
)

FIXTURES = Path(__file__).parent / "fixtures"


def make_node(node_id: str = "edge-1", cpu_freq_ghz: float = 2.0, **overrides) -> NodeSpec:
    params = dict(
        node_id=node_id,
        cpu_freq_ghz=cpu_freq_ghz,
        cpu_cores=4,
        device_kind="none",
        cpu_ram_mb=8192,
        disk_bw_mbps=200.0,
        network_bw_mbps=1000.0,
        idle_power_w=10.0,
        active_power_w=30.0,
        pricing=NodePricing(
            credits_per_alive_s=0.001,
            credits_per_cpu_s=0.01,
            credits_per_device_s=0.05,
        ),
    )
    params.update(overrides)
    return NodeSpec(**params)


def make_resource(**overrides) -> ResourceProfile:
    params = dict(
        cpu_time_ms_per_req=42.0,
        cpu_ram_peak_mb=180.0,
        disk_read_bytes_per_req=1024.0,
        disk_write_bytes_per_req=256.0,
        energy_idle_w=10.0,
        energy_active_j_per_req=1.5,
        input_bytes_avg=900.0,
        output_bytes_avg=120.0,
    )
    params.update(overrides)
    return ResourceProfile(**params)


def make_latency(p50: float = 50.0, init_ms: float = 800.0, eviction_ms: float = 220.0) -> LatencyProfile:
    return LatencyProfile(
        inference_ms=LatencyStats(mean=p50 + 2, p50=p50, p95=p50 + 8, p99=p50 + 12, max=p50 + 15),
        init_ms=init_ms,
        eviction_ms=eviction_ms,
    )


def make_profile(node_id: str = "edge-1", p50: float = 50.0, **overrides) -> RuntimeProfile:
    params = dict(
        node_id=node_id,
        resource=make_resource(),
        latency=make_latency(p50=p50),
        coop_profiles=[],
        xai_profiles=[],
        measured_at=utcnow(),
        workload=WorkloadSummary(
            concurrency=1,
            total_requests=10,
            payload_generator="constant-bytes",
            seed=7,
            warmup_requests=3,
        ),
    )
    params.update(overrides)
    return RuntimeProfile(**params)


def make_record(
    uri: str = "my-service-repo/resnet-50:latest",
    category: str = "image-classification",
    node_id: str = "edge-1",
    p50: float = 50.0,
    task_detail: str = "Classifies an RGB image into one of 1000 object classes.",
    **overrides,
) -> ServiceRecord:
    params = dict(
        service_uri=uri,
        model_id="microsoft/resnet-50",
        task_info=TaskInfo(
            task_category=category,
            task_detail=task_detail,
            revised_task_detail=task_detail,
        ),
        storage_size_bytes=125829120,
        billing=BillingProfile(
            init_cost_credits=0.5, keepalive_credits_per_s=0.001, exec_cost_credits=0.01
        ),
        profiles={node_id: make_profile(node_id=node_id, p50=p50)},
        feedback=FeedbackRecord(),
        coop_capable=False,
        xai_techniques=[],
        provenance=Provenance(generated_at=utcnow(), provider_name="template", loc_report=LocReport()),
    )
    params.update(overrides)
    return ServiceRecord(**params)


@pytest.fixture
def node() -> NodeSpec:
    return make_node()


@pytest.fixture
def record() -> ServiceRecord:
    return make_record()
