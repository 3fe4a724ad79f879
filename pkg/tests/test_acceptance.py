"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints an [ACCEPTANCE PASS] line on success (pytest -v adds the
per-test PASSED/FAILED verdict), so a plain run of this module reads as a
criterion checklist.
"""

from __future__ import annotations

import math
import random
import time

import pytest

from svcforge.attributes import (
    ATTRIBUTE_ROWS,
    BillingProfile,
    scale_inference_time,
)
from svcforge.codegen import TemplateProvider, count_loc, generate_artifacts, load_common_base
from svcforge.engines import MockEngine, MockServiceParams, StatsSample
from svcforge.model_cards import load_document, parse_model_card
from svcforge.pipeline import PipelineConfig, run_pipeline
from svcforge.registry import RegistryStore, completeness_checks, cosine, embedding_text
from svcforge.validator import (
    WorkloadSpec,
    compute_latency_stats,
    deploy_and_init,
    estimate_energy,
    evict_service,
    run_pressure_test,
    validate_cooperative_inference,
    validate_xai_compat,
)
from tests.conftest import FIXTURES, make_node, make_record

RESNET_CARD = f"file:{FIXTURES / 'resnet50.md'}"


@pytest.fixture
def announce(capsys):
    def _announce(name: str) -> None:
        with capsys.disabled():
            print(f"\n[ACCEPTANCE PASS] {name}")

    return _announce


def test_criterion_attribute_completeness(tmp_path, announce):
    """Pipeline output populates every attribute-taxonomy row (or marks N/A)."""
    t0 = time.perf_counter()
    config = PipelineConfig(
        card_locator=RESNET_CARD,
        nodes=[
            make_node("edge-1", cpu_freq_ghz=2.0, disk_bw_mbps=1000.0),
            make_node("edge-2", cpu_freq_ghz=1.0, disk_bw_mbps=1000.0),
        ],
        workload=WorkloadSpec(concurrency=2, total_requests=10, seed=3),
        splits=[1, 2],
        xai_techniques=["gradcam-sim", "scorecam-sim"],
        billing=BillingProfile(
            init_cost_credits=0.5, keepalive_credits_per_s=0.001, exec_cost_credits=0.01
        ),
        out_dir=tmp_path / "out",
        registry_dir=tmp_path / "registry",
        runs_dir=tmp_path / "runs",
        mock_params=MockServiceParams(
            boot_ms=100.0,
            eviction_ms=80.0,
            work_ms_at_1ghz=20.0,
            xai_footprints_mb={"gradcam-sim": 16.0, "scorecam-sim": 16000.0},
        ),
        idle_sample_s=0.3,
    )
    result = run_pipeline(config)
    record = result.record

    expected_rows = {
        "task_category", "task_detail", "accuracy",
        "cpu_usage", "cpu_ram_usage", "device_usage", "device_ram_usage",
        "disk_io", "service_storage_size", "energy_consumption",
        "input_data_size", "output_data_size",
        "inference_time", "initialization_time", "eviction_time",
        "cooperative_inference",
        "feedback", "xai_support",
        "initialization_cost", "keepalive_cost", "execution_cost",
    }
    assert set(ATTRIBUTE_ROWS) == expected_rows

    checks = {c.check: c for c in completeness_checks(record)}
    for row in expected_rows:
        check = checks[f"attribute:{row}"]
        assert check.status in ("pass", "not-applicable"), (row, check.detail)
    assert checks["has_node_profile"].status == "pass"
    assert checks["has_provenance"].status == "pass"
    assert len(record.profiles) == 2

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"pipeline took {elapsed:.1f}s"
    announce(f"attribute completeness: 21 rows populated/N-A on 2 nodes in {elapsed:.1f}s")


def test_criterion_infra_specific_profiling(announce):
    """2x cpu frequency gap shows up as a 2.0 +- 10% p50 ratio, cross-predicted."""
    t0 = time.perf_counter()
    fast = make_node("fast", cpu_freq_ghz=2.0, disk_bw_mbps=1000.0)
    slow = make_node("slow", cpu_freq_ghz=1.0, disk_bw_mbps=1000.0)
    params = MockServiceParams(boot_ms=80.0, eviction_ms=50.0, work_ms_at_1ghz=60.0)
    engine = MockEngine({"fast": fast, "slow": slow}, params=params)
    engine.register_image("repo/toy:latest", params)
    workload = WorkloadSpec(concurrency=1, total_requests=20, seed=1)

    p50 = {}
    for node in (fast, slow):
        init = deploy_and_init(engine, engine.register_image("repo/toy:latest"), node, idle_sample_s=0.3)
        report = run_pressure_test(init.handle.endpoint, workload, engine, init.handle, node)
        p50[node.node_id] = report.inference_ms.p50
        evict_service(engine, init.handle)
    engine.shutdown()

    ratio = p50["slow"] / p50["fast"]
    assert abs(ratio - 2.0) <= 0.2, f"p50 ratio {ratio:.3f} outside 2.0 +- 10%"

    predicted_slow = scale_inference_time(p50["fast"], fast, slow, lane="cpu")
    rel_error = abs(predicted_slow - p50["slow"]) / p50["slow"]
    assert rel_error <= 0.10, f"cross-prediction off by {rel_error:.1%}"

    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    announce(
        f"infra-specific profiling: p50 ratio {ratio:.2f}, cross-prediction error {rel_error:.1%}"
    )


def test_criterion_load_sensitivity(announce):
    """With contention enabled, p50 under concurrency 8 strictly exceeds concurrency 1."""
    node = make_node("edge-1", cpu_freq_ghz=1.0, disk_bw_mbps=1000.0)
    params = MockServiceParams(
        boot_ms=80.0, eviction_ms=50.0, work_ms_at_1ghz=30.0, contention_coeff=0.15
    )
    engine = MockEngine({"edge-1": node}, params=params)
    image = engine.register_image("repo/toy:latest", params)
    init = deploy_and_init(engine, image, node, idle_sample_s=0.3)
    try:
        solo = run_pressure_test(
            init.handle.endpoint,
            WorkloadSpec(concurrency=1, total_requests=16, seed=2),
            engine,
            init.handle,
            node,
        )
        loaded = run_pressure_test(
            init.handle.endpoint,
            WorkloadSpec(concurrency=8, total_requests=48, seed=2),
            engine,
            init.handle,
            node,
        )
    finally:
        engine.shutdown()
    assert loaded.inference_ms.p50 >= solo.inference_ms.p50
    assert loaded.inference_ms.p50 > solo.inference_ms.p50, "contention > 0 must cost latency"
    announce(
        "load sensitivity: p50 "
        f"{solo.inference_ms.p50:.1f}ms @c1 -> {loaded.inference_ms.p50:.1f}ms @c8"
    )


def test_criterion_coop_soundness(announce):
    """All 5 split points of a 6-layer service pass exact composition equality."""
    node = make_node("edge-1", cpu_freq_ghz=2.0, disk_bw_mbps=1000.0)
    params = MockServiceParams(boot_ms=80.0, eviction_ms=50.0, work_ms_at_1ghz=6.0, layer_count=6)
    engine = MockEngine({"edge-1": node}, params=params)
    image = engine.register_image("repo/toy:latest", params)
    init = deploy_and_init(engine, image, node, idle_sample_s=0.3)
    result = validate_cooperative_inference(
        init.handle.endpoint, [1, 2, 3, 4, 5], engine, init.handle, node
    )
    engine.shutdown()
    assert result.supported
    assert result.excluded == []
    assert [(p.start_layer, p.end_layer) for p in result.profiles] == [
        (1, 5), (2, 5), (3, 5), (4, 5), (5, 5),
    ]

    faulty_params = params.model_copy(update={"fault_layer": 3})
    engine = MockEngine({"edge-1": node}, params=faulty_params)
    image = engine.register_image("repo/toy:latest", faulty_params)
    init = deploy_and_init(engine, image, node, idle_sample_s=0.3)
    faulty = validate_cooperative_inference(
        init.handle.endpoint, [1, 2, 3, 4, 5], engine, init.handle, node
    )
    engine.shutdown()
    assert faulty.profiles == [], "faulted layer must not produce coop profiles"
    assert {item["split"] for item in faulty.excluded} == {1, 2, 3, 4, 5}
    assert all("composition" in item["reason"] for item in faulty.excluded)
    announce("coop-inference soundness: 5/5 splits pass; faulted layer detected and excluded")


def test_criterion_xai_memory_reproduction(announce):
    """An oversized technique is recorded unsupported with reason "memory shortage"."""
    node = make_node("laptop", cpu_freq_ghz=1.0, cpu_ram_mb=8192.0, disk_bw_mbps=1000.0)
    params = MockServiceParams(
        boot_ms=80.0,
        eviction_ms=50.0,
        work_ms_at_1ghz=6.0,
        xai_footprints_mb={"gradcam-sim": 16.0, "scorecam-sim": 16000.0},
    )
    engine = MockEngine({"laptop": node}, params=params)
    image = engine.register_image("repo/toy:latest", params)
    init = deploy_and_init(engine, image, node, idle_sample_s=0.3)
    profiles = validate_xai_compat(
        init.handle.endpoint, ["gradcam-sim", "scorecam-sim"], engine, init.handle, node
    )
    engine.shutdown()
    by_name = {p.technique: p for p in profiles}
    cheap, heavy = by_name["gradcam-sim"], by_name["scorecam-sim"]
    assert cheap.supported and cheap.resource is not None and cheap.latency_ms > 0
    assert not heavy.supported
    assert heavy.failure_reason == "memory shortage"
    assert heavy.resource is None
    announce("xai memory reproduction: 16000 MB technique unsupported on 8192 MB node")


def test_criterion_percentile_oracle(announce):
    """1000 random sample sets match brute-force sort + nearest-rank exactly."""
    rng = random.Random(20240811)
    for case in range(1000):
        n = rng.randint(1, 200)
        samples = [rng.uniform(0.01, 10_000.0) for _ in range(n)]
        stats = compute_latency_stats(samples)
        ordered = sorted(samples)
        for q, got in ((50, stats.p50), (95, stats.p95), (99, stats.p99)):
            expected = ordered[math.ceil(q / 100.0 * n) - 1]
            assert got == expected, (case, q)
        assert stats.max == ordered[-1]
        assert stats.mean == pytest.approx(sum(samples) / n)
    announce("percentile oracle: 1000/1000 random sample sets match brute force")


def test_criterion_search_oracle(tmp_path, announce):
    """semantic_search equals brute-force cosine ranking on 30 random corpora."""
    vocabulary = (
        "classify detect segment image text audio depth object scene sentiment "
        "summarize translate rank embed video frame token pixel signal entity"
    ).split()
    rng = random.Random(99)
    for corpus_index in range(30):
        store = RegistryStore(tmp_path / f"corpus-{corpus_index}")
        size = rng.randint(1, 50)
        for i in range(size):
            detail = " ".join(rng.choices(vocabulary, k=rng.randint(2, 14)))
            store.publish_record(
                make_record(uri=f"repo/service-{i}:latest", task_detail=detail)
            )
        query = " ".join(rng.choices(vocabulary, k=rng.randint(1, 6)))
        k = rng.randint(1, 60)
        got = store.semantic_search(query, k)

        query_vector = store.embed_text(query)
        brute = sorted(
            (
                (record.service_uri, cosine(query_vector, store.embed_text(embedding_text(record))))
                for record in store.list_records()
            ),
            key=lambda pair: (-pair[1], pair[0]),
        )[:k]
        assert [uri for uri, _ in got] == [uri for uri, _ in brute], corpus_index
        for (_, a), (_, b) in zip(got, brute):
            assert a == pytest.approx(b)

    fixture_store = RegistryStore(tmp_path / "fixture")
    fixture_store.publish_record(
        make_record(
            uri="repo/image-classifier:latest",
            task_detail="Classifies an image of animals into classes.",
        )
    )
    fixture_store.publish_record(
        make_record(
            uri="repo/text-sentiment:latest",
            category="text-classification",
            task_detail="Scores the sentiment of a short text passage.",
        )
    )
    hits = fixture_store.semantic_search("classify an image", 2)
    assert hits[0][0] == "repo/image-classifier:latest"
    announce("search oracle: 30/30 corpora match brute-force ranking; fixture query ranks correctly")


def test_criterion_registry_durability(tmp_path, announce):
    """200 random publish/feedback ops, crash-recovery (+compaction) reproduce state."""
    rng = random.Random(424242)
    directory = tmp_path / "registry"
    store = RegistryStore(directory)
    uris: list[str] = []
    compactions = 0
    for step in range(200):
        action = rng.random()
        if not uris or action < 0.25:
            record = make_record(
                uri=f"repo/service-{len(uris)}:latest",
                p50=20.0 + rng.randint(0, 100),
                task_detail=f"service number {len(uris)} doing task {rng.randint(0, 9)}",
            )
            uris.append(store.publish_record(record))
        elif action < 0.35:
            uri = rng.choice(uris)
            store.publish_record(store.get(uri).model_copy(update={"storage_size_bytes": step + 1}))
        elif action < 0.9:
            store.record_feedback(rng.choice(uris), rng.choice(["like", "dislike"]))
        else:
            store.record_feedback(rng.choice(uris), "comment", author="t", text=f"step {step}")
        if step in (77, 150):
            store.compact_log()
            compactions += 1

    expected = {uri: store.get(uri).model_dump(mode="json") for uri in uris}
    recovered = RegistryStore(directory)  # crash-recover: fresh replay from disk
    got = {uri: recovered.get(uri).model_dump(mode="json") for uri in uris}
    assert got == expected
    assert len(recovered) == len(uris)
    announce(
        f"registry durability: 200 ops, {compactions} compactions, replay reproduces state"
    )


def test_criterion_energy_model(announce):
    """Idle trace integrates exactly; the piecewise case matches to 1e-9 relative."""
    node = make_node("n", idle_power_w=10.0, active_power_w=30.0)

    idle_trace = [
        StatsSample(t=float(t), cpu_time_total_ms=0.0, mem_rss_mb=1.0, cpu_util=0.0)
        for t in range(11)
    ]
    idle = estimate_energy(idle_trace, node)
    assert idle.active_j_total == 100.0  # exactly idle_power * duration

    piecewise_node = make_node("p", idle_power_w=5.0, active_power_w=25.0)
    piecewise = [
        StatsSample(t=0.0, cpu_time_total_ms=0.0, mem_rss_mb=1.0, cpu_util=1.0),
        StatsSample(t=1.0, cpu_time_total_ms=0.0, mem_rss_mb=1.0, cpu_util=0.0),
        StatsSample(t=2.0, cpu_time_total_ms=0.0, mem_rss_mb=1.0, cpu_util=0.0),
    ]
    estimate = estimate_energy(piecewise, piecewise_node)
    assert abs(estimate.active_j_total - 30.0) / 30.0 <= 1e-9
    announce("energy model: idle floor exact, piecewise hand integration within 1e-9")


def test_criterion_timing_bounds(announce):
    """Mock init and eviction land inside their configured windows."""
    node = make_node("edge-1", cpu_freq_ghz=1.0, disk_bw_mbps=100.0)
    params = MockServiceParams(
        boot_ms=500.0, eviction_ms=200.0, work_ms_at_1ghz=5.0, image_size_mb=10.0
    )
    engine = MockEngine({"edge-1": node}, params=params)
    image = engine.register_image("repo/toy:latest", params)

    configured_init_ms = params.boot_ms + params.image_size_mb / node.disk_bw_mbps * 1000.0
    init = deploy_and_init(engine, image, node, idle_sample_s=0.3)
    poll_ms = 100.0
    assert configured_init_ms <= init.init_ms <= configured_init_ms + poll_ms + 100.0, init.init_ms

    eviction_ms = evict_service(engine, init.handle)
    assert params.eviction_ms <= eviction_ms <= params.eviction_ms + 100.0, eviction_ms
    engine.shutdown()
    announce(
        f"timing bounds: init {init.init_ms:.0f}ms in [{configured_init_ms:.0f}, "
        f"{configured_init_ms + 200:.0f}], eviction {eviction_ms:.0f}ms in "
        f"[{params.eviction_ms:.0f}, {params.eviction_ms + 100:.0f}]"
    )


def test_criterion_loc_accounting(announce):
    """A known 2-line human edit reports loc_manual = 2; unedited reports 0."""
    card = parse_model_card(load_document(RESNET_CARD))
    common = load_common_base()
    artifacts = generate_artifacts(card, common, TemplateProvider())

    untouched = count_loc(common, artifacts, dict(artifacts.files))
    assert untouched.loc_manual == 0

    edited_files = dict(artifacts.files)
    lines = edited_files["model.py"].splitlines()
    index = lines.index('TASK_CATEGORY = "image-classification"')
    lines[index] = 'TASK_CATEGORY = "image-classification-v2"'  # changed line
    lines.append("EXTRA_LABELS = 10")  # appended line
    edited_files["model.py"] = "\n".join(lines) + "\n"

    edited = count_loc(common, artifacts, edited_files)
    assert edited.loc_manual == 2
    assert edited.loc_common == untouched.loc_common
    assert edited.loc_generated == untouched.loc_generated
    announce("loc accounting: unedited tree -> 0 manual lines, 2-line edit -> 2")
