from __future__ import annotations

import pytest

from svcforge.attributes import BillingProfile
from svcforge.engines import MockServiceParams
from svcforge.pipeline import (
    ConfigError,
    PhaseError,
    PipelineConfig,
    derive_billing,
    loc_table,
    run_pipeline,
    service_uri_for,
)
from svcforge.registry import RegistryStore
from svcforge.validator import WorkloadSpec
from tests.conftest import FIXTURES, make_node

FAST_MOCK = MockServiceParams(
    boot_ms=100.0,
    eviction_ms=80.0,
    work_ms_at_1ghz=20.0,
    image_size_mb=12.0,
    xai_footprints_mb={"gradcam-sim": 16.0, "scorecam-sim": 16000.0},
)


def make_config(tmp_path, **overrides) -> PipelineConfig:
    params = dict(
        card_locator=f"file:{FIXTURES / 'resnet50.md'}",
        provider="template",
        engine="mock",
        nodes=[
            make_node("edge-1", cpu_freq_ghz=2.0, disk_bw_mbps=1000.0),
            make_node("edge-2", cpu_freq_ghz=1.0, disk_bw_mbps=1000.0),
        ],
        workload=WorkloadSpec(concurrency=2, total_requests=8, seed=11),
        splits=[1, 2],
        xai_techniques=["gradcam-sim", "scorecam-sim"],
        billing=BillingProfile(
            init_cost_credits=0.5, keepalive_credits_per_s=0.001, exec_cost_credits=0.01
        ),
        out_dir=tmp_path / "out",
        registry_dir=tmp_path / "registry",
        runs_dir=tmp_path / "runs",
        mock_params=FAST_MOCK,
        idle_sample_s=0.3,
    )
    params.update(overrides)
    return PipelineConfig(**params)


class TestRunPipeline:
    def test_full_run_publishes_verified_record(self, tmp_path):
        result = run_pipeline(make_config(tmp_path))
        record = result.record
        assert record.service_uri == "my-service-repo/resnet-50:latest"
        assert set(record.profiles) == {"edge-1", "edge-2"}
        assert record.coop_capable
        assert record.xai_techniques == ["gradcam-sim"]
        assert record.storage_size_bytes == 12 * 2**20
        assert record.task_info.revised_task_detail
        assert record.provenance.loc_report.loc_manual == 0
        assert result.verification.passed

        store = RegistryStore(tmp_path / "registry")
        assert store.get(record.service_uri).model_dump(mode="json") == record.model_dump(
            mode="json"
        )
        run_reports = list((tmp_path / "runs").rglob("report.json"))
        assert len(run_reports) == 2

    def test_zero_nodes_fails_before_any_work(self, tmp_path):
        with pytest.raises(ConfigError):
            run_pipeline(make_config(tmp_path, nodes=[]))
        assert not (tmp_path / "out").exists()

    def test_rerun_skips_compilation_and_matches_modulo_measurement(self, tmp_path):
        first = run_pipeline(make_config(tmp_path))
        second = run_pipeline(make_config(tmp_path))
        assert not first.compile_skipped
        assert second.compile_skipped

        def fingerprint(record):
            return {
                "uri": record.service_uri,
                "model_id": record.model_id,
                "task": record.task_info.model_dump(mode="json"),
                "storage": record.storage_size_bytes,
                "billing": record.billing.model_dump(mode="json"),
                "coop_capable": record.coop_capable,
                "xai": record.xai_techniques,
                "splits": {
                    node_id: [(c.start_layer, c.end_layer) for c in profile.coop_profiles]
                    for node_id, profile in record.profiles.items()
                },
                "loc": record.provenance.loc_report.model_dump(mode="json"),
            }

        assert fingerprint(first.record) == fingerprint(second.record)

    def test_validation_failure_names_phase_and_keeps_artifacts(self, tmp_path):
        config = make_config(
            tmp_path,
            mock_params=FAST_MOCK.model_copy(update={"memory_footprint_mb": 10**6}),
        )
        with pytest.raises(PhaseError) as exc:
            run_pipeline(config)
        assert exc.value.phase == "validation"
        assert (tmp_path / "out" / "microsoft/resnet-50" / "Dockerfile").exists()

    def test_derived_billing_when_unset(self, tmp_path):
        result = run_pipeline(make_config(tmp_path, billing=None))
        assert result.billing_derived
        assert result.record.billing.init_cost_credits > 0
        assert result.record.billing.exec_cost_credits > 0

    def test_faulted_mock_layer_yields_no_coop_profiles(self, tmp_path):
        config = make_config(
            tmp_path, mock_params=FAST_MOCK.model_copy(update={"fault_layer": 2})
        )
        result = run_pipeline(config)
        assert not result.record.coop_capable
        assert all(not p.coop_profiles for p in result.record.profiles.values())
        assert result.node_runs["edge-1"].coop.excluded


class TestHelpers:
    def test_service_uri_shape(self, tmp_path):
        from svcforge.model_cards import load_document, parse_model_card

        card = parse_model_card(load_document(f"file:{FIXTURES / 'resnet50.md'}"))
        assert service_uri_for(card, "my-service-repo", "latest") == (
            "my-service-repo/resnet-50:latest"
        )

    def test_loc_table_totals(self, tmp_path):
        result = run_pipeline(make_config(tmp_path))
        store = RegistryStore(tmp_path / "registry")
        rows = loc_table(store)
        assert rows[-1]["service_uri"] == "TOTAL"
        assert rows[-1]["loc_generated"] == result.record.provenance.loc_report.loc_generated

    def test_loc_table_empty_registry_has_no_rows(self, tmp_path):
        assert loc_table(RegistryStore(tmp_path / "registry")) == []

    def test_derive_billing_prices_measured_time(self, tmp_path):
        result = run_pipeline(make_config(tmp_path, billing=None))
        node = make_node("edge-1", cpu_freq_ghz=2.0, disk_bw_mbps=1000.0)
        run = result.node_runs["edge-1"]
        billing = derive_billing(node, run)
        expected_exec = node.pricing.credits_per_cpu_s * (
            run.profile.resource.cpu_time_ms_per_req / 1000.0
        )
        assert billing.exec_cost_credits == pytest.approx(expected_exec)
