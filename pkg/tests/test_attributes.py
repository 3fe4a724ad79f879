from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from svcforge.attributes import (
    ATTRIBUTE_ROWS,
    AccuracyEntry,
    BillingProfile,
    LatencyStats,
    ServiceRecord,
    UnknownFieldError,
    dump_json,
    parse_lenient,
    parse_strict,
    scale_inference_time,
    total_cost,
    validate_record,
)
from tests.conftest import make_latency, make_node, make_profile, make_record


class TestValidateRecord:
    def test_fully_populated_record_is_valid(self, record):
        report = validate_record(record)
        assert len(report) == 0
        assert report.ok

    def test_percentile_inversion_names_latency_path(self):
        bad = make_latency().model_copy(
            update={"inference_ms": LatencyStats(mean=50, p50=60, p95=50, p99=70, max=80)}
        )
        rec = make_record(profiles={"edge-1": make_profile().model_copy(update={"latency": bad})})
        report = validate_record(rec)
        assert not report.ok
        assert any("latency.inference_ms" in v.path for v in report.errors)

    def test_bad_uri_names_service_uri(self):
        rec = make_record(uri="Bad URI!")
        report = validate_record(rec)
        assert [v.path for v in report.errors] == ["service_uri"]

    def test_unknown_category_is_warning_not_error(self):
        rec = make_record(category="quantum-foo")
        report = validate_record(rec)
        assert report.ok
        assert len(report.warnings) == 1
        assert report.warnings[0].path == "task_info.task_category"

    def test_fraction_accuracy_out_of_range(self, record):
        task = record.task_info.model_copy(
            update={
                "accuracy": [
                    AccuracyEntry(benchmark_name="imagenet", metric_name="top-1", value=1.2)
                ]
            }
        )
        report = validate_record(record.model_copy(update={"task_info": task}))
        assert any("accuracy[0].value" in v.path for v in report.errors)

    def test_device_fields_must_be_zero_on_cpu_only_node(self):
        prof = make_profile()
        prof = prof.model_copy(
            update={"resource": prof.resource.model_copy(update={"device_time_ms_per_req": 5.0})}
        )
        rec = make_record(profiles={"edge-1": prof})
        report = validate_record(rec, known_nodes={"edge-1": make_node()})
        assert any("device fields" in v.message for v in report.errors)

    def test_unknown_node_reference(self, record):
        report = validate_record(record, known_nodes={})
        assert any("unknown node" in v.message for v in report.errors)

    def test_coop_capable_must_match_profiles(self, record):
        report = validate_record(record.model_copy(update={"coop_capable": True}))
        assert any(v.path == "coop_capable" for v in report.errors)

    def test_validation_is_deterministic(self, record):
        a = validate_record(record.model_copy(update={"service_uri": "Bad URI!"}))
        b = validate_record(record.model_copy(update={"service_uri": "Bad URI!"}))
        assert a.model_dump() == b.model_dump()


class TestSerialization:
    def test_valid_record_round_trips_identically(self, record):
        assert validate_record(record).ok
        again = parse_strict(ServiceRecord, dump_json(record))
        assert again == record

    def test_strict_mode_rejects_unknown_fields(self, record):
        data = record.model_dump(mode="json")
        data["profiles"]["edge-1"]["resource"]["gpu_flops"] = 1.0
        with pytest.raises(UnknownFieldError) as exc:
            parse_strict(ServiceRecord, data)
        assert "gpu_flops" in str(exc.value)

    def test_lenient_mode_preserves_unknown_fields(self, record):
        data = record.model_dump(mode="json")
        data["future_field"] = {"a": 1}
        model = parse_lenient(ServiceRecord, data)
        assert model.model_dump(mode="json")["future_field"] == {"a": 1}


class TestAttributeTaxonomy:
    def test_every_row_maps_to_exactly_one_owner(self):
        # 21 rows: 3 functionality + 9 resource + 3 latency + 1 flexibility
        # + 2 trustworthiness + 3 billing.
        assert len(ATTRIBUTE_ROWS) == 21
        by_category = {}
        for row, (category, paths) in ATTRIBUTE_ROWS.items():
            assert paths, row
            by_category.setdefault(category, []).append(row)
        assert len(by_category["functionality"]) == 3
        assert len(by_category["resource"]) == 9
        assert len(by_category["latency"]) == 3
        assert len(by_category["flexibility"]) == 1
        assert len(by_category["trustworthiness"]) == 2
        assert len(by_category["billing"]) == 3

    def test_rows_map_to_distinct_field_paths(self):
        seen = set()
        for _, paths in ATTRIBUTE_ROWS.values():
            for path in paths:
                assert path not in seen, f"{path} mapped by two rows"
                seen.add(path)


class TestTotalCost:
    def test_zero_billing_is_free(self):
        billing = BillingProfile()
        assert total_cost(billing, 1234.0, 999) == 0.0

    def test_direct_formula_evaluation(self):
        billing = BillingProfile(
            init_cost_credits=10, keepalive_credits_per_s=0.1, exec_cost_credits=2
        )
        assert total_cost(billing, 100.0, 5) == pytest.approx(30.0)

    def test_hand_evaluated_case(self):
        # 3 + 0.5*7 + 1*4 = 10.5
        billing = BillingProfile(
            init_cost_credits=3, keepalive_credits_per_s=0.5, exec_cost_credits=1
        )
        assert total_cost(billing, 7.0, 4) == pytest.approx(10.5)

    def test_negative_inputs_rejected(self):
        billing = BillingProfile()
        with pytest.raises(ValueError):
            total_cost(billing, -1.0, 0)
        with pytest.raises(ValueError):
            total_cost(billing, 0.0, -1)

    @given(
        uptime=st.floats(min_value=0, max_value=1e6),
        extra=st.floats(min_value=0, max_value=1e6),
        count=st.integers(min_value=0, max_value=10**6),
        more=st.integers(min_value=0, max_value=10**6),
    )
    def test_monotone_in_uptime_and_count(self, uptime, extra, count, more):
        billing = BillingProfile(
            init_cost_credits=1, keepalive_credits_per_s=0.2, exec_cost_credits=0.7
        )
        base = total_cost(billing, uptime, count)
        assert total_cost(billing, uptime + extra, count) >= base
        assert total_cost(billing, uptime, count + more) >= base


class TestScaleInferenceTime:
    def test_identical_nodes_unchanged(self):
        node = make_node()
        assert scale_inference_time(100.0, node, node) == 100.0

    def test_doubling_frequency_halves_time(self):
        slow = make_node("a", cpu_freq_ghz=2.0)
        fast = make_node("b", cpu_freq_ghz=4.0)
        assert scale_inference_time(100.0, slow, fast) == pytest.approx(50.0)

    def test_dropping_frequency_inflates_time(self):
        fast = make_node("a", cpu_freq_ghz=3.0)
        slow = make_node("b", cpu_freq_ghz=1.0)
        assert scale_inference_time(60.0, fast, slow) == pytest.approx(180.0)

    def test_device_lane_requires_devices(self):
        cpu_only = make_node("a")
        gpu = make_node("b", device_kind="gpu-like", device_freq_ghz=1.5, device_ram_mb=16000)
        with pytest.raises(ValueError):
            scale_inference_time(10.0, cpu_only, gpu, lane="device")
        with pytest.raises(ValueError):
            scale_inference_time(10.0, gpu, cpu_only, lane="device")

    @given(
        ms=st.floats(min_value=0.001, max_value=1e5),
        fa=st.floats(min_value=0.1, max_value=10),
        fb=st.floats(min_value=0.1, max_value=10),
    )
    def test_involution_under_swap(self, ms, fa, fb):
        a = make_node("a", cpu_freq_ghz=fa)
        b = make_node("b", cpu_freq_ghz=fb)
        there_and_back = scale_inference_time(scale_inference_time(ms, a, b), b, a)
        assert there_and_back == pytest.approx(ms, rel=1e-12)
