"""End-to-end pipeline: compile a model card into service artifacts, build the
image, profile it on every configured node, and publish the assembled record.

Phases are restartable: the compile phase stamps its output tree with a
content hash of its inputs and is skipped when nothing changed.  On any phase
failure, earlier phases' artifacts stay on disk and the error names the
failed phase.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import BaseModel, ConfigDict

from svcforge.attributes import (
    AccuracyEntry,
    BillingProfile,
    LocReport,
    NodeSpec,
    Provenance,
    RuntimeProfile,
    ServiceRecord,
    TaskInfo,
    utcnow,
)
from svcforge.codegen import (
    CompletionProvider,
    GeneratedArtifacts,
    RemoteProvider,
    TemplateProvider,
    count_loc,
    generate_artifacts,
    load_common_base,
    write_artifact_tree,
)
from svcforge.engines import ContainerEngine, DockerEngine, ImageRef, MockEngine, MockServiceParams
from svcforge.model_cards import ModelCard, load_document, parse_model_card
from svcforge.registry import RegistryStore, VerificationReport
from svcforge.validator import NodeRunResult, WorkloadSpec, validate_service_on_node

MANIFEST_NAME = ".svcforge-manifest.json"


class ConfigError(Exception):
    """The pipeline configuration is unusable; nothing was executed."""


class PhaseError(Exception):
    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(f"{phase} phase failed: {cause}")


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    card_locator: str
    provider: str = "template"  # template | remote
    engine: str = "mock"  # mock | real
    nodes: list[NodeSpec]
    workload: WorkloadSpec = WorkloadSpec(concurrency=2, total_requests=20)
    splits: list[int] = []
    xai_techniques: list[str] = []
    billing: BillingProfile | None = None  # None: derive from node pricing
    repo: str = "my-service-repo"
    image_tag: str = "latest"
    out_dir: Path = Path("out")
    registry_dir: Path = Path("registry")
    runs_dir: Path = Path("runs")
    parallel: int = 2
    mock_params: MockServiceParams = MockServiceParams()
    idle_sample_s: float = 5.0
    health_timeout_s: float = 120.0

    def check(self) -> None:
        if not self.nodes:
            raise ConfigError("at least one node is required")
        ids = [node.node_id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate node ids: {ids}")
        if self.provider not in ("template", "remote"):
            raise ConfigError(f"unknown provider: {self.provider}")
        if self.engine not in ("mock", "real"):
            raise ConfigError(f"unknown engine: {self.engine}")


@dataclass
class PipelineResult:
    record: ServiceRecord
    verification: VerificationReport
    image: ImageRef
    card: ModelCard
    artifacts: GeneratedArtifacts
    node_runs: dict[str, NodeRunResult]
    context_dir: Path
    run_dirs: dict[str, Path]
    phase_seconds: dict[str, float] = field(default_factory=dict)
    compile_skipped: bool = False
    billing_derived: bool = False


def make_provider(config: PipelineConfig) -> CompletionProvider:
    if config.provider == "remote":
        return RemoteProvider()
    return TemplateProvider()


def make_engine(config: PipelineConfig) -> ContainerEngine:
    if config.engine == "real":
        return DockerEngine()
    return MockEngine({n.node_id: n for n in config.nodes}, params=config.mock_params)


def service_uri_for(card: ModelCard, repo: str, tag: str) -> str:
    name = card.model_id.split("/")[-1].lower().replace("_", "-")
    return f"{repo}/{name}:{tag}"


def _sha(parts: list[str]) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def compile_service(
    card_text: str,
    card: ModelCard,
    provider: CompletionProvider,
    out_dir: Path,
) -> tuple[GeneratedArtifacts, Path, bool]:
    """Generate artifacts and materialize the build context.

    Returns (artifacts, context_dir, skipped): when the manifest hash in an
    existing output tree matches the inputs, the tree is reused as-is.
    """
    common_base = load_common_base()
    context_dir = out_dir / card.model_id
    manifest_path = context_dir / MANIFEST_NAME
    input_hash = _sha([card_text, provider.name, *sorted(common_base.values())])

    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("input_hash") == input_hash:
            artifacts = GeneratedArtifacts(
                files={
                    name: (context_dir / name).read_text(encoding="utf-8")
                    for name in manifest["generated_files"]
                },
                revised_task_detail=manifest.get("revised_task_detail", ""),
                accuracy_notes=manifest.get("accuracy_notes", ""),
            )
            return artifacts, context_dir, True

    artifacts = generate_artifacts(card, common_base, provider)
    write_artifact_tree(context_dir, common_base, artifacts)
    manifest_path.write_text(
        json.dumps(
            {
                "input_hash": input_hash,
                "provider": provider.name,
                "generated_files": sorted(artifacts.files),
                "revised_task_detail": artifacts.revised_task_detail,
                "accuracy_notes": artifacts.accuracy_notes,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return artifacts, context_dir, False


def derive_billing(node: NodeSpec, run: NodeRunResult) -> BillingProfile:
    """Billing from node pricing and measured behaviour (flagged derivation).

    init cost prices the measured initialization wall time as cpu-seconds;
    execution cost prices measured per-request cpu/device time.
    """
    pricing = node.pricing
    cpu_s_per_req = run.profile.resource.cpu_time_ms_per_req / 1000.0
    device_s_per_req = run.profile.resource.device_time_ms_per_req / 1000.0
    return BillingProfile(
        init_cost_credits=pricing.credits_per_cpu_s * run.profile.latency.init_ms / 1000.0,
        keepalive_credits_per_s=pricing.credits_per_alive_s,
        exec_cost_credits=(
            pricing.credits_per_cpu_s * cpu_s_per_req
            + pricing.credits_per_device_s * device_s_per_req
        ),
    )


def _write_run_report(runs_dir: Path, uri: str, run: NodeRunResult) -> Path:
    safe_uri = uri.replace("/", "_").replace(":", "_")
    stamp = time.strftime("%Y%m%d-%H%M%S") + f"-{int(time.time() * 1000) % 1000:03d}"
    run_dir = runs_dir / safe_uri / run.profile.node_id / stamp
    run_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "profile": run.profile.model_dump(mode="json"),
        "pressure": run.pressure.model_dump(mode="json"),
        "init_ms": run.init.init_ms,
        "idle_w": run.init.idle_w,
        "eviction_ms": run.eviction_ms,
        "coop_excluded": run.coop.excluded if run.coop else [],
        "coop_supported": run.coop.supported if run.coop else False,
    }
    (run_dir / "report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return run_dir


def run_pipeline(config: PipelineConfig, store: RegistryStore | None = None) -> PipelineResult:
    """Compile, validate on every node, and publish one service record."""
    config.check()
    timings: dict[str, float] = {}

    # Phase 1: service compilation.
    t0 = time.perf_counter()
    try:
        provider = make_provider(config)
        card_text = load_document(config.card_locator)
        card = parse_model_card(card_text, locator=config.card_locator)
        artifacts, context_dir, skipped = compile_service(
            card_text, card, provider, config.out_dir
        )
    except Exception as exc:
        raise PhaseError("compilation", exc) from exc
    timings["compilation"] = time.perf_counter() - t0

    # Phase 2: image build + per-node runtime validation.
    t0 = time.perf_counter()
    uri = service_uri_for(card, config.repo, config.image_tag)
    try:
        engine = make_engine(config)
        image = engine.build_image(context_dir, uri)

        def run_node(node: NodeSpec) -> tuple[str, NodeRunResult]:
            result = validate_service_on_node(
                engine,
                image,
                node,
                config.workload,
                splits=config.splits,
                xai_techniques=config.xai_techniques,
                idle_sample_s=config.idle_sample_s,
                health_timeout_s=config.health_timeout_s,
            )
            return node.node_id, result

        with ThreadPoolExecutor(max_workers=max(1, config.parallel)) as pool:
            node_runs = dict(pool.map(run_node, config.nodes))
    except Exception as exc:
        raise PhaseError("validation", exc) from exc
    timings["validation"] = time.perf_counter() - t0

    # Phase 3: record assembly, publication and verification.
    t0 = time.perf_counter()
    try:
        final_files = {
            name: (context_dir / name).read_text(encoding="utf-8")
            for name in sorted(f.name for f in context_dir.iterdir())
            if name != MANIFEST_NAME
        }
        loc_report = count_loc(load_common_base(), artifacts, final_files)

        billing_derived = config.billing is None
        first_node = config.nodes[0]
        billing = config.billing or derive_billing(first_node, node_runs[first_node.node_id])

        profiles: dict[str, RuntimeProfile] = {
            node_id: run.profile for node_id, run in node_runs.items()
        }
        supported_xai = sorted(
            {p.technique for run in node_runs.values() for p in run.xai if p.supported}
        )
        record = ServiceRecord(
            service_uri=uri,
            model_id=card.model_id,
            task_info=TaskInfo(
                task_category=card.task_category,
                task_detail=card.task_detail,
                revised_task_detail=artifacts.revised_task_detail,
                accuracy=[AccuracyEntry(**row) for row in card.accuracy_rows],
            ),
            storage_size_bytes=image.size_bytes,
            billing=billing,
            profiles=profiles,
            coop_capable=any(run.profile.coop_profiles for run in node_runs.values()),
            xai_techniques=supported_xai,
            provenance=Provenance(
                generated_at=utcnow(),
                provider_name=provider.name,
                loc_report=loc_report,
            ),
        )

        if store is None:
            store = RegistryStore(
                config.registry_dir, known_nodes={n.node_id: n for n in config.nodes}
            )
        store.publish_record(record)
        verification = store.verify_record(uri, verifier="pipeline")
        run_dirs = {
            node_id: _write_run_report(config.runs_dir, uri, run)
            for node_id, run in node_runs.items()
        }
    except Exception as exc:
        raise PhaseError("publication", exc) from exc
    timings["publication"] = time.perf_counter() - t0

    return PipelineResult(
        record=record,
        verification=verification,
        image=image,
        card=card,
        artifacts=artifacts,
        node_runs=node_runs,
        context_dir=context_dir,
        run_dirs=run_dirs,
        phase_seconds=timings,
        compile_skipped=skipped,
        billing_derived=billing_derived,
    )


def loc_table(store: RegistryStore) -> list[dict]:
    """One row per service plus a totals row; empty registry yields no rows."""
    rows = []
    totals = {"loc_common": 0, "loc_generated": 0, "loc_manual": 0}
    for record in store.list_records():
        loc: LocReport = record.provenance.loc_report
        rows.append(
            {
                "service_uri": record.service_uri,
                "loc_common": loc.loc_common,
                "loc_generated": loc.loc_generated,
                "loc_manual": loc.loc_manual,
            }
        )
        for key in totals:
            totals[key] += getattr(loc, key)
    if rows:
        rows.append({"service_uri": "TOTAL", **totals})
    return rows
