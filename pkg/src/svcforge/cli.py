"""Command-line driver for the service toolchain.

Subcommands mirror the pipeline phases (compile, validate, publish,
pipeline) plus registry access (search, report loc, serve).  Every command
prints human-readable text by default and machine JSON with --json.

Exit codes: 0 ok, 2 configuration error, 3 compilation failure,
4 validation failure, 5 publish failure.
"""

from __future__ import annotations

import configparser
import json
import sys
from pathlib import Path

import click
import httpx

from svcforge.attributes import BillingProfile, NodeSpec, ServiceRecord
from svcforge.codegen import (
    GenerationError,
    count_loc,
    load_common_base,
)
from svcforge.engines import DockerEngine, EngineError, MockEngine, MockServiceParams
from svcforge.model_cards import ModelCardError, load_document, parse_model_card
from svcforge.pipeline import (
    ConfigError,
    PhaseError,
    PipelineConfig,
    compile_service,
    loc_table,
    make_provider,
    run_pipeline,
)
from svcforge.registry import PublishRejectedError, RegistryStore
from svcforge.validator import (
    ValidationPhaseError,
    WorkloadSpec,
    validate_service_on_node,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPILE = 3
EXIT_VALIDATE = 4
EXIT_PUBLISH = 5


def _parse_int_list(raw: str) -> list[int]:
    return [int(item) for item in raw.split(",") if item.strip()]


def _parse_str_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def load_nodes_file(path: Path) -> list[NodeSpec]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return [NodeSpec.model_validate(item) for item in data]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load nodes file {path}: {exc}") from exc


def load_pipeline_config(path: Path | None, overrides: dict) -> PipelineConfig:
    """Build a PipelineConfig from an INI-style file plus CLI overrides."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")

    section = parser["pipeline"] if parser.has_section("pipeline") else {}

    def setting(key: str, default=None):
        if overrides.get(key) is not None:
            return overrides[key]
        return section.get(key, default)

    card = setting("card")
    if not card:
        raise ConfigError("a card locator is required (config [pipeline] card or --card)")

    nodes_file = setting("nodes_file")
    if not nodes_file:
        raise ConfigError("a nodes file is required (config [pipeline] nodes_file or --nodes-file)")
    nodes = load_nodes_file(Path(nodes_file))

    workload_section = parser["workload"] if parser.has_section("workload") else {}
    workload_kwargs: dict = {
        "concurrency": int(workload_section.get("concurrency", 2)),
        "payload_generator": workload_section.get("payload_generator", "toy-vector"),
        "seed": int(overrides.get("seed") or workload_section.get("seed", 0)),
    }
    if workload_section.get("duration_s"):
        workload_kwargs["duration_s"] = float(workload_section["duration_s"])
    else:
        workload_kwargs["total_requests"] = int(workload_section.get("total_requests", 20))
    if workload_section.get("warmup_requests"):
        workload_kwargs["warmup_requests"] = int(workload_section["warmup_requests"])

    billing = None
    if parser.has_section("billing"):
        billing_section = parser["billing"]
        billing = BillingProfile(
            init_cost_credits=float(billing_section.get("init_cost_credits", 0)),
            keepalive_credits_per_s=float(billing_section.get("keepalive_credits_per_s", 0)),
            exec_cost_credits=float(billing_section.get("exec_cost_credits", 0)),
        )

    mock_params = MockServiceParams()
    if parser.has_section("mock"):
        mock_section = dict(parser["mock"])
        kwargs = {}
        for key in (
            "work_ms_at_1ghz",
            "boot_ms",
            "eviction_ms",
            "memory_footprint_mb",
            "image_size_mb",
            "contention_coeff",
        ):
            if key in mock_section:
                kwargs[key] = float(mock_section.pop(key))
        if "layer_count" in mock_section:
            kwargs["layer_count"] = int(mock_section.pop("layer_count"))
        if "xai_footprints" in mock_section:
            footprints = {}
            for pair in _parse_str_list(mock_section.pop("xai_footprints")):
                name, _, value = pair.partition(":")
                footprints[name] = float(value)
            kwargs["xai_footprints_mb"] = footprints
        mock_params = MockServiceParams(**kwargs)

    try:
        return PipelineConfig(
            card_locator=card,
            provider=setting("provider", "template"),
            engine=setting("engine", "mock"),
            nodes=nodes,
            workload=WorkloadSpec(**workload_kwargs),
            splits=_parse_int_list(setting("splits", "") or ""),
            xai_techniques=_parse_str_list(setting("xai", "") or ""),
            billing=billing,
            repo=setting("repo", "my-service-repo"),
            image_tag=setting("tag", "latest"),
            out_dir=Path(setting("out_dir", "out")),
            registry_dir=Path(setting("registry_dir", "registry")),
            runs_dir=Path(setting("runs_dir", "runs")),
            parallel=int(setting("parallel", 2)),
            mock_params=mock_params,
            idle_sample_s=float(setting("idle_sample_s", 5.0)),
            health_timeout_s=float(setting("health_timeout_s", 120.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@click.group()
def cli():
    """Package AI models as services, profile them per node, publish them."""


@cli.command("compile")
@click.option("--card", required=True, help="Card locator (file: or http(s):).")
@click.option("--provider", default="template", type=click.Choice(["template", "remote"]))
@click.option("--out", "out_dir", default="out", type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def compile_cmd(card: str, provider: str, out_dir: Path, as_json: bool):
    """Generate service artifacts from a model card."""
    config = PipelineConfig(
        card_locator=card,
        provider=provider,
        nodes=[NodeSpec(node_id="unused", cpu_freq_ghz=1.0, cpu_cores=1)],
        out_dir=out_dir,
    )
    provider_impl = make_provider(config)
    card_text = load_document(card)
    parsed = parse_model_card(card_text, locator=card)
    artifacts, context_dir, skipped = compile_service(card_text, parsed, provider_impl, out_dir)
    loc = count_loc(load_common_base(), artifacts, {})
    payload = {
        "model_id": parsed.model_id,
        "context_dir": str(context_dir),
        "generated_files": sorted(artifacts.files),
        "skipped": skipped,
        "loc_common": loc.loc_common,
        "loc_generated": loc.loc_generated,
    }
    if as_json:
        click.echo(json.dumps(payload, indent=2))
    else:
        state = "reused (unchanged inputs)" if skipped else "generated"
        click.echo(f"{state}: {context_dir} ({', '.join(payload['generated_files'])})")


@cli.command("validate")
@click.option("--image", "image_tag", required=True, help="Image tag to profile.")
@click.option("--context", type=click.Path(path_type=Path), help="Build context (required for mock).")
@click.option("--node", "node_ids", required=True, help="Comma-separated node ids.")
@click.option("--nodes-file", required=True, type=click.Path(path_type=Path))
@click.option("--engine", default="mock", type=click.Choice(["mock", "real"]))
@click.option("--concurrency", default=2, type=int)
@click.option("--requests", "total_requests", default=20, type=int)
@click.option("--splits", default="", help="Comma-separated split points.")
@click.option("--xai", default="", help="Comma-separated technique names.")
@click.option("--seed", default=0, type=int)
@click.option("--runs-dir", default="runs", type=click.Path(path_type=Path))
@click.option("--idle-sample-s", default=5.0, type=float)
@click.option("--json", "as_json", is_flag=True)
def validate_cmd(
    image_tag: str,
    context: Path | None,
    node_ids: str,
    nodes_file: Path,
    engine: str,
    concurrency: int,
    total_requests: int,
    splits: str,
    xai: str,
    seed: int,
    runs_dir: Path,
    idle_sample_s: float,
    as_json: bool,
):
    """Deploy and profile an image on the named nodes."""
    nodes = {n.node_id: n for n in load_nodes_file(nodes_file)}
    wanted = _parse_str_list(node_ids)
    missing = [n for n in wanted if n not in nodes]
    if missing:
        raise ConfigError(f"unknown node ids: {missing}")

    if engine == "mock":
        engine_impl = MockEngine(nodes)
        if context is None:
            raise ConfigError("--context is required with the mock engine")
        image = engine_impl.build_image(context, image_tag)
    else:
        from svcforge.engines import ImageRef

        engine_impl = DockerEngine()
        if context is not None:
            image = engine_impl.build_image(context, image_tag)
        else:  # image built or pulled previously
            image = ImageRef(tag=image_tag, size_bytes=engine_impl.image_size(image_tag))

    workload = WorkloadSpec(concurrency=concurrency, total_requests=total_requests, seed=seed)
    from svcforge.pipeline import _write_run_report

    results = {}
    for node_id in wanted:
        run = validate_service_on_node(
            engine_impl,
            image,
            nodes[node_id],
            workload,
            splits=_parse_int_list(splits),
            xai_techniques=_parse_str_list(xai),
            idle_sample_s=idle_sample_s,
        )
        run_dir = _write_run_report(runs_dir, image_tag, run)
        results[node_id] = (run, run_dir)

    if as_json:
        click.echo(
            json.dumps(
                {
                    node_id: {
                        "profile": run.profile.model_dump(mode="json"),
                        "report_dir": str(run_dir),
                    }
                    for node_id, (run, run_dir) in results.items()
                },
                indent=2,
            )
        )
    else:
        for node_id, (run, run_dir) in results.items():
            latency = run.profile.latency
            click.echo(
                f"{node_id}: p50={latency.inference_ms.p50:.1f}ms "
                f"init={latency.init_ms:.0f}ms evict={latency.eviction_ms:.0f}ms "
                f"coop={len(run.profile.coop_profiles)} "
                f"xai={sum(1 for p in run.profile.xai_profiles if p.supported)}"
                f"/{len(run.profile.xai_profiles)} -> {run_dir}"
            )


@cli.command("publish")
@click.option("--record", "record_path", required=True, type=click.Path(path_type=Path))
@click.option("--registry", "registry_dir", default="registry", type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def publish_cmd(record_path: Path, registry_dir: Path, as_json: bool):
    """Publish a service record JSON file into the registry."""
    try:
        record = ServiceRecord.model_validate_json(record_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read record {record_path}: {exc}") from exc
    store = RegistryStore(registry_dir)
    uri = store.publish_record(record)
    report = store.verify_record(uri, verifier="cli")
    if as_json:
        click.echo(
            json.dumps(
                {"service_uri": uri, "verification": report.model_dump(mode="json")}, indent=2
            )
        )
    else:
        status = "all checks green" if report.passed else "checks FAILED"
        click.echo(f"published {uri} ({status})")


@cli.command("pipeline")
@click.option("--config", "config_path", type=click.Path(path_type=Path))
@click.option("--card", default=None)
@click.option("--provider", default=None, type=click.Choice(["template", "remote"]))
@click.option("--engine", default=None, type=click.Choice(["mock", "real"]))
@click.option("--nodes-file", "nodes_file", default=None)
@click.option("--registry", "registry_dir", default=None)
@click.option("--out", "out_dir", default=None)
@click.option("--parallel", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--json", "as_json", is_flag=True)
def pipeline_cmd(config_path, card, provider, engine, nodes_file, registry_dir, out_dir, parallel, seed, as_json):
    """Run the whole pipeline: compile, validate on all nodes, publish."""
    overrides = {
        "card": card,
        "provider": provider,
        "engine": engine,
        "nodes_file": nodes_file,
        "registry_dir": registry_dir,
        "out_dir": out_dir,
        "parallel": parallel,
        "seed": seed,
    }
    config = load_pipeline_config(config_path, overrides)
    result = run_pipeline(config)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "service_uri": result.record.service_uri,
                    "profiles": sorted(result.record.profiles),
                    "verification_passed": result.verification.passed,
                    "compile_skipped": result.compile_skipped,
                    "billing_derived": result.billing_derived,
                    "phase_seconds": result.phase_seconds,
                    "record": result.record.model_dump(mode="json"),
                },
                indent=2,
            )
        )
    else:
        record = result.record
        click.echo(f"published {record.service_uri}")
        for node_id in sorted(record.profiles):
            profile = record.profiles[node_id]
            click.echo(
                f"  {node_id}: p50={profile.latency.inference_ms.p50:.1f}ms "
                f"init={profile.latency.init_ms:.0f}ms"
            )
        click.echo(
            "  verification: " + ("all checks green" if result.verification.passed else "FAILED")
        )
        for phase, seconds in result.phase_seconds.items():
            click.echo(f"  {phase}: {seconds:.1f}s")


@cli.command("search")
@click.option("-q", "--query", required=True)
@click.option("-k", default=5, type=int)
@click.option("--registry", "registry_dir", default="registry", type=click.Path(path_type=Path))
@click.option("--server", default=None, help="Query a running registry API instead.")
@click.option("--json", "as_json", is_flag=True)
def search_cmd(query: str, k: int, registry_dir: Path, server: str | None, as_json: bool):
    """Semantic search over published services."""
    if server:
        response = httpx.get(f"{server}/search", params={"q": query, "k": k}, timeout=10.0)
        response.raise_for_status()
        hits = [(hit["service_uri"], hit["score"]) for hit in response.json()]
    else:
        store = RegistryStore(registry_dir)
        hits = store.semantic_search(query, k)
    if as_json:
        click.echo(json.dumps([{"service_uri": uri, "score": score} for uri, score in hits]))
    else:
        if not hits:
            click.echo("no results")
        for rank, (uri, score) in enumerate(hits, start=1):
            click.echo(f"{rank}. {uri} ({score:.3f})")


@cli.group("report")
def report_group():
    """Reports over the registry."""


@report_group.command("loc")
@click.option("--registry", "registry_dir", default="registry", type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def report_loc_cmd(registry_dir: Path, as_json: bool):
    """Lines-of-code accounting per published service."""
    store = RegistryStore(registry_dir)
    rows = loc_table(store)
    if as_json:
        click.echo(json.dumps(rows, indent=2))
        return
    header = f"{'service':<46} {'common':>8} {'generated':>10} {'manual':>8}"
    click.echo(header)
    click.echo("-" * len(header))
    for row in rows:
        click.echo(
            f"{row['service_uri']:<46} {row['loc_common']:>8} "
            f"{row['loc_generated']:>10} {row['loc_manual']:>8}"
        )


@cli.command("serve")
@click.option("--addr", default="127.0.0.1:8400")
@click.option("--registry", "registry_dir", default="registry", type=click.Path(path_type=Path))
def serve_cmd(addr: str, registry_dir: Path):
    """Serve the registry API until interrupted."""
    from svcforge.api import serve

    store = RegistryStore(registry_dir)
    serve(addr, store)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as exc:
        exc.show()
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except PhaseError as exc:
        click.echo(f"error: {exc}", err=True)
        return {
            "compilation": EXIT_COMPILE,
            "validation": EXIT_VALIDATE,
            "publication": EXIT_PUBLISH,
        }.get(exc.phase, 1)
    except (ModelCardError, GenerationError) as exc:
        click.echo(f"compilation error: {exc}", err=True)
        return EXIT_COMPILE
    except (EngineError, ValidationPhaseError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        return EXIT_VALIDATE
    except PublishRejectedError as exc:
        click.echo(f"publish error: {exc}", err=True)
        return EXIT_PUBLISH


if __name__ == "__main__":
    sys.exit(main())
