"""Service code generation: turn a parsed model card into deployable service
artifacts layered on the shared common code base.

Two completion providers share one contract: the built-in template provider
renders artifacts deterministically offline, and the remote provider speaks
the ubiquitous chat-completion HTTP shape (bearer token, messages, first
choice).  Whatever produced the text, the artifacts are validated
structurally before they are accepted; one repair retry is attempted with the
violations appended to the prompt.

The module also owns the lines-of-code accounting that splits a finished
service tree into common, generated and manually revised lines.
"""

from __future__ import annotations

import difflib
import json
import os
import re
import time
from importlib import resources
from pathlib import Path
from string import Template
from typing import Protocol

import httpx
from pydantic import BaseModel, ConfigDict

from svcforge.attributes import LocReport
from svcforge.model_cards import ModelCard

LLM_URL_ENV = "SVCFORGE_LLM_URL"
LLM_TOKEN_ENV = "SVCFORGE_LLM_TOKEN"
LLM_MODEL_ENV = "SVCFORGE_LLM_MODEL"

COMMON_BASE_FILES = ("server.py", "healthcheck.py", "xai_model.py", "toy_model.py")
ADAPTER_FILE = "model.py"
BUILD_FILE = "Dockerfile"
CLIENT_FILE = "client.py"
COMMON_ENTRYPOINT = "server.py"

DEFAULT_COMMENT_PREFIXES = ("#", "//")

_FILE_MARKER = re.compile(r"^===FILE: (.+?)===\s*$")
_SECTION_MARKER = re.compile(r"^===([A-Z_]+)===\s*$")
_CARD_BEGIN = "===CARD_JSON==="
_CARD_END = "===END_CARD_JSON==="

_INPUT_MEDIA_TYPES = {
    "image-classification": "application/json",
    "object-detection": "application/json",
    "depth-estimation": "application/json",
    "text-classification": "application/json",
}

_ADAPTER_TEMPLATES = {
    "image-classification": "adapter_image.py.tmpl",
    "object-detection": "adapter_image.py.tmpl",
    "depth-estimation": "adapter_image.py.tmpl",
    "text-classification": "adapter_text.py.tmpl",
}


class GenerationError(Exception):
    """Artifact generation failed (transport error or invalid output twice)."""


class GeneratedArtifacts(BaseModel):
    model_config = ConfigDict(frozen=True)

    files: dict[str, str]
    revised_task_detail: str = ""
    accuracy_notes: str = ""


class CompletionProvider(Protocol):
    name: str

    def complete(self, system: str, prompt: str, max_tokens: int) -> str: ...


def load_common_base() -> dict[str, str]:
    """The shared files every generated service is layered on."""
    base = resources.files("svcforge.codegen") / "common_base"
    return {name: (base / name).read_text(encoding="utf-8") for name in COMMON_BASE_FILES}


def _template(name: str) -> Template:
    text = (resources.files("svcforge.codegen") / "templates" / name).read_text(encoding="utf-8")
    return Template(text)


def render_from_template(card: ModelCard) -> str:
    """Deterministic offline rendering; fills fixed slots only."""
    template_name = _ADAPTER_TEMPLATES.get(card.task_category)
    if template_name is None:
        raise GenerationError(
            f"no template for task category {card.task_category!r} and no generic fallback"
        )
    slots = {
        "model_id": card.model_id,
        "task_category": card.task_category,
        "input_media_type": _INPUT_MEDIA_TYPES[card.task_category],
    }
    adapter = _template(template_name).substitute(slots)
    dockerfile = _template("dockerfile.tmpl").substitute(slots)
    client = _template("client.py.tmpl").substitute(slots)

    detail = card.task_detail.strip()
    revised = f"{detail} Task category: {card.task_category}. Served by {card.model_id}."
    notes = "; ".join(
        f"{row.get('benchmark_name') or 'unspecified'} {row.get('metric_name')}: {row.get('value')}"
        for row in card.accuracy_rows
    )

    parts = [
        f"===FILE: {ADAPTER_FILE}===",
        adapter,
        f"===FILE: {BUILD_FILE}===",
        dockerfile,
        f"===FILE: {CLIENT_FILE}===",
        client,
        "===REVISED_TASK_DETAIL===",
        revised,
        "===ACCURACY_NOTES===",
        notes,
    ]
    return "\n".join(parts)


class TemplateProvider:
    """Built-in deterministic provider; the offline path of the pipeline."""

    name = "template"

    def complete(self, system: str, prompt: str, max_tokens: int) -> str:
        card = _card_from_prompt(prompt)
        return render_from_template(card)


class RemoteProvider:
    """Chat-completion HTTP provider.

    POSTs {model, messages, max_tokens} to the configured URL with a bearer
    token and returns the first choice's message content.
    """

    def __init__(
        self,
        base_url: str | None = None,
        token: str | None = None,
        model: str | None = None,
        timeout_s: float = 60.0,
        transport_retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url or os.environ.get(LLM_URL_ENV, "")
        self.token = token if token is not None else os.environ.get(LLM_TOKEN_ENV, "")
        self.model = model or os.environ.get(LLM_MODEL_ENV, "")
        self.transport_retries = transport_retries
        if not self.base_url:
            raise GenerationError(f"remote provider needs {LLM_URL_ENV}")
        self.name = f"remote:{self.model or 'default'}"
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def complete(self, system: str, prompt: str, max_tokens: int) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
            "max_tokens": max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.transport_retries):
            try:
                response = self._client.post(self.base_url, json=body, headers=headers)
                response.raise_for_status()
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                time.sleep(0.5 * (attempt + 1))
        raise GenerationError(f"provider transport failed: {last_error}")


_SYSTEM_PROMPT = (
    "You generate service adapter code for a containerized inference service. "
    "All services share a common code base; produce only the model-specific "
    "files. Respond with ===FILE: <name>=== blocks for model.py, Dockerfile "
    "and client.py, then ===REVISED_TASK_DETAIL=== and ===ACCURACY_NOTES=== "
    "sections. The adapter must declare the /infer and /health endpoints and "
    "the Dockerfile must launch the common server.py entrypoint."
)


def build_prompt(card: ModelCard, common_base: dict[str, str]) -> str:
    card_json = json.dumps(
        {
            "model_id": card.model_id,
            "task_category": card.task_category,
            "task_detail": card.task_detail,
            "accuracy_rows": card.accuracy_rows,
        },
        indent=2,
        sort_keys=True,
    )
    lines = [
        "Generate the model-specific service files for this model card.",
        _CARD_BEGIN,
        card_json,
        _CARD_END,
        "",
        "Common code base files (do not regenerate, do not overwrite):",
    ]
    lines += [f"- {name}" for name in sorted(common_base)]
    if card.code_samples:
        lines.append("")
        lines.append("Documentation code samples:")
        for sample in card.code_samples:
            lines += ["```", sample, "```"]
    return "\n".join(lines)


def _card_from_prompt(prompt: str) -> ModelCard:
    try:
        _, _, rest = prompt.partition(_CARD_BEGIN)
        payload, _, _ = rest.partition(_CARD_END)
        data = json.loads(payload)
    except ValueError as exc:
        raise GenerationError("prompt carries no parseable card") from exc
    return ModelCard(
        model_id=data["model_id"],
        task_category=data["task_category"],
        task_detail=data["task_detail"],
        accuracy_rows=data.get("accuracy_rows", []),
    )


def parse_artifact_response(text: str) -> GeneratedArtifacts:
    files: dict[str, str] = {}
    sections: dict[str, str] = {}
    current_key: tuple[str, str] | None = None
    buffer: list[str] = []

    def flush():
        if current_key is None:
            return
        kind, name = current_key
        content = "\n".join(buffer).strip("\n")
        if kind == "file":
            files[name] = content + "\n"
        else:
            sections[name] = content

    for line in text.splitlines():
        file_match = _FILE_MARKER.match(line)
        section_match = _SECTION_MARKER.match(line)
        if file_match:
            flush()
            current_key = ("file", file_match.group(1).strip())
            buffer = []
        elif section_match:
            flush()
            current_key = ("section", section_match.group(1))
            buffer = []
        elif current_key is not None:
            buffer.append(line)
    flush()

    return GeneratedArtifacts(
        files=files,
        revised_task_detail=sections.get("REVISED_TASK_DETAIL", ""),
        accuracy_notes=sections.get("ACCURACY_NOTES", ""),
    )


def validate_artifacts(artifacts: GeneratedArtifacts, common_base: dict[str, str]) -> list[str]:
    """Structural checks on generated output; returns human-readable violations."""
    violations: list[str] = []
    if not artifacts.files:
        violations.append("provider returned no files")
        return violations
    overlap = set(artifacts.files) & set(common_base)
    if overlap:
        violations.append(f"generated files must not overwrite common base: {sorted(overlap)}")
    adapter = artifacts.files.get(ADAPTER_FILE)
    if adapter is None:
        violations.append(f"missing model adapter {ADAPTER_FILE}")
    else:
        for endpoint in ("/infer", "/health"):
            if endpoint not in adapter:
                violations.append(f"adapter does not declare endpoint {endpoint}")
    build = artifacts.files.get(BUILD_FILE)
    if build is None:
        violations.append(f"missing build instructions {BUILD_FILE}")
    elif COMMON_ENTRYPOINT not in build:
        violations.append(f"build instructions do not reference {COMMON_ENTRYPOINT}")
    if CLIENT_FILE not in artifacts.files:
        violations.append(f"missing client script {CLIENT_FILE}")
    return violations


def generate_artifacts(
    card: ModelCard,
    common_base: dict[str, str],
    provider: CompletionProvider,
    max_tokens: int = 4096,
) -> GeneratedArtifacts:
    """Produce validated service artifacts for a card via the given provider.

    Invalid provider output gets one repair attempt with the violations
    appended to the prompt; a second failure raises GenerationError.
    """
    prompt = build_prompt(card, common_base)
    violations: list[str] = []
    for attempt in range(2):
        attempt_prompt = prompt
        if violations:
            attempt_prompt += "\n\nYour previous output was rejected:\n" + "\n".join(
                f"- {v}" for v in violations
            )
        text = provider.complete(_SYSTEM_PROMPT, attempt_prompt, max_tokens)
        if not text.strip():
            violations = ["provider returned empty output"]
            continue
        artifacts = parse_artifact_response(text)
        violations = validate_artifacts(artifacts, common_base)
        if not violations:
            return artifacts
    raise GenerationError("generation failed after retry: " + "; ".join(violations))


def write_artifact_tree(
    out_dir: Path, common_base: dict[str, str], artifacts: GeneratedArtifacts
) -> Path:
    """Materialize common base + generated files as a buildable context dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, content in {**common_base, **artifacts.files}.items():
        target = out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")
    return out_dir


# ---------------------------------------------------------------------------
# Lines-of-code accounting
# ---------------------------------------------------------------------------


def _prefixes_for(path: str, comment_prefixes: dict[str, tuple[str, ...]] | None) -> tuple[str, ...]:
    if comment_prefixes:
        ext = Path(path).suffix
        if ext in comment_prefixes:
            return comment_prefixes[ext]
    return DEFAULT_COMMENT_PREFIXES


def code_lines(content: str, prefixes: tuple[str, ...] = DEFAULT_COMMENT_PREFIXES) -> list[str]:
    """Non-blank lines that are not pure comments."""
    kept = []
    for line in content.splitlines():
        stripped = line.strip()
        if not stripped or any(stripped.startswith(p) for p in prefixes):
            continue
        kept.append(line)
    return kept


def count_loc(
    common_base: dict[str, str],
    artifacts: GeneratedArtifacts,
    final_files: dict[str, str],
    comment_prefixes: dict[str, tuple[str, ...]] | None = None,
) -> LocReport:
    """Split a finished service tree into common / generated / manual lines.

    loc_manual counts code lines of final_files that were added or changed
    relative to the generated artifacts (line-wise diff); hand-written new
    files count in full.  Blank and comment lines never count anywhere.
    """
    loc_common = sum(
        len(code_lines(content, _prefixes_for(name, comment_prefixes)))
        for name, content in common_base.items()
    )
    loc_generated = sum(
        len(code_lines(content, _prefixes_for(name, comment_prefixes)))
        for name, content in artifacts.files.items()
    )

    loc_manual = 0
    for name, content in final_files.items():
        prefixes = _prefixes_for(name, comment_prefixes)
        final_code = code_lines(content, prefixes)
        if name in artifacts.files:
            generated_code = code_lines(artifacts.files[name], prefixes)
        elif name in common_base:
            generated_code = code_lines(common_base[name], prefixes)
        else:
            loc_manual += len(final_code)
            continue
        matcher = difflib.SequenceMatcher(a=generated_code, b=final_code, autojunk=False)
        for op, _, _, j1, j2 in matcher.get_opcodes():
            if op in ("replace", "insert"):
                loc_manual += j2 - j1

    return LocReport(loc_common=loc_common, loc_generated=loc_generated, loc_manual=loc_manual)
