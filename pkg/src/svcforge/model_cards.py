"""Model documentation ingestion: fetch a model card and parse it into
structured metadata.

The card format mirrors the de-facto convention on public model hubs: a
``key: value`` frontmatter block between two ``---`` lines, followed by a
markdown body.  ``pipeline_tag`` supplies the task category, the first prose
paragraph the task detail, fenced code blocks become usage samples and a
table whose header mentions "metric" becomes accuracy rows.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

import httpx
from pydantic import BaseModel, ConfigDict

from svcforge.attributes import DEFAULT_TASK_VOCABULARY

logger = logging.getLogger(__name__)

HTTP_TIMEOUT_S = 30.0
MAX_REDIRECTS = 5

_FENCE_RE = re.compile(r"^```")
_HEADING_RE = re.compile(r"^#{1,6}\s")


class ModelCardError(Exception):
    """The document could not be fetched or is not a parseable model card."""


class ModelCard(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_id: str
    task_category: str
    task_detail: str
    code_samples: list[str] = []
    accuracy_rows: list[dict] = []
    raw_text: str = ""


def load_document(source: str, timeout_s: float = HTTP_TIMEOUT_S) -> str:
    """Fetch a card as UTF-8 text from a ``file:`` path or ``http(s):`` URL."""
    if source.startswith("file:"):
        path = Path(source[len("file:") :])
        if not path.exists():
            raise ModelCardError(f"document not found: {path}")
        try:
            text = path.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelCardError(f"document is not UTF-8: {path}") from exc
    elif source.startswith(("http://", "https://")):
        try:
            with httpx.Client(
                timeout=timeout_s, follow_redirects=True, max_redirects=MAX_REDIRECTS
            ) as client:
                response = client.get(source)
            response.raise_for_status()
        except httpx.TimeoutException as exc:
            raise ModelCardError(f"timed out fetching {source}") from exc
        except httpx.HTTPError as exc:
            raise ModelCardError(f"failed to fetch {source}: {exc}") from exc
        try:
            text = response.content.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelCardError(f"document is not UTF-8: {source}") from exc
    else:
        raise ModelCardError(f"unsupported locator (use file: or http(s):): {source}")

    if not text.strip():
        raise ModelCardError(f"document is empty: {source}")
    return text


def _split_frontmatter(text: str) -> tuple[dict[str, str], str]:
    lines = text.splitlines()
    i = 0
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i >= len(lines) or lines[i].strip() != "---":
        raise ModelCardError("missing frontmatter delimiter")
    meta: dict[str, str] = {}
    j = i + 1
    while j < len(lines) and lines[j].strip() != "---":
        line = lines[j].strip()
        if line and ":" in line:
            key, _, value = line.partition(":")
            meta[key.strip()] = value.strip()
        j += 1
    if j >= len(lines):
        raise ModelCardError("unterminated frontmatter block")
    body = "\n".join(lines[j + 1 :])
    return meta, body


def _extract_code_samples(body: str) -> list[str]:
    samples: list[str] = []
    current: list[str] | None = None
    for line in body.splitlines():
        if _FENCE_RE.match(line.strip()):
            if current is None:
                current = []
            else:
                samples.append("\n".join(current))
                current = None
            continue
        if current is not None:
            current.append(line)
    return samples


def _first_prose_paragraph(body: str) -> str:
    paragraph: list[str] = []
    in_fence = False
    for line in body.splitlines():
        stripped = line.strip()
        if _FENCE_RE.match(stripped):
            in_fence = not in_fence
            continue
        if in_fence:
            continue
        if not stripped or _HEADING_RE.match(stripped) or stripped.startswith("|"):
            if paragraph:
                break
            continue
        paragraph.append(stripped)
    return " ".join(paragraph)


def _parse_accuracy_table(body: str) -> list[dict]:
    """Parse the first markdown table whose header mentions "metric"."""
    lines = [line.strip() for line in body.splitlines()]
    for i, line in enumerate(lines):
        if not (line.startswith("|") and "metric" in line.lower()):
            continue
        header = [cell.strip().lower() for cell in line.strip("|").split("|")]
        rows: list[dict] = []
        for row_line in lines[i + 1 :]:
            if not row_line.startswith("|"):
                break
            cells = [cell.strip() for cell in row_line.strip("|").split("|")]
            if all(set(cell) <= set("-: ") for cell in cells):
                continue  # separator row
            row = dict(zip(header, cells))
            metric = row.get("metric", "")
            raw_value = row.get("value", "")
            try:
                value = float(raw_value)
            except ValueError:
                continue
            rows.append(
                {
                    "benchmark_name": row.get("benchmark", row.get("dataset", "")),
                    "metric_name": metric,
                    "value": value,
                }
            )
        return rows
    return []


def parse_model_card(text: str, locator: str | None = None) -> ModelCard:
    """Parse card text into a ModelCard; deterministic for identical input.

    The model id comes from the ``model_id`` frontmatter key when present,
    otherwise from the locator's last two path segments.
    """
    if not text.strip():
        raise ModelCardError("empty card text")
    meta, body = _split_frontmatter(text)

    if "pipeline_tag" not in meta:
        raise ModelCardError("frontmatter has no pipeline_tag")
    task_category = meta["pipeline_tag"]

    if not body.strip():
        raise ModelCardError("card body is empty")

    task_detail = _first_prose_paragraph(body)
    if not task_detail:
        raise ModelCardError("card body has no prose section")

    model_id = meta.get("model_id", "")
    if not model_id and locator:
        segments = [s for s in locator.split("/") if s]
        tail = segments[-2:] if len(segments) >= 2 else segments
        model_id = "/".join(tail)
        if model_id.endswith(".md"):
            model_id = model_id[: -len(".md")]
    if not model_id:
        raise ModelCardError("cannot determine model_id (no frontmatter key, no locator)")

    for category in DEFAULT_TASK_VOCABULARY:
        if category != task_category and category.replace("-", " ") in task_detail.lower():
            logger.warning(
                "card prose mentions %r but frontmatter declares %r", category, task_category
            )

    return ModelCard(
        model_id=model_id,
        task_category=task_category,
        task_detail=task_detail,
        code_samples=_extract_code_samples(body),
        accuracy_rows=_parse_accuracy_table(body),
        raw_text=text,
    )
