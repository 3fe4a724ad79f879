"""Uniform container lifecycle interface with two implementations.

MockEngine simulates a node fleet entirely in-process while serving a real
HTTP service per container on a local port, so the whole profiling pipeline
runs hermetically.  DockerEngine drives an OCI-compatible daemon over its
REST API.  Both satisfy the same contract and are exercised by the same test
suite (the daemon tier skips when none is configured).
"""

from __future__ import annotations

from typing import Protocol

from pydantic import BaseModel, ConfigDict

from svcforge.attributes import SERVICE_URI_PATTERN, NodeSpec


class EngineError(Exception):
    """Base class for container engine failures."""


class BuildError(EngineError):
    def __init__(self, message: str, log: str = ""):
        super().__init__(message)
        self.log = log


class InvalidTagError(EngineError):
    pass


class ImageNotFoundError(EngineError):
    pass


class UnknownNodeError(EngineError):
    pass


class UnknownHandleError(EngineError):
    pass


class InsufficientNodeMemoryError(EngineError):
    pass


class ImageRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: str
    size_bytes: int


class ContainerHandle(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    node_id: str
    endpoint: str  # host:port
    started_at: float  # unix seconds

    @property
    def url(self) -> str:
        return f"http://{self.endpoint}"


class StatsSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float  # unix seconds
    cpu_time_total_ms: float
    mem_rss_mb: float
    device_mem_mb: float = 0.0
    blk_read_bytes: int = 0
    blk_write_bytes: int = 0
    cpu_util: float = 0.0  # fraction of node capacity, [0, 1]


class ContainerEngine(Protocol):
    """Lifecycle contract shared by the mock and the daemon-backed engine."""

    def build_image(self, context_dir, tag: str) -> ImageRef: ...

    def start_container(self, image: ImageRef | str, node: NodeSpec) -> ContainerHandle: ...

    def sample_stats(self, handle: ContainerHandle) -> StatsSample: ...

    def image_size(self, tag: str) -> int: ...

    def stop_and_remove(self, handle: ContainerHandle) -> float: ...

    def logs(self, handle: ContainerHandle) -> str: ...


def check_tag(tag: str) -> None:
    if not SERVICE_URI_PATTERN.match(tag):
        raise InvalidTagError(f"invalid image tag: {tag!r}")


from svcforge.engines.mock import MockEngine, MockServiceParams  # noqa: E402
from svcforge.engines.docker import DockerEngine  # noqa: E402

__all__ = [
    "BuildError",
    "ContainerEngine",
    "ContainerHandle",
    "DockerEngine",
    "EngineError",
    "ImageNotFoundError",
    "ImageRef",
    "InsufficientNodeMemoryError",
    "InvalidTagError",
    "MockEngine",
    "MockServiceParams",
    "StatsSample",
    "UnknownHandleError",
    "UnknownNodeError",
    "check_tag",
]
