"""Container daemon client speaking the engine REST API directly.

Talks to the daemon over its local unix socket (default) or TCP, covering
exactly what the profiling pipeline needs: tar-context image builds,
create/start/stop/remove, one-shot stats and log retrieval.  Device (GPU)
stats come from an optional pluggable source; without one, device fields
stay 0.
"""

from __future__ import annotations

import io
import json
import os
import tarfile
import time
import urllib.parse
from pathlib import Path
from typing import Callable

import httpx

from svcforge.attributes import NodeSpec
from svcforge.engines import (
    BuildError,
    ContainerHandle,
    EngineError,
    ImageNotFoundError,
    ImageRef,
    StatsSample,
    UnknownHandleError,
    check_tag,
)

DOCKER_HOST_ENV = "SVCFORGE_DOCKER_HOST"
DEFAULT_SOCKET = "unix:///var/run/docker.sock"

# Returns (device_mem_mb, device_util) for the node's accelerator.
DeviceStatsSource = Callable[[], tuple[float, float]]


def daemon_host() -> str:
    return os.environ.get(DOCKER_HOST_ENV, DEFAULT_SOCKET)


def daemon_available(host: str | None = None) -> bool:
    try:
        engine = DockerEngine(host=host)
        engine._get("/_ping")
        return True
    except (EngineError, httpx.HTTPError, OSError):
        return False


class DockerEngine:
    def __init__(
        self,
        host: str | None = None,
        service_port: int = 8080,
        env: dict[str, str] | None = None,
        memory_limit_bytes: int | None = None,
        device_stats_source: DeviceStatsSource | None = None,
        timeout_s: float = 60.0,
    ):
        host = host or daemon_host()
        if host.startswith("unix://"):
            transport = httpx.HTTPTransport(uds=host[len("unix://") :])
            base_url = "http://docker"
        else:
            transport = httpx.HTTPTransport()
            base_url = host if host.startswith("http") else f"http://{host}"
        self._client = httpx.Client(base_url=base_url, transport=transport, timeout=timeout_s)
        self.service_port = service_port
        self.env = dict(env or {})
        self.memory_limit_bytes = memory_limit_bytes
        self.device_stats_source = device_stats_source

    # -- plumbing ----------------------------------------------------------

    def _get(self, path: str, **kwargs) -> httpx.Response:
        response = self._client.get(path, **kwargs)
        if response.status_code == 404:
            raise ImageNotFoundError(path)
        response.raise_for_status()
        return response

    def _post(self, path: str, **kwargs) -> httpx.Response:
        response = self._client.post(path, **kwargs)
        if response.status_code >= 400:
            raise EngineError(f"POST {path} -> {response.status_code}: {response.text[:500]}")
        return response

    @staticmethod
    def _tar_context(context_dir: Path) -> bytes:
        buffer = io.BytesIO()
        with tarfile.open(fileobj=buffer, mode="w") as tar:
            for path in sorted(context_dir.rglob("*")):
                tar.add(path, arcname=str(path.relative_to(context_dir)))
        return buffer.getvalue()

    # -- engine contract ---------------------------------------------------

    def build_image(self, context_dir, tag: str) -> ImageRef:
        check_tag(tag)
        context = Path(context_dir)
        if not (context / "Dockerfile").exists():
            raise BuildError(f"no build instructions in {context}")
        params = urllib.parse.urlencode({"t": tag})
        response = self._client.post(
            f"/build?{params}",
            content=self._tar_context(context),
            headers={"Content-Type": "application/x-tar"},
            timeout=600.0,
        )
        log_lines = []
        for line in response.text.splitlines():
            try:
                event = json.loads(line)
            except ValueError:
                continue
            if "stream" in event:
                log_lines.append(event["stream"])
            if "error" in event:
                raise BuildError(event["error"], log="".join(log_lines))
        if response.status_code >= 400:
            raise BuildError(f"build failed: {response.status_code}", log="".join(log_lines))
        return ImageRef(tag=tag, size_bytes=self.image_size(tag))

    def image_size(self, tag: str) -> int:
        quoted = urllib.parse.quote(tag, safe="")
        data = self._get(f"/images/{quoted}/json").json()
        return int(data["Size"])

    def start_container(self, image: ImageRef | str, node: NodeSpec) -> ContainerHandle:
        tag = image if isinstance(image, str) else image.tag
        host_config: dict = {"PublishAllPorts": True}
        if self.memory_limit_bytes:
            host_config["Memory"] = self.memory_limit_bytes
        body = {
            "Image": tag,
            "Env": [f"{k}={v}" for k, v in self.env.items()],
            "ExposedPorts": {f"{self.service_port}/tcp": {}},
            "HostConfig": host_config,
        }
        created = self._post("/containers/create", json=body).json()
        container_id = created["Id"]
        self._post(f"/containers/{container_id}/start")

        inspect = self._get(f"/containers/{container_id}/json").json()
        ports = inspect["NetworkSettings"]["Ports"] or {}
        bindings = ports.get(f"{self.service_port}/tcp") or []
        if not bindings:
            raise EngineError(f"container {container_id[:12]} published no ports")
        host_port = bindings[0]["HostPort"]
        return ContainerHandle(
            id=container_id,
            node_id=node.node_id,
            endpoint=f"127.0.0.1:{host_port}",
            started_at=time.time(),
        )

    def sample_stats(self, handle: ContainerHandle) -> StatsSample:
        try:
            data = self._get(f"/containers/{handle.id}/stats", params={"stream": "false"}).json()
        except ImageNotFoundError:
            raise UnknownHandleError(handle.id)
        cpu = data.get("cpu_stats", {})
        precpu = data.get("precpu_stats", {})
        cpu_total_ns = cpu.get("cpu_usage", {}).get("total_usage", 0)
        cpu_delta = cpu_total_ns - precpu.get("cpu_usage", {}).get("total_usage", 0)
        system_delta = cpu.get("system_cpu_usage", 0) - precpu.get("system_cpu_usage", 0)
        cpu_util = max(0.0, min(1.0, cpu_delta / system_delta)) if system_delta > 0 else 0.0

        memory = data.get("memory_stats", {})
        blk_read = blk_write = 0
        for entry in (data.get("blkio_stats", {}) or {}).get("io_service_bytes_recursive") or []:
            if entry.get("op", "").lower() == "read":
                blk_read += entry.get("value", 0)
            elif entry.get("op", "").lower() == "write":
                blk_write += entry.get("value", 0)

        device_mem_mb = 0.0
        if self.device_stats_source is not None:
            device_mem_mb, _ = self.device_stats_source()

        return StatsSample(
            t=time.time(),
            cpu_time_total_ms=cpu_total_ns / 1e6,
            mem_rss_mb=memory.get("usage", 0) / (1 << 20),
            device_mem_mb=device_mem_mb,
            blk_read_bytes=blk_read,
            blk_write_bytes=blk_write,
            cpu_util=cpu_util,
        )

    def stop_and_remove(self, handle: ContainerHandle) -> float:
        t0 = time.perf_counter()
        try:
            self._post(f"/containers/{handle.id}/stop", params={"t": 2})
            response = self._client.delete(f"/containers/{handle.id}", params={"v": "true"})
            if response.status_code >= 400 and response.status_code != 404:
                raise EngineError(f"remove failed: {response.status_code}")
        except httpx.HTTPError as exc:
            raise EngineError(f"stop/remove transport failure: {exc}") from exc
        return (time.perf_counter() - t0) * 1000.0

    def logs(self, handle: ContainerHandle) -> str:
        response = self._client.get(
            f"/containers/{handle.id}/logs", params={"stdout": "true", "stderr": "true"}
        )
        if response.status_code >= 400:
            return ""
        raw = response.content
        # Non-TTY log streams are framed: 8-byte header per chunk.
        chunks = []
        view = memoryview(raw)
        while len(view) >= 8 and view[0] in (0, 1, 2):
            size = int.from_bytes(view[4:8], "big")
            chunks.append(bytes(view[8 : 8 + size]))
            view = view[8 + size :]
        if chunks:
            return b"".join(chunks).decode("utf-8", errors="replace")
        return raw.decode("utf-8", errors="replace")
