"""Hermetic container engine: simulated nodes, real local HTTP services.

Every started "container" is a thread-backed HTTP server on 127.0.0.1 that
mimics the generated service surface (health / infer / infer_partial / xai /
metrics).  Node hardware shapes the simulation: request latency scales
inversely with cpu_freq_ghz, start delay follows image size over disk
bandwidth, and concurrent in-flight requests inflate latency when contention
is enabled.  That keeps every profiling code path honest (wall clocks, real
sockets, real concurrency) without a container daemon.
"""

from __future__ import annotations

import json
import random
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from pydantic import BaseModel, ConfigDict

from svcforge.attributes import NodeSpec
from svcforge.engines import (
    BuildError,
    ContainerHandle,
    ImageNotFoundError,
    ImageRef,
    InsufficientNodeMemoryError,
    StatsSample,
    UnknownHandleError,
    UnknownNodeError,
    check_tag,
)

MB = 1 << 20


class MockServiceParams(BaseModel):
    """Knobs for one simulated service image."""

    model_config = ConfigDict(frozen=True)

    work_ms_at_1ghz: float = 50.0  # CPU work per request on a 1 GHz core
    layer_count: int = 6
    coefficients: list[tuple[int, int]] | None = None  # explicit (a, b) per layer
    coeff_seed: int = 7
    boot_ms: float = 500.0
    eviction_ms: float = 200.0
    memory_footprint_mb: float = 256.0
    per_request_mem_mb: float = 8.0
    xai_footprints_mb: dict[str, float] = {
        "gradcam-sim": 16.0,
        "scorecam-sim": 1024.0,
        "ablationcam-sim": 1024.0,
    }
    disk_read_bytes_per_req: int = 4096
    disk_write_bytes_per_req: int = 1024
    contention_coeff: float = 0.0  # latency multiplier per extra in-flight request
    fault_layer: int | None = None  # corrupt partial inference touching this layer
    image_size_mb: float = 120.0
    weights_in_image: bool = True
    weights_size_mb: float = 0.0  # downloaded at boot when not baked into the image


def _coefficients(params: MockServiceParams) -> list[tuple[int, int]]:
    if params.coefficients is not None:
        return [tuple(c) for c in params.coefficients]
    rng = random.Random(params.coeff_seed)
    return [(rng.randint(1, 3), rng.randint(0, 5)) for _ in range(params.layer_count)]


class _ServiceState:
    """Shared mutable state of one simulated container."""

    def __init__(self, params: MockServiceParams, node: NodeSpec, ready_at: float):
        self.params = params
        self.node = node
        self.ready_at = ready_at  # monotonic seconds
        self.coefficients = _coefficients(params)
        self.lock = threading.Lock()
        self.inflight = 0
        self.cpu_busy_ms = 0.0
        self.requests_served = 0
        self.blk_read_bytes = 0
        self.blk_write_bytes = 0
        self.started_monotonic = time.monotonic()
        self.evicting = threading.Event()
        self.log_lines: list[str] = []

    def log(self, line: str) -> None:
        self.log_lines.append(f"{time.strftime('%H:%M:%S')} {line}")

    def enter_request(self) -> int:
        with self.lock:
            self.inflight += 1
            return self.inflight

    def exit_request(self, busy_ms: float, served: bool) -> None:
        with self.lock:
            self.inflight -= 1
            self.cpu_busy_ms += busy_ms
            if served:
                self.requests_served += 1
                self.blk_read_bytes += self.params.disk_read_bytes_per_req
                self.blk_write_bytes += self.params.disk_write_bytes_per_req

    def interruptible_sleep(self, seconds: float) -> bool:
        """Sleep in small slices; returns False if eviction interrupted it."""
        deadline = time.monotonic() + seconds
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return True
            if self.evicting.wait(min(remaining, 0.005)):
                return False


class _MockServiceHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    state: _ServiceState  # set on the subclass per server

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", "0"))
        if length <= 0:
            return None
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None

    def _ready(self) -> bool:
        return time.monotonic() >= self.state.ready_at

    def do_GET(self):
        state = self.state
        if state.evicting.is_set():
            raise ConnectionAbortedError
        if self.path == "/health":
            self._send(200, {"status": "ok" if self._ready() else "booting"})
        elif self.path == "/metrics":
            self._send(
                200,
                {
                    "layer_count": state.params.layer_count,
                    "model_id": "mock",
                    "uptime_s": time.monotonic() - state.started_monotonic,
                    "requests_served": state.requests_served,
                },
            )
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        state = self.state
        if state.evicting.is_set():
            raise ConnectionAbortedError
        if not self._ready():
            self._send(503, {"status": "booting"})
            return
        payload = self._read_json()
        if self.path == "/infer":
            self._simulated_inference(payload, full=True)
        elif self.path == "/infer_partial":
            self._simulated_inference(payload, full=False)
        elif self.path.startswith("/xai/"):
            self._simulated_xai(self.path[len("/xai/") :], payload)
        else:
            self._send(404, {"error": "not found"})

    def _vector_from(self, payload):
        if not isinstance(payload, dict):
            return None
        vector = payload.get("input")
        if not isinstance(vector, list) or not vector:
            return None
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in vector):
            return None
        return vector

    def _busy_ms(self, inflight: int) -> float:
        params, node = self.state.params, self.state.node
        base = params.work_ms_at_1ghz / node.cpu_freq_ghz
        return base * (1.0 + params.contention_coeff * max(0, inflight - 1))

    def _simulated_inference(self, payload, full: bool) -> None:
        state = self.state
        vector = self._vector_from(payload)
        if vector is None:
            self._send(422, {"error": "input must be a non-empty integer vector"})
            return
        layer_count = state.params.layer_count
        if full:
            start, end = 0, layer_count - 1
        else:
            start = payload.get("start_layer")
            end = payload.get("end_layer")
            if (
                not isinstance(start, int)
                or not isinstance(end, int)
                or not 0 <= start <= end < layer_count
            ):
                self._send(422, {"error": "requires 0 <= start_layer <= end_layer < layer_count"})
                return

        inflight = state.enter_request()
        wall_ms = self._busy_ms(inflight)
        work_ms = state.params.work_ms_at_1ghz / state.node.cpu_freq_ghz
        served = False
        try:
            if not state.interruptible_sleep(wall_ms / 1000.0):
                raise ConnectionAbortedError  # evicted mid-request
            out = list(vector)
            for i, (a, b) in enumerate(state.coefficients[start : end + 1], start=start):
                out = [a * x + b for x in out]
                if not full and state.params.fault_layer == i:
                    out = [x + 1 for x in out]  # simulated broken layer
            served = True
            if full:
                self._send(200, {"output": out, "inference_ms": wall_ms})
            else:
                self._send(200, {"output": out})
        finally:
            state.exit_request(work_ms if served else 0.0, served)

    def _simulated_xai(self, technique: str, payload) -> None:
        state = self.state
        vector = self._vector_from(payload)
        if vector is None:
            self._send(422, {"error": "input must be a non-empty integer vector"})
            return
        footprints = state.params.xai_footprints_mb
        if technique not in footprints:
            self._send(404, {"error": f"unknown technique: {technique}"})
            return
        needed = footprints[technique]
        if needed > state.node.cpu_ram_mb:
            self._send(
                507,
                {
                    "status": "insufficient-memory",
                    "reason": f"requires {needed:.0f} MB, node has {state.node.cpu_ram_mb:.0f} MB",
                },
            )
            return
        inflight = state.enter_request()
        wall_ms = self._busy_ms(inflight)
        work_ms = state.params.work_ms_at_1ghz / state.node.cpu_freq_ghz
        served = False
        try:
            if not state.interruptible_sleep(wall_ms / 1000.0):
                raise ConnectionAbortedError
            total = sum(a for a, _ in state.coefficients) or 1
            served = True
            self._send(200, {"saliency": [abs(x) * total for x in vector]})
        finally:
            state.exit_request(work_ms if served else 0.0, served)


class _Container:
    def __init__(self, handle: ContainerHandle, server: ThreadingHTTPServer, state: _ServiceState):
        self.handle = handle
        self.server = server
        self.state = state
        self.last_sample_t = time.monotonic()
        self.last_busy_ms = 0.0


class MockEngine:
    """In-process engine over a configured node fleet."""

    def __init__(self, nodes: dict[str, NodeSpec], params: MockServiceParams | None = None):
        self.nodes = dict(nodes)
        self.default_params = params or MockServiceParams()
        self._images: dict[str, tuple[ImageRef, MockServiceParams]] = {}
        self._containers: dict[str, _Container] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_node_file(cls, path: Path, params: MockServiceParams | None = None) -> "MockEngine":
        """Node fleet from a config file listing NodeSpec JSON objects."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        nodes = [NodeSpec.model_validate(item) for item in data]
        return cls({n.node_id: n for n in nodes}, params=params)

    def build_image(
        self, context_dir, tag: str, params: MockServiceParams | None = None
    ) -> ImageRef:
        check_tag(tag)
        context = Path(context_dir)
        build_file = context / "Dockerfile"
        if not build_file.exists():
            raise BuildError(
                f"no build instructions in {context}",
                log=f"expected {build_file} to exist",
            )
        params = params or self.default_params
        image = ImageRef(tag=tag, size_bytes=int(params.image_size_mb * MB))
        with self._lock:
            self._images[tag] = (image, params)
        return image

    def register_image(self, tag: str, params: MockServiceParams | None = None) -> ImageRef:
        """Shortcut for tests and simulations that skip the build step."""
        check_tag(tag)
        params = params or self.default_params
        image = ImageRef(tag=tag, size_bytes=int(params.image_size_mb * MB))
        with self._lock:
            self._images[tag] = (image, params)
        return image

    def image_size(self, tag: str) -> int:
        with self._lock:
            if tag not in self._images:
                raise ImageNotFoundError(tag)
            return self._images[tag][0].size_bytes

    def start_container(self, image: ImageRef | str, node: NodeSpec) -> ContainerHandle:
        tag = image if isinstance(image, str) else image.tag
        with self._lock:
            if tag not in self._images:
                raise ImageNotFoundError(tag)
            image_ref, params = self._images[tag]
        if node.node_id not in self.nodes:
            raise UnknownNodeError(node.node_id)
        node = self.nodes[node.node_id]
        if params.memory_footprint_mb > node.cpu_ram_mb:
            raise InsufficientNodeMemoryError(
                f"service needs {params.memory_footprint_mb} MB, "
                f"node {node.node_id} has {node.cpu_ram_mb} MB"
            )

        pull_s = image_ref.size_bytes / (node.disk_bw_mbps * MB) if node.disk_bw_mbps else 0.0
        weights_s = 0.0
        if not params.weights_in_image and node.network_bw_mbps:
            weights_s = params.weights_size_mb * 8.0 / node.network_bw_mbps
        ready_at = time.monotonic() + pull_s + params.boot_ms / 1000.0 + weights_s

        state = _ServiceState(params, node, ready_at)
        state.log(f"image {tag} staged in {pull_s * 1000.0:.0f} ms (simulated)")
        handler = type("Handler", (_MockServiceHandler,), {"state": state})
        server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        server.daemon_threads = True
        server.handle_error = lambda *args: None  # aborted connections are expected
        thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.02), daemon=True
        )
        thread.start()

        handle = ContainerHandle(
            id=uuid.uuid4().hex[:12],
            node_id=node.node_id,
            endpoint=f"127.0.0.1:{server.server_address[1]}",
            started_at=time.time(),
        )
        state.log(f"container {handle.id} listening on {handle.endpoint}")
        with self._lock:
            self._containers[handle.id] = _Container(handle, server, state)
        return handle

    def _container(self, handle: ContainerHandle) -> _Container:
        with self._lock:
            container = self._containers.get(handle.id)
        if container is None:
            raise UnknownHandleError(handle.id)
        return container

    def sample_stats(self, handle: ContainerHandle) -> StatsSample:
        container = self._container(handle)
        state = container.state
        node = state.node
        now = time.monotonic()
        with state.lock:
            busy_ms = state.cpu_busy_ms
            inflight = state.inflight
            blk_read = state.blk_read_bytes
            blk_write = state.blk_write_bytes
        window_ms = max((now - container.last_sample_t) * 1000.0, 1e-6)
        delta_busy = busy_ms - container.last_busy_ms
        cpu_util = min(1.0, max(0.0, delta_busy / (window_ms * node.cpu_cores)))
        container.last_sample_t = now
        container.last_busy_ms = busy_ms
        return StatsSample(
            t=time.time(),
            cpu_time_total_ms=busy_ms,
            mem_rss_mb=state.params.memory_footprint_mb + state.params.per_request_mem_mb * inflight,
            device_mem_mb=0.0,
            blk_read_bytes=blk_read,
            blk_write_bytes=blk_write,
            cpu_util=cpu_util,
        )

    def stop_and_remove(self, handle: ContainerHandle) -> float:
        container = self._container(handle)
        t0 = time.perf_counter()
        container.state.evicting.set()
        time.sleep(container.state.params.eviction_ms / 1000.0)
        container.server.shutdown()
        container.server.server_close()
        with self._lock:
            self._containers.pop(handle.id, None)
        container.state.log(f"container {handle.id} evicted")
        return (time.perf_counter() - t0) * 1000.0

    def logs(self, handle_or_id: ContainerHandle | str) -> str:
        handle_id = handle_or_id if isinstance(handle_or_id, str) else handle_or_id.id
        with self._lock:
            container = self._containers.get(handle_id)
        if container is None:
            return ""
        return "\n".join(container.state.log_lines)

    def shutdown(self) -> None:
        """Stop every running container without simulated eviction delay."""
        with self._lock:
            containers = list(self._containers.values())
            self._containers.clear()
        for container in containers:
            container.state.evicting.set()
            container.server.shutdown()
            container.server.server_close()
