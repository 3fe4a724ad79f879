from __future__ import annotations

import os
import socket
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import httpx
import pytest

SERVICE_DIR = Path(__file__).parent.parent


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@contextmanager
def running_service(env: dict[str, str] | None = None, wait_healthy: bool = True):
    """Launch server.py as its own process, exactly as the container would."""
    port = free_port()
    full_env = {
        **os.environ,
        "PORT": str(port),
        "MODEL_LAYERS": "2:1,3:0",
        **(env or {}),
    }
    process = subprocess.Popen(
        [sys.executable, str(SERVICE_DIR / "server.py")],
        cwd=SERVICE_DIR,
        env=full_env,
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    base_url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 15.0
        while time.monotonic() < deadline:
            if process.poll() is not None:
                output = process.stdout.read().decode(errors="replace")
                raise RuntimeError(f"service exited early:\n{output}")
            try:
                response = httpx.get(f"{base_url}/health", timeout=1.0)
                if not wait_healthy or response.json().get("status") == "ok":
                    break
            except httpx.HTTPError:
                pass
            time.sleep(0.05)
        else:
            raise TimeoutError("service never answered /health")
        yield base_url
    finally:
        process.terminate()
        try:
            process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            process.kill()


@pytest.fixture(scope="module")
def service():
    """Default service: two layers with coefficients (2,1) and (3,0)."""
    with running_service() as base_url:
        yield base_url


@pytest.fixture(scope="module")
def deep_service():
    """Six seeded layers, for split-composition and metrics tests."""
    with running_service(
        {"MODEL_LAYERS": "", "MODEL_LAYER_COUNT": "6", "MODEL_COEFF_SEED": "7"}
    ) as base_url:
        yield base_url
