"""Main API server shared by every generated service.

Routes inference requests to the generated model adapter (model.py) and
explainability requests to the XAI add-ons (xai_model.py).  Stdlib only, so
the container image needs nothing beyond a Python base image.  Configuration
comes entirely from environment variables: PORT, SERVICE_BOOT_DELAY_MS and
the MODEL_* / XAI_* knobs read by the imported modules.
"""

import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import healthcheck
import model
import xai_model

_started_at = time.monotonic()
_requests_served = 0
_counter_lock = threading.Lock()


def _count_request():
    global _requests_served
    with _counter_lock:
        _requests_served += 1


class ServiceHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        if os.environ.get("SERVICE_LOG_REQUESTS"):
            super().log_message(fmt, *args)

    def _send(self, status, payload):
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

    def do_GET(self):
        if self.path == "/health":
            self._send(200, healthcheck.status())
        elif self.path == "/metrics":
            self._send(
                200,
                {
                    "layer_count": model.layer_count(),
                    "model_id": model.MODEL_ID,
                    "uptime_s": time.monotonic() - _started_at,
                    "requests_served": _requests_served,
                },
            )
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path in ("/health", "/metrics"):
            self._send(405, {"error": "method not allowed"})
            return
        if not healthcheck.ready():
            self._send(503, healthcheck.status())
            return
        payload = self._read_json()
        if self.path == "/infer":
            self._handle_infer(payload)
        elif self.path == "/infer_partial":
            self._handle_infer_partial(payload)
        elif self.path.startswith("/xai/"):
            self._handle_xai(self.path[len("/xai/") :], payload)
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

    def _handle_infer(self, payload):
        vector = self._vector_from(payload)
        if vector is None:
            self._send(422, {"error": "input must be a non-empty integer vector"})
            return
        t0 = time.perf_counter()
        output = model.infer(vector)
        _count_request()
        self._send(200, {"output": output, "inference_ms": (time.perf_counter() - t0) * 1000.0})

    def _handle_infer_partial(self, payload):
        vector = self._vector_from(payload)
        if vector is None:
            self._send(422, {"error": "input must be a non-empty integer vector"})
            return
        start = payload.get("start_layer")
        end = payload.get("end_layer")
        if (
            not isinstance(start, int)
            or not isinstance(end, int)
            or not 0 <= start <= end < model.layer_count()
        ):
            self._send(422, {"error": "requires 0 <= start_layer <= end_layer < layer_count"})
            return
        output = model.infer_partial(vector, start, end)
        _count_request()
        self._send(200, {"output": output})

    def _handle_xai(self, technique, payload):
        vector = self._vector_from(payload)
        if vector is None:
            self._send(422, {"error": "input must be a non-empty integer vector"})
            return
        if technique not in xai_model.TECHNIQUES:
            self._send(404, {"error": f"unknown technique: {technique}"})
            return
        result = xai_model.run(technique, model.coefficients(), vector)
        if result.get("status") == "insufficient-memory":
            self._send(507, result)
        else:
            self._send(200, result)


def main():
    port = int(os.environ.get("PORT", "8080"))
    model.load()
    healthcheck.mark_model_ready()
    server = ThreadingHTTPServer(("0.0.0.0", port), ServiceHandler)
    server.daemon_threads = True
    server.serve_forever()


if __name__ == "__main__":
    main()
