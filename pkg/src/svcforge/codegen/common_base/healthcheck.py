"""Service readiness tracking.

The service reports "booting" until the model finished loading and the
configured artificial boot delay (SERVICE_BOOT_DELAY_MS) has elapsed; after
that it reports "ok".
"""

import os
import time

_started = time.monotonic()
_boot_delay_s = float(os.environ.get("SERVICE_BOOT_DELAY_MS", "0")) / 1000.0
_model_ready = False


def mark_model_ready():
    global _model_ready
    _model_ready = True


def ready():
    return _model_ready and (time.monotonic() - _started) >= _boot_delay_s


def status():
    return {"status": "ok" if ready() else "booting"}
