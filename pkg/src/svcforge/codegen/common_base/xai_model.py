"""Explainability add-ons exposed under /xai/<technique>.

gradcam-sim produces a coefficient-weighted saliency map cheaply.  The
perturbation-style techniques (scorecam-sim, ablationcam-sim) first need a
large working buffer; when that buffer would not fit the memory limit the
service answers with an insufficient-memory status instead of dying.

The limit is taken from XAI_MEMORY_LIMIT_MB when set, otherwise from the
container's cgroup memory limit when one applies.  Buffer sizes per technique
come from XAI_<TECHNIQUE>_FOOTPRINT_MB.
"""

import os

TECHNIQUES = ("gradcam-sim", "scorecam-sim", "ablationcam-sim")

_DEFAULT_FOOTPRINTS_MB = {
    "gradcam-sim": 16,
    "scorecam-sim": 1024,
    "ablationcam-sim": 1024,
}

_CGROUP_LIMIT_FILES = (
    "/sys/fs/cgroup/memory.max",
    "/sys/fs/cgroup/memory/memory.limit_in_bytes",
)


def footprint_mb(technique):
    env_key = "XAI_" + technique.split("-")[0].upper() + "_FOOTPRINT_MB"
    return int(os.environ.get(env_key, _DEFAULT_FOOTPRINTS_MB[technique]))


def memory_limit_mb():
    raw = os.environ.get("XAI_MEMORY_LIMIT_MB")
    if raw:
        return float(raw)
    for path in _CGROUP_LIMIT_FILES:
        try:
            with open(path) as fh:
                value = fh.read().strip()
        except OSError:
            continue
        if value and value != "max":
            limit = int(value)
            if limit < 1 << 50:  # "unlimited" sentinel on cgroup v1
                return limit / (1024 * 1024)
    return None


def _saliency(coefficients, vector):
    total = sum(a for a, _ in coefficients) or 1
    return [abs(x) * total for x in vector]


def run(technique, coefficients, vector):
    needed = footprint_mb(technique)
    if technique in ("scorecam-sim", "ablationcam-sim"):
        limit = memory_limit_mb()
        if limit is not None and needed > limit:
            return {
                "status": "insufficient-memory",
                "reason": f"requires {needed} MB, limit is {limit:.0f} MB",
            }
        try:
            buffer = bytearray(needed * 1024 * 1024)
            buffer[::4096] = b"x" * len(buffer[::4096])  # touch pages for real
        except MemoryError:
            return {"status": "insufficient-memory", "reason": f"requires {needed} MB"}
        del buffer
    return {"saliency": _saliency(coefficients, vector)}
