"""Canonical JSON emission.

All JSON artifacts are written with sorted keys and a fixed layout so that
rerunning a command overwrites its outputs byte-for-byte. Reports
additionally round floats to 6 significant digits; manifests keep floats
exact (repr round-trip).
"""

import json
import math


def round_floats(obj, sig: int = 6):
    """Recursively round every float to ``sig`` significant digits."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return obj
        return float(f"{obj:.{sig}g}")
    if isinstance(obj, dict):
        return {k: round_floats(v, sig) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, sig) for v in obj]
    return obj


def canonical_dumps(obj, round_sig: int | None = None) -> str:
    """Serialize to deterministic JSON (sorted keys, 2-space indent)."""
    if round_sig is not None:
        obj = round_floats(obj, round_sig)
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, obj, round_sig: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(obj, round_sig=round_sig))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
