"""Extraction pipeline: images -> tensor directory + manifest.

Images are processed in config declaration order. Each image runs through
the configured detector; detections are filtered before anything is
written, and every drop is logged with a machine-readable reason:

  no_detection     the detector returned nothing usable
  low_confidence   confidence below detector.confidence_threshold
  object_mismatch  predicted object differs from the labeled instance's
                   object (a wrong detection would poison conditioning, so
                   the frame is dropped rather than relabeled)

Surviving samples are written as one feature tensor (and one logits tensor
when available) per sample, plus a manifest the downstream tooling loads
directly. Instances that lose every frame stay declared in the label space
(dropping them would silently shrink the benchmark) and are called out in
the manifest's "notes" list and in the run log.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ExtractionConfig
from .detectors import build_detector
from .errors import ExtractionFailed
from .tensorfile import write_tensor

MANIFEST_SCHEMA_VERSION = 1


def _load_image(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _clamp_bbox(bbox, h: int, w: int) -> list[float]:
    x1, y1, x2, y2 = bbox
    x1 = min(max(x1, 0.0), float(w))
    x2 = min(max(x2, 0.0), float(w))
    y1 = min(max(y1, 0.0), float(h))
    y2 = min(max(y2, 0.0), float(h))
    return [x1, y1, min(x2, float(w)), min(y2, float(h))]


def extract(config: ExtractionConfig, out_dir=None, log=None) -> dict:
    """Run the pipeline; returns a summary dict (also written as JSON).

    out_dir overrides config.output. log is an optional callable taking one
    string (defaults to printing on stderr).
    """
    if log is None:
        log = lambda msg: print(msg, file=sys.stderr)
    out = Path(out_dir if out_dir is not None else config.output)
    tensors = out / "tensors"
    tensors.mkdir(parents=True, exist_ok=True)

    detector = build_detector(config.detector, config.objects)
    threshold = config.detector.confidence_threshold

    kept = []
    dropped = []
    sequences: list[str] = []
    counters: dict[tuple[str, str], int] = {}

    for entry in config.images:
        try:
            image = _load_image(entry.path)
        except OSError as e:
            raise ExtractionFailed(f"cannot read image {entry.path}: {e}") from e
        detection = detector.detect(image)
        reason = None
        if detection is None:
            reason = "no_detection"
        elif detection.confidence < threshold:
            reason = "low_confidence"
        elif detection.predicted_object != config.object_of(entry.instance):
            reason = "object_mismatch"
        if reason is not None:
            detail = {"image": entry.path, "instance": entry.instance, "reason": reason}
            if detection is not None:
                detail["predicted_object"] = detection.predicted_object
                detail["confidence"] = round(detection.confidence, 6)
            dropped.append(detail)
            log(f"drop {entry.path}: {reason}")
            continue

        if entry.sequence not in sequences:
            sequences.append(entry.sequence)
        n = counters.get((entry.instance, entry.sequence), 0)
        counters[(entry.instance, entry.sequence)] = n + 1
        sample_id = f"{entry.instance}_{entry.sequence}_{n:03d}"

        h, w = image.shape[:2]
        feature_ref = f"tensors/{sample_id}.tnsr"
        write_tensor(out / feature_ref, detection.feature_map)
        logits_ref = None
        if detection.logits is not None:
            logits_ref = f"tensors/{sample_id}.logits.tnsr"
            write_tensor(out / logits_ref, detection.logits)
        kept.append(
            {
                "sample_id": sample_id,
                "instance_label": entry.instance,
                "sequence_id": entry.sequence,
                "image_size": [h, w],
                "bbox": _clamp_bbox(detection.bbox, h, w),
                "predicted_object": detection.predicted_object,
                "feature_path": feature_ref,
                "logits_path": logits_ref,
            }
        )

    survivors = {s["instance_label"] for s in kept}
    starved = [i for i in config.instances if i not in survivors]
    notes = [f"instance {i!r} has no surviving samples" for i in starved]
    for note in notes:
        log(f"warning: {note}")

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "label_space": {
            "objects": list(config.objects),
            "instances": [
                {"id": i, "object": config.object_of(i)} for i in config.instances
            ],
        },
        "sequences": sequences,
        "samples": kept,
    }
    if notes:
        manifest["notes"] = notes
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    summary = {
        "manifest": str(manifest_path),
        "kept": len(kept),
        "dropped": dropped,
        "starved_instances": starved,
    }
    (out / "extraction_log.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    if config.validate:
        verdict = run_validation(manifest_path)
        summary["validation"] = verdict
        if not verdict["ok"]:
            raise ExtractionFailed(
                f"downstream validation failed: {verdict['problems']}"
            )
    return summary


def run_validation(manifest_path) -> dict:
    """Check the written manifest with the downstream CLI (oboi validate)."""
    proc = subprocess.run(
        [sys.executable, "-m", "oboi", "validate", str(manifest_path)],
        capture_output=True,
        text=True,
    )
    try:
        report = json.loads(proc.stdout) if proc.stdout.strip() else {}
    except json.JSONDecodeError:
        report = {"raw": proc.stdout}
    return {
        "ok": proc.returncode == 0,
        "problems": report.get("problems", []),
        "stderr": proc.stderr.strip() or None,
    }
