"""Detector adapters.

Each adapter maps an RGB image (H x W x 3 uint8) to a Detection: predicted
object class, confidence, pixel-space bbox, an encoder-style feature map
(H' x W' x D float), and optional per-class logits. Feature maps are stored
at native grid resolution with no masking; all box-conditioned pooling
happens downstream, so ablations never require re-extraction.

"patch-stats" is a dependency-light detector for small-scale runs and
tests: it localizes the object as the span of pixels deviating from the
border background color, classifies by nearest configured class color, and
emits per-patch color statistics as the feature map.

"torchvision-frcnn" wraps a Faster R-CNN checkpoint and taps a named
backbone module via a forward hook. It needs the optional torch extra and
a local weights file; the tap point is configurable because different
checkpoints expose different layer names.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DetectorConfig
from .errors import DetectorUnavailable, InvalidExtractionConfig


@dataclass(frozen=True)
class Detection:
    predicted_object: str
    confidence: float
    bbox: tuple[float, float, float, float]
    feature_map: np.ndarray  # (H', W', D)
    logits: np.ndarray | None


class PatchStatsDetector:
    """Color-statistics detector over a fixed G x G patch grid."""

    # minimum channel deviation from the border color to count as foreground
    FOREGROUND_DELTA = 28.0

    def __init__(self, config: DetectorConfig, objects):
        if not config.class_colors:
            raise InvalidExtractionConfig("patch-stats needs detector.class_colors")
        missing = [o for o in objects if o not in config.class_colors]
        if missing:
            raise InvalidExtractionConfig(
                f"class_colors lacks entries for: {', '.join(missing)}"
            )
        self.grid = config.grid
        self.objects = tuple(objects)
        self.colors = np.array(
            [config.class_colors[o] for o in objects], dtype=np.float64
        )
        self.emit_logits = config.emit_logits

    def _find_bbox(self, image: np.ndarray) -> tuple[float, float, float, float]:
        h, w = image.shape[:2]
        border = np.concatenate(
            [image[0], image[-1], image[:, 0], image[:, -1]]
        ).astype(np.float64)
        background = np.median(border, axis=0)
        deviation = np.abs(image.astype(np.float64) - background).max(axis=2)
        fg = deviation > self.FOREGROUND_DELTA
        rows = np.flatnonzero(fg.any(axis=1))
        cols = np.flatnonzero(fg.any(axis=0))
        if rows.size == 0 or cols.size == 0:
            return (0.0, 0.0, float(w), float(h))
        return (float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))

    def _features(self, image: np.ndarray) -> np.ndarray:
        h, w = image.shape[:2]
        g = self.grid
        out = np.empty((g, g, 6), dtype=np.float64)
        ys = np.linspace(0, h, g + 1).astype(int)
        xs = np.linspace(0, w, g + 1).astype(int)
        img = image.astype(np.float64)
        for r in range(g):
            for c in range(g):
                patch = img[ys[r] : max(ys[r + 1], ys[r] + 1),
                            xs[c] : max(xs[c + 1], xs[c] + 1)]
                flat = patch.reshape(-1, 3)
                out[r, c, :3] = flat.mean(axis=0)
                out[r, c, 3:] = flat.std(axis=0)
        return out

    def detect(self, image: np.ndarray) -> Detection:
        bbox = self._find_bbox(image)
        x1, y1, x2, y2 = (int(v) for v in bbox)
        region = image[y1:y2, x1:x2].reshape(-1, 3).astype(np.float64)
        mean_color = region.mean(axis=0)
        dists = np.linalg.norm(self.colors - mean_color, axis=1)
        best = int(np.argmin(dists))
        # margin-based confidence: 1 when the runner-up is infinitely worse
        order = np.sort(dists)
        confidence = 1.0 if len(dists) == 1 else float(
            (order[1] - order[0]) / (order[1] + 1e-9)
        )
        logits = -dists if self.emit_logits else None
        return Detection(
            predicted_object=self.objects[best],
            confidence=confidence,
            bbox=bbox,
            feature_map=self._features(image),
            logits=logits,
        )


class TorchvisionFrcnnDetector:
    """Faster R-CNN adapter with a forward hook on a named backbone layer."""

    def __init__(self, config: DetectorConfig, objects):
        try:
            import torch
            import torchvision
        except ImportError as e:
            raise DetectorUnavailable(
                "torchvision-frcnn needs the torch extra installed"
            ) from e
        if not config.weights:
            raise InvalidExtractionConfig("torchvision-frcnn needs detector.weights")
        if not config.class_map:
            raise InvalidExtractionConfig(
                "torchvision-frcnn needs detector.class_map (label id -> object)"
            )
        self.torch = torch
        self.objects = tuple(objects)
        self.class_map = dict(config.class_map)
        self.threshold = config.confidence_threshold
        model = torchvision.models.detection.fasterrcnn_resnet50_fpn(
            weights=None, weights_backbone=None
        )
        state = torch.load(config.weights, map_location="cpu")
        model.load_state_dict(state)
        model.eval()
        self.model = model
        modules = dict(model.named_modules())
        if config.layer not in modules:
            raise InvalidExtractionConfig(
                f"layer {config.layer!r} not found in the detector"
            )
        self._captured = None

        def hook(_module, _inputs, output):
            self._captured = output

        modules[config.layer].register_forward_hook(hook)

    def detect(self, image: np.ndarray) -> Detection | None:
        torch = self.torch
        tensor = torch.from_numpy(image.astype(np.float32) / 255.0).permute(2, 0, 1)
        self._captured = None
        with torch.no_grad():
            out = self.model([tensor])[0]
        if self._captured is None:
            raise DetectorUnavailable("hooked layer produced no output")
        keep = [
            i for i, (score, label) in enumerate(zip(out["scores"], out["labels"]))
            if float(score) >= self.threshold and int(label) in self.class_map
        ]
        if not keep:
            return None
        best = keep[0]  # scores are sorted descending
        fmap = self._captured
        if isinstance(fmap, dict):
            fmap = next(iter(fmap.values()))
        fmap = fmap[0].permute(1, 2, 0).cpu().numpy().astype(np.float64)
        x1, y1, x2, y2 = (float(v) for v in out["boxes"][best])
        return Detection(
            predicted_object=self.class_map[int(out["labels"][best])],
            confidence=float(out["scores"][best]),
            bbox=(x1, y1, x2, y2),
            feature_map=fmap,
            logits=None,
        )


DETECTORS = {
    "patch-stats": PatchStatsDetector,
    "torchvision-frcnn": TorchvisionFrcnnDetector,
}


def build_detector(config: DetectorConfig, objects):
    if config.name not in DETECTORS:
        raise InvalidExtractionConfig(
            f"unknown detector {config.name!r}; have: {', '.join(sorted(DETECTORS))}"
        )
    return DETECTORS[config.name](config, objects)
