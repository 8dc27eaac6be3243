"""Builders for the color-blob scenes the extractor tests run on."""

import numpy as np
from PIL import Image

# two objects, two instances each; instance colors sit near their object's
# class color and far from the other object's
INSTANCE_COLORS = {
    "mug_a": (220, 40, 40),
    "mug_b": (250, 150, 40),
    "can_a": (40, 60, 220),
    "can_b": (40, 200, 200),
}
CLASS_COLORS = {"mug": [235, 95, 40], "can": [40, 130, 210]}
F_MAP = {"mug_a": "mug", "mug_b": "mug", "can_a": "can", "can_b": "can"}
OBJECTS = ["mug", "can"]


def blob_image(color, box=(12, 14, 32, 30), size=(48, 48), background=128, jitter=(0, 0)):
    """Gray canvas with one solid-color rectangle (the lone object)."""
    h, w = size
    img = np.full((h, w, 3), background, dtype=np.uint8)
    x1, y1, x2, y2 = box
    dx, dy = jitter
    img[y1 + dy : y2 + dy, x1 + dx : x2 + dx] = color
    return img


def save_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def base_config(images, output="out", grid=6, threshold=0.25, **detector_extra):
    return {
        "detector": {
            "name": "patch-stats",
            "grid": grid,
            "confidence_threshold": threshold,
            "class_colors": CLASS_COLORS,
            **detector_extra,
        },
        "label_space": {"objects": list(OBJECTS), "instances": dict(F_MAP)},
        "images": images,
        "output": output,
        "validate": False,
    }
