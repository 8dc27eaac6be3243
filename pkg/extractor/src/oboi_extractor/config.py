"""Extraction configuration: detector choice, label space, annotated images.

Accepts YAML or JSON (by file extension). Shape:

    detector:
      name: patch-stats            # registry key
      grid: 8                      # feature grid H' = W'
      confidence_threshold: 0.25
      class_colors:                # patch-stats: object -> [r, g, b]
        ball: [200, 40, 40]
    label_space:
      objects: [ball, box]
      instances:                   # instance -> object, declaration order
        ball_a: ball
    images:
      - {path: a.png, instance: ball_a, sequence: seq0}
    output: out_dir                # optional, CLI can override
    validate: true                 # run the dataset validator on the result

Every image carries exactly one annotated instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import InvalidExtractionConfig


@dataclass(frozen=True)
class ImageEntry:
    path: str
    instance: str
    sequence: str


@dataclass(frozen=True)
class DetectorConfig:
    name: str = "patch-stats"
    grid: int = 8
    confidence_threshold: float = 0.25
    class_colors: dict = field(default_factory=dict)
    weights: str | None = None
    layer: str = "backbone.body.layer2"
    class_map: dict = field(default_factory=dict)
    emit_logits: bool = True


@dataclass(frozen=True)
class ExtractionConfig:
    detector: DetectorConfig
    objects: tuple[str, ...]
    f_map: dict[str, str]  # instance -> object, declaration order significant
    images: tuple[ImageEntry, ...]
    output: str | None = None
    validate: bool = True

    @property
    def instances(self) -> tuple[str, ...]:
        return tuple(self.f_map)

    def object_of(self, instance: str) -> str:
        return self.f_map[instance]


def _problems(doc: dict) -> list[str]:
    out = []
    space = doc.get("label_space")
    if not isinstance(space, dict):
        out.append("label_space section missing")
        return out
    objects = space.get("objects")
    if not isinstance(objects, list) or not objects:
        out.append("label_space.objects must be a non-empty list")
        objects = []
    instances = space.get("instances")
    if not isinstance(instances, dict) or not instances:
        out.append("label_space.instances must map instance -> object")
        instances = {}
    for inst, obj in instances.items():
        if obj not in objects:
            out.append(f"instance {inst!r} maps to unknown object {obj!r}")
    images = doc.get("images")
    if not isinstance(images, list) or not images:
        out.append("images must be a non-empty list")
        images = []
    for i, entry in enumerate(images):
        if not isinstance(entry, dict):
            out.append(f"images[{i}] must be a mapping")
            continue
        for key in ("path", "instance", "sequence"):
            if key not in entry:
                out.append(f"images[{i}] lacks {key!r}")
        if entry.get("instance") not in instances:
            out.append(f"images[{i}] names unknown instance {entry.get('instance')!r}")
    return out


def parse_config(doc: dict) -> ExtractionConfig:
    if not isinstance(doc, dict):
        raise InvalidExtractionConfig("config must be a mapping")
    problems = _problems(doc)
    if problems:
        raise InvalidExtractionConfig("; ".join(problems))
    det = doc.get("detector", {})
    detector = DetectorConfig(
        name=str(det.get("name", "patch-stats")),
        grid=int(det.get("grid", 8)),
        confidence_threshold=float(det.get("confidence_threshold", 0.25)),
        class_colors={str(k): tuple(v) for k, v in det.get("class_colors", {}).items()},
        weights=det.get("weights"),
        layer=str(det.get("layer", "backbone.body.layer2")),
        class_map={int(k): str(v) for k, v in det.get("class_map", {}).items()},
        emit_logits=bool(det.get("emit_logits", True)),
    )
    if detector.grid < 1:
        raise InvalidExtractionConfig(f"detector.grid must be >= 1, got {detector.grid}")
    space = doc["label_space"]
    return ExtractionConfig(
        detector=detector,
        objects=tuple(str(o) for o in space["objects"]),
        f_map={str(k): str(v) for k, v in space["instances"].items()},
        images=tuple(
            ImageEntry(str(e["path"]), str(e["instance"]), str(e["sequence"]))
            for e in doc["images"]
        ),
        output=doc.get("output"),
        validate=bool(doc.get("validate", True)),
    )


def load_config(path) -> ExtractionConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(text)
        else:
            doc = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InvalidExtractionConfig(f"cannot parse {path}: {e}") from e
    config = parse_config(doc)
    # image paths are relative to the config file
    images = tuple(
        e if Path(e.path).is_absolute()
        else ImageEntry(str(path.parent / e.path), e.instance, e.sequence)
        for e in config.images
    )
    return replace(config, images=images)
