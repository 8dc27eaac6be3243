"""Synthetic dataset generator for desk-scale experiments.

Each instance gets a channel-value distribution with controllable mean,
standard deviation and asymmetry; instances of one object class can share
the mean and differ only in the higher moments, which is the stress case
where first-order embeddings collapse and higher orders must separate.

Sampling plan, in draw order (one generator seeded once per run):
  for instance (declaration order) -> sequence -> sample index:
    bbox coverage + position, feature map, background noise, logits noise.

The skewed distribution is the skew-normal construction
``z = d|u0| + sqrt(1-d^2) u1`` with ``d = a/sqrt(1+a^2)`` for two standard
normal draws, re-standardized so the emitted values have exactly the
requested population mean and standard deviation for any skew ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .jsonio import read_json, write_json
from .model import BoundingBox, LabelSpace, Sample
from .reduction import build_mask
from .tensorstore import Dataset, dataset_to_manifest_dict, write_tensor

SPEC_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class InstanceParams:
    mean: float = 0.0
    std: float = 1.0
    skew: float = 0.0  # shape parameter a of the skew-normal, 0 = gaussian

    def __post_init__(self):
        if not (self.std > 0 and math.isfinite(self.std)):
            raise InvalidSpec(f"instance std must be positive, got {self.std}")


@dataclass(frozen=True)
class BackgroundParams:
    """Additive noise outside the bbox; per-sequence drift via the steps."""

    mean: float = 0.0
    std: float = 1.0
    sequence_mean_step: float = 0.0
    sequence_std_step: float = 0.0

    def std_for(self, seq_index: int) -> float:
        return self.std + seq_index * self.sequence_std_step

    def mean_for(self, seq_index: int) -> float:
        return self.mean + seq_index * self.sequence_mean_step


@dataclass(frozen=True)
class LogitsParams:
    enabled: bool = False
    scale: float = 8.0
    noise_std: float = 0.5


@dataclass(frozen=True)
class SyntheticSpec:
    """Validated generator configuration; see docs for the JSON schema."""

    objects: tuple[str, ...]
    instances_per_object: int
    sequences: int
    samples_per_cell: int  # per (instance, sequence) pair
    image_size: tuple[int, int] = (64, 64)
    feature_dims: tuple[int, int, int] = (8, 8, 16)
    object_mean_offset: float = 0.0
    instance_params: tuple[InstanceParams, ...] = ()
    background: BackgroundParams = field(default_factory=BackgroundParams)
    bbox_coverage: tuple[float, float] = (0.25, 0.75)
    logits: LogitsParams = field(default_factory=LogitsParams)

    def __post_init__(self):
        problems = []
        if not self.objects:
            problems.append("need at least one object class")
        if len(set(self.objects)) != len(self.objects):
            problems.append("duplicate object names")
        if self.instances_per_object < 1:
            problems.append("instances_per_object must be >= 1")
        if self.sequences < 1:
            problems.append("sequences must be >= 1")
        if self.samples_per_cell < 1:
            problems.append("samples_per_cell must be >= 1")
        if len(self.image_size) != 2 or any(v < 1 for v in self.image_size):
            problems.append("image_size must be two positive ints [H, W]")
        if len(self.feature_dims) != 3 or any(v < 1 for v in self.feature_dims):
            problems.append("feature_dims must be three positive ints [H', W', D]")
        if len(self.instance_params) != self.instances_per_object:
            problems.append(
                "instance_params must list exactly one entry per instance "
                f"of an object ({self.instances_per_object}), "
                f"got {len(self.instance_params)}"
            )
        lo, hi = self.bbox_coverage
        if not (0 < lo <= hi <= 1):
            problems.append("bbox_coverage must satisfy 0 < lo <= hi <= 1")
        if problems:
            raise InvalidSpec("; ".join(problems))

    @staticmethod
    def from_dict(d: dict) -> "SyntheticSpec":
        if not isinstance(d, dict):
            raise InvalidSpec("spec must be a JSON object")
        if d.get("schema_version", SPEC_SCHEMA_VERSION) != SPEC_SCHEMA_VERSION:
            raise InvalidSpec(f"unsupported schema_version {d.get('schema_version')!r}")
        known = {
            "schema_version", "objects", "instances_per_object", "sequences",
            "samples_per_cell", "image_size", "feature_dims",
            "object_mean_offset", "instance_params", "background",
            "bbox_coverage", "logits",
        }
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidSpec(f"unknown spec keys: {', '.join(unknown)}")
        try:
            objects = d["objects"]
            if isinstance(objects, int):
                objects = [f"obj_{i:02d}" for i in range(objects)]
            objects = tuple(str(o) for o in objects)
            params = tuple(
                InstanceParams(
                    mean=float(p.get("mean", 0.0)),
                    std=float(p.get("std", 1.0)),
                    skew=float(p.get("skew", 0.0)),
                )
                for p in d.get("instance_params", [])
            )
            bg = d.get("background", {})
            lg = d.get("logits", {})
            return SyntheticSpec(
                objects=objects,
                instances_per_object=int(d["instances_per_object"]),
                sequences=int(d["sequences"]),
                samples_per_cell=int(d["samples_per_cell"]),
                image_size=tuple(int(v) for v in d.get("image_size", (64, 64))),
                feature_dims=tuple(int(v) for v in d.get("feature_dims", (8, 8, 16))),
                object_mean_offset=float(d.get("object_mean_offset", 0.0)),
                instance_params=params,
                background=BackgroundParams(
                    mean=float(bg.get("mean", 0.0)),
                    std=float(bg.get("std", 1.0)),
                    sequence_mean_step=float(bg.get("sequence_mean_step", 0.0)),
                    sequence_std_step=float(bg.get("sequence_std_step", 0.0)),
                ),
                bbox_coverage=tuple(float(v) for v in d.get("bbox_coverage", (0.25, 0.75))),
                logits=LogitsParams(
                    enabled=bool(lg.get("enabled", False)),
                    scale=float(lg.get("scale", 8.0)),
                    noise_std=float(lg.get("noise_std", 0.5)),
                ),
            )
        except InvalidSpec:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidSpec(f"malformed spec: {e}") from e

    def label_space(self) -> LabelSpace:
        instances = []
        f_map = {}
        for obj in self.objects:
            for j in range(self.instances_per_object):
                inst = f"{obj}_i{j:02d}"
                instances.append(inst)
                f_map[inst] = obj
        return LabelSpace(
            object_classes=tuple(self.objects),
            instance_classes=tuple(instances),
            f_map=f_map,
        )


def load_spec(path) -> SyntheticSpec:
    return SyntheticSpec.from_dict(read_json(path))


def _skew_normal(rng: np.random.Generator, a: float, shape) -> np.ndarray:
    """Zero-mean unit-std draws with asymmetry controlled by ``a``."""
    if a == 0.0:
        return rng.standard_normal(shape)
    d = a / math.sqrt(1.0 + a * a)
    u0 = rng.standard_normal(shape)
    u1 = rng.standard_normal(shape)
    z = d * np.abs(u0) + math.sqrt(1.0 - d * d) * u1
    mz = d * math.sqrt(2.0 / math.pi)
    sz = math.sqrt(1.0 - 2.0 * d * d / math.pi)
    return (z - mz) / sz


def _draw_bbox(rng: np.random.Generator, image_size, coverage) -> BoundingBox:
    h, w = image_size
    c = float(rng.uniform(coverage[0], coverage[1]))
    frac = math.sqrt(c)  # equal width/height fractions, area = c
    bw = min(max(int(round(frac * w)), 1), w)
    bh = min(max(int(round(frac * h)), 1), h)
    x1 = int(rng.integers(0, w - bw + 1))
    y1 = int(rng.integers(0, h - bh + 1))
    return BoundingBox(x1=x1, y1=y1, x2=x1 + bw, y2=y1 + bh)


def gen_synthetic(spec: SyntheticSpec, seed: int, out_dir) -> Dataset:
    """Write manifest + tensors under out_dir; byte-identical per seed."""
    out = Path(out_dir)
    tensors = out / "tensors"
    tensors.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    space = spec.label_space()
    sequences = tuple(f"seq_{k:02d}" for k in range(spec.sequences))
    gh, gw, depth = spec.feature_dims
    n_objects = len(spec.objects)
    samples: list[Sample] = []

    for obj_index, obj in enumerate(spec.objects):
        for j in range(spec.instances_per_object):
            inst = f"{obj}_i{j:02d}"
            params = spec.instance_params[j]
            mean = params.mean + obj_index * spec.object_mean_offset
            for seq_index, seq in enumerate(sequences):
                for n in range(spec.samples_per_cell):
                    sample_id = f"{inst}_s{seq_index:02d}_{n:03d}"
                    bbox = _draw_bbox(rng, spec.image_size, spec.bbox_coverage)
                    fm = mean + params.std * _skew_normal(
                        rng, params.skew, (gh, gw, depth)
                    )
                    noise = spec.background.mean_for(seq_index) + (
                        spec.background.std_for(seq_index)
                        * rng.standard_normal((gh, gw, depth))
                    )
                    mask = build_mask(bbox, spec.image_size, (gh, gw))
                    fm = np.where(mask[:, :, None], fm, fm + noise)
                    feature_ref = f"tensors/{sample_id}.tnsr"
                    write_tensor(out / feature_ref, (gh, gw, depth), fm)
                    logits_ref = None
                    if spec.logits.enabled:
                        logit = spec.logits.noise_std * rng.standard_normal(n_objects)
                        logit[obj_index] += spec.logits.scale
                        logits_ref = f"tensors/{sample_id}.logits.tnsr"
                        write_tensor(out / logits_ref, (n_objects,), logit)
                    samples.append(
                        Sample(
                            sample_id=sample_id,
                            instance_label=inst,
                            sequence_id=seq,
                            image_size=tuple(spec.image_size),
                            bbox=bbox,
                            predicted_object=obj,
                            feature_ref=feature_ref,
                            logits_ref=logits_ref,
                        )
                    )

    dataset = Dataset(
        label_space=space,
        sequences=sequences,
        samples=tuple(samples),
        base_dir=out,
    )
    write_json(out / "manifest.json", dataset_to_manifest_dict(dataset))
    return dataset
