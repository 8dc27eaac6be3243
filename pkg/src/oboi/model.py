"""Domain types shared by all modules: label spaces, samples, configuration.

A label space is two-level: every *instance* (a specific personal object)
belongs to exactly one *object class* (a generic detector category). All
identifiers are opaque strings; declaration order in the manifest is
significant and is the tie-break order used everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidBox, InvalidConfig, UnknownInstance

REDUCTION_MODES = ("logits", "ee", "aee")
HEADS = ("protonet", "simpleshot")
TRANSFORMS = ("none", "L2N", "CL2N")


@dataclass(frozen=True)
class LabelSpace:
    """Object classes, instance classes, and the instance-to-object map.

    ``object_classes`` and ``instance_classes`` keep declaration order;
    ``f_map`` assigns each instance id to its object id.
    """

    object_classes: tuple[str, ...]
    instance_classes: tuple[str, ...]
    f_map: dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, "object_classes", tuple(self.object_classes))
        object.__setattr__(self, "instance_classes", tuple(self.instance_classes))
        object.__setattr__(self, "f_map", dict(self.f_map))

    def object_of(self, instance: str) -> str:
        """Map an instance id to its object class (total over instances)."""
        try:
            return self.f_map[instance]
        except KeyError:
            raise UnknownInstance(f"unknown instance id {instance!r}") from None

    def instances_of(self, object_class: str) -> tuple[str, ...]:
        """Instances of one object class, in declaration order."""
        return tuple(
            i for i in self.instance_classes if self.f_map.get(i) == object_class
        )

    def instance_index(self, instance: str) -> int:
        """Declaration index of an instance; the global tie-break key."""
        try:
            return self.instance_classes.index(instance)
        except ValueError:
            raise UnknownInstance(f"unknown instance id {instance!r}") from None

    def to_dict(self) -> dict:
        return {
            "objects": list(self.object_classes),
            "instances": [
                {"id": i, "object": self.f_map.get(i)} for i in self.instance_classes
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "LabelSpace":
        instances = [e["id"] for e in d.get("instances", [])]
        f_map = {e["id"]: e.get("object") for e in d.get("instances", [])}
        return LabelSpace(tuple(d.get("objects", [])), tuple(instances), f_map)


def instance_to_object(label_space: LabelSpace, instance: str) -> str:
    """Resolve the instance-to-object map; raises UnknownInstance."""
    return label_space.object_of(instance)


def validate_label_space(label_space: LabelSpace) -> list[str]:
    """Check all LabelSpace invariants; returns a list of violations.

    An empty list means the space is well formed. Violations are data, not
    errors: each entry names the offending id and the rule it breaks.
    """
    violations = []
    seen = set()
    for o in label_space.object_classes:
        if o in seen:
            violations.append(f"duplicate object id {o!r}")
        seen.add(o)
    seen = set()
    for i in label_space.instance_classes:
        if i in seen:
            violations.append(f"duplicate instance id {i!r}")
        seen.add(i)
    objects = set(label_space.object_classes)
    for i in label_space.instance_classes:
        if i not in label_space.f_map:
            violations.append(f"instance {i!r} has no object mapping")
        elif label_space.f_map[i] not in objects:
            violations.append(
                f"instance {i!r} maps to absent object {label_space.f_map[i]!r}"
            )
    for key in label_space.f_map:
        if key not in set(label_space.instance_classes):
            violations.append(f"mapping for unknown instance {key!r}")
    mapped = {label_space.f_map.get(i) for i in label_space.instance_classes}
    for o in label_space.object_classes:
        if o not in mapped:
            violations.append(f"object {o!r} has no instances")
    return violations


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image pixel coordinates, origin top-left."""

    x1: float
    y1: float
    x2: float
    y2: float

    def validate(self, image_size: tuple[int, int]) -> None:
        """Raise InvalidBox unless 0 <= x1 < x2 <= W and 0 <= y1 < y2 <= H."""
        h, w = image_size
        if not (0 <= self.x1 < self.x2 <= w and 0 <= self.y1 < self.y2 <= h):
            raise InvalidBox(
                f"box ({self.x1}, {self.y1}, {self.x2}, {self.y2}) "
                f"invalid for image {h}x{w}"
            )

    def as_list(self) -> list[float]:
        return [float(self.x1), float(self.y1), float(self.x2), float(self.y2)]


@dataclass(frozen=True)
class Sample:
    """One acquired frame: ground-truth instance, detection, tensor refs.

    ``predicted_object`` is stored rather than recomputed: the engine never
    runs a detector itself, the extractor bridge or the synthetic generator
    fills it in.
    """

    sample_id: str
    instance_label: str
    sequence_id: str
    image_size: tuple[int, int]  # (H, W)
    bbox: BoundingBox
    predicted_object: str
    feature_ref: str
    logits_ref: str | None = None


@dataclass(frozen=True)
class ReductionConfig:
    """How a feature map becomes an embedding.

    mode 'logits' passes the detector logits through unchanged, 'ee' is the
    masked per-channel mean, 'aee' concatenates the first ``moment_order``
    per-channel statistical moments. 'ee' is semantically identical to 'aee'
    with moment_order=1. ``standardize`` rescales every embedding dimension
    with statistics fitted on the support set at bag-build time.
    """

    mode: str = "aee"
    moment_order: int = 4
    standardize: bool = False
    use_mask: bool = True

    def __post_init__(self):
        if self.mode not in REDUCTION_MODES:
            raise InvalidConfig(f"mode must be one of {REDUCTION_MODES}, got {self.mode!r}")
        if not isinstance(self.moment_order, int) or not 1 <= self.moment_order <= 8:
            raise InvalidConfig(f"moment_order must be an int in [1, 8], got {self.moment_order!r}")

    @property
    def effective_order(self) -> int:
        """Moment order actually used: 1 for 'ee', moment_order for 'aee'."""
        return 1 if self.mode == "ee" else self.moment_order

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "moment_order": self.moment_order,
            "standardize": self.standardize,
            "use_mask": self.use_mask,
        }

    @staticmethod
    def from_dict(d: dict) -> "ReductionConfig":
        return ReductionConfig(
            mode=d.get("mode", "aee"),
            moment_order=int(d.get("moment_order", 4)),
            standardize=bool(d.get("standardize", False)),
            use_mask=bool(d.get("use_mask", True)),
        )


@dataclass(frozen=True)
class HeadConfig:
    """Prototype head and search behaviour.

    ``simpleshot_transform`` is only meaningful for head='simpleshot' and is
    ignored by 'protonet'. ``conditioned`` restricts the prototype search to
    instances of the detector-predicted object; ``fallback_unconditioned``
    widens the search to all instances when that candidate set is empty.
    """

    head: str = "protonet"
    simpleshot_transform: str = "none"
    conditioned: bool = True
    fallback_unconditioned: bool = False

    def __post_init__(self):
        if self.head not in HEADS:
            raise InvalidConfig(f"head must be one of {HEADS}, got {self.head!r}")
        if self.simpleshot_transform not in TRANSFORMS:
            raise InvalidConfig(
                f"simpleshot_transform must be one of {TRANSFORMS}, "
                f"got {self.simpleshot_transform!r}"
            )

    def to_dict(self) -> dict:
        return {
            "head": self.head,
            "simpleshot_transform": self.simpleshot_transform,
            "conditioned": self.conditioned,
            "fallback_unconditioned": self.fallback_unconditioned,
        }

    @staticmethod
    def from_dict(d: dict) -> "HeadConfig":
        return HeadConfig(
            head=d.get("head", "protonet"),
            simpleshot_transform=d.get("simpleshot_transform", "none"),
            conditioned=bool(d.get("conditioned", True)),
            fallback_unconditioned=bool(d.get("fallback_unconditioned", False)),
        )
