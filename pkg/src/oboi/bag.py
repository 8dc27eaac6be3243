"""Object-conditioned bag of instance prototypes.

A bag stores one prototype per instance: the arithmetic mean of that
instance's support embeddings, kept in raw (pre-transform) space. The
SimpleShot feature transform and the optional per-dimension standardization
are applied at query time to both query and prototypes, so the transform
kind can be switched without re-reading tensors. Queries are answered by
squared-Euclidean nearest prototype, searched only within the instances of
the detector-predicted object when conditioning is on.

Transform statistics (per-dimension shift/scale fitted on the support set)
are frozen at first build and reused by add_instance, so prototypes added
later never perturb earlier ones; rebuilding the bag from scratch refits
them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import jsonio
from .errors import (
    DuplicateInstance,
    EmptySupport,
    InvalidManifest,
    MissingLogits,
    MissingStats,
    NoCandidates,
    ShapeMismatch,
    UnknownInstance,
)
from .model import HeadConfig, LabelSpace, ReductionConfig, Sample
from .reduction import apply_standardizer, build_mask, reduce_features, standardizer_fit
from .tensorstore import Dataset, read_tensor, write_tensor

BAG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Classification:
    """Result of one query: argmin instance plus the searched distances."""

    predicted_instance: str
    distances: dict[str, float]
    conditioned_on: str | None


@dataclass(frozen=True)
class InstanceBag:
    """Immutable prototype collection plus head configuration."""

    label_space: LabelSpace
    reduction_config: ReductionConfig
    head_config: HeadConfig
    prototypes: dict[str, np.ndarray]
    support_counts: dict[str, int]
    transform_stats: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        protos = {}
        for inst, p in self.prototypes.items():
            if inst not in set(self.label_space.instance_classes):
                raise UnknownInstance(f"prototype for unknown instance {inst!r}")
            arr = np.asarray(p, dtype=np.float64).reshape(-1).copy()
            arr.flags.writeable = False
            protos[inst] = arr
        dims = {p.shape[0] for p in protos.values()}
        if len(dims) > 1:
            raise ShapeMismatch(f"prototypes disagree on dimensionality: {sorted(dims)}")
        object.__setattr__(self, "prototypes", protos)
        object.__setattr__(self, "support_counts", dict(self.support_counts))
        for inst, c in self.support_counts.items():
            if c < 1:
                raise EmptySupport(f"support_counts[{inst!r}] = {c}")

    @property
    def dim(self) -> int:
        for p in self.prototypes.values():
            return p.shape[0]
        return 0

    def instances(self) -> list[str]:
        """Bag instances in label-space declaration order (tie-break order)."""
        return [i for i in self.label_space.instance_classes if i in self.prototypes]


def embed_sample(
    sample: Sample,
    feature_map: np.ndarray | None,
    config: ReductionConfig,
    logits: np.ndarray | None = None,
) -> np.ndarray:
    """Raw embedding of one sample: mask from its box, then reduction."""
    if config.mode == "logits":
        if logits is None:
            raise MissingLogits(f"sample {sample.sample_id!r} has no logits")
        return reduce_features(None, None, config, logits=logits)
    if feature_map is None:
        raise ShapeMismatch(f"sample {sample.sample_id!r} has no feature map")
    mask = None
    if config.use_mask:
        fm = np.asarray(feature_map)
        mask = build_mask(sample.bbox, sample.image_size, (fm.shape[0], fm.shape[1]))
    return reduce_features(feature_map, mask, config)


def build_bag(
    support,
    label_space: LabelSpace,
    reduction_config: ReductionConfig,
    head_config: HeadConfig,
) -> InstanceBag:
    """Build a bag from support items.

    ``support`` is a list of (Sample, feature_map) or
    (Sample, feature_map, logits) tuples. Each instance's prototype is the
    arithmetic mean of its raw support embeddings; per-dimension transform
    statistics are fitted jointly on all support embeddings when the head
    needs them (simpleshot with CL2N) or when standardization is enabled.
    Instances with no support are simply absent from the bag.
    """
    if not support:
        raise EmptySupport("empty support set")
    by_instance: dict[str, list[np.ndarray]] = {}
    all_embeddings = []
    for item in support:
        sample, feature_map = item[0], item[1]
        logits = item[2] if len(item) > 2 else None
        inst = sample.instance_label
        if inst not in set(label_space.instance_classes):
            raise UnknownInstance(f"support sample for unknown instance {inst!r}")
        v = embed_sample(sample, feature_map, reduction_config, logits=logits)
        by_instance.setdefault(inst, []).append(v)
        all_embeddings.append(v)

    stats = None
    if reduction_config.standardize or (
        head_config.head == "simpleshot" and head_config.simpleshot_transform == "CL2N"
    ):
        stats = standardizer_fit(all_embeddings)

    prototypes = {}
    counts = {}
    for inst in label_space.instance_classes:
        if inst in by_instance:
            group = np.stack(by_instance[inst])
            prototypes[inst] = group.mean(axis=0)
            counts[inst] = group.shape[0]
    return InstanceBag(
        label_space=label_space,
        reduction_config=reduction_config,
        head_config=head_config,
        prototypes=prototypes,
        support_counts=counts,
        transform_stats=stats,
    )


def build_bag_from_dataset(
    dataset: Dataset,
    support_ids,
    reduction_config: ReductionConfig,
    head_config: HeadConfig,
) -> InstanceBag:
    """Convenience wrapper: load support tensors by sample id, then build."""
    items = []
    for sid in support_ids:
        s = dataset.sample(sid)
        if reduction_config.mode == "logits":
            items.append((s, None, dataset.logits(sid)))
        else:
            items.append((s, dataset.feature_map(sid)))
    return build_bag(items, dataset.label_space, reduction_config, head_config)


def add_instance(
    bag: InstanceBag,
    instance: str,
    support_embeddings,
    replace: bool = False,
) -> InstanceBag:
    """Return a new bag with one more instance prototype.

    The prototype is the mean of the given raw embeddings. Transform
    statistics are deliberately NOT refitted: they stay frozen from the
    original build, so classifications among pre-existing instances are
    untouched by the addition. (A bag rebuilt from scratch over the union
    support would carry different statistics when CL2N or standardization
    is active; rebuild explicitly when fresh statistics matter.)
    """
    if instance not in set(bag.label_space.instance_classes):
        raise UnknownInstance(f"unknown instance id {instance!r}")
    if instance in bag.prototypes and not replace:
        raise DuplicateInstance(f"instance {instance!r} already in bag")
    group = np.stack([np.asarray(e, dtype=np.float64).reshape(-1) for e in support_embeddings])
    if group.shape[0] == 0:
        raise EmptySupport(f"no support embeddings for {instance!r}")
    prototypes = dict(bag.prototypes)
    counts = dict(bag.support_counts)
    prototypes[instance] = group.mean(axis=0)
    counts[instance] = group.shape[0]
    return InstanceBag(
        label_space=bag.label_space,
        reduction_config=bag.reduction_config,
        head_config=bag.head_config,
        prototypes=prototypes,
        support_counts=counts,
        transform_stats=bag.transform_stats,
    )


def simpleshot_transform(
    embedding: np.ndarray,
    transform_stats: tuple[np.ndarray, np.ndarray] | None,
    kind: str,
) -> np.ndarray:
    """Apply a SimpleShot feature transform to one embedding.

    'none' is the identity; 'L2N' divides by the Euclidean norm; 'CL2N'
    subtracts the support-set mean (transform_stats shift), then
    L2-normalizes. Zero vectors pass through unchanged instead of dividing
    by zero.
    """
    x = np.asarray(embedding, dtype=np.float64)
    if kind == "none":
        return x
    if kind == "CL2N":
        if transform_stats is None:
            raise MissingStats("CL2N needs fitted transform statistics")
        x = x - transform_stats[0]
    elif kind != "L2N":
        raise MissingStats(f"unknown transform kind {kind!r}")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return x
    return x / norm


def _working_vectors(bag: InstanceBag, matrix: np.ndarray) -> np.ndarray:
    """Map raw embeddings (N, dim) into the bag's comparison space."""
    x = np.asarray(matrix, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if bag.reduction_config.standardize:
        if bag.transform_stats is None:
            raise MissingStats("standardize=True but bag has no fitted statistics")
        x = apply_standardizer(x, bag.transform_stats)
    if bag.head_config.head == "simpleshot":
        kind = bag.head_config.simpleshot_transform
        if kind == "CL2N":
            if bag.transform_stats is None:
                raise MissingStats("CL2N needs fitted transform statistics")
            # center = support mean expressed in the (possibly standardized)
            # working space; zero when standardization already centered it
            center = bag.transform_stats[0]
            if bag.reduction_config.standardize:
                center = apply_standardizer(center, bag.transform_stats)
            x = x - center
            norms = np.linalg.norm(x, axis=1, keepdims=True)
            np.divide(x, norms, out=x, where=norms != 0.0)
        elif kind == "L2N":
            norms = np.linalg.norm(x, axis=1, keepdims=True)
            x = np.divide(x, norms, out=x.copy(), where=norms != 0.0)
    return x[0] if squeeze else x


def _candidates(bag: InstanceBag, predicted_object: str | None) -> tuple[list[str], str | None]:
    """Candidate instances in declaration order, honoring conditioning."""
    if bag.head_config.conditioned and predicted_object is not None:
        cands = [
            i
            for i in bag.instances()
            if bag.label_space.f_map.get(i) == predicted_object
        ]
        if cands:
            return cands, predicted_object
        if bag.head_config.fallback_unconditioned:
            return bag.instances(), None
        raise NoCandidates(predicted_object)
    return bag.instances(), None


def classify(
    bag: InstanceBag,
    query_embedding: np.ndarray,
    predicted_object: str | None = None,
) -> Classification:
    """Nearest-prototype search for one query embedding.

    The candidate set is the bag's instances whose object class matches
    ``predicted_object`` when conditioning is on, otherwise all instances.
    Distances are squared Euclidean after the bag's transform is applied to
    both query and prototypes. Ties break toward the lowest declaration
    index. The returned distance map covers the searched candidates only.
    """
    q = np.asarray(query_embedding, dtype=np.float64).reshape(-1)
    if bag.dim and q.shape[0] != bag.dim:
        raise ShapeMismatch(f"query has dim {q.shape[0]}, bag has {bag.dim}")
    if not bag.prototypes:
        raise EmptySupport("bag has no prototypes")
    cands, conditioned_on = _candidates(bag, predicted_object)
    qw = _working_vectors(bag, q)
    distances = {}
    best = None
    best_d = np.inf
    for inst in cands:
        pw = _working_vectors(bag, bag.prototypes[inst])
        d = float(((qw - pw) ** 2).sum())
        distances[inst] = d
        if d < best_d:
            best, best_d = inst, d
    return Classification(
        predicted_instance=best, distances=distances, conditioned_on=conditioned_on
    )


def classify_batch(
    bag: InstanceBag,
    embeddings: np.ndarray,
    predicted_objects,
) -> list[str]:
    """Vectorized nearest-prototype search for many queries.

    Groups queries by predicted object (under conditioning) and computes
    squared Euclidean distances against the per-object candidate block via
    one matrix product per group. Tie behaviour matches classify: argmin
    takes the first (lowest declaration index) candidate.
    """
    embs = np.asarray(embeddings, dtype=np.float64)
    if embs.ndim != 2:
        raise ShapeMismatch(f"embeddings must be (N, dim), got {embs.shape}")
    if bag.dim and embs.shape[1] != bag.dim:
        raise ShapeMismatch(f"queries have dim {embs.shape[1]}, bag has {bag.dim}")
    n = embs.shape[0]
    if len(predicted_objects) != n:
        raise ShapeMismatch("predicted_objects length != number of embeddings")

    insts = bag.instances()
    proto = _working_vectors(bag, np.stack([bag.prototypes[i] for i in insts]))
    queries = _working_vectors(bag, embs)
    proto_sq = (proto * proto).sum(axis=1)
    idx_of = {inst: k for k, inst in enumerate(insts)}

    groups: dict[str | None, list[int]] = {}
    for j, obj in enumerate(predicted_objects):
        key = obj if bag.head_config.conditioned else None
        groups.setdefault(key, []).append(j)

    out: list[str | None] = [None] * n
    for key in sorted(groups, key=lambda k: (k is None, k)):
        rows = groups[key]
        if key is None:
            cand = insts
        else:
            cand, _ = _candidates(bag, key)
        cols = [idx_of[i] for i in cand]
        q = queries[rows]
        p = proto[cols]
        d = (q * q).sum(axis=1)[:, None] + proto_sq[cols][None, :] - 2.0 * (q @ p.T)
        np.maximum(d, 0.0, out=d)
        winners = d.argmin(axis=1)
        for r, wcol in zip(rows, winners):
            out[r] = cand[wcol]
    return out  # type: ignore[return-value]


def _safe_name(instance: str, index: int) -> str:
    keep = "".join(c if c.isalnum() or c in "._-" else "_" for c in instance)
    return f"{index:03d}_{keep}" if keep else f"{index:03d}"


def save_bag(bag: InstanceBag, out_dir) -> None:
    """Persist a bag: bag.json plus one tensor file per prototype.

    Prototype payloads are stored in the float32 tensor container, so a
    load/save cycle of an on-disk bag is byte-identical.
    """
    out = Path(out_dir)
    (out / "prototypes").mkdir(parents=True, exist_ok=True)
    entries = []
    for k, inst in enumerate(bag.instances()):
        rel = f"prototypes/{_safe_name(inst, k)}.tnsr"
        write_tensor(out / rel, (bag.prototypes[inst].shape[0],), bag.prototypes[inst])
        entries.append(
            {"instance": inst, "path": rel, "support_count": bag.support_counts.get(inst, 1)}
        )
    doc = {
        "schema_version": BAG_SCHEMA_VERSION,
        "label_space": bag.label_space.to_dict(),
        "reduction_config": bag.reduction_config.to_dict(),
        "head_config": bag.head_config.to_dict(),
        "prototypes": entries,
        "transform_stats": None,
    }
    if bag.transform_stats is not None:
        shift, scale = bag.transform_stats
        write_tensor(out / "stats_shift.tnsr", (shift.shape[0],), shift)
        write_tensor(out / "stats_scale.tnsr", (scale.shape[0],), scale)
        doc["transform_stats"] = {
            "shift_path": "stats_shift.tnsr",
            "scale_path": "stats_scale.tnsr",
        }
    jsonio.write_json(out / "bag.json", doc)


def load_bag(bag_dir) -> InstanceBag:
    """Load a persisted bag; raises InvalidManifest on structural problems."""
    base = Path(bag_dir)
    doc = jsonio.read_json(base / "bag.json")
    if doc.get("schema_version") != BAG_SCHEMA_VERSION:
        raise InvalidManifest([f"unsupported bag schema {doc.get('schema_version')!r}"])
    label_space = LabelSpace.from_dict(doc["label_space"])
    prototypes = {}
    counts = {}
    for e in doc.get("prototypes", []):
        _, values = read_tensor(base / e["path"])
        prototypes[e["instance"]] = values
        counts[e["instance"]] = int(e.get("support_count", 1))
    stats = None
    if doc.get("transform_stats"):
        _, shift = read_tensor(base / doc["transform_stats"]["shift_path"])
        _, scale = read_tensor(base / doc["transform_stats"]["scale_path"])
        stats = (shift, scale)
    return InstanceBag(
        label_space=label_space,
        reduction_config=ReductionConfig.from_dict(doc["reduction_config"]),
        head_config=HeadConfig.from_dict(doc["head_config"]),
        prototypes=prototypes,
        support_counts=counts,
        transform_stats=stats,
    )
