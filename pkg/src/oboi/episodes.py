"""Episode construction: support/test/val splits and instance-count sweeps.

Protocols:
  * 1SAS: one support shot per (instance, sequence); test and support share
    domains.
  * 1S1S: one support shot per instance, drawn from the first sequence in
    manifest order only; test spans all sequences (domain shift).
  * kshot: k support shots per (instance, sequence).

After support is removed, the remaining samples of each instance are split
80% test / 20% validation (test count rounded up). All randomness comes
from numpy's PCG64 generator seeded with the episode seed; draws iterate
instances in declaration order, then sequences in manifest order, so a
given (manifest, seed) pair always produces the identical episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptySupport,
    IncompleteCoverage,
    InvalidConfig,
    NotEnoughInstances,
)
from .model import LabelSpace
from .tensorstore import Dataset

PROTOCOLS = ("1sas", "1s1s", "kshot")


@dataclass(frozen=True)
class Episode:
    """Disjoint support/test/val sample-id lists for one protocol run."""

    protocol: str
    k: int | None
    seed: int
    support: tuple[str, ...]
    test: tuple[str, ...]
    val: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "k": self.k,
            "seed": self.seed,
            "support": list(self.support),
            "test": list(self.test),
            "val": list(self.val),
        }

    @staticmethod
    def from_dict(d: dict) -> "Episode":
        return Episode(
            protocol=d["protocol"],
            k=(int(d["k"]) if d.get("k") is not None else None),
            seed=int(d["seed"]),
            support=tuple(d["support"]),
            test=tuple(d["test"]),
            val=tuple(d["val"]),
        )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _cells(dataset: Dataset) -> dict[tuple[str, str], list[str]]:
    """(instance, sequence) -> sample ids, everything in manifest order."""
    cells: dict[tuple[str, str], list[str]] = {}
    for s in dataset.samples:
        cells.setdefault((s.instance_label, s.sequence_id), []).append(s.sample_id)
    return cells


def _split_rest(
    dataset: Dataset, support: set[str], rng: np.random.Generator
) -> tuple[list[str], list[str]]:
    """Per-instance 80/20 test/val split of the non-support samples."""
    test: list[str] = []
    val: list[str] = []
    for inst in dataset.label_space.instance_classes:
        rest = [
            s.sample_id
            for s in dataset.samples
            if s.instance_label == inst and s.sample_id not in support
        ]
        if not rest:
            continue
        perm = rng.permutation(len(rest))
        n_test = math.ceil(0.8 * len(rest))
        test.extend(rest[i] for i in perm[:n_test])
        val.extend(rest[i] for i in perm[n_test:])
    return test, val


def _draw_support_per_cell(
    dataset: Dataset, k: int, rng: np.random.Generator
) -> list[str]:
    cells = _cells(dataset)
    support: list[str] = []
    for inst in dataset.label_space.instance_classes:
        for seq in dataset.sequences:
            ids = cells.get((inst, seq), [])
            if len(ids) < k:
                raise IncompleteCoverage(inst, seq, f"{len(ids)} sample(s), need {k}")
            if k == 1:
                support.append(ids[int(rng.integers(len(ids)))])
            else:
                picks = rng.choice(len(ids), size=k, replace=False)
                support.extend(ids[int(i)] for i in picks)
    return support


def split_1sas(dataset: Dataset, seed: int) -> Episode:
    """One support shot per (instance, sequence); same-domain protocol."""
    rng = _rng(seed)
    support = _draw_support_per_cell(dataset, 1, rng)
    test, val = _split_rest(dataset, set(support), rng)
    return Episode("1sas", None, int(seed), tuple(support), tuple(test), tuple(val))


def split_1s1s(dataset: Dataset, seed: int) -> Episode:
    """One support shot per instance from the first sequence only."""
    if not dataset.sequences:
        raise EmptySupport("dataset declares no sequences")
    first = dataset.sequences[0]
    rng = _rng(seed)
    cells = _cells(dataset)
    support: list[str] = []
    for inst in dataset.label_space.instance_classes:
        ids = cells.get((inst, first), [])
        if not ids:
            raise IncompleteCoverage(inst, first, "no samples in the first sequence")
        support.append(ids[int(rng.integers(len(ids)))])
    test, val = _split_rest(dataset, set(support), rng)
    return Episode("1s1s", None, int(seed), tuple(support), tuple(test), tuple(val))


def split_kshot(dataset: Dataset, k: int, seed: int) -> Episode:
    """k support shots per (instance, sequence)."""
    if k < 1:
        raise IncompleteCoverage("*", "*", f"k must be >= 1, got {k}")
    rng = _rng(seed)
    support = _draw_support_per_cell(dataset, int(k), rng)
    test, val = _split_rest(dataset, set(support), rng)
    return Episode("kshot", int(k), int(seed), tuple(support), tuple(test), tuple(val))


def make_split(dataset: Dataset, protocol: str, seed: int, k: int | None = None) -> Episode:
    """Dispatch on protocol name ('1sas', '1s1s', 'kshot')."""
    if protocol == "1sas":
        return split_1sas(dataset, seed)
    if protocol == "1s1s":
        return split_1s1s(dataset, seed)
    if protocol == "kshot":
        return split_kshot(dataset, k if k is not None else 1, seed)
    raise InvalidConfig(f"unknown protocol {protocol!r}")


def select_instances(dataset: Dataset, p: int) -> Dataset:
    """Keep the first p instances of each object class, in manifest order.

    Subsets are nested: select_instances(ds, 2).label_space is a prefix of
    select_instances(ds, 3).label_space per object. Samples of dropped
    instances are removed and the label space is rebuilt.
    """
    if p < 1:
        raise NotEnoughInstances("*", 0, p)
    keep: list[str] = []
    for obj in dataset.label_space.object_classes:
        insts = dataset.label_space.instances_of(obj)
        if len(insts) < p:
            raise NotEnoughInstances(obj, len(insts), p)
        keep.extend(insts[:p])
    keep_order = [i for i in dataset.label_space.instance_classes if i in set(keep)]
    space = LabelSpace(
        object_classes=dataset.label_space.object_classes,
        instance_classes=tuple(keep_order),
        f_map={i: dataset.label_space.f_map[i] for i in keep_order},
    )
    samples = tuple(s for s in dataset.samples if s.instance_label in set(keep_order))
    return Dataset(
        label_space=space,
        sequences=dataset.sequences,
        samples=samples,
        base_dir=dataset.base_dir,
    )


def balance_dataset(dataset: Dataset, seed: int) -> Dataset:
    """Uniformly down-sample every (instance, sequence) cell to the minimum.

    Real extractions are rarely balanced; this reduces each cell to the
    smallest cell count by uniform sampling without replacement, keeping
    manifest order among the survivors.
    """
    cells = _cells(dataset)
    counts = [
        len(cells.get((i, q), []))
        for i in dataset.label_space.instance_classes
        for q in dataset.sequences
    ]
    if not counts or min(counts) == 0:
        raise EmptySupport("balance_dataset needs every (instance, sequence) cell populated")
    m = min(counts)
    rng = _rng(seed)
    keep_ids: set[str] = set()
    for inst in dataset.label_space.instance_classes:
        for seq in dataset.sequences:
            ids = cells[(inst, seq)]
            picks = rng.choice(len(ids), size=m, replace=False)
            keep_ids.update(ids[int(i)] for i in picks)
    samples = tuple(s for s in dataset.samples if s.sample_id in keep_ids)
    return Dataset(
        label_space=dataset.label_space,
        sequences=dataset.sequences,
        samples=samples,
        base_dir=dataset.base_dir,
    )
