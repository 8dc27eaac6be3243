"""Evaluation: macro instance accuracy, per-object accuracy, confusion.

acc_i is the unweighted mean of per-instance accuracies over the instances
that have at least one sample in the evaluated split (macro averaging);
acc_o[o] is the same mean restricted to the instances of object o. With
balanced per-instance counts macro equals micro accuracy exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bag import InstanceBag, classify_batch, embed_sample
from .episodes import Episode
from .errors import EmptySplit, UndefinedGain
from .model import LabelSpace, ReductionConfig
from .tensorstore import Dataset

REPORT_SCHEMA_VERSION = 1


@dataclass
class MetricsReport:
    """Metrics of one evaluation run plus the configuration that made it."""

    acc_i: float
    acc_o: dict[str, float]
    per_instance_acc: dict[str, float]
    instance_order: list[str]
    confusion: np.ndarray  # (I, I) ints, rows = true, cols = predicted
    test_counts: dict[str, int]
    config: dict = field(default_factory=dict)

    def micro_accuracy(self) -> float:
        total = self.confusion.sum()
        return 100.0 * float(np.trace(self.confusion)) / float(total) if total else 0.0

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "acc_i": float(self.acc_i),
            "acc_o": {k: float(v) for k, v in self.acc_o.items()},
            "per_instance_acc": {k: float(v) for k, v in self.per_instance_acc.items()},
            "confusion": {
                "instances": list(self.instance_order),
                "matrix": self.confusion.astype(int).tolist(),
            },
            "test_counts": {k: int(v) for k, v in self.test_counts.items()},
            "micro_accuracy": float(self.micro_accuracy()),
            "config": self.config,
        }


def relative_gain(acc_1: float, acc_2: float) -> float:
    """Relative gain of acc_2 over acc_1, in percent of acc_1.

    Signed: positive when acc_2 > acc_1. Undefined for acc_1 = 0.
    """
    if acc_1 == 0:
        raise UndefinedGain("relative gain undefined for zero baseline")
    return 100.0 * (acc_2 - acc_1) / acc_1


def embed_split(
    dataset: Dataset,
    sample_ids,
    config: ReductionConfig,
    threads: int = 1,
) -> np.ndarray:
    """Embeddings for a list of sample ids, stacked in the given order.

    Each sample's embedding is a pure function of its own tensors, so the
    result is independent of the thread count.
    """
    ids = list(sample_ids)
    out: list[np.ndarray | None] = [None] * len(ids)

    def work(i: int) -> None:
        s = dataset.sample(ids[i])
        logits = dataset.logits(ids[i]) if config.mode == "logits" else None
        fm = dataset.feature_map(ids[i]) if config.mode != "logits" else None
        out[i] = embed_sample(s, fm, config, logits=logits)

    if threads <= 1:
        for i in range(len(ids)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            list(ex.map(work, range(len(ids))))
    return np.stack(out) if ids else np.empty((0, 0))


def aggregate_metrics(
    label_space: LabelSpace,
    true_instances,
    predictions,
    config: dict | None = None,
) -> MetricsReport:
    """Fold per-sample predictions into the macro metrics and confusion."""
    order = list(label_space.instance_classes)
    index = {inst: i for i, inst in enumerate(order)}
    confusion = np.zeros((len(order), len(order)), dtype=np.int64)
    for t, p in zip(true_instances, predictions):
        confusion[index[t], index[p]] += 1

    per_instance = {}
    counts = {}
    for inst in order:
        row = confusion[index[inst]]
        n = int(row.sum())
        if n == 0:
            continue
        counts[inst] = n
        per_instance[inst] = 100.0 * float(row[index[inst]]) / n

    acc_o = {}
    for obj in label_space.object_classes:
        vals = [per_instance[i] for i in label_space.instances_of(obj) if i in per_instance]
        if vals:
            acc_o[obj] = float(np.mean(vals))
    acc_i = float(np.mean(list(per_instance.values()))) if per_instance else 0.0
    return MetricsReport(
        acc_i=acc_i,
        acc_o=acc_o,
        per_instance_acc=per_instance,
        instance_order=order,
        confusion=confusion,
        test_counts=counts,
        config=dict(config or {}),
    )


def evaluate(
    bag: InstanceBag,
    episode: Episode,
    dataset: Dataset,
    split: str = "test",
    threads: int = 1,
) -> MetricsReport:
    """Classify every sample of the chosen split and compute the metrics.

    Each query is conditioned on its own stored predicted object. Results
    are aggregated in split order and do not depend on ``threads``.
    """
    if split not in ("test", "val"):
        raise EmptySplit(f"split must be 'test' or 'val', got {split!r}")
    ids = list(episode.test if split == "test" else episode.val)
    if not ids:
        raise EmptySplit(f"episode has no {split} samples")
    samples = [dataset.sample(i) for i in ids]
    embeddings = embed_split(dataset, ids, bag.reduction_config, threads=threads)
    predictions = classify_batch(bag, embeddings, [s.predicted_object for s in samples])
    config = {
        "split": split,
        "protocol": episode.protocol,
        "k": episode.k,
        "seed": episode.seed,
        "reduction": bag.reduction_config.to_dict(),
        "head": bag.head_config.to_dict(),
    }
    return aggregate_metrics(
        bag.label_space,
        [s.instance_label for s in samples],
        predictions,
        config=config,
    )


def report_table(report: MetricsReport) -> str:
    """Aligned plain-text view; percentages rounded to 2 decimals."""
    lines = []
    lines.append(f"{'acc_i':<24}{report.acc_i:>8.2f}")
    lines.append(f"{'micro accuracy':<24}{report.micro_accuracy():>8.2f}")
    lines.append("")
    lines.append(f"{'object':<24}{'acc_o':>8}")
    for obj, acc in report.acc_o.items():
        lines.append(f"{obj:<24}{acc:>8.2f}")
    lines.append("")
    lines.append(f"{'instance':<24}{'acc':>8}{'n':>8}")
    for inst in report.instance_order:
        if inst in report.per_instance_acc:
            lines.append(
                f"{inst:<24}{report.per_instance_acc[inst]:>8.2f}"
                f"{report.test_counts[inst]:>8d}"
            )
    return "\n".join(lines) + "\n"
