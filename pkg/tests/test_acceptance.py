"""Acceptance suite: one test per gating criterion, one printed verdict line
each. Criteria cover the embedding math (oracle, hand cases, equivariance,
mask geometry), the benchmark semantics (relative gain, random baseline,
separability, ablation directions, incremental growth) and the engineering
bar (byte determinism, throughput).
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from dataset_builders import label_space_for, write_disk_dataset
from oboi.bag import (
    InstanceBag,
    add_instance,
    build_bag_from_dataset,
    classify_batch,
    embed_sample,
)
from oboi.cli import main as cli_main
from oboi.episodes import make_split, split_1s1s, split_1sas
from oboi.jsonio import write_json
from oboi.metrics import aggregate_metrics, evaluate, relative_gain
from oboi.model import BoundingBox, HeadConfig, ReductionConfig
from oboi.reduction import build_mask, central_moments, reduce_features
from oboi.synthetic import SyntheticSpec, gen_synthetic


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def runner(name):
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"[FAIL] {name}")
            raise
        else:
            with capsys.disabled():
                print(f"[PASS] {name}")

    return runner


def oracle_moments(values, order):
    vals = [float(v) for v in values]
    mean = math.fsum(vals) / len(vals)
    out = [mean]
    for k in range(2, order + 1):
        out.append(math.fsum((v - mean) ** k for v in vals) / len(vals))
    return out


def oracle_reduce(fm, mask, order):
    gh, gw, depth = fm.shape
    blocks = [[0.0] * depth for _ in range(order)]
    for d in range(depth):
        vals = [float(fm[r, c, d]) for r in range(gh) for c in range(gw) if mask[r, c]]
        ms = oracle_moments(vals, order)
        for k in range(order):
            blocks[k][d] = ms[k]
    return np.array([v for block in blocks for v in block])


def random_case(rng, min_cells=1):
    while True:
        gh = int(rng.integers(1, 9))
        gw = int(rng.integers(1, 9))
        depth = int(rng.integers(1, 17))
        fm = rng.standard_normal((gh, gw, depth)) * float(rng.uniform(0.1, 5))
        mask = rng.random((gh, gw)) < 0.5
        if not mask.any():
            mask[int(rng.integers(gh)), int(rng.integers(gw))] = True
        if mask.sum() >= min_cells:
            return fm, mask


def test_moment_oracle_equivalence(criterion):
    with criterion("moment oracle equivalence: 1000 randomized cases, <10s"):
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        configs = {r: ReductionConfig(mode="aee", moment_order=r) for r in range(1, 7)}
        for _ in range(1000):
            fm, mask = random_case(rng)
            order = int(rng.integers(1, 7))
            got = reduce_features(fm, mask, configs[order])
            want = oracle_reduce(fm, mask, order)
            assert np.abs(got - want).max() <= 1e-9
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_moment_hand_cases(criterion):
    with criterion("moment hand cases exact to 1e-12"):
        got = central_moments([0.0, 2.0], 4)
        assert np.abs(np.asarray(got) - [1, 1, 0, 1]).max() <= 1e-12
        got = central_moments([1.0, 2.0, 3.0, 6.0], 4)
        assert np.abs(np.asarray(got) - [3, 3.5, 4.5, 24.5]).max() <= 1e-12


def test_scale_equivariance(criterion):
    with criterion("scale equivariance: block n scales by alpha^n, 1e-9 relative"):
        rng = np.random.default_rng(202)
        for _ in range(100):
            # 2-cell masks make odd central moments mathematically zero;
            # norm-relative comparison needs >= 3 cells
            fm, mask = random_case(rng, min_cells=3)
            order = int(rng.integers(1, 7))
            config = ReductionConfig(mode="aee", moment_order=order)
            base = reduce_features(fm, mask, config)
            depth = fm.shape[2]
            for alpha in (0.5, 2.0, 10.0):
                got = reduce_features(alpha * fm, mask, config)
                for n in range(1, order + 1):
                    block = got[(n - 1) * depth : n * depth]
                    want = alpha**n * base[(n - 1) * depth : n * depth]
                    err = np.linalg.norm(block - want)
                    assert err <= 1e-9 * np.linalg.norm(want)


def test_mask_geometry(criterion):
    with criterion("mask geometry: worked 4x4 example and degenerate box"):
        mask = build_mask(BoundingBox(16, 16, 48, 48), (64, 64), (4, 4))
        cells = {(r, c) for r in range(4) for c in range(4) if mask[r, c]}
        assert cells == {(1, 1), (1, 2), (2, 1), (2, 2)}
        tiny = build_mask(BoundingBox(30, 30, 31, 31), (64, 64), (4, 4))
        assert tiny.sum() == 1 and tiny[1, 1]


def test_relative_gain_reproduction(criterion):
    with criterion("relative gain: (68.84, 76.34) -> +10.9 and (68.84, 77.08) -> +12.0"):
        assert round(relative_gain(68.84, 76.34), 1) == 10.9
        assert round(relative_gain(68.84, 77.08), 1) == 12.0


def test_random_baseline_recovery(criterion, tmp_path):
    with criterion("random baseline: identical embeddings give mean acc_i near 100/p"):
        constant = np.full((2, 2, 3), 1.25)
        for p in (2, 3, 4, 5):
            ds = write_disk_dataset(
                tmp_path / f"p{p}",
                label_space_for(3, p),
                ["s0", "s1"],
                3,
                lambda inst, s, n: constant,
            )
            accs = []
            for seed in range(100):
                ep = split_1sas(ds, seed=seed)
                bag = build_bag_from_dataset(
                    ds, ep.support, ReductionConfig(mode="ee"), HeadConfig()
                )
                accs.append(evaluate(bag, ep, ds).acc_i)
            mean = float(np.mean(accs))
            assert abs(mean - 100.0 / p) <= 2.0, f"p={p}: mean acc_i {mean:.2f}"


def test_aee_separability(criterion, tmp_path):
    with criterion("separability: shared means, distinct variances; "
                   "ee <= 60, aee R=2 >= 90, <60s"):
        start = time.perf_counter()
        spec = SyntheticSpec.from_dict(
            {
                "objects": 9,
                "instances_per_object": 2,
                "sequences": 2,
                "samples_per_cell": 313,  # 624 after support: 500 test shots
                "image_size": [64, 64],
                "feature_dims": [8, 8, 16],
                "instance_params": [
                    {"mean": 0.0, "std": 1.0},
                    {"mean": 0.0, "std": 2.5},
                ],
            }
        )
        ds = gen_synthetic(spec, 17, tmp_path / "ds")
        ep = split_1sas(ds, seed=5)
        per_instance = {}
        for sid in ep.test:
            inst = ds.sample(sid).instance_label
            per_instance[inst] = per_instance.get(inst, 0) + 1
        assert set(per_instance.values()) == {500}

        accs = {}
        for mode, order in (("ee", 1), ("aee", 2)):
            bag = build_bag_from_dataset(
                ds, ep.support,
                ReductionConfig(mode=mode, moment_order=order), HeadConfig(),
            )
            accs[mode] = evaluate(bag, ep, ds).acc_i
        elapsed = time.perf_counter() - start
        assert accs["ee"] <= 60.0, f"ee acc_i {accs['ee']:.2f}"
        assert accs["aee"] >= 90.0, f"aee acc_i {accs['aee']:.2f}"
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_conditioning_soundness_and_direction(criterion, tmp_path):
    with criterion("conditioning: sound predictions and acc_i >= unconditioned"):
        # instance j of every object shares one distribution: objects are
        # indistinguishable from embeddings alone
        spec = SyntheticSpec.from_dict(
            {
                "objects": 2,
                "instances_per_object": 2,
                "sequences": 2,
                "samples_per_cell": 40,
                "image_size": [32, 32],
                "feature_dims": [4, 4, 8],
                "object_mean_offset": 0.0,
                "instance_params": [
                    {"mean": 0.0, "std": 1.0},
                    {"mean": 3.0, "std": 1.0},
                ],
            }
        )
        ds = gen_synthetic(spec, 23, tmp_path / "ds")
        ep = split_1sas(ds, seed=1)
        config = ReductionConfig(mode="aee", moment_order=2)
        conditioned = evaluate(
            build_bag_from_dataset(ds, ep.support, config, HeadConfig()),
            ep, ds,
        )
        unconditioned = evaluate(
            build_bag_from_dataset(
                ds, ep.support, config, HeadConfig(conditioned=False)
            ),
            ep, ds,
        )
        assert conditioned.acc_i >= unconditioned.acc_i

        # soundness: every prediction stays inside the predicted object,
        # i.e. cross-object confusion blocks are exactly zero
        order = conditioned.instance_order
        space = ds.label_space
        for i, true_inst in enumerate(order):
            for j, pred_inst in enumerate(order):
                if space.object_of(true_inst) != space.object_of(pred_inst):
                    assert conditioned.confusion[i, j] == 0
        # the ablation has bite: the unconditioned head does cross the line
        off_object = sum(
            int(unconditioned.confusion[i, j])
            for i, a in enumerate(order)
            for j, b in enumerate(order)
            if space.object_of(a) != space.object_of(b)
        )
        assert off_object > 0


def test_mask_ablation_direction(criterion, tmp_path):
    with criterion("mask ablation: masked beats unmasked under background shift"):
        spec = SyntheticSpec.from_dict(
            {
                "objects": 2,
                "instances_per_object": 2,
                "sequences": 3,
                "samples_per_cell": 30,
                "image_size": [48, 48],
                "feature_dims": [6, 6, 8],
                "instance_params": [
                    {"mean": 0.0, "std": 1.0},
                    {"mean": 3.0, "std": 1.0},
                ],
                "background": {"mean": 0.0, "std": 1.0, "sequence_mean_step": 4.0},
            }
        )
        ds = gen_synthetic(spec, 31, tmp_path / "ds")
        ep = split_1s1s(ds, seed=2)  # support from the first sequence only
        accs = {}
        for use_mask in (True, False):
            config = ReductionConfig(mode="aee", moment_order=2, use_mask=use_mask)
            bag = build_bag_from_dataset(ds, ep.support, config, HeadConfig())
            accs[use_mask] = evaluate(bag, ep, ds).acc_i
        assert accs[True] > accs[False], f"masked {accs[True]} vs {accs[False]}"


def test_incremental_equality(criterion, tmp_path):
    with criterion("incremental growth: add_instance equals one-shot build"):
        spec = SyntheticSpec.from_dict(
            {
                "objects": 2,
                "instances_per_object": 2,
                "sequences": 2,
                "samples_per_cell": 10,
                "image_size": [32, 32],
                "feature_dims": [4, 4, 6],
                "object_mean_offset": 12.0,
                "instance_params": [
                    {"mean": 0.0, "std": 1.0},
                    {"mean": 4.0, "std": 1.5},
                ],
            }
        )
        ds = gen_synthetic(spec, 41, tmp_path / "ds")
        ep = split_1sas(ds, seed=3)
        config = ReductionConfig(mode="aee", moment_order=4)
        head = HeadConfig()

        instances = list(ds.label_space.instance_classes)
        first, rest = instances[:2], instances[2:]
        full = build_bag_from_dataset(ds, ep.support, config, head)
        partial_ids = [
            sid for sid in ep.support
            if ds.sample(sid).instance_label in first
        ]
        grown = build_bag_from_dataset(ds, partial_ids, config, head)
        for inst in rest:
            support = [
                embed_sample(ds.sample(sid), ds.feature_map(sid), config)
                for sid in ep.support
                if ds.sample(sid).instance_label == inst
            ]
            grown = add_instance(grown, inst, support)

        assert set(grown.prototypes) == set(full.prototypes)
        for inst in full.prototypes:
            assert grown.prototypes[inst].tobytes() == full.prototypes[inst].tobytes()
        full_report = evaluate(full, ep, ds)
        grown_report = evaluate(grown, ep, ds)
        assert full_report.to_dict() == grown_report.to_dict()


def test_byte_determinism(criterion, tmp_path, capsys):
    with criterion("determinism: splits and reports byte-identical, threads 1 vs 8"):
        spec_path = tmp_path / "spec.json"
        write_json(
            spec_path,
            {
                "objects": 2,
                "instances_per_object": 3,
                "sequences": 2,
                "samples_per_cell": 6,
                "image_size": [32, 32],
                "feature_dims": [4, 4, 6],
                "object_mean_offset": 9.0,
                "instance_params": [
                    {"mean": 0.0, "std": 1.0},
                    {"mean": 3.0, "std": 1.0},
                    {"mean": 6.0, "std": 2.0},
                ],
            },
        )
        assert cli_main(["gen-synthetic", str(spec_path), str(tmp_path / "ds"),
                         "--seed", "8"]) == 0
        manifest = str(tmp_path / "ds" / "manifest.json")
        for out in ("bag_a", "bag_b"):
            assert cli_main(["build-bag", manifest, "-o", str(tmp_path / out),
                             "--seed", "6", "--R", "3"]) == 0
        for name in ("episode.json", "bag.json"):
            a = (tmp_path / "bag_a" / name).read_bytes()
            b = (tmp_path / "bag_b" / name).read_bytes()
            assert a == b, name
        protos_a = sorted((tmp_path / "bag_a" / "prototypes").iterdir())
        protos_b = sorted((tmp_path / "bag_b" / "prototypes").iterdir())
        assert [p.name for p in protos_a] == [p.name for p in protos_b]
        for pa, pb in zip(protos_a, protos_b):
            assert pa.read_bytes() == pb.read_bytes()

        capsys.readouterr()
        outputs = []
        for threads in ("1", "1", "8"):
            assert cli_main(["evaluate", str(tmp_path / "bag_a"),
                             "--threads", threads]) == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]  # rerun
        assert outputs[0] == outputs[2]  # thread count


def test_throughput(criterion):
    with criterion("throughput: 10k queries, dim 4x256, 45 instances, <5s"):
        rng = np.random.default_rng(303)
        space = label_space_for(9, 5)
        dim = 4 * 256
        bag = InstanceBag(
            label_space=space,
            reduction_config=ReductionConfig(mode="aee", moment_order=4),
            head_config=HeadConfig(),
            prototypes={i: rng.standard_normal(dim) for i in space.instance_classes},
            support_counts={i: 1 for i in space.instance_classes},
            transform_stats=None,
        )
        queries = rng.standard_normal((10_000, dim))
        instances = list(space.instance_classes)
        truths = [instances[i % 45] for i in range(10_000)]
        objects = [space.object_of(t) for t in truths]

        start = time.perf_counter()
        predictions = classify_batch(bag, queries, objects)
        report = aggregate_metrics(space, truths, predictions)
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"took {elapsed:.2f}s"
        assert sum(report.test_counts.values()) == 10_000
