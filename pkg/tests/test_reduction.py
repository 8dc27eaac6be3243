import math

import numpy as np
import pytest

from oboi.errors import (
    EmptySupport,
    InvalidBox,
    InvalidConfig,
    MissingLogits,
    ShapeMismatch,
)
from oboi.model import BoundingBox, ReductionConfig
from oboi.reduction import (
    apply_standardizer,
    build_mask,
    central_moments,
    reduce_features,
    standardizer_fit,
)


def oracle_moments(values, order):
    """Brute-force reference: materialize the list, sum deviation powers."""
    vals = [float(v) for v in values]
    n = len(vals)
    mean = math.fsum(vals) / n
    out = [mean]
    for k in range(2, order + 1):
        out.append(math.fsum((v - mean) ** k for v in vals) / n)
    return out


def oracle_reduce(feature_map, mask, order):
    gh, gw, depth = feature_map.shape
    blocks = []
    for k in range(order):
        blocks.append([0.0] * depth)
    for d in range(depth):
        vals = [
            float(feature_map[r, c, d])
            for r in range(gh)
            for c in range(gw)
            if mask[r, c]
        ]
        ms = oracle_moments(vals, order)
        for k in range(order):
            blocks[k][d] = ms[k]
    return np.array([v for block in blocks for v in block])


# build_mask


def test_mask_full_image():
    mask = build_mask(BoundingBox(0, 0, 64, 64), (64, 64), (4, 4))
    assert mask.all()


def test_mask_worked_example():
    # cell centers at pixels 8, 24, 40, 56; inside [16, 48): 24 and 40
    mask = build_mask(BoundingBox(16, 16, 48, 48), (64, 64), (4, 4))
    true_cells = {(r, c) for r in range(4) for c in range(4) if mask[r, c]}
    assert true_cells == {(1, 1), (1, 2), (2, 1), (2, 2)}


def test_mask_degenerate_box():
    # no cell center in [30, 31); box center (30.5, 30.5) is in cell (1, 1)
    mask = build_mask(BoundingBox(30, 30, 31, 31), (64, 64), (4, 4))
    assert mask.sum() == 1 and mask[1, 1]


def test_mask_rectangular_grid():
    # x rescaled by W'/W, y by H'/H independently
    mask = build_mask(BoundingBox(0, 0, 32, 8), (16, 64), (8, 4))
    assert mask.shape == (8, 4)
    assert mask[:4, :2].all() and mask.sum() == 8


def test_mask_invalid_box():
    with pytest.raises(InvalidBox):
        build_mask(BoundingBox(10, 10, 10, 20), (64, 64), (4, 4))


def test_mask_never_empty(rng):
    for _ in range(200):
        h = int(rng.integers(8, 65))
        w = int(rng.integers(8, 65))
        gh = int(rng.integers(1, 9))
        gw = int(rng.integers(1, 9))
        x1 = float(rng.uniform(0, w - 1))
        y1 = float(rng.uniform(0, h - 1))
        box = BoundingBox(x1, y1, min(x1 + float(rng.uniform(0.1, w)), w),
                          min(y1 + float(rng.uniform(0.1, h)), h))
        assert build_mask(box, (h, w), (gh, gw)).any()


# central_moments


def test_moments_constant():
    assert central_moments([5.0, 5.0, 5.0], 4) == pytest.approx([5, 0, 0, 0], abs=1e-15)


def test_moments_hand_cases():
    got = central_moments([0.0, 2.0], 4)
    assert np.allclose(got, [1, 1, 0, 1], atol=1e-12)
    got = central_moments([1.0, 2.0, 3.0, 6.0], 4)
    assert np.allclose(got, [3, 3.5, 4.5, 24.5], atol=1e-12)


def test_moments_single_point():
    assert central_moments([7.0], 3) == pytest.approx([7, 0, 0], abs=0)


def test_moments_empty():
    with pytest.raises(EmptySupport):
        central_moments([], 2)


def test_moments_order_bounds():
    with pytest.raises(InvalidConfig):
        central_moments([1.0], 0)
    with pytest.raises(InvalidConfig):
        central_moments([1.0], 9)


def test_moments_against_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(1, 40))
        order = int(rng.integers(1, 9))
        vals = rng.standard_normal(n) * float(rng.uniform(0.1, 10))
        got = central_moments(vals, order)
        assert np.allclose(got, oracle_moments(vals, order), atol=1e-9)


# reduce_features


def _random_case(rng, max_hw=8, max_d=16, max_order=6):
    gh = int(rng.integers(1, max_hw + 1))
    gw = int(rng.integers(1, max_hw + 1))
    depth = int(rng.integers(1, max_d + 1))
    order = int(rng.integers(1, max_order + 1))
    fm = rng.standard_normal((gh, gw, depth)) * float(rng.uniform(0.1, 5))
    mask = rng.random((gh, gw)) < 0.5
    if not mask.any():
        mask[int(rng.integers(gh)), int(rng.integers(gw))] = True
    return fm, mask, order


def test_reduce_matches_oracle(rng):
    config_cache = {}
    for _ in range(100):
        fm, mask, order = _random_case(rng)
        config = config_cache.setdefault(
            order, ReductionConfig(mode="aee", moment_order=order)
        )
        got = reduce_features(fm, mask, config)
        assert got.shape == (order * fm.shape[2],)
        assert np.allclose(got, oracle_reduce(fm, mask, order), atol=1e-9)


def test_reduce_block_layout():
    # R contiguous blocks of D: block n holds the n-th moment of each channel
    fm = np.zeros((1, 2, 2))
    fm[0, 0] = [0.0, 1.0]
    fm[0, 1] = [2.0, 3.0]
    mask = np.ones((1, 2), dtype=bool)
    got = reduce_features(fm, mask, ReductionConfig(mode="aee", moment_order=2))
    assert got == pytest.approx([1.0, 2.0, 1.0, 1.0])


def test_reduce_constant_channels():
    fm = np.tile(np.array([1.5, -2.0, 0.25]), (3, 3, 1))
    mask = np.zeros((3, 3), dtype=bool)
    mask[0, 1] = mask[2, 2] = True
    got = reduce_features(fm, mask, ReductionConfig(mode="aee", moment_order=3))
    assert got == pytest.approx([1.5, -2.0, 0.25, 0, 0, 0, 0, 0, 0], abs=0)


def test_reduce_two_cell_example():
    fm = np.array([[[0.0]], [[2.0]]])
    mask = np.ones((2, 1), dtype=bool)
    got = reduce_features(fm, mask, ReductionConfig(mode="aee", moment_order=2))
    assert got == pytest.approx([1.0, 1.0])
    first_only = np.array([[True], [False]])
    got = reduce_features(fm, first_only, ReductionConfig(mode="aee", moment_order=2))
    assert got == pytest.approx([0.0, 0.0], abs=0)


def test_permutation_invariance_exact(rng):
    for _ in range(50):
        fm, mask, order = _random_case(rng)
        config = ReductionConfig(mode="aee", moment_order=order)
        base = reduce_features(fm, mask, config)
        gh, gw, depth = fm.shape
        perm = rng.permutation(gh * gw)
        fm_p = fm.reshape(gh * gw, depth)[perm].reshape(gh, gw, depth)
        mask_p = mask.reshape(-1)[perm].reshape(gh, gw)
        got = reduce_features(fm_p, mask_p, config)
        assert got.tobytes() == base.tobytes()  # bit-exact, not just close


def test_scale_equivariance(rng):
    # masks of 2 cells make odd central moments mathematically zero, which
    # breaks norm-relative comparison; require >= 3 cells
    for _ in range(30):
        fm, mask, order = _random_case(rng)
        while mask.sum() < 3:
            fm, mask, order = _random_case(rng)
        config = ReductionConfig(mode="aee", moment_order=order)
        base = reduce_features(fm, mask, config)
        depth = fm.shape[2]
        for alpha in (0.5, 2.0, 10.0):
            got = reduce_features(alpha * fm, mask, config)
            for n in range(1, order + 1):
                block = got[(n - 1) * depth : n * depth]
                want = alpha**n * base[(n - 1) * depth : n * depth]
                err = np.linalg.norm(block - want)
                assert err <= 1e-9 * max(np.linalg.norm(want), 1e-300)


def test_ee_equals_aee_r1(rng):
    fm, mask, _ = _random_case(rng)
    ee = reduce_features(fm, mask, ReductionConfig(mode="ee"))
    aee1 = reduce_features(fm, mask, ReductionConfig(mode="aee", moment_order=1))
    assert ee.tobytes() == aee1.tobytes()


def test_no_mask_equals_all_true(rng):
    fm, mask, order = _random_case(rng)
    off = reduce_features(fm, None, ReductionConfig(mode="aee", moment_order=order, use_mask=False))
    all_true = np.ones(fm.shape[:2], dtype=bool)
    on = reduce_features(fm, all_true, ReductionConfig(mode="aee", moment_order=order))
    assert off.tobytes() == on.tobytes()


def test_logits_mode():
    logits = np.array([0.2, 0.7, 0.1])
    config = ReductionConfig(mode="logits")
    got = reduce_features(None, None, config, logits=logits)
    assert got.tolist() == logits.tolist()
    with pytest.raises(MissingLogits):
        reduce_features(None, None, config)


def test_reduce_shape_errors(rng):
    fm = rng.standard_normal((2, 3, 4))
    with pytest.raises(ShapeMismatch):
        reduce_features(fm, np.ones((3, 2), dtype=bool), ReductionConfig(mode="aee"))
    with pytest.raises(ShapeMismatch):
        reduce_features(fm, None, ReductionConfig(mode="aee"))


# standardizer


def test_standardizer_single():
    shift, scale = standardizer_fit([np.array([1.0, -2.0])])
    assert shift.tolist() == [1.0, -2.0]
    assert scale.tolist() == [1.0, 1.0]


def test_standardizer_hand_case():
    shift, scale = standardizer_fit([np.array([0.0, 0.0]), np.array([2.0, 4.0])])
    assert shift.tolist() == [1.0, 2.0]
    assert scale.tolist() == [1.0, 2.0]


def test_standardizer_constant_guard():
    shift, scale = standardizer_fit([np.array([3.0, 1.0]), np.array([3.0, 2.0])])
    assert scale[0] == 1.0 and scale[1] == 0.5


def test_standardizer_apply(rng):
    embs = [rng.standard_normal(6) for _ in range(10)]
    stats = standardizer_fit(embs)
    transformed = np.stack([apply_standardizer(e, stats) for e in embs])
    assert np.allclose(transformed.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(transformed.std(axis=0), 1, atol=1e-12)


def test_standardizer_empty():
    with pytest.raises(EmptySupport):
        standardizer_fit([])
