import numpy as np
import pytest

from reusesim.kernels import (
    KernelVariant,
    mla8_op,
    mla_op,
    run_kernel,
    sdot_op,
    split_extra_computes,
    wrap16,
)
from reusesim.tensors import (
    AccumTensor,
    Dataflow,
    KernelMode,
    LayerSpec,
    QuantTensor,
)

from _oracles import dot_loop, dot_wide, wrap32

ALL_VARIANTS = list(KernelVariant)


def make_layer(n_in, n_out, dataflow=Dataflow.OUTPUT_STATIONARY, mode=KernelMode.BASIC):
    pout = -(-n_out // 16) * 16
    return LayerSpec(input_len=n_in, output_len=n_out,
                     input_addr=0, prev_input_addr=n_in,
                     weight_addr=2 * n_in, output_addr=2 * n_in + n_in * pout,
                     kernel_mode=mode, dataflow=dataflow)


def random_pair(rng, n, similarity):
    prev = rng.integers(-128, 128, size=n, dtype=np.int8)
    keep = rng.random(n) < similarity
    curr = np.where(keep, prev, (prev.astype(np.int16) + 1 - 256 * (prev == 127)).astype(np.int8))
    return curr.astype(np.int8), prev


def run(variant, n_in, n_out, curr, prev, weights, prev_out=None, dataflow=Dataflow.OUTPUT_STATIONARY):
    layer = make_layer(n_in, n_out, dataflow)
    kwargs = {}
    if KernelVariant(variant).is_reuse:
        if prev_out is None:
            prev_out = AccumTensor(dot_wide(prev, weights).astype(np.int32))
        kwargs = dict(prev_inputs=QuantTensor.vector(prev),
                      prev_output=prev_out)
    return run_kernel(variant, layer, QuantTensor.vector(curr),
                      QuantTensor(weights.reshape(-1), weights.shape), **kwargs)


# ---------------------------------------------------------------------------
# Instruction-level ops.
# ---------------------------------------------------------------------------

def test_oracles_agree_with_each_other():
    rng = np.random.default_rng(0)
    x = rng.integers(-128, 128, size=9)
    w = rng.integers(-128, 128, size=(9, 5))
    assert list(dot_wide(x, w)) == dot_loop(x, w)


def test_sdot_op_unit_selector():
    src2 = list(range(16))
    acc = sdot_op([0, 0, 0, 0], src2, [1, 0, 0, 0])
    assert acc == [0, 4, 8, 12]


def test_sdot_op_zero_subvec_ineffectual():
    rng = np.random.default_rng(1)
    src2 = [int(v) for v in rng.integers(-128, 128, size=16)]
    acc0 = [int(v) for v in rng.integers(-10 ** 6, 10 ** 6, size=4)]
    assert sdot_op(acc0, src2, [0, 0, 0, 0]) == acc0


def test_sdot_op_matches_scalar_mac():
    rng = np.random.default_rng(2)
    for _ in range(200):
        src2 = [int(v) for v in rng.integers(-128, 128, size=16)]
        sub = [int(v) for v in rng.integers(-128, 128, size=4)]
        acc = [int(v) for v in rng.integers(-2 ** 31, 2 ** 31, size=4)]
        got = sdot_op(acc, src2, sub)
        want = [wrap32(acc[n] + sum(src2[4 * n + m] * sub[m] for m in range(4)))
                for n in range(4)]
        assert got == want


def test_mla_op_scalar_zero_and_one():
    acc = [1, -2, 3, -4, 5, -6, 7, -8]
    src = [10, 20, 30, 40, 50, 60, 70, 80]
    assert mla_op(acc, src, 0) == acc
    assert mla_op(acc, src, 1) == [a + s for a, s in zip(acc, src)]


def test_mla_op_wraps_16bit():
    acc = [30000] + [0] * 7
    src = [1000] + [0] * 7
    got = mla_op(acc, src, 40)
    # wide arithmetic then truncate
    assert got[0] == wrap16(30000 + 1000 * 40)
    assert got[0] == 4464


def test_mla8_op_zero_delta_noop():
    rng = np.random.default_rng(3)
    acc = [int(v) for v in rng.integers(-2 ** 31, 2 ** 31, size=16)]
    w = [int(v) for v in rng.integers(-128, 128, size=16)]
    assert mla8_op(acc, w, 0) == acc


def test_mla8_op_identity_delta():
    w = [int(v) for v in np.arange(-8, 8)]
    assert mla8_op([0] * 16, w, 1) == w


def test_mla8_op_matches_scalar_loop():
    rng = np.random.default_rng(4)
    for _ in range(500):
        acc = [int(v) for v in rng.integers(-2 ** 31, 2 ** 31, size=16)]
        w = [int(v) for v in rng.integers(-128, 128, size=16)]
        d = int(rng.integers(-128, 128))
        got = mla8_op(acc, w, d)
        assert got == [wrap32(acc[j] + w[j] * d) for j in range(16)]


def test_mla8_split_additivity():
    # acc + w*d1 + w*d2 == acc + w*d exactly when d = d1 + d2
    rng = np.random.default_rng(5)
    for _ in range(200):
        acc = [int(v) for v in rng.integers(-2 ** 31, 2 ** 31, size=16)]
        w = [int(v) for v in rng.integers(-128, 128, size=16)]
        d = int(rng.integers(-255, 256))
        d1 = max(-128, min(127, d))
        d2 = d - d1
        if not -128 <= d2 <= 127:
            continue
        assert mla8_op(mla8_op(acc, w, d1), w, d2) == [wrap32(acc[j] + w[j] * d)
                                                       for j in range(16)]


# ---------------------------------------------------------------------------
# Whole-layer kernels.
# ---------------------------------------------------------------------------

def test_all_variants_match_oracle_random_64x32():
    rng = np.random.default_rng(10)
    curr, prev = random_pair(rng, 64, 0.5)
    w = rng.integers(-128, 128, size=(64, 32), dtype=np.int8)
    want = dot_loop(curr, w)
    for variant in ALL_VARIANTS:
        got = run(variant, 64, 32, curr, prev, w)
        assert list(got.output.data) == want, variant


def test_variants_match_oracle_odd_shapes():
    rng = np.random.default_rng(11)
    for n_in, n_out in [(1, 1), (3, 5), (17, 20), (33, 49), (5, 16)]:
        curr, prev = random_pair(rng, n_in, 0.3)
        w = rng.integers(-128, 128, size=(n_in, n_out), dtype=np.int8)
        want = dot_wide(curr, w)
        for variant in ALL_VARIANTS:
            got = run(variant, n_in, n_out, curr, prev, w)
            assert np.array_equal(got.output.data, want), (variant, n_in, n_out)


def test_sensor_reuse_full_similarity_all_skipped():
    rng = np.random.default_rng(12)
    n_in, n_out = 64, 40
    x = rng.integers(-128, 128, size=n_in, dtype=np.int8)
    w = rng.integers(-128, 128, size=(n_in, n_out), dtype=np.int8)
    prev_out = AccumTensor(dot_wide(x, w).astype(np.int32))
    res = run(KernelVariant.SENSOR_REUSE, n_in, n_out, x, x, w, prev_out=prev_out)
    n_og = -(-n_out // 16)
    assert np.array_equal(res.output.data, prev_out.data)
    assert res.op_counts["weight_loads_skipped"] == n_in * n_og
    assert res.op_counts["weight_loads_done"] == 0
    assert res.op_counts["computes_skipped"] == n_in * n_og
    assert res.op_counts["computes_done"] == 0


def test_sensor_reuse_degenerates_to_basic_with_zero_prev():
    rng = np.random.default_rng(13)
    n_in, n_out = 32, 24
    curr = rng.integers(-128, 128, size=n_in, dtype=np.int8)
    w = rng.integers(-128, 128, size=(n_in, n_out), dtype=np.int8)
    basic = run(KernelVariant.SENSOR_BASIC, n_in, n_out, curr, None, w)
    reuse = run(KernelVariant.SENSOR_REUSE, n_in, n_out, curr,
                np.zeros(n_in, dtype=np.int8), w,
                prev_out=AccumTensor.zeros(n_out))
    assert np.array_equal(basic.output.data, reuse.output.data)


def test_skip_identity_exact_scalar_kernels():
    rng = np.random.default_rng(14)
    for _ in range(20):
        n_in = int(rng.integers(1, 200))
        n_out = int(rng.integers(1, 200))
        curr, prev = random_pair(rng, n_in, rng.random())
        w = rng.integers(-128, 128, size=(n_in, n_out), dtype=np.int8)
        res = run(KernelVariant.SENSOR_REUSE, n_in, n_out, curr, prev, w)
        zeros = int((curr == prev).sum())
        n_og = -(-n_out // 16)
        assert res.op_counts["computes_skipped"] == zeros * n_og
        assert res.op_counts["computes_done"] == (n_in - zeros) * n_og
        mres = run(KernelVariant.MLA_REUSE, n_in, n_out, curr, prev, w)
        n_og8 = -(-n_out // 8)
        assert mres.op_counts["computes_skipped"] == zeros * n_og8


def test_compute_total_constant_across_similarity():
    rng = np.random.default_rng(15)
    n_in, n_out = 96, 48
    w = rng.integers(-128, 128, size=(n_in, n_out), dtype=np.int8)
    totals = set()
    for sim in [0.0, 0.3, 0.7, 1.0]:
        curr, prev = random_pair(rng, n_in, sim)
        res = run(KernelVariant.SENSOR_REUSE, n_in, n_out, curr, prev, w)
        totals.add(res.op_counts["computes_done"] + res.op_counts["computes_skipped"])
    assert len(totals) == 1


def test_subvector_penalty():
    # sdot skips need the whole aligned 4-group of deltas to be zero
    rng = np.random.default_rng(16)
    for _ in range(10):
        n_in, n_out = 128, 32
        curr, prev = random_pair(rng, n_in, 0.6)
        w = rng.integers(-128, 128, size=(n_in, n_out), dtype=np.int8)
        s = run(KernelVariant.SDOT_REUSE, n_in, n_out, curr, prev, w)
        m = run(KernelVariant.SENSOR_REUSE, n_in, n_out, curr, prev, w)
        s_frac = s.op_counts["computes_skipped"] / (
            s.op_counts["computes_skipped"] + s.op_counts["computes_done"])
        m_frac = m.op_counts["computes_skipped"] / (
            m.op_counts["computes_skipped"] + m.op_counts["computes_done"])
        assert s_frac <= m_frac
        # equality only when zero deltas align in complete groups of 4
        groups = (curr == prev).reshape(-1, 4)
        if s_frac == m_frac:
            assert all(g.all() or not g.any() for g in groups)


def test_overflow_split_extras_counted():
    curr = np.array([127, 0, 10], dtype=np.int8)
    prev = np.array([-128, 0, 10], dtype=np.int8)  # deltas: 255, 0, 0
    w = np.ones((3, 16), dtype=np.int8)
    res = run(KernelVariant.SENSOR_REUSE, 3, 16, curr, prev, w)
    assert res.op_counts["overflow_split_extras"] == 2  # +255 needs 3 parts
    assert res.op_counts["computes_done"] == 1
    prev2 = np.array([-73, 0, 10], dtype=np.int8)  # delta 200 -> 2 parts
    res2 = run(KernelVariant.SENSOR_REUSE, 3, 16, curr, prev2, w)
    assert res2.op_counts["overflow_split_extras"] == 1


def test_split_extra_computes_formula():
    assert split_extra_computes([0, 5, -127]) == 0
    assert split_extra_computes([128]) == 1
    assert split_extra_computes([-255]) == 1
    assert split_extra_computes([255]) == 2


def test_reuse_requires_previous_state():
    rng = np.random.default_rng(17)
    curr = rng.integers(-128, 128, size=8, dtype=np.int8)
    w = rng.integers(-128, 128, size=(8, 8), dtype=np.int8)
    layer = make_layer(8, 8)
    with pytest.raises(ValueError):
        run_kernel(KernelVariant.SENSOR_REUSE, layer, QuantTensor.vector(curr),
                   QuantTensor(w.reshape(-1), w.shape))


def test_dimension_mismatch_rejected():
    rng = np.random.default_rng(18)
    w = rng.integers(-128, 128, size=(8, 8), dtype=np.int8)
    layer = make_layer(16, 8)
    with pytest.raises(ValueError):
        run_kernel(KernelVariant.SENSOR_BASIC, layer,
                   QuantTensor.vector(np.zeros(16, dtype=np.int8)),
                   QuantTensor(w.reshape(-1), w.shape))


def test_input_stationary_same_values_different_counts():
    rng = np.random.default_rng(19)
    curr, prev = random_pair(rng, 64, 0.5)
    w = rng.integers(-128, 128, size=(64, 32), dtype=np.int8)
    os_res = run(KernelVariant.SENSOR_REUSE, 64, 32, curr, prev, w,
                 dataflow=Dataflow.OUTPUT_STATIONARY)
    is_res = run(KernelVariant.SENSOR_REUSE, 64, 32, curr, prev, w,
                 dataflow=Dataflow.INPUT_STATIONARY)
    assert np.array_equal(os_res.output.data, is_res.output.data)
    assert is_res.op_counts["prev_output_loads"] > os_res.op_counts["prev_output_loads"]
    assert is_res.op_counts["weight_loads_done"] == os_res.op_counts["weight_loads_done"]
