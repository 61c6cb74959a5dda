import numpy as np
import pytest

from reusesim.tensors import (
    AccumTensor,
    Dataflow,
    KernelMode,
    LayerSpec,
    Layout,
    QuantTensor,
    deinterleave_weights,
    delta,
    interleave_weights,
)


def _ref_interleaved_position(i, o, padded_out):
    # Reference indexer: walk the layout definition element by element.
    pos = 0
    for ii in range(i):
        pos += padded_out
    return pos + o


def test_quanttensor_length_checked():
    with pytest.raises(ValueError):
        QuantTensor(np.zeros(5, dtype=np.int8), (2, 3))


def test_quanttensor_range_checked():
    with pytest.raises(ValueError):
        QuantTensor([0, 300], (1, 2))


def test_interleave_1x16_identity():
    w = QuantTensor(np.arange(16, dtype=np.int8), (1, 16))
    iw = interleave_weights(w)
    assert iw.layout is Layout.WEIGHT_INTERLEAVED16
    assert np.array_equal(iw.data, w.data)


def test_interleave_2x16_rows_contiguous():
    w = QuantTensor(np.arange(32, dtype=np.int8) - 16, (2, 16))
    iw = interleave_weights(w)
    assert np.array_equal(iw.data[:16], w.data[:16])
    assert np.array_equal(iw.data[16:], w.data[16:])


def test_interleave_3x20_padded_positions():
    rng = np.random.default_rng(7)
    w = QuantTensor(rng.integers(-128, 128, size=60, dtype=np.int8), (3, 20))
    iw = interleave_weights(w)
    assert iw.shape == (3, 32)
    mat = w.as_matrix()
    for i in range(3):
        for o in range(20):
            pos = _ref_interleaved_position(i, o, 32)
            assert iw.data[pos] == mat[i, o], (i, o)
    # padding lanes are zero
    assert np.all(iw.as_matrix()[:, 20:] == 0)
    # one 16-lane MAC for input i, group g sees contiguous bytes
    assert iw.data[2 * 32 + 16 + 1] == mat[2, 17]


def test_interleave_roundtrip():
    rng = np.random.default_rng(3)
    for rows, cols in [(1, 1), (5, 17), (8, 16), (3, 33)]:
        w = QuantTensor(rng.integers(-128, 128, size=rows * cols, dtype=np.int8),
                        (rows, cols))
        back = deinterleave_weights(interleave_weights(w), cols)
        assert np.array_equal(back.data, w.data)
        assert back.shape == w.shape


def test_delta_identical_and_extremes():
    a = QuantTensor.vector([5, -3])
    assert np.array_equal(delta(a, a), [0, 0])
    hi = QuantTensor.vector([127])
    lo = QuantTensor.vector([-128])
    d = delta(hi, lo)
    assert d.dtype == np.int16
    assert d[0] == 255
    assert delta(lo, hi)[0] == -255


def test_delta_matches_scalar_loop():
    rng = np.random.default_rng(11)
    a = rng.integers(-128, 128, size=64, dtype=np.int8)
    b = rng.integers(-128, 128, size=64, dtype=np.int8)
    d = delta(QuantTensor.vector(a), QuantTensor.vector(b))
    for i in range(64):
        assert d[i] == int(a[i]) - int(b[i])


def test_delta_shape_mismatch():
    with pytest.raises(ValueError):
        delta(QuantTensor.vector([1]), QuantTensor.vector([1, 2]))


def test_delta_against_zeros_widens():
    rng = np.random.default_rng(13)
    a = rng.integers(-128, 128, size=32, dtype=np.int8)
    z = QuantTensor.vector(np.zeros(32, dtype=np.int8))
    assert np.array_equal(delta(QuantTensor.vector(a), z), a.astype(np.int16))


def test_accumtensor_zeros():
    t = AccumTensor.zeros(5)
    assert t.length == 5
    assert t.data.dtype == np.int32


def test_layerspec_rejects_overlap():
    with pytest.raises(ValueError):
        LayerSpec(input_len=64, output_len=64, input_addr=0, weight_addr=32,
                  output_addr=100000, prev_input_addr=200000)


def test_layerspec_valid_and_padding():
    spec = LayerSpec(input_len=64, output_len=20, input_addr=0, weight_addr=4096,
                     output_addr=16384, prev_input_addr=1024,
                     kernel_mode=KernelMode.REUSE, dataflow=Dataflow.INPUT_STATIONARY)
    assert spec.padded_output_len == 32
    assert spec.address_ranges()["weights"] == (4096, 4096 + 64 * 32)


def test_layerspec_rejects_zero_lengths():
    with pytest.raises(ValueError):
        LayerSpec(input_len=0, output_len=4, input_addr=0, weight_addr=64,
                  output_addr=1024, prev_input_addr=512)
