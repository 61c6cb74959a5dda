"""Bit-exact functional kernels for int8 vector-matrix products.

Six variants cover the two software approaches (4-element sub-vector dot
product, scalar-broadcast multiply-accumulate) and the two streams the CRS
engine generates (16-lane int8 MAC, with and without reuse). Reuse variants
compute the new output as previous_output + delta * weights and skip the
weight traffic and MACs for zero deltas; all variants produce outputs that
bit-equal the plain int32 dot product.

These are the semantic references: the cycle simulator's per-instruction
effects (sdot_op / mla_op / mla8_op) and the sensor's generated streams are
pinned against them by tests. Operation counts mirror the instruction-level
kernel structure (shared OG_TILE register tiling) so the simulator's generated
counts can be compared with them exactly.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tensors import (
    AccumTensor,
    Dataflow,
    Layout,
    QuantTensor,
    delta as delta16,
)

# Output-group register tile: kernels keep OG_TILE accumulator groups live per
# pass so MAC dependency chains interleave instead of serializing the pipeline.
# 2 balances chain interleaving against vector PRF pressure: one 16-lane MAC
# holds 4 physical destinations, and a 4-wide tile leaves too few free
# registers for loads to overlap.
OG_TILE = 2

_M16 = 1 << 16
_M32 = 1 << 32


def wrap16(v):
    return (int(v) + (1 << 15)) % _M16 - (1 << 15)


def wrap32(v):
    return (int(v) + (1 << 31)) % _M32 - (1 << 31)


def _wrap32_arr(v):
    return ((np.asarray(v, dtype=np.int64) + (1 << 31)) % _M32 - (1 << 31)).astype(np.int64)


class KernelVariant(Enum):
    SDOT_BASIC = "sdot-basic"
    SDOT_REUSE = "sdot-reuse"
    MLA_BASIC = "mla-basic"
    MLA_REUSE = "mla-reuse"
    SENSOR_BASIC = "sensor-basic"
    SENSOR_REUSE = "sensor-reuse"

    @property
    def is_reuse(self):
        return self in (KernelVariant.SDOT_REUSE, KernelVariant.MLA_REUSE,
                        KernelVariant.SENSOR_REUSE)

    @property
    def is_sensor(self):
        return self in (KernelVariant.SENSOR_BASIC, KernelVariant.SENSOR_REUSE)


@dataclass
class KernelResult:
    output: AccumTensor
    op_counts: dict


# ---------------------------------------------------------------------------
# Single-instruction semantics (wrapping two's complement, lane-exact).
# ---------------------------------------------------------------------------

def sdot_op(acc, src2, src1_subvec):
    """4 sub-vector dot products: acc[n] += sum_m src2[4n+m] * src1_subvec[m].

    acc: 4 x int32, src2: 16 x int8, src1_subvec: 4 x int8. Wrapping 32-bit.
    """
    out = []
    for n in range(4):
        s = acc[n]
        for m in range(4):
            s += src2[4 * n + m] * src1_subvec[m]
        out.append(wrap32(s))
    return out


def mla_op(acc, src2, scalar):
    """Element-wise scalar MAC: acc[j] += src2[j] * scalar, wrapping 16-bit."""
    return [wrap16(acc[j] + src2[j] * scalar) for j in range(8)]


def mla8_op(acc, weights, delta_scalar):
    """16-lane int8 scalar MAC into int32 accumulators, wrapping 32-bit."""
    return [wrap32(acc[j] + weights[j] * delta_scalar) for j in range(16)]


# ---------------------------------------------------------------------------
# Whole-layer functional kernels.
# ---------------------------------------------------------------------------

def _ceil_div(a, b):
    return -(-a // b)


def _weights_matrix(weights: QuantTensor, input_len, output_len) -> np.ndarray:
    if weights.layout is Layout.WEIGHT_INTERLEAVED16:
        mat = weights.as_matrix()[:, :output_len]
    else:
        mat = weights.as_matrix()
    if mat.shape != (input_len, output_len):
        raise ValueError(f"weights shape {mat.shape} inconsistent with layer "
                         f"({input_len}, {output_len})")
    return mat


def split_extra_computes(deltas) -> int:
    """Extra MAC instructions forced by deltas outside int8 range.

    One extra per |delta| > 127, two for the +255 corner (three-part split).
    """
    d = np.asarray(deltas, dtype=np.int64)
    return int((np.abs(d) > 127).sum() + (d == 255).sum())


def _base_counts():
    return {
        "weight_loads_done": 0,
        "weight_loads_skipped": 0,
        "computes_done": 0,
        "computes_skipped": 0,
        "delta_subs": 0,
        "input_loads": 0,
        "prev_loads": 0,
        "prev_output_loads": 0,
        "output_stores": 0,
        "overflow_split_extras": 0,
    }


def _sdot_kernel(x64, w64, n_in, n_out, prev_out, d64):
    """Shared body for the sub-vector dot product kernels.

    d64 is None for the basic variant. Accumulation is grouped exactly as the
    sdot instruction does it: one 4-input partial per output group per step.
    """
    groups4 = _ceil_div(n_in, 4)
    n_og4 = _ceil_div(n_out, 4)
    n_pass = _ceil_div(n_out, 4 * OG_TILE)
    counts = _base_counts()
    counts["input_loads"] = _ceil_div(n_in, 16) * n_pass
    counts["output_stores"] = n_og4

    src = x64 if d64 is None else d64
    padded = np.zeros(groups4 * 4, dtype=np.int64)
    padded[:n_in] = src
    wpad = np.zeros((groups4 * 4, n_out), dtype=np.int64)
    wpad[:n_in] = w64

    if d64 is None:
        acc = np.zeros(n_out, dtype=np.int64)
        active = np.ones(groups4, dtype=bool)
    else:
        acc = prev_out.astype(np.int64)
        active = padded.reshape(groups4, 4).any(axis=1)
        counts["prev_loads"] = _ceil_div(n_in, 16) * n_pass
        counts["delta_subs"] = _ceil_div(n_in, 16) * n_pass
        counts["prev_output_loads"] = n_og4

    for g in range(groups4):
        if not active[g]:
            continue
        partial = (wpad[4 * g:4 * g + 4] * padded[4 * g:4 * g + 4, None]).sum(axis=0)
        acc = _wrap32_arr(acc + partial)

    done = int(active.sum())
    counts["weight_loads_done"] = done * n_og4
    counts["computes_done"] = done * n_og4
    counts["weight_loads_skipped"] = (groups4 - done) * n_og4
    counts["computes_skipped"] = (groups4 - done) * n_og4
    return acc, counts


def _mla_kernel(x64, w64, n_in, n_out, prev_out, d64):
    """Scalar-broadcast MAC kernel on 8 x int16 lanes.

    Each product is formed in a fresh 16-bit accumulator (a single
    int8 x int8 or int8 x delta product always fits int16) and widened into
    the 32-bit output accumulator, so results stay bit-exact while mla_op
    itself keeps its wrapping 16-bit semantics.
    """
    n_og8 = _ceil_div(n_out, 8)
    n_pass = _ceil_div(n_out, 8 * OG_TILE)
    counts = _base_counts()
    counts["input_loads"] = _ceil_div(n_in, 8) * n_pass
    counts["output_stores"] = n_og8

    src = x64 if d64 is None else d64
    assert np.abs(src).max(initial=0) <= 255 and np.abs(w64).max(initial=0) <= 128
    prod = w64 * src[:, None]  # every single product fits int16 exactly
    nonzero = src != 0
    if d64 is None:
        acc = prod.sum(axis=0)
        done = n_in
    else:
        acc = prev_out.astype(np.int64) + prod[nonzero].sum(axis=0)
        done = int(nonzero.sum())
        counts["prev_loads"] = _ceil_div(n_in, 8) * n_pass
        counts["delta_subs"] = _ceil_div(n_in, 8) * n_pass
        counts["prev_output_loads"] = n_og8

    counts["weight_loads_done"] = done * n_og8
    counts["computes_done"] = done * n_og8
    counts["weight_loads_skipped"] = (n_in - done) * n_og8
    counts["computes_skipped"] = (n_in - done) * n_og8
    return _wrap32_arr(acc), counts


def _sensor_kernel(x64, w64, n_in, n_out, prev_out, d64, dataflow):
    """16-lane int8 MAC kernel as generated by the CRS engine."""
    n_og = _ceil_div(n_out, 16)
    n_pass = _ceil_div(n_og, OG_TILE)
    chunks = _ceil_div(n_in, 16)
    counts = _base_counts()

    src = x64 if d64 is None else d64
    prod = w64 * src[:, None]
    nonzero = src != 0
    if d64 is None:
        acc = prod.sum(axis=0)
        done = n_in
    else:
        acc = prev_out.astype(np.int64) + prod[nonzero].sum(axis=0)
        done = int(nonzero.sum())
        counts["overflow_split_extras"] = split_extra_computes(src) * n_og

    if dataflow is Dataflow.OUTPUT_STATIONARY:
        counts["input_loads"] = chunks * n_pass
        counts["output_stores"] = 4 * n_og
        if d64 is not None:
            counts["prev_loads"] = chunks * n_pass
            counts["delta_subs"] = chunks * n_pass
            counts["prev_output_loads"] = 4 * n_og
    else:
        # Input stationary: partial accumulators are reloaded and stored per
        # (input chunk, output group) visit; the first chunk initializes them
        # (basic) or loads the previous output (reuse).
        counts["input_loads"] = chunks
        counts["output_stores"] = 4 * n_og * chunks
        if d64 is not None:
            counts["prev_loads"] = chunks
            counts["delta_subs"] = chunks
            counts["prev_output_loads"] = 4 * n_og * chunks
        else:
            counts["prev_output_loads"] = 4 * n_og * (chunks - 1)

    counts["weight_loads_done"] = done * n_og
    counts["computes_done"] = done * n_og
    counts["weight_loads_skipped"] = (n_in - done) * n_og
    counts["computes_skipped"] = (n_in - done) * n_og
    return _wrap32_arr(acc), counts


def run_kernel(variant, layer, inputs: QuantTensor, weights: QuantTensor,
               prev_inputs: QuantTensor = None,
               prev_output: AccumTensor = None) -> KernelResult:
    """Evaluate one layer with the given kernel variant.

    Reuse variants require prev_inputs and prev_output; output bit-equals the
    int32 dot product of inputs and weights whenever prev_output is consistent
    with prev_inputs. Counts reflect the variant's skip rule: the sub-vector
    kernel skips per all-zero aligned 4-delta group, the scalar-MAC kernels
    skip per zero delta element.
    """
    variant = KernelVariant(variant)
    n_in, n_out = layer.input_len, layer.output_len
    if inputs.data.size != n_in:
        raise ValueError(f"inputs length {inputs.data.size} != {n_in}")
    w64 = _weights_matrix(weights, n_in, n_out).astype(np.int64)
    x64 = inputs.data.astype(np.int64)

    d64 = None
    prev = None
    if variant.is_reuse:
        if prev_inputs is None or prev_output is None:
            raise ValueError(f"{variant.value} requires prev_inputs and prev_output")
        if prev_output.length != n_out:
            raise ValueError("prev_output length mismatch")
        d64 = delta16(inputs, prev_inputs).astype(np.int64)
        prev = prev_output.data

    if variant in (KernelVariant.SDOT_BASIC, KernelVariant.SDOT_REUSE):
        acc, counts = _sdot_kernel(x64, w64, n_in, n_out, prev, d64)
    elif variant in (KernelVariant.MLA_BASIC, KernelVariant.MLA_REUSE):
        acc, counts = _mla_kernel(x64, w64, n_in, n_out, prev, d64)
    else:
        acc, counts = _sensor_kernel(x64, w64, n_in, n_out, prev, d64, layer.dataflow)

    out = AccumTensor(acc.astype(np.int64).astype(np.int32))
    return KernelResult(output=out, op_counts=counts)
