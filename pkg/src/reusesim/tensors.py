"""Core numeric containers: int8 tensors, int32 accumulators, layer descriptors.

Everything downstream (similarity analysis, kernels, the simulator) works on
these types. Tensors are immutable after construction and safe to share.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

LANES_I8 = 16   # int8 lanes in a 128-bit vector register
LANES_I16 = 8
LANES_I32 = 4


class Layout(Enum):
    ROW_MAJOR = "row_major"
    WEIGHT_INTERLEAVED16 = "weight_interleaved16"


class KernelMode(Enum):
    BASIC = 0
    REUSE = 1


class Dataflow(Enum):
    OUTPUT_STATIONARY = 0
    INPUT_STATIONARY = 1


def _as_i8(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype != np.int8:
        if arr.size and (arr.min() < -128 or arr.max() > 127):
            raise ValueError("values outside int8 range")
        arr = arr.astype(np.int8)
    return arr.reshape(-1)


@dataclass(frozen=True)
class QuantTensor:
    """Flat int8 buffer with a (rows, cols) shape and a layout tag.

    WEIGHT_INTERLEAVED16 requires cols (the output-lane dimension) padded to a
    multiple of 16; see interleave_weights.
    """

    data: np.ndarray
    shape: tuple
    layout: Layout = Layout.ROW_MAJOR

    def __post_init__(self):
        object.__setattr__(self, "data", _as_i8(self.data))
        rows, cols = self.shape
        if len(self.data) != rows * cols:
            raise ValueError(f"data length {len(self.data)} != {rows}x{cols}")
        if self.layout is Layout.WEIGHT_INTERLEAVED16 and cols % LANES_I8 != 0:
            raise ValueError("interleaved layout requires cols padded to 16")
        self.data.setflags(write=False)

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]

    def as_matrix(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    @staticmethod
    def vector(values) -> "QuantTensor":
        arr = _as_i8(values)
        return QuantTensor(arr, (1, len(arr)))


@dataclass(frozen=True)
class AccumTensor:
    """int32 accumulator vector; holds outputs (current or previous)."""

    data: np.ndarray
    length: int = -1

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.int32).reshape(-1)
        object.__setattr__(self, "data", arr)
        if self.length < 0:
            object.__setattr__(self, "length", len(arr))
        elif self.length != len(arr):
            raise ValueError("length does not match data")
        self.data.setflags(write=False)

    @staticmethod
    def zeros(n) -> "AccumTensor":
        return AccumTensor(np.zeros(n, dtype=np.int32))


@dataclass(frozen=True)
class LayerSpec:
    """Dimensions, staged addresses and execution mode for one layer evaluation.

    The eight fields preceding the addresses' sanity checks mirror the
    in-memory parameter block consumed by the CRS engine (see sensor module).
    Previous outputs live at output_addr: reuse kernels read and rewrite the
    output buffer in place.
    """

    input_len: int
    output_len: int
    input_addr: int
    weight_addr: int
    output_addr: int
    prev_input_addr: int
    kernel_mode: KernelMode = KernelMode.BASIC
    dataflow: Dataflow = Dataflow.OUTPUT_STATIONARY

    def __post_init__(self):
        if self.input_len < 1 or self.output_len < 1:
            raise ValueError("input_len and output_len must be >= 1")
        ranges = self.address_ranges()
        spans = sorted(ranges.values())
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError("layer address ranges overlap")

    @property
    def padded_output_len(self) -> int:
        return -(-self.output_len // LANES_I8) * LANES_I8

    def address_ranges(self) -> dict:
        """Byte ranges implied by the staged (padded) buffer sizes."""
        pout = self.padded_output_len
        return {
            "inputs": (self.input_addr, self.input_addr + self.input_len),
            "prev_inputs": (self.prev_input_addr, self.prev_input_addr + self.input_len),
            "weights": (self.weight_addr, self.weight_addr + self.input_len * pout),
            "outputs": (self.output_addr, self.output_addr + 4 * pout),
        }


def interleave_weights(w: QuantTensor) -> QuantTensor:
    """Rearrange row-major weights [input_len x output_len] for 16-lane MACs.

    Element w[i][o] lands at linear position i*padded_out + o with the output
    dimension zero-padded to a multiple of 16, so the 16 weights consumed by
    one 16-lane MAC for input i and output group g are contiguous.
    """
    if w.layout is not Layout.ROW_MAJOR:
        raise ValueError("expected row-major weights")
    rows, cols = w.shape
    padded = -(-cols // LANES_I8) * LANES_I8
    out = np.zeros((rows, padded), dtype=np.int8)
    out[:, :cols] = w.as_matrix()
    return QuantTensor(out.reshape(-1), (rows, padded), Layout.WEIGHT_INTERLEAVED16)


def deinterleave_weights(w: QuantTensor, output_len: int) -> QuantTensor:
    """Inverse of interleave_weights; drops the zero padding lanes."""
    if w.layout is not Layout.WEIGHT_INTERLEAVED16:
        raise ValueError("expected interleaved weights")
    rows, padded = w.shape
    if output_len > padded:
        raise ValueError("output_len exceeds padded width")
    mat = w.as_matrix()[:, :output_len]
    return QuantTensor(np.ascontiguousarray(mat).reshape(-1), (rows, output_len))


def delta(curr: QuantTensor, prev: QuantTensor) -> np.ndarray:
    """Exact elementwise curr - prev, widened to int16 (range [-255, 255])."""
    if curr.shape != prev.shape:
        raise ValueError(f"shape mismatch {curr.shape} vs {prev.shape}")
    return curr.data.astype(np.int16) - prev.data.astype(np.int16)
