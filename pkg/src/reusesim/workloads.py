"""Workload production: synthetic similarity-controlled layers, dump
ingestion, and staging into simulated memory.

Synthetic pairs use an exact-count construction: exactly round(s*n) positions
are equal between the previous and current inputs (split into both-zero and
equal-nonzero positions per zero_fraction_of_similarity), so skip-count
identities in tests are exact rather than statistical.

Dump directory layout (one subdirectory per layer):

    <dump>/<layer_name>/manifest.json
        {"name": ..., "input_len": N, "output_len": M, "dtype": "i8",
         "frame_count": K, "dataflow": "os"|"is"}
    <dump>/<layer_name>/weights.bin      raw little-endian int8, row-major NxM
    <dump>/<layer_name>/inputs_<k>.bin   raw little-endian int8, length N

Payload sizes must match the manifest exactly.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .isa import MemoryImage
from .tensors import (
    AccumTensor,
    Dataflow,
    KernelMode,
    LayerSpec,
    QuantTensor,
    interleave_weights,
)

PARAM_BLOCK_BYTES = 64  # 8 x u64 little-endian fields


@dataclass(frozen=True)
class SyntheticSpec:
    input_len: int
    output_len: int
    target_similarity: float = 0.5
    zero_fraction_of_similarity: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.target_similarity <= 1.0:
            raise ValueError("target_similarity must be in [0, 1]")
        if not 0.0 <= self.zero_fraction_of_similarity <= 1.0:
            raise ValueError("zero_fraction_of_similarity must be in [0, 1]")


def _frame_with_zeros(rng, n, nzeros):
    """Random int8 frame with exactly nzeros zero positions."""
    mag = rng.integers(1, 128, size=n, dtype=np.int16)
    sign = rng.choice(np.array([-1, 1], dtype=np.int16), size=n)
    frame = (mag * sign).astype(np.int8)
    frame[rng.permutation(n)[:nzeros]] = 0
    return frame


def _successor(rng, prev, target, zero_frac):
    """Frame with exactly round(target*n) positions equal to prev.

    Equal positions are drawn from prev's zero pool first (round(zero_frac*k)
    of them, as far as the pool allows) and its nonzero pool for the rest.
    Non-equal positions are shifted by a nonzero amount mod 256, so they can
    never collide with prev.
    """
    n = prev.size
    k = int(round(target * n))
    kz = int(round(zero_frac * k))
    zpool = np.flatnonzero(prev == 0)
    nzpool = np.flatnonzero(prev != 0)
    kz = min(kz, zpool.size)
    ksame = min(k - kz, nzpool.size)
    keep = np.concatenate([
        rng.choice(zpool, size=kz, replace=False) if kz else np.empty(0, dtype=np.int64),
        rng.choice(nzpool, size=ksame, replace=False) if ksame else np.empty(0, dtype=np.int64),
    ])
    mask = np.zeros(n, dtype=bool)
    mask[keep.astype(np.int64)] = True
    curr = np.array(prev)
    diff = np.flatnonzero(~mask)
    bump = rng.integers(1, 256, size=diff.size, dtype=np.int16)
    curr[diff] = ((prev[diff].astype(np.int16) + bump + 128) % 256 - 128).astype(np.int8)
    return curr


def generate(spec: SyntheticSpec):
    """(prev_inputs, curr_inputs, weights); deterministic per seed.

    The previous frame is built with exactly the number of zeros the requested
    split needs, so both the total and the zero/nonzero decomposition are
    exact by construction.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.input_len
    k = int(round(spec.target_similarity * n))
    kz = int(round(spec.zero_fraction_of_similarity * k))
    prev = _frame_with_zeros(rng, n, kz)
    curr = _successor(rng, prev, spec.target_similarity,
                      spec.zero_fraction_of_similarity)
    w = rng.integers(-128, 128, size=(spec.input_len, spec.output_len), dtype=np.int8)
    return (QuantTensor.vector(prev), QuantTensor.vector(curr),
            QuantTensor(w.reshape(-1), w.shape))


def generate_frames(spec: SyntheticSpec, frame_count):
    """Frame sequence where every consecutive pair hits the similarity target."""
    if frame_count < 2:
        raise ValueError("need at least 2 frames")
    rng = np.random.default_rng(spec.seed)
    n = spec.input_len
    k = int(round(spec.target_similarity * n))
    kz = int(round(spec.zero_fraction_of_similarity * k))
    frame = _frame_with_zeros(rng, n, kz)
    frames = [QuantTensor.vector(frame)]
    for _ in range(frame_count - 1):
        frame = _successor(rng, frame, spec.target_similarity,
                           spec.zero_fraction_of_similarity)
        frames.append(QuantTensor.vector(frame))
    return frames


# ---------------------------------------------------------------------------
# Dumps
# ---------------------------------------------------------------------------

@dataclass
class LayerDump:
    name: str
    input_len: int
    output_len: int
    frame_count: int
    dataflow: str
    path: str

    def frame(self, k) -> QuantTensor:
        raw = np.fromfile(os.path.join(self.path, f"inputs_{k}.bin"), dtype=np.int8)
        return QuantTensor.vector(raw)

    def frames(self):
        return [self.frame(k) for k in range(self.frame_count)]

    def weights(self) -> QuantTensor:
        raw = np.fromfile(os.path.join(self.path, "weights.bin"), dtype=np.int8)
        return QuantTensor(raw, (self.input_len, self.output_len))


def write_dump(root, name, frames, weights: QuantTensor, dataflow="os"):
    path = os.path.join(root, name)
    os.makedirs(path, exist_ok=True)
    n = frames[0].data.size
    manifest = {
        "name": name,
        "input_len": n,
        "output_len": weights.cols,
        "dtype": "i8",
        "frame_count": len(frames),
        "dataflow": dataflow,
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    weights.data.tofile(os.path.join(path, "weights.bin"))
    for k, fr in enumerate(frames):
        fr.data.tofile(os.path.join(path, f"inputs_{k}.bin"))
    return path


def read_dump_layer(path) -> LayerDump:
    with open(os.path.join(path, "manifest.json")) as f:
        m = json.load(f)
    if m.get("dtype") != "i8":
        raise ValueError(f"{path}: unsupported dtype {m.get('dtype')!r}")
    dump = LayerDump(name=m["name"], input_len=m["input_len"],
                     output_len=m["output_len"], frame_count=m["frame_count"],
                     dataflow=m.get("dataflow", "os"), path=path)
    wsize = os.path.getsize(os.path.join(path, "weights.bin"))
    if wsize != dump.input_len * dump.output_len:
        raise ValueError(f"{path}: weights.bin is {wsize} bytes, "
                         f"manifest implies {dump.input_len * dump.output_len}")
    for k in range(dump.frame_count):
        fsize = os.path.getsize(os.path.join(path, f"inputs_{k}.bin"))
        if fsize != dump.input_len:
            raise ValueError(f"{path}: inputs_{k}.bin is {fsize} bytes, "
                             f"manifest implies {dump.input_len}")
    return dump


def read_dump(root):
    """All layer dumps under root (or root itself if it holds a manifest)."""
    if os.path.exists(os.path.join(root, "manifest.json")):
        return [read_dump_layer(root)]
    layers = []
    for entry in sorted(os.listdir(root)):
        sub = os.path.join(root, entry)
        if os.path.isdir(sub) and os.path.exists(os.path.join(sub, "manifest.json")):
            layers.append(read_dump_layer(sub))
    if not layers:
        raise ValueError(f"no layer dumps found under {root}")
    return layers


# ---------------------------------------------------------------------------
# Staging
# ---------------------------------------------------------------------------

@dataclass
class StagedLayer:
    """Addresses of every staged region plus the canonical LayerSpec."""

    layer: LayerSpec
    input_len: int
    output_len: int
    input_addr: int
    prev_input_addr: int
    weight_addr: int          # interleaved16 int8 (sensor kernels)
    output_addr: int          # int32, padded to 16 outputs
    param_addr: int
    sdot_weight_addr: int = -1
    mla_input_addr: int = -1
    mla_prev_input_addr: int = -1
    mla_weight_addr: int = -1
    mla_output_addr: int = -1
    end_addr: int = 0


def _sdot_blocks(w: np.ndarray) -> np.ndarray:
    """Weights as sequential 16-byte sdot blocks in kernel traversal order.

    Block for (pass, input-group, tile-slot) holds w[4g+m][16p+4t+n] at byte
    4n+m, which is what sdot needs: acc[n] += sum_m block[4n+m] * delta[4g+m].
    """
    n_in, n_out = w.shape
    w5 = w.reshape(n_in // 4, 4, n_out // 16, 4, 4)     # [g, m, p, t, n]
    return np.ascontiguousarray(w5.transpose(2, 0, 3, 4, 1))  # [p, g, t, n, m]


def _mla_blocks(w: np.ndarray) -> np.ndarray:
    """int16 weights as sequential 8-lane blocks in mla traversal order."""
    n_in, n_out = w.shape
    w4 = w.reshape(n_in, n_out // 32, 4, 8)             # [i, p, t, j]
    return np.ascontiguousarray(w4.transpose(1, 0, 2, 3)).astype("<i2")


def _pad_to(arr, granule, dtype):
    n = arr.size
    padded = -(-n // granule) * granule
    out = np.zeros(padded, dtype=dtype)
    out[:n] = arr
    return out


def stage_layer(image: MemoryImage, curr: QuantTensor, prev: QuantTensor,
                weights: QuantTensor, prev_output: AccumTensor = None,
                mode=KernelMode.BASIC, dataflow=Dataflow.OUTPUT_STATIONARY,
                base=4096) -> StagedLayer:
    """Write a layer's tensors into simulated memory and return the layout.

    Always stages the canonical int8/interleaved regions plus the parameter
    block; additionally stages the sdot-blocked weights when dimensions are
    16-aligned and the int16-widened mla regions when 8/32-aligned. Readback
    reproduces the tensors byte-exactly (padding lanes are zero).
    """
    n_in = curr.data.size
    n_out = weights.cols
    if prev.data.size != n_in or weights.rows != n_in:
        raise ValueError("tensor dimensions disagree")
    w = weights.as_matrix()
    pout = -(-n_out // 16) * 16

    cursor = [base]

    def region(nbytes, align=64):
        cursor[0] = -(-cursor[0] // align) * align
        addr = cursor[0]
        cursor[0] += nbytes
        return addr

    in_padded = _pad_to(curr.data, 16, np.int8)
    prev_padded = _pad_to(prev.data, 16, np.int8)
    iw = interleave_weights(QuantTensor(np.ascontiguousarray(w).reshape(-1), w.shape))

    input_addr = region(in_padded.size)
    prev_addr = region(prev_padded.size)
    weight_addr = region(iw.data.size)
    output_addr = region(4 * pout)
    param_addr = region(PARAM_BLOCK_BYTES)

    image.write(input_addr, in_padded.tobytes())
    image.write(prev_addr, prev_padded.tobytes())
    image.write(weight_addr, iw.tobytes())
    out_init = np.zeros(pout, dtype="<i4")
    if prev_output is not None:
        if prev_output.length != n_out:
            raise ValueError("prev_output length mismatch")
        out_init[:n_out] = prev_output.data
    image.write(output_addr, out_init.tobytes())

    layer = LayerSpec(input_len=n_in, output_len=n_out, input_addr=input_addr,
                      weight_addr=weight_addr, output_addr=output_addr,
                      prev_input_addr=prev_addr, kernel_mode=mode,
                      dataflow=dataflow)
    staged = StagedLayer(layer=layer, input_len=n_in, output_len=n_out,
                         input_addr=input_addr, prev_input_addr=prev_addr,
                         weight_addr=weight_addr, output_addr=output_addr,
                         param_addr=param_addr)

    fields = [n_in, n_out, input_addr, weight_addr, output_addr, prev_addr,
              mode.value, dataflow.value]
    image.write(param_addr, b"".join(v.to_bytes(8, "little") for v in fields))

    if n_in % 16 == 0 and n_out % 16 == 0:
        blocks = _sdot_blocks(w)
        staged.sdot_weight_addr = region(blocks.size)
        image.write(staged.sdot_weight_addr, blocks.tobytes())

    if n_in % 8 == 0 and n_out % 32 == 0:
        xi = curr.data.astype("<i2")
        pi = prev.data.astype("<i2")
        wm = _mla_blocks(w)
        staged.mla_input_addr = region(xi.nbytes)
        staged.mla_prev_input_addr = region(pi.nbytes)
        staged.mla_weight_addr = region(wm.nbytes)
        staged.mla_output_addr = region(2 * n_out)
        image.write(staged.mla_input_addr, xi.tobytes())
        image.write(staged.mla_prev_input_addr, pi.tobytes())
        image.write(staged.mla_weight_addr, wm.tobytes())
        out16 = np.zeros(n_out, dtype="<i2")
        if prev_output is not None:
            out16[:] = prev_output.data.astype(np.int16)
        image.write(staged.mla_output_addr, out16.tobytes())

    staged.end_addr = cursor[0]
    if staged.end_addr > image.size:
        raise ValueError(f"layer needs {staged.end_addr} bytes, image has {image.size}")
    return staged


def read_outputs(image: MemoryImage, staged: StagedLayer) -> np.ndarray:
    pout = -(-staged.output_len // 16) * 16
    raw = image.read(staged.output_addr, 4 * pout)
    return np.frombuffer(raw, dtype="<i4")[: staged.output_len].copy()


def advance_evaluation(image: MemoryImage, staged: StagedLayer,
                       new_frame: QuantTensor, sensor=None):
    """Shift to the next evaluation: prev <- inputs, inputs <- new frame.

    Outputs already live at output_addr, so the previous output needs no copy.
    Refuses to run while a CRS is in flight.
    """
    if sensor is not None and not sensor.idle:
        raise RuntimeError("advance_evaluation called while CRS is in flight")
    if new_frame.data.size != staged.input_len:
        raise ValueError("frame length mismatch")
    padded = -(-staged.input_len // 16) * 16
    image.write(staged.prev_input_addr, image.read(staged.input_addr, padded))
    image.write(staged.input_addr, _pad_to(new_frame.data, 16, np.int8).tobytes())
    if staged.mla_input_addr >= 0:
        image.write(staged.mla_prev_input_addr,
                    image.read(staged.mla_input_addr, 2 * staged.input_len))
        image.write(staged.mla_input_addr, new_frame.data.astype("<i2").tobytes())
