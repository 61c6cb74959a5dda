"""The CRS engine: pipeline-attached instruction generator with reuse skipping.

Lifecycle on a CRS instruction: block decode and wait for the pipeline to
drain (Preparing), bank the whole vector register domain into the scratchpad,
load the 8-field kernel parameter block through ordinary scalar loads
(Generate Params), then generate the kernel instruction stream straight into
dispatch at up to 4 per cycle (Kernel Generation), skipping the weight load
and 16-lane MAC for every zero delta. When everything commits (Finishing) the
vector domain and rename map are restored from the scratchpad and decode
unblocks (Restoring -> Idle).

Parameter block layout in simulated memory (little-endian, 8 x 64-bit):
input_len, output_len, input_addr, weight_addr, output_addr, prev_input_addr,
kernel_mode (0 basic / 1 reuse), dataflow (0 output- / 1 input-stationary).
The previous output is read from output_addr and rewritten in place.

Fault recovery: every generated instruction files a state-history entry
(generation cursor snapshot keyed by sequence number, evicted at commit). An
ordering fault squashes the offending instruction and everything younger,
restores the cursor from the entry, and generation resumes; outputs are
unaffected.

Generated deltas are int8 lanes with a per-lane overflow sideband. A delta
outside [-128, 127] is split per split_overflow into MACs on the same weight
register, carried as immediates.
"""

from collections import deque
from enum import Enum

import numpy as np

from .isa import Instruction, Opcode, Origin, VEC_BASE
from .kernels import OG_TILE, KernelVariant, run_kernel
from .tensors import AccumTensor, Dataflow, KernelMode, LayerSpec, Layout, QuantTensor

PARAM_FIELDS = ("input_len", "output_len", "input_addr", "weight_addr",
                "output_addr", "prev_input_addr", "kernel_mode", "dataflow")

# architectural tags reserved per instruction type. Kept tight: every named
# tag pins a physical register, and the free pool is what lets loads overlap.
PARAM_TAG0 = 16            # x16..x23: one per parameter field
ACC_TAG0 = 8               # z8..z15: 4 registers per output group x OG_TILE
CURR_TAGS = (0, 1)         # current input chunk (2-deep rotation; values are
PREV_TAGS = (2, 3)         # consumed via their physical registers, so the
DELTA_TAGS = (4, 5)        # triples can run two chunks ahead of the work)
W_TAG0, W_TAGS = 6, 2      # weight vectors (renaming unrolls the reuse)

P_INPUT_LEN, P_OUTPUT_LEN, P_INPUT_ADDR, P_WEIGHT_ADDR = 0, 1, 2, 3
P_OUTPUT_ADDR, P_PREV_ADDR, P_MODE, P_DATAFLOW = 4, 5, 6, 7


class SensorPhase(Enum):
    IDLE = 0
    PREPARING = 1
    GENERATE_PARAMS = 2
    KERNEL_GEN = 3
    FINISHING = 4
    RESTORING = 5


def split_overflow(delta16):
    """Split an out-of-range delta into int8 parts that sum to it exactly.

    d1 = 127*sign(d), d2 = d - d1; the +255 corner cannot be covered by two
    int8 parts (+128 is unrepresentable) and becomes (127, 127, 1).
    """
    if -128 <= delta16 <= 127:
        raise ValueError(f"split_overflow on in-range delta {delta16}")
    if delta16 == 255:
        return (127, 127, 1)
    d1 = 127 if delta16 > 0 else -127
    return (d1, delta16 - d1)


def _z(i):
    return VEC_BASE + i


def _ceil_div(a, b):
    return -(-a // b)


class GenCursor:
    """Resumable generation state machine for one kernel evaluation.

    Produces small batches of instructions into a pending queue; emission pops
    from it. snapshot()/restore() capture everything needed to regenerate the
    stream from any emitted instruction onward.
    """

    # top-level states
    ST_PASS_START = 0
    ST_TRIPLE = 1       # curr load / prev load / delta subtract for a chunk
    ST_INPUT = 2        # basic mode: current-input load only
    ST_BODY = 3         # per-chunk work (OS: one tile pass; IS: all tiles)
    ST_DONE = 4

    def __init__(self, n_in, n_out, mode, dataflow):
        self.n_in = n_in
        self.n_out = n_out
        self.pout = _ceil_div(n_out, 16) * 16
        self.n_og = self.pout // 16
        self.chunks = _ceil_div(n_in, 16)
        self.n_pass = _ceil_div(self.n_og, OG_TILE)
        self.reuse = mode is KernelMode.REUSE
        self.input_stationary = dataflow is Dataflow.INPUT_STATIONARY
        self.queue = deque()
        self.w_rot = 0
        self.done = False
        # outer position: OS iterates (pass, chunk); IS iterates (chunk, pass)
        self.p = 0
        self.c = 0
        self.triples_emitted = 0   # chunks whose load/load/sub triple is out
        self.latch = None          # reconstructed deltas for latch_chunk
        self.latch_chunk = -1
        self.pending_subs = {}     # chunk -> (seq, phys) of its SubVec8
        self.started = False

    # -- residency helpers ---------------------------------------------------

    def _ogs(self, p):
        return min(OG_TILE, self.n_og - OG_TILE * p)

    def _elems(self, c):
        return min(16, self.n_in - 16 * c)

    # -- batch builders -------------------------------------------------------

    def _acc_init(self, p, load):
        """Accumulator tile prologue: previous-output loads or zeroing."""
        out = []
        for i in range(4 * self._ogs(p)):
            tag = _z(ACC_TAG0 + i)
            if load:
                off = 64 * (OG_TILE * p + i // 4) + 16 * (i % 4)
                out.append((Instruction(Opcode.LD_VEC, (tag,),
                                        (PARAM_TAG0 + P_OUTPUT_ADDR,), imm=off,
                                        origin=Origin.SENSOR),
                            {"kind": "accload", "slot": ("acc", i % 4)}))
            else:
                out.append((Instruction(Opcode.SUB_VEC8, (tag,), (tag, tag),
                                        origin=Origin.SENSOR),
                            {"kind": "acczero"}))
        return out

    def _acc_store(self, p):
        out = []
        for i in range(4 * self._ogs(p)):
            tag = _z(ACC_TAG0 + i)
            off = 64 * (OG_TILE * p + i // 4) + 16 * (i % 4)
            out.append((Instruction(Opcode.ST_VEC, (),
                                    (PARAM_TAG0 + P_OUTPUT_ADDR, tag), imm=off,
                                    origin=Origin.SENSOR),
                        {"kind": "accstore", "slot": ("accst", i % 4)}))
        return out

    def _triple(self, c):
        rot = c % 2
        off = 16 * c
        return [
            (Instruction(Opcode.LD_VEC, (_z(CURR_TAGS[rot]),),
                         (PARAM_TAG0 + P_INPUT_ADDR,), imm=off,
                         origin=Origin.SENSOR),
             {"kind": "inload", "slot": ("in",)}),
            (Instruction(Opcode.LD_VEC, (_z(PREV_TAGS[rot]),),
                         (PARAM_TAG0 + P_PREV_ADDR,), imm=off,
                         origin=Origin.SENSOR),
             {"kind": "prevload", "slot": ("prev",)}),
            (Instruction(Opcode.SUB_VEC8, (_z(DELTA_TAGS[rot]),),
                         (_z(CURR_TAGS[rot]), _z(PREV_TAGS[rot])),
                         origin=Origin.SENSOR),
             {"kind": "sub", "chunk": c, "pass": self.p}),
        ]

    def _input_load(self, c):
        rot = c % 2
        return [(Instruction(Opcode.LD_VEC, (_z(CURR_TAGS[rot]),),
                             (PARAM_TAG0 + P_INPUT_ADDR,), imm=16 * c,
                             origin=Origin.SENSOR),
                 {"kind": "inload", "slot": ("in",)})]

    def _element(self, c, p, j, delta):
        """Weight loads and MACs for one input element in one tile pass.

        delta is None in basic mode (scalar taken from the input register);
        a zero delta emits nothing (the caller counts the skip at latch time).
        """
        out = []
        row = 16 * c + j
        rot = c % 2
        if delta is None:
            scalar_srcs = (_z(CURR_TAGS[rot]),)
            parts = (None,)
        else:
            if -128 <= delta <= 127:
                scalar_srcs = (_z(DELTA_TAGS[rot]),)
                parts = (None,)
            else:
                scalar_srcs = ()
                parts = split_overflow(delta)
        for t in range(self._ogs(p)):
            w_tag = _z(W_TAG0 + self.w_rot)
            self.w_rot = (self.w_rot + 1) % W_TAGS
            w_off = row * self.pout + 16 * (OG_TILE * p + t)
            out.append((Instruction(Opcode.LD_VEC, (w_tag,),
                                    (PARAM_TAG0 + P_WEIGHT_ADDR,), imm=w_off,
                                    origin=Origin.SENSOR),
                        {"kind": "wload", "slot": ("w", t)}))
            accs = tuple(_z(ACC_TAG0 + 4 * t + n) for n in range(4))
            for pi, part in enumerate(parts):
                if part is None:
                    instr = Instruction(Opcode.MLA8, accs, (w_tag,) + scalar_srcs,
                                        index_k=j, origin=Origin.SENSOR)
                else:
                    instr = Instruction(Opcode.MLA8, accs, (w_tag,), imm=part,
                                        origin=Origin.SENSOR)
                # splits beyond the first part are the extra MACs the overflow costs
                out.append((instr, {"kind": "mla8", "split_extra": pi > 0}))
        return out

    # -- refill ---------------------------------------------------------------

    def refill(self, sensor):
        """Advance the machine until the queue holds instructions, generation
        must wait for a delta, or the stream is complete.

        Returns "ok", "wait" or "done".
        """
        while not self.queue:
            if self.done:
                return "done"
            if self.input_stationary:
                status = self._refill_is(sensor)
            else:
                status = self._refill_os(sensor)
            if status == "wait":
                return "wait"
        return "ok"

    def _need_latch(self, sensor, c):
        """Latch chunk c's committed deltas; False while the sub is in flight."""
        if self.latch_chunk == c:
            return True
        entry = self.pending_subs.get(c)
        if entry is None or entry[0] not in sensor.committed_subs:
            return False
        sensor.latch_delta(self, c, entry[1])
        return True

    def _work_chunk(self, sensor, c, p):
        """Queue the per-element work of chunk c for tile pass p.

        Skips are booked here, per (chunk, tile-pass) visit, so the totals sum
        to zero_deltas x output_groups under either dataflow.
        """
        if self.reuse:
            if not self._need_latch(sensor, c):
                return "wait"
            ogs = self._ogs(p)
            for j in range(self._elems(c)):
                d = self.latch[j]
                if d == 0:
                    sensor.weight_loads_skipped += ogs
                    sensor.mla8_skipped += ogs
                else:
                    self.queue.extend(self._element(c, p, j, d))
        else:
            for j in range(self._elems(c)):
                self.queue.extend(self._element(c, p, j, None))
        return "ok"

    def _refill_os(self, sensor):
        """Output stationary: tile pass outer, chunks inner; triples run one
        chunk ahead of the work so the wait-for-commit costs little."""
        if not self.started:
            self.started = True
            self.state = self.ST_PASS_START
        if self.state == self.ST_PASS_START:
            self.queue.extend(self._acc_init(self.p, load=self.reuse))
            self.c = 0
            self.latch_chunk = -1  # each pass waits on its own fresh deltas
            if self.reuse:
                self.triples_emitted = 0
                while self.triples_emitted < min(3, self.chunks):
                    self.queue.extend(self._triple(self.triples_emitted))
                    self.triples_emitted += 1
            else:
                self.queue.extend(self._input_load(0))
            self.state = self.ST_BODY
            return "ok"
        if self.state == self.ST_BODY:
            status = self._work_chunk(sensor, self.c, self.p)
            if status == "wait":
                return "wait"
            self.c += 1
            if self.c < self.chunks:
                if self.reuse:
                    # triples run two chunks ahead of the consuming work
                    if self.triples_emitted == self.c + 2 and self.triples_emitted < self.chunks:
                        self.queue.extend(self._triple(self.triples_emitted))
                        self.triples_emitted += 1
                else:
                    self.queue.extend(self._input_load(self.c))
                return "ok"
            self.queue.extend(self._acc_store(self.p))
            self.p += 1
            if self.p >= self.n_pass:
                self.done = True
            else:
                self.state = self.ST_PASS_START
            return "ok"
        raise AssertionError("bad cursor state")

    def _refill_is(self, sensor):
        """Input stationary: chunk outer; accumulators reloaded and stored per
        (chunk, tile pass)."""
        if not self.started:
            self.started = True
            self.c = 0
            self.p = 0
            if self.reuse:
                self.triples_emitted = 0
                while self.triples_emitted < min(3, self.chunks):
                    self.queue.extend(self._triple(self.triples_emitted))
                    self.triples_emitted += 1
            else:
                self.queue.extend(self._input_load(0))
            self.state = self.ST_BODY
            return "ok"
        if self.state == self.ST_BODY:
            # one tile pass of the current chunk per refill
            if self.p == 0 and self.reuse and not self._need_latch(sensor, self.c):
                return "wait"
            load_acc = self.reuse or self.c > 0
            self.queue.extend(self._acc_init(self.p, load=load_acc))
            status = self._work_chunk(sensor, self.c, self.p)
            assert status == "ok"
            self.queue.extend(self._acc_store(self.p))
            self.p += 1
            if self.p < self.n_pass:
                return "ok"
            self.p = 0
            self.c += 1
            if self.c >= self.chunks:
                self.done = True
                return "ok"
            if self.reuse:
                if self.triples_emitted < self.chunks:
                    self.queue.extend(self._triple(self.triples_emitted))
                    self.triples_emitted += 1
            else:
                self.queue.extend(self._input_load(self.c))
            return "ok"
        raise AssertionError("bad cursor state")

    # -- snapshot / restore ----------------------------------------------------

    def snapshot(self):
        return (self.p, self.c, self.triples_emitted, self.started,
                getattr(self, "state", -1), self.done, self.w_rot,
                self.latch_chunk,
                None if self.latch is None else tuple(self.latch),
                tuple(self.queue), tuple(self.pending_subs.items()))

    def restore(self, snap):
        (self.p, self.c, self.triples_emitted, self.started, state, self.done,
         self.w_rot, self.latch_chunk, latch, queue, subs) = snap
        if state != -1:
            self.state = state
        self.latch = None if latch is None else list(latch)
        self.queue = deque(queue)
        self.pending_subs = dict(subs)


class ReuseSensor:
    """One per core; drives generation and owns the banked vector state."""

    def __init__(self, gen_width=4, restore_cycles=3):
        self.gen_width = gen_width
        self.restore_cycles = restore_cycles
        self.reset_run_state()
        # counters (gross: rollback regeneration counts again)
        self.generated = 0
        self.weight_loads = 0
        self.mla8 = 0
        self.weight_loads_skipped = 0
        self.mla8_skipped = 0
        self.overflow_splits = 0
        self.param_loads = 0
        self.scratchpad_accesses = 0
        self.drain_cycles = 0
        self.restore_cycles_spent = 0
        self.operating_cycles = 0
        self.crs_retired = 0
        self.branches_generated = 0

    def reset_run_state(self):
        self.phase = SensorPhase.IDLE
        self.pipeline = None
        self.crs_seq = -1
        self.crs_src = -1
        self.crs_cycle = -1
        self.operating_start = -1
        self.last_commit_cycle = -1
        self.vec_snapshot = None
        self.saved_int_map = {}
        self.first_touch = {}      # (space, arch) -> first sensor rename seq
        self.params = [None] * 8
        self.param_base = None
        self.param_seq = {}        # seq -> field index
        self.params_emitted = 0
        self.param_flights = {}   # field -> (seq, phys)
        self.cursor = None
        self.history = {}
        self.committed_subs = set()
        self.restore_left = 0
        self.generated_this_cycle = 0

    def attach(self, pipeline):
        self.pipeline = pipeline

    @property
    def active(self):
        return self.phase is not SensorPhase.IDLE

    @property
    def idle(self):
        return self.phase is SensorPhase.IDLE

    # -- pipeline hooks --------------------------------------------------------

    def on_crs_decoded(self, seq, src_arch, cycle):
        if self.active:
            raise RuntimeError("nested CRS while the sensor is busy")
        self.reset_run_state_soft()
        self.phase = SensorPhase.PREPARING
        self.crs_seq = seq
        self.crs_src = src_arch
        self.crs_cycle = cycle

    def reset_run_state_soft(self):
        pipeline = self.pipeline
        self.reset_run_state()
        self.pipeline = pipeline

    def abort(self):
        """CRS was squashed off the wrong path before the drain completed."""
        assert self.phase in (SensorPhase.IDLE, SensorPhase.PREPARING)
        self.phase = SensorPhase.IDLE
        if self.pipeline is not None:
            self.pipeline.decode_blocked = False

    def on_squash(self, seq):
        if self.crs_seq >= seq and self.phase is SensorPhase.PREPARING:
            self.abort()
            return
        for key in [k for k, s in self.first_touch.items() if s >= seq]:
            del self.first_touch[key]
            if key[0] == "int":
                self.saved_int_map.pop(key[1], None)
        for s in [s for s in self.param_seq if s >= seq]:
            field = self.param_seq.pop(s)
            self.params_emitted &= ~(1 << field)
            self.param_flights.pop(field, None)
        for s in [s for s in self.history if s >= seq]:
            del self.history[s]

    def on_commit(self, flight):
        self.history.pop(flight.seq, None)
        self.last_commit_cycle = self.pipeline.cycle
        meta = flight.meta or {}
        kind = meta.get("kind")
        if kind == "param":
            self.params[meta["field"]] = self.pipeline.regs.int_prf[flight.dsts[0][2]]
        elif kind == "sub":
            self.committed_subs.add(flight.seq)

    def on_sub_writeback(self, flight, cycle):
        """Delta result is on the writeback bus: prefetch the weight lines the
        nonzero rows of this chunk will need.

        Prefetching is safe on not-yet-committed data (a wrong prefetch only
        warms a line); the architectural skip decision still waits for commit.
        """
        if self.cursor is None:
            return
        cur = self.cursor
        raw = flight.values[0]
        sideband = flight.sideband
        chunk = flight.meta["chunk"]
        wbase = self.params[P_WEIGHT_ADDR]
        pout = cur.pout
        memsys = self.pipeline.memsys
        if cur.input_stationary:
            og_lo, og_hi = 0, cur.n_og
        else:
            p = flight.meta["pass"]
            og_lo, og_hi = OG_TILE * p, OG_TILE * p + cur._ogs(p)
        for j in range(cur._elems(chunk)):
            if raw[j] == 0:  # wrapped zero is a true zero (|delta| <= 255)
                continue
            row = 16 * chunk + j
            start = wbase + row * pout + 16 * og_lo
            end = wbase + row * pout + 16 * og_hi
            for line in range(start // 64, (end - 1) // 64 + 1):
                memsys.informed_prefetch(line * 64, cycle)

    def latch_delta(self, cursor, chunk, phys):
        """Copy a committed delta chunk into the delta value register.

        Reconstructs true deltas from the wrapped int8 lanes plus the overflow
        sideband, and books the skip counts for this (chunk, tile) visit.
        """
        regs = self.pipeline.regs
        raw = regs.vec_prf[phys]
        sideband = regs.vec_sideband[phys]
        lanes = []
        for i in range(16):
            v = raw[i] if raw[i] < 128 else raw[i] - 256
            if sideband & (1 << i):
                v = v + 256 if v < 0 else v - 256
            lanes.append(v)
        cursor.latch = lanes
        cursor.latch_chunk = chunk
        self.scratchpad_accesses += 1

    def rollback(self, fault_seq):
        """Ordering fault in a generated instruction: revert and regenerate."""
        snap = self.history.get(fault_seq)
        if snap is None:
            raise RuntimeError(f"machine check: no state history entry for "
                               f"seq {fault_seq}")
        self.cursor.restore(snap)
        for s in [s for s in self.history if s >= fault_seq]:
            del self.history[s]
        if self.phase is SensorPhase.FINISHING:
            self.phase = SensorPhase.KERNEL_GEN

    # -- per-cycle step ----------------------------------------------------------

    def step(self, pl):
        self.generated_this_cycle = 0
        if self.phase is SensorPhase.PREPARING:
            if not pl.rob and not pl.decode_q:
                self.drain_cycles += pl.cycle - self.crs_cycle
                self.operating_start = self.crs_cycle
                self._bank_vector_state(pl)
                self.phase = SensorPhase.GENERATE_PARAMS
            return
        if self.phase is SensorPhase.GENERATE_PARAMS:
            self._emit_param_loads(pl)
            if all(v is not None for v in self.params):
                self._start_kernel(pl)
            return
        if self.phase is SensorPhase.KERNEL_GEN:
            self._emit_kernel(pl)
            return
        if self.phase is SensorPhase.FINISHING:
            if not pl.rob:
                self.phase = SensorPhase.RESTORING
                self.restore_left = self.restore_cycles
                self.scratchpad_accesses += len(pl.regs.vec_prf)
            return
        if self.phase is SensorPhase.RESTORING:
            self.restore_left -= 1
            self.restore_cycles_spent += 1
            if self.restore_left <= 0:
                self._restore(pl)
            return

    def _bank_vector_state(self, pl):
        regs = pl.regs
        self.vec_snapshot = regs.snapshot_vec_state()
        self.scratchpad_accesses += len(regs.vec_prf)
        # every vector physical register becomes available to the generator
        regs.vec_free = list(range(len(regs.vec_prf)))
        self.param_base = regs.get_int(self.crs_src)

    def _emit_param_loads(self, pl):
        for field in range(8):
            if self.params_emitted & (1 << field):
                continue
            if self.generated_this_cycle >= self.gen_width:
                return
            instr = Instruction(Opcode.LD_SCALAR, (PARAM_TAG0 + field,),
                                (self.crs_src,), imm=8 * field,
                                origin=Origin.SENSOR)
            f = self._insert(pl, instr, {"kind": "param", "field": field})
            if f is None:
                return
            self.params_emitted |= 1 << field
            self.param_seq[f.seq] = field
            self.param_flights[field] = (f.seq, f.dsts[0][2])
            self.param_loads += 1

    def _start_kernel(self, pl):
        n_in = self.params[P_INPUT_LEN]
        n_out = self.params[P_OUTPUT_LEN]
        if n_in == 0 or n_out == 0:
            self.phase = SensorPhase.FINISHING
            return
        mode = KernelMode(self.params[P_MODE])
        dataflow = Dataflow(self.params[P_DATAFLOW])
        pout = _ceil_div(n_out, 16) * 16
        spans = [
            (self.params[P_INPUT_ADDR], _ceil_div(n_in, 16) * 16),
            (self.params[P_PREV_ADDR], _ceil_div(n_in, 16) * 16),
            (self.params[P_WEIGHT_ADDR], n_in * pout),
            (self.params[P_OUTPUT_ADDR], 4 * pout),
        ]
        for addr, size in spans:
            if addr < 0 or addr + size > pl.mem.size:
                from .pipeline import SimulationFault
                raise SimulationFault(
                    f"kernel parameter range [{addr}, {addr + size}) outside image")
        self.cursor = GenCursor(n_in, n_out, mode, dataflow)
        self.phase = SensorPhase.KERNEL_GEN

    def _emit_kernel(self, pl):
        cursor = self.cursor
        while self.generated_this_cycle < self.gen_width:
            status = cursor.refill(self)
            if status == "done":
                self.phase = SensorPhase.FINISHING
                return
            if status == "wait":
                return
            snap = cursor.snapshot()
            instr, meta = cursor.queue[0]
            f = self._insert(pl, instr, meta)
            if f is None:
                return
            cursor.queue.popleft()
            self.history[f.seq] = snap
            kind = meta["kind"]
            if kind == "wload":
                self.weight_loads += 1
            elif kind == "mla8":
                self.mla8 += 1
                if meta.get("split_extra"):
                    self.overflow_splits += 1
            elif kind == "sub":
                cursor.pending_subs[meta["chunk"]] = (f.seq, f.dsts[0][2])

    def _insert(self, pl, instr, meta):
        free_prev = True
        if instr.dst_regs:
            d = instr.dst_regs[0]
            space = "vec" if d >= VEC_BASE else "int"
            key = (space, d)
            if key not in self.first_touch:
                free_prev = False
        f = pl.rename_insert(instr, Origin.SENSOR, meta=meta, free_prev=free_prev)
        if f is None:
            return None
        if instr.dst_regs:
            for d in instr.dst_regs:
                space = "vec" if d >= VEC_BASE else "int"
                key = (space, d)
                if key not in self.first_touch:
                    self.first_touch[key] = f.seq
                    if space == "int":
                        # pre-CRS mapping, restored (not freed) at the end
                        self.saved_int_map[d] = f.dsts[0][3]
        instr.seq_num = f.seq
        self.generated += 1
        self.generated_this_cycle += 1
        if instr.opcode is Opcode.BRANCH:
            self.branches_generated += 1
        return f

    def _restore(self, pl):
        regs = pl.regs
        regs.restore_vec_state(self.vec_snapshot)
        for tag, old_phys in self.saved_int_map.items():
            regs.int_free.append(regs.int_map[tag])
            regs.int_map[tag] = old_phys
        self.saved_int_map = {}
        pl.decode_blocked = False
        self.operating_cycles += max(self.last_commit_cycle, self.crs_cycle) - self.crs_cycle
        self.crs_retired += 1
        pl.stats.bump_class("crs")
        self.phase = SensorPhase.IDLE

    def export_stats(self, stats):
        stats.scratchpad_accesses += self.scratchpad_accesses
        stats.sensor_generated = self.generated
        stats.sensor_weight_loads = self.weight_loads
        stats.sensor_mla8 = self.mla8
        stats.sensor_weight_loads_skipped = self.weight_loads_skipped
        stats.sensor_mla8_skipped = self.mla8_skipped
        stats.sensor_overflow_splits = self.overflow_splits
        stats.sensor_param_loads = self.param_loads
        stats.sensor_drain_cycles = self.drain_cycles
        stats.sensor_restore_cycles = self.restore_cycles_spent
        stats.sensor_operating_cycles = self.operating_cycles
        stats.crs_retired = self.crs_retired
        stats.sensor_branches = self.branches_generated


# ---------------------------------------------------------------------------
# Functional view of a CRS (the in-order oracle's handler)
# ---------------------------------------------------------------------------

def read_param_block(mem, base):
    return {name: int.from_bytes(mem.read(base + 8 * i, 8), "little")
            for i, name in enumerate(PARAM_FIELDS)}

def functional_crs(state, base):
    """Evaluate the kernel a CRS points at, writing only output memory."""
    mem = state.mem
    p = read_param_block(mem, base)
    n_in, n_out = p["input_len"], p["output_len"]
    if n_in == 0 or n_out == 0:
        return
    pout = _ceil_div(n_out, 16) * 16
    mode = KernelMode(p["kernel_mode"])
    dataflow = Dataflow(p["dataflow"])
    curr = QuantTensor(np.frombuffer(mem.read(p["input_addr"], n_in), dtype=np.int8),
                       (1, n_in))
    w = QuantTensor(np.frombuffer(mem.read(p["weight_addr"], n_in * pout), dtype=np.int8),
                    (n_in, pout), Layout.WEIGHT_INTERLEAVED16)
    layer = LayerSpec(input_len=n_in, output_len=n_out,
                      input_addr=p["input_addr"], weight_addr=p["weight_addr"],
                      output_addr=p["output_addr"], prev_input_addr=p["prev_input_addr"],
                      kernel_mode=mode, dataflow=dataflow)
    out_region = np.frombuffer(mem.read(p["output_addr"], 4 * pout), dtype="<i4").copy()
    if mode is KernelMode.REUSE:
        prev = QuantTensor(np.frombuffer(mem.read(p["prev_input_addr"], n_in),
                                         dtype=np.int8), (1, n_in))
        res = run_kernel(KernelVariant.SENSOR_REUSE, layer, curr, w,
                         prev_inputs=prev,
                         prev_output=AccumTensor(out_region[:n_out]))
        # padded lanes carry zero weights: previous values flow through
    else:
        res = run_kernel(KernelVariant.SENSOR_BASIC, layer, curr, w)
        out_region[:] = 0
    out_region[:n_out] = res.output.data
    mem.write(p["output_addr"], out_region.astype("<i4").tobytes())
