"""Cycle-approximate out-of-order pipeline model.

Stage-stepped per cycle (commit, writeback, issue, sensor generation, rename/
dispatch, decode, fetch) with register renaming, a two-level data cache with a
stride prefetcher, branch prediction with wrong-path fetch/execute, and exact
load-store disambiguation (a load issues only once every older store has
computed its address; overlapping stores forward on an exact match or block
the load until they commit). Honest disambiguation never faults; tests inject
an ordering fault at a chosen sequence number to exercise the recovery path.

Timing never changes values: per-instruction effects come from
isa.execute_functional, the same function the in-order oracle uses.

The optional per-cycle trace (MachineConfig.trace) emits one line per cycle:

    cycle=<n> fetch=<seqs> rename=<seqs> issue=<seqs> wb=<seqs> commit=<seqs>

with comma-joined sequence numbers or "-" for idle stages.
"""

import heapq
from collections import deque
from dataclasses import dataclass, field, asdict

from .isa import (
    LOAD_OPCODES,
    MemoryFault,
    MachineState,
    Opcode,
    Origin,
    RMW_OPCODES,
    VEC_BASE,
    execute_functional,
)


class SimulationFault(Exception):
    """A fault reached commit (bad address on the architectural path)."""


class SimulationDeadlock(Exception):
    """No pipeline progress for a long stretch; structural bug diagnostics."""


@dataclass
class MachineConfig:
    fetch_width: int = 4
    decode_width: int = 4
    rename_width: int = 4
    commit_width: int = 4
    issue_width: int = 8
    dispatch_width: int = 8
    writeback_width: int = 8
    rob: int = 128
    iq: int = 80
    lq: int = 32
    sq: int = 48
    int_alu: int = 2
    vec_fu: int = 2
    load_ports: int = 2
    store_ports: int = 1
    int_prf: int = 128
    fp_prf: int = 192
    vec_prf: int = 48
    l1_size: int = 64 * 1024
    l1_ways: int = 4
    l2_size: int = 256 * 1024
    l2_ways: int = 8
    line_size: int = 64
    l1_lat: int = 4
    l2_lat: int = 12
    dram_lat: int = 100
    prefetch: bool = True
    predictor: str = "bimodal"   # bimodal | perfect | perverse | never-taken
    predictor_entries: int = 1024
    mispredict_penalty: int = 14
    int_alu_lat: int = 1
    vec_lat: int = 2
    store_lat: int = 1
    sensor_gen_width: int = 4
    sensor_restore_cycles: int = 3
    mem_size: int = 8 << 20
    trace: bool = False

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        cfg = MachineConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ValueError(f"unknown config field {k!r}")
            setattr(cfg, k, type(getattr(cfg, k))(v))
        return cfg

    def validate(self):
        for name in ("fetch_width", "decode_width", "rename_width", "commit_width",
                     "issue_width", "dispatch_width", "writeback_width", "rob",
                     "iq", "lq", "sq", "int_alu", "vec_fu", "load_ports",
                     "store_ports"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class SimStats:
    cycles: int = 0
    fetched: int = 0
    decoded: int = 0
    renamed: int = 0
    dispatched: int = 0
    issued: int = 0
    committed: int = 0
    committed_frontend: int = 0
    committed_sensor: int = 0
    committed_by_class: dict = field(default_factory=dict)
    crs_retired: int = 0
    squashed: int = 0
    branches: int = 0
    sensor_branches: int = 0
    mispredicts: int = 0
    squash_cycles: int = 0
    icache_accesses: int = 0
    l1d_accesses: int = 0
    l1d_misses: int = 0
    l2_accesses: int = 0
    l2_misses: int = 0
    dram_accesses: int = 0
    prefetches: int = 0
    int_alu_ops: int = 0
    vec_fu_ops: int = 0
    rf_reads: int = 0
    rf_writes: int = 0
    scratchpad_accesses: int = 0
    sensor_generated: int = 0
    sensor_weight_loads: int = 0
    sensor_mla8: int = 0
    sensor_weight_loads_skipped: int = 0
    sensor_mla8_skipped: int = 0
    sensor_overflow_splits: int = 0
    sensor_param_loads: int = 0
    sensor_drain_cycles: int = 0
    sensor_restore_cycles: int = 0
    sensor_operating_cycles: int = 0
    ordering_fault_squashes: int = 0

    def to_dict(self):
        return asdict(self)

    def bump_class(self, cls, n=1):
        self.committed_by_class[cls] = self.committed_by_class.get(cls, 0) + n


# ---------------------------------------------------------------------------
# Caches and branch prediction
# ---------------------------------------------------------------------------

class _Cache:
    __slots__ = ("nsets", "ways", "sets")

    def __init__(self, size, ways, line):
        self.nsets = max(1, size // (line * ways))
        self.ways = ways
        self.sets = [[] for _ in range(self.nsets)]

    def access(self, line_addr):
        s = self.sets[line_addr % self.nsets]
        try:
            s.remove(line_addr)
            s.insert(0, line_addr)
            return True
        except ValueError:
            return False

    def contains(self, line_addr):
        return line_addr in self.sets[line_addr % self.nsets]

    def fill(self, line_addr):
        s = self.sets[line_addr % self.nsets]
        if line_addr in s:
            return
        s.insert(0, line_addr)
        if len(s) > self.ways:
            s.pop()


class MemSystem:
    """L1D + L2 with LRU replacement and two prefetch paths into L2.

    A per-slot stride prefetcher covers the regular streams (inputs, outputs,
    the basic kernels' weight walks). Informed prefetches carry an explicit
    completion time (issue cycle + DRAM latency) and model the sensor's
    delta-driven weight prefetching; a demand access that arrives before the
    line's completion pays the remaining latency.
    """

    def __init__(self, cfg: MachineConfig, stats: SimStats):
        self.l1 = _Cache(cfg.l1_size, cfg.l1_ways, cfg.line_size)
        self.l2 = _Cache(cfg.l2_size, cfg.l2_ways, cfg.line_size)
        self.line = cfg.line_size
        self.l1_lat = cfg.l1_lat
        self.l2_lat = cfg.l2_lat
        self.dram_lat = cfg.dram_lat
        self.prefetch = cfg.prefetch
        self.table = {}
        self.inflight_pf = {}   # line -> completion cycle
        self.stats = stats

    def access(self, addr, slot, now=0):
        """Demand access; returns latency in cycles."""
        st = self.stats
        line = addr // self.line
        st.l1d_accesses += 1
        if self.l1.access(line):
            return self.l1_lat
        st.l1d_misses += 1
        st.l2_accesses += 1
        if self.prefetch:
            self._train(slot, line)
        if self.l2.access(line):
            self.l1.fill(line)
            return self.l2_lat
        ready = self.inflight_pf.pop(line, None)
        if ready is not None:
            self.l2.fill(line)
            self.l1.fill(line)
            return self.l2_lat + max(0, ready - now)
        st.l2_misses += 1
        st.dram_accesses += 1
        self.l2.fill(line)
        self.l1.fill(line)
        return self.dram_lat

    def informed_prefetch(self, addr, now):
        """Prefetch one line into L2, completing a DRAM latency from now."""
        line = addr // self.line
        if self.l2.contains(line) or line in self.inflight_pf:
            return
        self.inflight_pf[line] = now + self.dram_lat
        self.stats.prefetches += 1

    def _train(self, slot, line):
        last, stride, conf = self.table.get(slot, (line, 0, 0))
        new_stride = line - last
        if new_stride == stride and stride != 0:
            conf = min(conf + 1, 3)
        else:
            conf = 0
        self.table[slot] = (line, new_stride, conf)
        if conf >= 1:
            for d in (1, 2):
                target = line + d * new_stride
                if target >= 0 and not self.l2.access(target):
                    self.l2.fill(target)
                    self.stats.prefetches += 1


class BranchPredictor:
    """bimodal (2-bit counters), perfect / perverse (oracle stream), never-taken."""

    def __init__(self, cfg: MachineConfig, oracle=None):
        self.kind = cfg.predictor
        self.entries = cfg.predictor_entries
        self.table = [1] * self.entries  # weakly not-taken
        self.oracle = oracle
        if self.kind in ("perfect", "perverse") and oracle is None:
            raise ValueError(f"{self.kind} predictor needs an oracle branch trace")

    def predict(self, pc, stream_idx):
        if self.kind == "bimodal":
            return self.table[pc % self.entries] >= 2
        if self.kind == "never-taken":
            return False
        actual = self.oracle[stream_idx] if stream_idx < len(self.oracle) else False
        return actual if self.kind == "perfect" else not actual

    def update(self, pc, taken):
        if self.kind != "bimodal":
            return
        i = pc % self.entries
        c = self.table[i]
        self.table[i] = min(c + 1, 3) if taken else max(c - 1, 0)


# ---------------------------------------------------------------------------
# In-flight bookkeeping
# ---------------------------------------------------------------------------

S_WAIT = 0
S_READY = 1
S_ISSUED = 2
S_DONE = 3


class Flight:
    __slots__ = ("seq", "instr", "origin", "pc", "stream_idx", "dsts", "src_phys",
                 "pending", "state", "addr", "size", "store_data", "values",
                 "sideband", "predicted", "taken", "squashed", "in_iq",
                 "mem_fault", "fault_inject", "is_load", "is_store", "cls",
                 "latency_slot", "meta")

    def __init__(self, seq, instr, origin, pc, stream_idx=-1, meta=None):
        self.seq = seq
        self.instr = instr
        self.origin = origin
        self.pc = pc
        self.stream_idx = stream_idx
        self.dsts = []        # (is_vec, arch, new_p, prev_p, free_prev)
        self.src_phys = []    # (is_vec, phys)
        self.pending = 0
        self.state = S_WAIT
        self.addr = -1
        self.size = 0
        self.store_data = None
        self.values = ()
        self.sideband = 0
        self.predicted = None
        self.taken = None
        self.squashed = False
        self.in_iq = False
        self.mem_fault = False
        self.fault_inject = False
        self.is_load = instr.opcode in LOAD_OPCODES
        self.is_store = instr.opcode is Opcode.ST_VEC
        self.cls = instr.op_class
        self.latency_slot = None
        self.meta = meta


class Pipeline:
    """One out-of-order core executing one program, optionally with a sensor."""

    def __init__(self, config: MachineConfig, state: MachineState, program,
                 sensor=None, oracle_branches=None, inject_fault_seq=-1):
        config.validate()
        self.cfg = config
        self.state = state
        self.regs = state.regs
        self.mem = state.mem
        self.program = program
        self.sensor = sensor
        if sensor is not None:
            sensor.attach(self)
        self.stats = SimStats()
        self.memsys = MemSystem(config, self.stats)
        self.predictor = BranchPredictor(config, oracle_branches)
        self.inject_fault_seq = inject_fault_seq

        self.cycle = 0
        self.pc = 0
        self.seq = 0
        self.stream_idx = 0
        self.fetch_stall_until = 0
        self.decode_blocked = False

        self.fetch_q = deque()
        self.decode_q = deque()
        self.rob = deque()
        self.iq_count = 0
        self.lq = deque()
        self.sq = deque()
        self.blocked_loads = []
        self.ready_q = []       # heap of (seq, Flight)
        self.completion = []    # heap of (cycle, seq, Flight)
        self.waiters = {}       # phys key -> [Flight]
        self.last_progress = 0
        self.trace_lines = [] if config.trace else None
        self._trace_cycle = None

    # -- register helpers ---------------------------------------------------

    @staticmethod
    def _key(is_vec, p):
        return p + (1 << 16) if is_vec else p

    def _phys_ready(self, is_vec, p):
        return self.regs.vec_ready[p] if is_vec else self.regs.int_ready[p]

    def _read_phys(self, is_vec, p):
        return self.regs.vec_prf[p] if is_vec else self.regs.int_prf[p]

    def rename_insert(self, instr, origin, pc=-1, stream_idx=-1, predicted=None,
                      seq=None, free_prev=True, meta=None):
        """Rename an instruction and insert it into ROB/IQ/LSQ.

        Returns the Flight, or None when a structural resource (ROB, IQ, LSQ
        slot or free physical register) is unavailable this cycle.
        """
        regs = self.regs
        if len(self.rob) >= self.cfg.rob or self.iq_count >= self.cfg.iq:
            return None
        op = instr.opcode
        if op in LOAD_OPCODES and len(self.lq) >= self.cfg.lq:
            return None
        if op is Opcode.ST_VEC and len(self.sq) >= self.cfg.sq:
            return None
        need_vec = sum(1 for d in instr.dst_regs if d >= VEC_BASE)
        need_int = len(instr.dst_regs) - need_vec
        if len(regs.vec_free) < need_vec or len(regs.int_free) < need_int:
            return None

        f = Flight(self.seq if seq is None else seq, instr, origin, pc,
                   stream_idx, meta)
        if seq is None:
            self.seq += 1
        f.predicted = predicted

        for r in instr.src_regs:
            if r >= VEC_BASE:
                f.src_phys.append((True, regs.vec_map[r - VEC_BASE]))
            else:
                f.src_phys.append((False, regs.int_map[r]))
        if op in RMW_OPCODES:
            for d in instr.dst_regs:
                f.src_phys.append((True, regs.vec_map[d - VEC_BASE]))

        for d in instr.dst_regs:
            if d >= VEC_BASE:
                arch = d - VEC_BASE
                new_p = regs.vec_free.pop()
                f.dsts.append((True, arch, new_p, regs.vec_map[arch], free_prev))
                regs.vec_map[arch] = new_p
                regs.vec_ready[new_p] = False
            else:
                new_p = regs.int_free.pop()
                f.dsts.append((False, d, new_p, regs.int_map[d], free_prev))
                regs.int_map[d] = new_p
                regs.int_ready[new_p] = False

        for is_vec, p in f.src_phys:
            if not self._phys_ready(is_vec, p):
                f.pending += 1
                self.waiters.setdefault(self._key(is_vec, p), []).append(f)

        self.rob.append(f)
        self.iq_count += 1
        f.in_iq = True
        if f.is_load:
            self.lq.append(f)
        elif f.is_store:
            self.sq.append(f)
        if f.seq == self.inject_fault_seq and f.is_load:
            f.fault_inject = True
        if f.pending == 0:
            heapq.heappush(self.ready_q, (f.seq, f))
        self.stats.renamed += 1
        self.stats.dispatched += 1
        return f

    # -- squash --------------------------------------------------------------

    def squash_from(self, seq, redirect_pc=None, stream_idx=None):
        """Discard every in-flight instruction with seq >= seq (buffers too)."""
        regs = self.regs
        while self.rob and self.rob[-1].seq >= seq:
            f = self.rob.pop()
            for is_vec, arch, new_p, prev_p, _free in reversed(f.dsts):
                if is_vec:
                    regs.vec_map[arch] = prev_p
                    regs.vec_free.append(new_p)
                else:
                    regs.int_map[arch] = prev_p
                    regs.int_free.append(new_p)
            f.squashed = True
            if f.in_iq:
                self.iq_count -= 1
                f.in_iq = False
            self.stats.squashed += 1
        self.lq = deque(f for f in self.lq if not f.squashed)
        self.sq = deque(f for f in self.sq if not f.squashed)
        self.blocked_loads = [f for f in self.blocked_loads if not f.squashed]
        self.fetch_q = deque(e for e in self.fetch_q if e[0] < seq)
        self.decode_q = deque(e for e in self.decode_q if e[0] < seq)
        if self.sensor is not None and self.sensor.active:
            self.sensor.on_squash(seq)
        if redirect_pc is not None:
            self.pc = redirect_pc
        if stream_idx is not None:
            self.stream_idx = stream_idx

    # -- stages ---------------------------------------------------------------

    def do_fetch(self):
        if self.decode_blocked or self.cycle < self.fetch_stall_until:
            return
        if len(self.fetch_q) >= 2 * self.cfg.fetch_width:
            return
        n = 0
        program = self.program
        fetched_seqs = []
        while n < self.cfg.fetch_width and 0 <= self.pc < len(program):
            instr = program[self.pc]
            seq = self.seq
            self.seq += 1
            predicted = None
            stream = self.stream_idx  # branches fetched before this point
            if instr.opcode is Opcode.BRANCH:
                predicted = self.predictor.predict(self.pc, stream)
                self.stream_idx += 1
            self.fetch_q.append((seq, instr, self.pc, predicted, stream))
            self.pc = self.pc + 1
            n += 1
            fetched_seqs.append(seq)
            if predicted:
                self.pc = instr.imm
                break
            if instr.opcode is Opcode.CRS:
                break
        if n:
            self.stats.fetched += n
            self.stats.icache_accesses += 1
            self.last_progress = self.cycle
            if self.trace_lines is not None:
                self._trace_cycle["fetch"] = fetched_seqs

    def do_decode(self):
        n = 0
        while (self.fetch_q and n < self.cfg.decode_width
               and len(self.decode_q) < 2 * self.cfg.decode_width
               and not self.decode_blocked):
            seq, instr, pc, predicted, stream = self.fetch_q[0]
            if instr.opcode is Opcode.CRS:
                if self.sensor is None:
                    raise SimulationFault("CRS executed on a machine without a sensor")
                self.fetch_q.popleft()
                self.stats.decoded += 1
                self.decode_blocked = True
                self.sensor.on_crs_decoded(seq, instr.src_regs[0], self.cycle)
                break
            self.fetch_q.popleft()
            self.decode_q.append((seq, instr, pc, predicted, stream))
            self.stats.decoded += 1
            n += 1

    def do_rename(self):
        n = 0
        while self.decode_q and n < self.cfg.rename_width:
            seq, instr, pc, predicted, stream = self.decode_q[0]
            f = self.rename_insert(instr, Origin.FRONT_END, pc=pc,
                                   stream_idx=stream, predicted=predicted, seq=seq)
            if f is None:
                break
            self.decode_q.popleft()
            n += 1
            if self.trace_lines is not None:
                self._trace_cycle["rename"].append(seq)

    # -- issue / execute -------------------------------------------------------

    def _older_store_block(self, load):
        """Exact disambiguation: can this load issue, and from where?

        Returns (blocked, forward_flight). Blocked until all older stores have
        computed addresses; exact-match youngest older store forwards; any
        partial overlap blocks until that store commits.
        """
        fwd = None
        for s in self.sq:
            if s.seq > load.seq:
                break
            if s.state < S_ISSUED:
                return True, None
            if s.addr + s.size > load.addr and load.addr + load.size > s.addr:
                if s.addr == load.addr and s.size == load.size:
                    fwd = s
                else:
                    return True, None
        return False, fwd

    def do_issue(self):
        ports = {"load": self.cfg.load_ports, "store": self.cfg.store_ports,
                 "int": self.cfg.int_alu, "vec": self.cfg.vec_fu}
        budget = self.cfg.issue_width
        retry = []

        # loads parked on disambiguation get first crack each cycle
        if self.blocked_loads:
            pending = self.blocked_loads
            self.blocked_loads = []
            for f in pending:
                if f.squashed:
                    continue
                heapq.heappush(self.ready_q, (f.seq, f))

        while self.ready_q and budget:
            seq, f = heapq.heappop(self.ready_q)
            if f.squashed or f.state != S_WAIT:
                continue
            port = ("load" if f.is_load else "store" if f.is_store else
                    "vec" if f.cls == "vec" else "int")
            if ports[port] <= 0:
                retry.append((seq, f))
                continue
            if not self._try_execute(f):
                continue
            ports[port] -= 1
            budget -= 1
            self.stats.issued += 1
            self.stats.rf_reads += len(f.src_phys)
            if port == "int":
                self.stats.int_alu_ops += 1
            elif port == "vec":
                self.stats.vec_fu_ops += 1
            if f.in_iq:
                self.iq_count -= 1
                f.in_iq = False
            self.last_progress = self.cycle
            if self.trace_lines is not None:
                self._trace_cycle["issue"].append(f.seq)
        for item in retry:
            heapq.heappush(self.ready_q, item)

    def _try_execute(self, f):
        instr = f.instr
        srcvals = [self._read_phys(v, p) for v, p in f.src_phys]
        cfg = self.cfg
        if f.is_load:
            f.addr = srcvals[0] + instr.imm
            f.size = 8 if instr.opcode is Opcode.LD_SCALAR else 16
            if not (0 <= f.addr and f.addr + f.size <= self.mem.size):
                # wrong-path garbage or an architectural bug; decided at commit
                f.mem_fault = True
                f.values = (bytes(f.size) if instr.opcode is Opcode.LD_VEC else 0,)
                f.state = S_ISSUED
                heapq.heappush(self.completion, (self.cycle + 1, f.seq, f))
                return True
            blocked, fwd = self._older_store_block(f)
            if blocked:
                self.blocked_loads.append(f)
                return False
            if fwd is not None:
                payload = fwd.store_data
                lat = cfg.l1_lat
            else:
                payload = self.mem.read(f.addr, f.size)
                slot = f.meta.get("slot") if f.meta else f.pc
                lat = self.memsys.access(f.addr, slot, self.cycle)
            eff = execute_functional(instr, srcvals, loaded=payload)
            f.values = eff.dst_values
            f.state = S_ISSUED
            if f.fault_inject:
                lat = max(lat, 1)
            heapq.heappush(self.completion, (self.cycle + lat, f.seq, f))
            return True
        if f.is_store:
            eff = execute_functional(instr, srcvals)
            f.addr, f.store_data = eff.store
            f.size = len(f.store_data)
            f.state = S_ISSUED
            heapq.heappush(self.completion, (self.cycle + cfg.store_lat, f.seq, f))
            return True
        eff = execute_functional(instr, srcvals)
        f.values = eff.dst_values
        f.sideband = eff.sideband
        f.taken = eff.taken
        f.state = S_ISSUED
        lat = cfg.vec_lat if f.cls == "vec" else cfg.int_alu_lat
        heapq.heappush(self.completion, (self.cycle + lat, f.seq, f))
        return True

    def do_writeback(self):
        n = 0
        while (self.completion and n < self.cfg.writeback_width
               and self.completion[0][0] <= self.cycle):
            _, _, f = heapq.heappop(self.completion)
            if f.squashed:
                continue
            n += 1
            regs = self.regs
            for (is_vec, _arch, new_p, _prev, _fp), v in zip(f.dsts, f.values):
                if is_vec:
                    regs.vec_prf[new_p] = v
                    regs.vec_sideband[new_p] = f.sideband
                    regs.vec_ready[new_p] = True
                else:
                    regs.int_prf[new_p] = v
                    regs.int_ready[new_p] = True
                for w in self.waiters.pop(self._key(is_vec, new_p), ()):
                    if not w.squashed:
                        w.pending -= 1
                        if w.pending == 0 and w.state == S_WAIT:
                            heapq.heappush(self.ready_q, (w.seq, w))
            self.stats.rf_writes += len(f.dsts)
            f.state = S_DONE
            self.last_progress = self.cycle
            if self.trace_lines is not None:
                self._trace_cycle["wb"].append(f.seq)
            if f.fault_inject:
                f.fault_inject = False
                self._ordering_fault(f)
                return
            if f.instr.opcode is Opcode.BRANCH:
                self._resolve_branch(f)
            elif (f.origin is Origin.SENSOR and f.meta is not None
                    and f.meta.get("kind") == "sub"):
                self.sensor.on_sub_writeback(f, self.cycle)

    def _resolve_branch(self, f):
        if f.origin is Origin.SENSOR:
            raise SimulationFault("sensor streams must not contain branches")
        if f.taken == f.predicted:
            return
        self.stats.mispredicts += 1
        target = f.instr.imm if f.taken else f.pc + 1
        self.squash_from(f.seq + 1, redirect_pc=target, stream_idx=f.stream_idx + 1)
        self.fetch_stall_until = self.cycle + self.cfg.mispredict_penalty
        self.stats.squash_cycles += self.cfg.mispredict_penalty

    def _ordering_fault(self, f):
        """Injected load-store ordering fault: replay from the faulting op."""
        self.stats.ordering_fault_squashes += 1
        seq = f.seq
        if f.origin is Origin.SENSOR:
            self.squash_from(seq)
            self.sensor.rollback(seq)
        else:
            self.squash_from(seq, redirect_pc=f.pc, stream_idx=f.stream_idx)
            self.fetch_stall_until = self.cycle + 1

    def do_commit(self):
        n = 0
        stats = self.stats
        while self.rob and n < self.cfg.commit_width:
            f = self.rob[0]
            if f.state != S_DONE:
                break
            if f.mem_fault:
                raise SimulationFault(
                    f"memory fault at committed {f.instr.opcode.name} seq={f.seq} "
                    f"addr={f.addr}")
            if f.is_store:
                self.mem.write(f.addr, f.store_data)
                slot = f.meta.get("slot") if f.meta else f.pc
                self.memsys.access(f.addr, slot, self.cycle)
                self.sq.popleft()
            elif f.is_load:
                self.lq.remove(f)
            self.rob.popleft()
            n += 1
            for is_vec, _arch, _new, prev_p, free_prev in f.dsts:
                if free_prev:
                    if is_vec:
                        self.regs.vec_free.append(prev_p)
                    else:
                        self.regs.int_free.append(prev_p)
            stats.committed += 1
            stats.bump_class(f.cls)
            if f.origin is Origin.SENSOR:
                stats.committed_sensor += 1
                self.sensor.on_commit(f)
            else:
                stats.committed_frontend += 1
            if f.instr.opcode is Opcode.BRANCH:
                stats.branches += 1
                self.predictor.update(f.pc, f.taken)
            self.last_progress = self.cycle
            if self.trace_lines is not None:
                self._trace_cycle["commit"].append(f.seq)

    # -- main loop --------------------------------------------------------------

    def _done(self):
        if (self.rob or self.fetch_q or self.decode_q or self.completion
                or self.blocked_loads or self.ready_q):
            return False
        if self.sensor is not None and not self.sensor.idle:
            return False
        return not (0 <= self.pc < len(self.program))

    def run(self) -> SimStats:
        watchdog = 100_000
        while True:
            self.cycle += 1
            if self.trace_lines is not None:
                self._trace_cycle = {"fetch": [], "rename": [], "issue": [],
                                     "wb": [], "commit": []}
            self.do_commit()
            self.do_writeback()
            self.do_issue()
            if self.sensor is not None and self.sensor.active:
                self.sensor.step(self)
            self.do_rename()
            self.do_decode()
            self.do_fetch()
            if self.trace_lines is not None:
                t = self._trace_cycle
                self.trace_lines.append(
                    f"cycle={self.cycle} "
                    + " ".join(f"{k}={','.join(map(str, v)) if v else '-'}"
                               for k, v in t.items()))
            if self._done():
                break
            if self.cycle - self.last_progress > watchdog:
                raise SimulationDeadlock(
                    f"no progress since cycle {self.last_progress} "
                    f"(cycle={self.cycle}, rob={len(self.rob)}, "
                    f"iq={self.iq_count}, pc={self.pc}, "
                    f"sensor={self.sensor.phase.name if self.sensor else None})")
        self.stats.cycles = self.cycle
        if self.sensor is not None:
            self.sensor.export_stats(self.stats)
        return self.stats

    def check_free_list_conservation(self):
        """mapped + free + in-flight allocations must cover each PRF exactly."""
        regs = self.regs
        for space, prf, free, vmap in (
                ("int", regs.int_prf, regs.int_free, regs.int_map),
                ("vec", regs.vec_prf, regs.vec_free, regs.vec_map)):
            inflight_prev = [p for f in self.rob
                             for (is_vec, _a, _n, p, fp) in f.dsts
                             if is_vec == (space == "vec") and fp]
            owned = list(free) + list(vmap) + inflight_prev
            if self.sensor is not None and space == "int":
                owned += [p for _tag, p in self.sensor.saved_int_map.items()]
            assert sorted(owned) == list(range(len(prf))), (
                f"{space} PRF leak: {len(owned)} owned of {len(prf)}")
