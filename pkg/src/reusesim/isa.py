"""Simulated instruction set, register files, rename state and flat memory.

Vector registers are 128-bit (16 x int8 / 8 x int16 / 4 x int32 lanes).
Integer registers are 64-bit. Operand encoding: integer architectural
registers are 0..31 ("x0".."x31"), vector architectural registers are
VEC_BASE+0..31 ("z0".."z31").

Instruction field conventions (the Instruction record carries no sub-op
field, so two opcodes overload index_k):

* SCALAR_ALU: index_k selects the operation (0 li, 1 addi, 2 add).
* BRANCH: index_k selects the condition (0 taken-if-src==0, 1 taken-if-src!=0,
  2 always); imm is the target pc.
* COPY_INDEXED: imm is the element width in bytes (1/2/4), index_k the lane.
* SUB_VEC8: imm 0 = 16 x int8 lanes with a per-lane overflow sideband
  (set when the true difference falls outside [-128, 127]); imm 1 = 8 x int16
  lanes, exact, no sideband.
* MLA8: with two source registers the scalar comes from int8 lane index_k of
  the second source; with one source register the scalar is imm (the form the
  CRS engine generates for overflow splits).

Accumulating opcodes (SDOT, MLA, MLA8) read their destination registers;
callers append the old destination values after the source values.

Disassembly (golden-trace format, one instruction per line, fields in this
exact order):

    <seq> <OPCODE> <dsts>;<srcs>;k=<index_k>;imm=<imm>;<F|S>

where <dsts>/<srcs> are comma-joined register names or "-" when empty and the
final letter marks the origin (F front-end, S sensor-generated).
"""

import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .kernels import mla8_op, mla_op, sdot_op

VEC_BASE = 100

_S16B = struct.Struct("<16b")
_S8H = struct.Struct("<8h")
_S4I = struct.Struct("<4i")

ZERO_VEC = bytes(16)


class Opcode(IntEnum):
    LD_SCALAR = 0
    LD_VEC = 1
    ST_VEC = 2
    SUB_VEC8 = 3
    SDOT = 4
    MLA = 5
    MLA8 = 6
    COPY_INDEXED = 7
    CRS = 8
    BRANCH = 9
    SCALAR_ALU = 10
    NOP = 11


class Origin(Enum):
    FRONT_END = "F"
    SENSOR = "S"


# ScalarAlu sub-operations (index_k)
ALU_LI = 0
ALU_ADDI = 1
ALU_ADD = 2

# Branch conditions (index_k)
BR_EQZ = 0
BR_NEZ = 1
BR_ALWAYS = 2

RMW_OPCODES = frozenset((Opcode.SDOT, Opcode.MLA, Opcode.MLA8))
LOAD_OPCODES = frozenset((Opcode.LD_SCALAR, Opcode.LD_VEC))

OP_CLASS = {
    Opcode.LD_SCALAR: "load",
    Opcode.LD_VEC: "load",
    Opcode.ST_VEC: "store",
    Opcode.SUB_VEC8: "vec",
    Opcode.SDOT: "vec",
    Opcode.MLA: "vec",
    Opcode.MLA8: "vec",
    Opcode.COPY_INDEXED: "scalar",
    Opcode.CRS: "crs",
    Opcode.BRANCH: "branch",
    Opcode.SCALAR_ALU: "scalar",
    Opcode.NOP: "nop",
}


def is_vec_reg(r):
    return r >= VEC_BASE


def reg_name(r):
    return f"z{r - VEC_BASE}" if r >= VEC_BASE else f"x{r}"


@dataclass
class Instruction:
    opcode: Opcode
    dst_regs: tuple = ()
    src_regs: tuple = ()
    index_k: int = 0
    imm: int = 0
    seq_num: int = 0
    origin: Origin = Origin.FRONT_END

    def __post_init__(self):
        if self.opcode is Opcode.MLA8:
            if len(self.dst_regs) != 4:
                raise ValueError("MLA8 takes exactly 4 destination registers")
        elif sum(1 for d in self.dst_regs if is_vec_reg(d)) > 1:
            raise ValueError(f"{self.opcode.name} allows at most 1 vector destination")
        if len(self.dst_regs) > 4 or len(self.src_regs) > 3:
            raise ValueError("too many operands")

    @property
    def op_class(self):
        return OP_CLASS[self.opcode]


def disassemble(instr: Instruction) -> str:
    dsts = ",".join(reg_name(r) for r in instr.dst_regs) or "-"
    srcs = ",".join(reg_name(r) for r in instr.src_regs) or "-"
    return (f"{instr.seq_num} {instr.opcode.name} {dsts};{srcs};"
            f"k={instr.index_k};imm={instr.imm};{instr.origin.value}")


def disassemble_program(program) -> str:
    return "\n".join(disassemble(i) for i in program)


# ---------------------------------------------------------------------------
# Memory
# ---------------------------------------------------------------------------

class MemoryFault(Exception):
    """Simulated memory fault (access outside the image)."""

    def __init__(self, addr, size):
        super().__init__(f"access [{addr}, {addr + size}) outside memory image")
        self.addr = addr


class MemoryImage:
    """Flat little-endian byte-addressable memory."""

    def __init__(self, size=8 << 20):
        self.size = size
        self.data = bytearray(size)

    def _check(self, addr, n):
        if addr < 0 or addr + n > self.size:
            raise MemoryFault(addr, n)

    def read(self, addr, n) -> bytes:
        self._check(addr, n)
        return bytes(self.data[addr:addr + n])

    def write(self, addr, payload):
        self._check(addr, len(payload))
        self.data[addr:addr + len(payload)] = payload

    def read_u64(self, addr) -> int:
        return int.from_bytes(self.read(addr, 8), "little", signed=True)

    def write_u64(self, addr, value):
        self.write(addr, (value & ((1 << 64) - 1)).to_bytes(8, "little"))


# ---------------------------------------------------------------------------
# Register files and rename state
# ---------------------------------------------------------------------------

class VecSnapshot:
    """Bitwise snapshot of the whole vector register domain."""

    def __init__(self, prf, sideband, ready, vmap, free):
        self.prf = list(prf)
        self.sideband = list(sideband)
        self.ready = list(ready)
        self.vmap = list(vmap)
        self.free = list(free)
        self.consumed = False


class RegisterFiles:
    """Physical register files, rename maps and free lists.

    Architectural registers 0..31 of each space start mapped to physical
    0..31; the remaining physicals sit in the free lists.
    """

    N_ARCH = 32

    def __init__(self, int_prf=128, fp_prf=192, vec_prf=48):
        if vec_prf < self.N_ARCH or int_prf < self.N_ARCH:
            raise ValueError("PRF smaller than architectural register count")
        self.int_prf = [0] * int_prf
        self.fp_prf = [0] * fp_prf  # present per machine config; no fp opcodes
        self.vec_prf = [ZERO_VEC] * vec_prf
        self.vec_sideband = [0] * vec_prf
        self.int_ready = [True] * int_prf
        self.vec_ready = [True] * vec_prf
        self.int_map = list(range(self.N_ARCH))
        self.vec_map = list(range(self.N_ARCH))
        self.int_free = list(range(self.N_ARCH, int_prf))
        self.vec_free = list(range(self.N_ARCH, vec_prf))

    # architectural accessors (used by the in-order interpreter and by tests)
    def get_int(self, arch):
        return self.int_prf[self.int_map[arch]]

    def set_int(self, arch, value):
        self.int_prf[self.int_map[arch]] = value

    def get_vec(self, arch):
        return self.vec_prf[self.vec_map[arch]]

    def set_vec(self, arch, value, sideband=0):
        p = self.vec_map[arch]
        self.vec_prf[p] = value
        self.vec_sideband[p] = sideband

    def get_vec_sideband(self, arch):
        return self.vec_sideband[self.vec_map[arch]]

    def arch_vec_values(self):
        return [self.get_vec(a) for a in range(self.N_ARCH)]

    def arch_int_values(self):
        return [self.get_int(a) for a in range(self.N_ARCH)]

    def snapshot_vec_state(self) -> VecSnapshot:
        """Back up every vector physical register, the map and the free list."""
        return VecSnapshot(self.vec_prf, self.vec_sideband, self.vec_ready,
                           self.vec_map, self.vec_free)

    def restore_vec_state(self, snapshot: VecSnapshot):
        if snapshot is None or snapshot.consumed:
            raise RuntimeError("restore without a prior (unconsumed) snapshot")
        self.vec_prf = list(snapshot.prf)
        self.vec_sideband = list(snapshot.sideband)
        self.vec_ready = list(snapshot.ready)
        self.vec_map = list(snapshot.vmap)
        self.vec_free = list(snapshot.free)
        snapshot.consumed = True


class MachineState:
    """Register files plus the memory image; one simulation owns one of these."""

    def __init__(self, mem_size=8 << 20, int_prf=128, fp_prf=192, vec_prf=48):
        self.regs = RegisterFiles(int_prf=int_prf, fp_prf=fp_prf, vec_prf=vec_prf)
        self.mem = MemoryImage(mem_size)


# ---------------------------------------------------------------------------
# Functional semantics (shared by the interpreter and the pipeline)
# ---------------------------------------------------------------------------

def wrap64(v):
    return (v + (1 << 63)) % (1 << 64) - (1 << 63)


def mem_addr(instr, srcvals):
    """Effective address for memory opcodes: base register + offset."""
    return srcvals[0] + instr.imm


def mem_size(instr):
    return 8 if instr.opcode is Opcode.LD_SCALAR else 16


class Effect:
    """Result of executing one instruction: register writes and side requests."""

    __slots__ = ("dst_values", "sideband", "store", "taken")

    def __init__(self, dst_values=(), sideband=0, store=None, taken=None):
        self.dst_values = dst_values
        self.sideband = sideband
        self.store = store      # (addr, payload) or None
        self.taken = taken      # branch outcome or None


def execute_functional(instr, srcvals, loaded=None) -> Effect:
    """Pure per-instruction semantics.

    srcvals holds the source register values in src_regs order, followed by
    the old destination values for accumulating opcodes. Loads take their
    memory payload through `loaded`; stores report their payload through the
    Effect rather than touching memory (the pipeline performs them at commit).
    """
    op = instr.opcode
    if op is Opcode.LD_SCALAR:
        return Effect((int.from_bytes(loaded, "little", signed=True),))
    if op is Opcode.LD_VEC:
        return Effect((loaded,))
    if op is Opcode.ST_VEC:
        return Effect(store=(srcvals[0] + instr.imm, srcvals[1]))
    if op is Opcode.SUB_VEC8:
        if instr.imm == 0:
            a = _S16B.unpack(srcvals[0])
            b = _S16B.unpack(srcvals[1])
            lanes = []
            sideband = 0
            for i in range(16):
                d = a[i] - b[i]
                if not -128 <= d <= 127:
                    sideband |= 1 << i
                    d = (d + 128) % 256 - 128
                lanes.append(d)
            return Effect((_S16B.pack(*lanes),), sideband=sideband)
        a = _S8H.unpack(srcvals[0])
        b = _S8H.unpack(srcvals[1])
        lanes = [((a[i] - b[i]) + (1 << 15)) % (1 << 16) - (1 << 15) for i in range(8)]
        return Effect((_S8H.pack(*lanes),))
    if op is Opcode.SDOT:
        w = _S16B.unpack(srcvals[0])
        x = _S16B.unpack(srcvals[1])
        k = instr.index_k
        acc = _S4I.unpack(srcvals[2])
        return Effect((_S4I.pack(*sdot_op(acc, w, x[4 * k:4 * k + 4])),))
    if op is Opcode.MLA:
        w = _S8H.unpack(srcvals[0])
        x = _S8H.unpack(srcvals[1])
        acc = _S8H.unpack(srcvals[2])
        return Effect((_S8H.pack(*mla_op(acc, w, x[instr.index_k])),))
    if op is Opcode.MLA8:
        w = _S16B.unpack(srcvals[0])
        if len(instr.src_regs) > 1:
            scalar = _S16B.unpack(srcvals[1])[instr.index_k]
            accs = srcvals[2:]
        else:
            scalar = instr.imm
            accs = srcvals[1:]
        acc = []
        for a in accs:
            acc.extend(_S4I.unpack(a))
        res = mla8_op(acc, w, scalar)
        return Effect(tuple(_S4I.pack(*res[4 * j:4 * j + 4]) for j in range(4)))
    if op is Opcode.COPY_INDEXED:
        width = instr.imm
        off = instr.index_k * width
        lane = srcvals[0][off:off + width]
        return Effect((int.from_bytes(lane, "little", signed=True),))
    if op is Opcode.BRANCH:
        if instr.index_k == BR_ALWAYS:
            return Effect(taken=True)
        v = srcvals[0]
        return Effect(taken=(v == 0) if instr.index_k == BR_EQZ else (v != 0))
    if op is Opcode.SCALAR_ALU:
        k = instr.index_k
        if k == ALU_LI:
            return Effect((wrap64(instr.imm),))
        if k == ALU_ADDI:
            return Effect((wrap64(srcvals[0] + instr.imm),))
        if k == ALU_ADD:
            return Effect((wrap64(srcvals[0] + srcvals[1]),))
        raise ValueError(f"unknown SCALAR_ALU sub-op {k}")
    if op in (Opcode.NOP, Opcode.CRS):
        return Effect()
    raise ValueError(f"unhandled opcode {op}")


def gather_srcvals(instr, regs: RegisterFiles):
    """Architectural source values (including old RMW destinations)."""
    vals = [regs.get_vec(r - VEC_BASE) if r >= VEC_BASE else regs.get_int(r)
            for r in instr.src_regs]
    if instr.opcode in RMW_OPCODES:
        vals.extend(regs.get_vec(d - VEC_BASE) for d in instr.dst_regs)
    return vals


def run_inorder(program, state: MachineState, crs_handler=None, max_steps=2_000_000,
                branch_trace=None):
    """Simple in-order interpreter; the functional oracle for the pipeline.

    Executes the program sequentially, following actual branch outcomes.
    CRS transfers to crs_handler(state, param_block_addr), which is expected
    to write only output memory (the functional view of the sensor engine).
    When branch_trace is a list, the outcome of every executed branch is
    appended to it (consumed by the oracle branch predictors).
    Returns the number of executed instructions.
    """
    regs = state.regs
    mem = state.mem
    pc = 0
    steps = 0
    n = len(program)
    while 0 <= pc < n:
        if steps >= max_steps:
            raise RuntimeError(f"interpreter exceeded {max_steps} steps (runaway loop?)")
        instr = program[pc]
        srcvals = gather_srcvals(instr, regs)
        if instr.opcode is Opcode.CRS:
            if crs_handler is None:
                raise RuntimeError("program contains CRS but no handler was given")
            crs_handler(state, srcvals[0])
            pc += 1
        elif instr.opcode in LOAD_OPCODES:
            payload = mem.read(mem_addr(instr, srcvals), mem_size(instr))
            eff = execute_functional(instr, srcvals, loaded=payload)
            _write_dsts(regs, instr, eff)
            pc += 1
        else:
            eff = execute_functional(instr, srcvals)
            if eff.store is not None:
                mem.write(*eff.store)
            _write_dsts(regs, instr, eff)
            if eff.taken is not None and branch_trace is not None:
                branch_trace.append(eff.taken)
            pc = instr.imm if (eff.taken is True) else pc + 1
        steps += 1
    return steps


def _write_dsts(regs, instr, eff):
    for r, v in zip(instr.dst_regs, eff.dst_values):
        if r >= VEC_BASE:
            regs.set_vec(r - VEC_BASE, v, eff.sideband)
        else:
            regs.set_int(r, v)
