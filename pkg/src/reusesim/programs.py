"""Instruction-stream builders for the software kernels and sensor drivers.

The software kernels mirror production int8 GEMM micro-kernels: output
stationary, a 4-wide output-group register tile per pass, inner loop unrolled
over the sub-vectors of one 16-byte input load. The reuse variants add
previous-input loads, a vector subtract, and a test+branch per sub-vector
(sdot) or per element (mla) that skips the weight load(s) and MAC(s) when the
delta is zero.

Register conventions (architectural):
  x1 input ptr   x2 weight ptr   x3 output ptr   x4 chunk counter
  x5 skip test   x6 prev-input ptr   x7 pass counter   x8 crs param base
  z1 inputs      z2 weights      z3..z6 accumulators   z7 prev   z8 deltas

The mla kernels operate on int16-widened staged copies (8 lanes per load) and
accumulate in wrapping int16 lanes, which faithfully exposes the overflow of a
16-bit multiply-accumulate path; the int8 path with 32-bit accumulators is the
sensor's mla8 stream. Kernel dimensions here must be multiples of the 16-byte
load granularity (the synthetic workload generator pads layers accordingly).
"""

from .isa import (
    ALU_ADDI,
    ALU_LI,
    BR_EQZ,
    BR_NEZ,
    Instruction,
    Opcode,
    VEC_BASE,
)


def x(i):
    return i


def z(i):
    return VEC_BASE + i


class ProgramBuilder:
    """Tiny assembler: emits Instructions, resolves labels at build time."""

    def __init__(self):
        self.instrs = []
        self.labels = {}
        self.fixups = []  # (instr index, label name)

    def emit(self, opcode, dsts=(), srcs=(), k=0, imm=0):
        self.instrs.append(Instruction(opcode, tuple(dsts), tuple(srcs),
                                       index_k=k, imm=imm,
                                       seq_num=len(self.instrs)))
        return len(self.instrs) - 1

    def label(self, name):
        self.labels[name] = len(self.instrs)

    def li(self, dst, value):
        self.emit(Opcode.SCALAR_ALU, (dst,), (), k=ALU_LI, imm=value)

    def addi(self, dst, src, imm):
        self.emit(Opcode.SCALAR_ALU, (dst,), (src,), k=ALU_ADDI, imm=imm)

    def ld_vec(self, dst, base, off=0):
        self.emit(Opcode.LD_VEC, (dst,), (base,), imm=off)

    def st_vec(self, base, src, off=0):
        self.emit(Opcode.ST_VEC, (), (base, src), imm=off)

    def branch(self, cond, src, label_name):
        idx = self.emit(Opcode.BRANCH, (), (src,) if src is not None else (), k=cond)
        self.fixups.append((idx, label_name))

    def zero_vec(self, reg):
        # v - v is always a zero vector regardless of lane width
        self.emit(Opcode.SUB_VEC8, (reg,), (reg, reg))

    def build(self):
        for idx, name in self.fixups:
            self.instrs[idx].imm = self.labels[name]
        return self.instrs


ACC = [z(3), z(4), z(5), z(6)]


def _check_dims(n_in, n_out, in_granule, out_granule):
    if n_in % in_granule or n_out % out_granule:
        raise ValueError(f"software kernels need input_len % {in_granule} == 0 "
                         f"and output_len % {out_granule} == 0, got {n_in}x{n_out}")


def sdot_kernel_program(staged, reuse=False):
    """Sub-vector dot product kernel (4 outputs x 4 inputs per instruction).

    One pass keeps 16 outputs resident in ACC; weights are staged as
    sequential 16-byte blocks in traversal order (see workloads staging).
    """
    n_in, n_out = staged.input_len, staged.output_len
    _check_dims(n_in, n_out, 16, 16)
    n_pass = n_out // 16
    n_chunks = n_in // 16
    b = ProgramBuilder()

    b.li(x(2), staged.sdot_weight_addr)
    b.li(x(3), staged.output_addr)
    b.li(x(7), n_pass)
    b.label("pass_top")
    if reuse:
        for t in range(4):
            b.ld_vec(ACC[t], x(3), 16 * t)
    else:
        for t in range(4):
            b.zero_vec(ACC[t])
    b.li(x(1), staged.input_addr)
    if reuse:
        b.li(x(6), staged.prev_input_addr)
    b.li(x(4), n_chunks)
    b.label("chunk_top")
    b.ld_vec(z(1), x(1))
    if reuse:
        b.ld_vec(z(7), x(6))
        b.emit(Opcode.SUB_VEC8, (z(8),), (z(1), z(7)))
    src_vec = z(8) if reuse else z(1)
    for k in range(4):
        if reuse:
            # all four deltas of sub-vector k must be zero to skip
            b.emit(Opcode.COPY_INDEXED, (x(5),), (z(8),), k=k, imm=4)
            b.branch(BR_EQZ, x(5), f"skip_{k}")
        for t in range(4):
            b.ld_vec(z(2), x(2), 16 * t)
            b.emit(Opcode.SDOT, (ACC[t],), (z(2), src_vec), k=k)
        if reuse:
            b.label(f"skip_{k}")
        b.addi(x(2), x(2), 64)
    b.addi(x(1), x(1), 16)
    if reuse:
        b.addi(x(6), x(6), 16)
    b.addi(x(4), x(4), -1)
    b.branch(BR_NEZ, x(4), "chunk_top")
    for t in range(4):
        b.st_vec(x(3), ACC[t], 16 * t)
    b.addi(x(3), x(3), 64)
    b.addi(x(7), x(7), -1)
    b.branch(BR_NEZ, x(7), "pass_top")
    return b.build()


def mla_kernel_program(staged, reuse=False):
    """Scalar-broadcast MAC kernel on int16 lanes (8 outputs per accumulator).

    Works on the int16-widened staging; accumulators wrap at 16 bits exactly
    like the instruction does, so long dot products overflow by design.
    """
    n_in, n_out = staged.input_len, staged.output_len
    _check_dims(n_in, n_out, 8, 32)
    n_pass = n_out // 32
    n_chunks = n_in // 8
    b = ProgramBuilder()

    b.li(x(2), staged.mla_weight_addr)
    b.li(x(3), staged.mla_output_addr)
    b.li(x(7), n_pass)
    b.label("pass_top")
    if reuse:
        for t in range(4):
            b.ld_vec(ACC[t], x(3), 16 * t)
    else:
        for t in range(4):
            b.zero_vec(ACC[t])
    b.li(x(1), staged.mla_input_addr)
    if reuse:
        b.li(x(6), staged.mla_prev_input_addr)
    b.li(x(4), n_chunks)
    b.label("chunk_top")
    b.ld_vec(z(1), x(1))
    if reuse:
        b.ld_vec(z(7), x(6))
        b.emit(Opcode.SUB_VEC8, (z(8),), (z(1), z(7)), imm=1)
    src_vec = z(8) if reuse else z(1)
    for lane in range(8):
        if reuse:
            b.emit(Opcode.COPY_INDEXED, (x(5),), (z(8),), k=lane, imm=2)
            b.branch(BR_EQZ, x(5), f"skip_{lane}")
        for t in range(4):
            b.ld_vec(z(2), x(2), 16 * t)
            b.emit(Opcode.MLA, (ACC[t],), (z(2), src_vec), k=lane)
        if reuse:
            b.label(f"skip_{lane}")
        b.addi(x(2), x(2), 64)
    b.addi(x(1), x(1), 16)
    if reuse:
        b.addi(x(6), x(6), 16)
    b.addi(x(4), x(4), -1)
    b.branch(BR_NEZ, x(4), "chunk_top")
    for t in range(4):
        b.st_vec(x(3), ACC[t], 16 * t)
    b.addi(x(3), x(3), 64)
    b.addi(x(7), x(7), -1)
    b.branch(BR_NEZ, x(7), "pass_top")
    return b.build()


def crs_program(param_addr, prologue=None, epilogue=None):
    """Driver for sensor runs: point x8 at the parameter block and call CRS."""
    b = ProgramBuilder()
    if prologue:
        prologue(b)
    b.li(x(8), param_addr)
    b.emit(Opcode.CRS, (), (x(8),))
    if epilogue:
        epilogue(b)
    return b.build()


def build_program(variant, staged):
    """Program for a kernel variant given a staged layer (see workloads)."""
    from .kernels import KernelVariant
    variant = KernelVariant(variant)
    if variant is KernelVariant.SDOT_BASIC:
        return sdot_kernel_program(staged, reuse=False)
    if variant is KernelVariant.SDOT_REUSE:
        return sdot_kernel_program(staged, reuse=True)
    if variant is KernelVariant.MLA_BASIC:
        return mla_kernel_program(staged, reuse=False)
    if variant is KernelVariant.MLA_REUSE:
        return mla_kernel_program(staged, reuse=True)
    return crs_program(staged.param_addr)
