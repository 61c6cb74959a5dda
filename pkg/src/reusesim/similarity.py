"""Input similarity between consecutive layer evaluations.

Similarity is the fraction of element positions where two consecutive input
tensors hold identical quantized values, decomposed into positions where both
values are zero and positions where they are equal but nonzero. The
per_subvector4_all_zero figure measures how often identical values line up in
aligned groups of four, which is what a 4-element sub-vector dot product
instruction needs in order to be skippable.
"""

from dataclasses import dataclass

import numpy as np

from .tensors import QuantTensor

SUBVECTOR = 4  # matches the 4 x int8 sub-vector consumed by one sdot lane


@dataclass(frozen=True)
class SimilarityReport:
    total: float
    zero_identical: float
    nonzero_identical: float
    per_subvector4_all_zero: float
    n: int = 0

    def as_row(self) -> dict:
        return {
            "total": self.total,
            "zero_identical": self.zero_identical,
            "nonzero_identical": self.nonzero_identical,
            "per_subvector4_all_zero": self.per_subvector4_all_zero,
            "n": self.n,
        }


def measure(curr: QuantTensor, prev: QuantTensor) -> SimilarityReport:
    """Compare two same-shape tensors element by element.

    total counts equal positions; zero_identical counts positions where both
    sides are zero; nonzero_identical is total - zero_identical (exactly, so
    the decomposition identity holds bitwise in floating point).
    per_subvector4_all_zero is computed over the complete aligned 4-element
    groups (a trailing partial group is ignored).
    """
    if curr.shape != prev.shape:
        raise ValueError(f"shape mismatch {curr.shape} vs {prev.shape}")
    a = curr.data
    b = prev.data
    n = a.size
    eq = a == b
    total = int(eq.sum()) / n
    zero = int((eq & (a == 0)).sum()) / n
    ngroups = n // SUBVECTOR
    if ngroups:
        groups = eq[: ngroups * SUBVECTOR].reshape(ngroups, SUBVECTOR)
        sub4 = int(groups.all(axis=1).sum()) / ngroups
    else:
        sub4 = 0.0
    return SimilarityReport(
        total=total,
        zero_identical=zero,
        nonzero_identical=total - zero,
        per_subvector4_all_zero=sub4,
        n=n,
    )


def measure_stream(frames) -> list:
    """Pairwise reports for an ordered sequence of frames (>= 2, same shape)."""
    frames = list(frames)
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    return [measure(frames[k + 1], frames[k]) for k in range(len(frames) - 1)]
