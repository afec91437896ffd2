"""Two-term scaled fp16 decomposition of fp32 matrices.

A matrix ``A`` is represented as ``a1 * M1 + a2 * M2`` where ``M1`` and ``M2``
are binary16 matrices and ``a2 = 2**-11 * a1``.  ``M1`` carries the leading
11 significant bits of each entry, ``M2`` the next 11.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .halfprec import MIN_NORMAL, decode_array, encode_array
from .matrix import as_f32_matrix

# headroom target for the leading term, well inside fp16's 65504
LEAD_MAXABS = 2048.0
RESIDUAL_SCALE = 2.0**-11
# keeps a1 an fp32 normal and a2 = 2^-11 * a1 exactly representable
MIN_LEAD_SCALE = 2.0**-126


@dataclass(frozen=True)
class SplitMatrix:
    a1: np.float32
    m1: np.ndarray  # uint16 bit patterns
    a2: np.float32
    m2: np.ndarray

    def __post_init__(self):
        if self.m1.shape != self.m2.shape:
            raise ValueError(f"term shapes differ: {self.m1.shape} vs {self.m2.shape}")
        if self.m1.dtype != np.uint16 or self.m2.dtype != np.uint16:
            raise ValueError("terms must be uint16 bit patterns")
        self.m1.setflags(write=False)
        self.m2.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.m1.shape


@dataclass(frozen=True)
class SplitError:
    max_abs: float
    max_rel: float
    frob_rel: float


def lead_scale(maxabs: float) -> float:
    """Power-of-two scale for the leading term.

    Matrices whose largest entry is an fp16 normal no larger than
    ``LEAD_MAXABS`` are already well scaled and keep unit scale.  Anything
    outside that window gets the smallest power of two ``s`` with
    ``maxabs / s <= LEAD_MAXABS``, which puts ``maxabs / s`` in (1024, 2048].
    The scale never drops below ``MIN_LEAD_SCALE``.
    """
    if maxabs == 0.0 or MIN_NORMAL <= maxabs <= LEAD_MAXABS:
        return 1.0
    frac, exp = math.frexp(maxabs / LEAD_MAXABS)
    # frexp gives frac in [0.5, 1); an exact power of two sits at frac == 0.5
    return max(math.ldexp(1.0, exp - 1 if frac == 0.5 else exp), MIN_LEAD_SCALE)


def split_matrix(a) -> SplitMatrix:
    a = as_f32_matrix(a, "A")
    if a.size == 0:
        raise ValueError("A must have at least one entry")
    a64 = a.astype(np.float64)
    a1 = lead_scale(float(np.max(np.abs(a64))))
    m1 = encode_array(a64 / a1)
    resid = a64 - a1 * decode_array(m1).astype(np.float64)
    a2 = RESIDUAL_SCALE * a1
    # resid / a2 carries at most 24 significant bits, so the fp32 cast is exact
    m2 = encode_array(resid / a2)
    return SplitMatrix(np.float32(a1), m1, np.float32(a2), m2)


def reconstruct(s: SplitMatrix) -> np.ndarray:
    lead = s.a1 * decode_array(s.m1)
    tail = s.a2 * decode_array(s.m2)
    return (lead + tail).astype(np.float32)


def split_error(a, s: SplitMatrix) -> SplitError:
    a64 = np.asarray(a, dtype=np.float64)
    if a64.shape != s.shape:
        raise ValueError(f"shape mismatch: {a64.shape} vs {s.shape}")
    diff = np.abs(a64 - reconstruct(s).astype(np.float64))
    mag = np.abs(a64)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mag > 0, diff / mag, np.where(diff > 0, np.inf, 0.0))
    norm = float(np.linalg.norm(a64))
    dnorm = float(np.linalg.norm(diff))
    if norm > 0:
        frob = dnorm / norm
    else:
        frob = 0.0 if dnorm == 0 else math.inf
    return SplitError(float(diff.max(initial=0.0)), float(rel.max(initial=0.0)), frob)
