"""IEEE binary16 arithmetic in software.

Half values are carried as raw 16-bit patterns (``numpy.uint16`` for arrays,
:class:`Half` for scalars).  Conversion from fp32 rounds to nearest with ties
to even, keeps subnormals, and maps every NaN to the quiet pattern ``0x7E00``.
The conversion is written with integer bit manipulation so it can be audited
against the format definition; numpy's own ``float16`` is used only by the
tests as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SIGN_MASK = 0x8000
EXP_MASK = 0x7C00
MANT_MASK = 0x03FF
POS_INF = 0x7C00
NEG_INF = 0xFC00
QNAN = 0x7E00

MAX_FINITE = 65504.0
MIN_NORMAL = 2.0**-14
MIN_SUBNORMAL = 2.0**-24
UNIT_ROUNDOFF = 2.0**-11


@dataclass(frozen=True)
class Half:
    """A binary16 scalar stored as its bit pattern."""

    bits: int

    def __post_init__(self):
        if not 0 <= int(self.bits) <= 0xFFFF:
            raise ValueError(f"not a 16-bit pattern: {self.bits!r}")
        object.__setattr__(self, "bits", int(self.bits))

    def __float__(self) -> float:
        return float(decode(self))

    @property
    def is_nan(self) -> bool:
        return (self.bits & EXP_MASK) == EXP_MASK and (self.bits & MANT_MASK) != 0

    @property
    def is_finite(self) -> bool:
        return (self.bits & EXP_MASK) != EXP_MASK

    def __repr__(self) -> str:
        return f"Half(0x{self.bits:04X}={float(self)!r})"


def encode_array(x) -> np.ndarray:
    """Round fp32 values to binary16 bit patterns (RNE, no flush-to-zero).

    Inputs of other float dtypes are converted to fp32 first.
    """
    f = np.asarray(x, dtype=np.float32)
    shape = f.shape
    u = f.reshape(-1).view(np.uint32).astype(np.uint64)

    sign = (u >> 16) & SIGN_MASK
    mag = u & 0x7FFFFFFF
    exp32 = mag >> 23
    out = np.zeros(u.shape, dtype=np.uint64)

    # normal half range: |x| >= 2^-14
    normal = (mag >= 0x38800000) & (mag < 0x7F800000)
    m = mag[normal]
    base = (m >> 13) - (112 << 10)
    rem = m & 0x1FFF
    up = (rem > 0x1000) | ((rem == 0x1000) & ((base & 1) == 1))
    # carries out of the mantissa bump the exponent; past 0x7BFF that is inf
    out[normal] = np.minimum(base + up, POS_INF)

    # subnormal half range; everything at or below 2^-25 ends at zero
    sub = (mag < 0x38800000) & (exp32 >= 102)
    e = exp32[sub]
    sig = (mag[sub] & 0x7FFFFF) | 0x800000
    shift = 126 - e
    q = sig >> shift
    rem = sig & ((np.uint64(1) << shift) - 1)
    halfway = np.uint64(1) << (shift - 1)
    up = (rem > halfway) | ((rem == halfway) & ((q & 1) == 1))
    out[sub] = q + up

    out[mag == 0x7F800000] = POS_INF
    out |= sign
    out[mag > 0x7F800000] = QNAN
    return out.astype(np.uint16).reshape(shape)


def decode_array(h) -> np.ndarray:
    """Exact fp32 values of binary16 bit patterns."""
    b = np.asarray(h, dtype=np.uint16)
    shape = b.shape
    b = b.reshape(-1).astype(np.uint32)
    sign = (b & SIGN_MASK) << 16
    exp = (b & EXP_MASK) >> 10
    mant = b & MANT_MASK

    bits = np.empty_like(b)
    normal = (exp > 0) & (exp < 31)
    bits[normal] = ((exp[normal] + 112) << 23) | (mant[normal] << 13)
    special = exp == 31
    bits[special] = 0x7F800000 | (mant[special] << 13)
    out = bits.view(np.float32)
    sub = exp == 0
    # mant * 2^-24 is exact in fp32
    out[sub] = mant[sub].astype(np.float32) * np.float32(MIN_SUBNORMAL)
    out = np.where(sign != 0, -out, out)
    return out.astype(np.float32).reshape(shape)


def encode(x: float) -> Half:
    return Half(int(encode_array(np.float32(x))))


def decode(h: Half | int) -> np.float32:
    bits = h.bits if isinstance(h, Half) else int(h)
    return np.float32(decode_array(np.uint16(bits)))


def product(x: Half, y: Half) -> np.float32:
    """fp16 x fp16 -> fp32 product; exact for all finite inputs."""
    return np.float32(decode(x) * decode(y))


def dot_acc32(xs: Sequence[Half], ys: Sequence[Half]) -> np.float32:
    """Dot product of half vectors with exact products and fp32 accumulation.

    Accumulation is strictly left to right from +0.0.
    """
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    acc = np.float32(0.0)
    for x, y in zip(xs, ys):
        acc = np.float32(acc + product(x, y))
    return acc
