"""fp32 GEMM emulated with fp16-input / fp32-accumulate matrix products.

With ``A ~ a1*A1 + a2*A2`` and ``B ~ b1*B1 + b2*B2`` the product expands to
four half products.  The ``A2*B2`` term carries a scale of exactly
``2**-22 * a1*b1`` and may be dropped, leaving three half products.

Every call to :func:`half_gemm` is tallied on the active
:class:`ProductCounter` (see :func:`counting`), so callers can check how many
half-precision products a computation used.
"""
from __future__ import annotations

import contextlib
import contextvars
import enum
from dataclasses import dataclass

import numpy as np

from .halfprec import decode_array, encode_array
from .matrix import as_f32_matrix
from .split import SplitMatrix, split_matrix


class GemmMode(str, enum.Enum):
    EXACT32 = "exact32"
    ORACLE64 = "oracle64"
    NAIVE16 = "naive16"
    FOURTERM = "fourterm"
    THREETERM = "threeterm"

    @classmethod
    def parse(cls, name: str | GemmMode) -> GemmMode:
        if isinstance(name, GemmMode):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown gemm mode {name!r}; valid modes: {valid}") from None

    @property
    def emulated(self) -> bool:
        return self in (GemmMode.FOURTERM, GemmMode.THREETERM)


HALF_PRODUCTS = {
    GemmMode.EXACT32: 0,
    GemmMode.ORACLE64: 0,
    GemmMode.NAIVE16: 1,
    GemmMode.FOURTERM: 4,
    GemmMode.THREETERM: 3,
}


class ProductCounter:
    def __init__(self):
        self.count = 0

    def reset(self) -> None:
        self.count = 0


_counter: contextvars.ContextVar[ProductCounter | None] = contextvars.ContextVar(
    "half_product_counter", default=None
)


@contextlib.contextmanager
def counting():
    """Route half-product tallies inside the block to a fresh counter."""
    counter = ProductCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def _check_inner(x_shape, y_shape) -> None:
    if len(x_shape) != 2 or len(y_shape) != 2 or x_shape[1] != y_shape[0]:
        raise ValueError(f"incompatible shapes for matmul: {x_shape} x {y_shape}")


def accumulate32(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """fp32 matmul with each entry summed left to right over k, from +0.0.

    Vectorised over output entries only; each accumulation chain is the
    sequential one, so results are bitwise reproducible.
    """
    _check_inner(x.shape, y.shape)
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.float32)
    acc = np.zeros((x.shape[0], y.shape[1]), dtype=np.float32)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(x.shape[1]):
            acc += np.multiply.outer(x[:, k], y[k, :])
    return acc


def half_gemm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Product of two half matrices (uint16 bit patterns) accumulated in fp32."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.dtype != np.uint16 or y.dtype != np.uint16:
        raise TypeError("half_gemm takes uint16 bit-pattern matrices")
    _check_inner(x.shape, y.shape)
    counter = _counter.get()
    if counter is not None:
        counter.count += 1
    # fp16 x fp16 products are exact in fp32, so only the adds round
    return accumulate32(decode_array(x), decode_array(y))


def _terms(sa: SplitMatrix, sb: SplitMatrix, with_dropped: bool) -> list[np.ndarray]:
    _check_inner(sa.shape, sb.shape)
    pairs = [(sa.a1, sa.m1, sb.a1, sb.m1), (sa.a1, sa.m1, sb.a2, sb.m2), (sa.a2, sa.m2, sb.a1, sb.m1)]
    if with_dropped:
        pairs.append((sa.a2, sa.m2, sb.a2, sb.m2))
    return [np.float32(ca * cb) * half_gemm(ma, mb) for ca, ma, cb, mb in pairs]


def emu_gemm(sa: SplitMatrix, sb: SplitMatrix, mode: GemmMode | str) -> np.ndarray:
    """Emulated fp32 product of two split matrices.

    Terms are combined smallest first: ``((T22 + T21) + T12) + T11`` for
    FOURTERM, ``(T21 + T12) + T11`` for THREETERM.
    """
    mode = GemmMode.parse(mode)
    if not mode.emulated:
        raise ValueError(f"emu_gemm needs an emulated mode, got {mode.value}")
    t = _terms(sa, sb, with_dropped=mode is GemmMode.FOURTERM)
    t11, t12, t21 = t[:3]
    acc = t[3] + t21 if mode is GemmMode.FOURTERM else t21
    return (acc + t12) + t11


def dropped_term(sa: SplitMatrix, sb: SplitMatrix) -> np.ndarray:
    """The ``A2*B2`` contribution that THREETERM omits."""
    _check_inner(sa.shape, sb.shape)
    return np.float32(sa.a2 * sb.a2) * half_gemm(sa.m2, sb.m2)


def ref_gemm(a, b, mode: GemmMode | str) -> np.ndarray:
    """Reference products, returned as fp64."""
    mode = GemmMode.parse(mode)
    a = as_f32_matrix(a, "A")
    b = as_f32_matrix(b, "B")
    _check_inner(a.shape, b.shape)
    if mode is GemmMode.EXACT32:
        return accumulate32(a, b).astype(np.float64)
    if mode is GemmMode.ORACLE64:
        return a.astype(np.float64) @ b.astype(np.float64)
    if mode is GemmMode.NAIVE16:
        return half_gemm(encode_array(a), encode_array(b)).astype(np.float64)
    raise ValueError(f"ref_gemm does not run emulated mode {mode.value}")


def matmul(a, b, mode: GemmMode | str) -> np.ndarray:
    """fp32 product of fp32 matrices under any mode (splits internally)."""
    mode = GemmMode.parse(mode)
    if mode.emulated:
        return emu_gemm(split_matrix(a), split_matrix(b), mode)
    return ref_gemm(a, b, mode).astype(np.float32)


def frobenius_rel_error(x: np.ndarray, ref: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    num = float(np.linalg.norm(x - ref))
    den = float(np.linalg.norm(ref))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


@dataclass(frozen=True)
class GemmReport:
    mode: GemmMode
    dims: tuple[int, int, int]
    half_product_count: int
    frobenius_rel_error_vs_oracle: float


def gemm_report(a, b, mode: GemmMode | str) -> GemmReport:
    mode = GemmMode.parse(mode)
    a = as_f32_matrix(a, "A")
    b = as_f32_matrix(b, "B")
    _check_inner(a.shape, b.shape)
    with counting() as counter:
        counter.reset()
        c = emu_gemm(split_matrix(a), split_matrix(b), mode) if mode.emulated else ref_gemm(a, b, mode)
        count = counter.count
    oracle = ref_gemm(a, b, GemmMode.ORACLE64)
    err = frobenius_rel_error(c, oracle)
    return GemmReport(mode, (a.shape[0], a.shape[1], b.shape[1]), count, err)
