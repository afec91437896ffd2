"""Mixed-precision GEMM emulation and asynchronous SGD experiments."""
from .emugemm import GemmMode, dropped_term, emu_gemm, gemm_report, half_gemm, matmul, ref_gemm
from .halfprec import Half, decode, decode_array, dot_acc32, encode, encode_array, product
from .split import SplitMatrix, reconstruct, split_error, split_matrix

__all__ = [
    "GemmMode", "Half", "SplitMatrix",
    "decode", "decode_array", "dot_acc32", "dropped_term", "emu_gemm", "encode", "encode_array",
    "gemm_report", "half_gemm", "matmul", "product", "reconstruct", "ref_gemm", "split_error", "split_matrix",
]
