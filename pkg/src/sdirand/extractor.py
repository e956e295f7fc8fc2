"""Seeded Toeplitz hashing and the bitstream file format.

The ``m x n`` Toeplitz matrix built from a seed ``s`` of ``n + m - 1`` bits
has entries ``M[j, i] = s[j - i + n - 1]``, so row ``j`` reads the seed
window ``s[j : j + n]`` in reverse.  Output bit ``j`` is the GF(2) inner
product of that row with the input.

Bitstream files start with an 8-byte header::

    bytes 0-1  magic b"SB"
    byte  2    format version (1)
    byte  3    bit order, 0 = least-significant bit first within each byte
    bytes 4-7  number of payload bits, unsigned 32-bit little endian

followed by ``ceil(bits / 8)`` payload bytes.  Inputs longer than
:data:`BLOCK_BITS` are hashed block by block, each block with its own
consecutive seed segment; outputs are concatenated in block order.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from pathlib import Path
import struct

import numpy as np
from scipy.signal import oaconvolve

__all__ = [
    "BLOCK_BITS",
    "MAGIC",
    "FORMAT_VERSION",
    "ExtractorSpec",
    "output_length",
    "toeplitz_matrix",
    "toeplitz_extract",
    "block_layout",
    "block_seed_length",
    "extract_blocks",
    "pack_bits",
    "unpack_bits",
    "write_bits",
    "read_bits",
]

BLOCK_BITS = 1 << 20
MAGIC = b"SB"
FORMAT_VERSION = 1
_LSB_FIRST = 0
_HEADER = struct.Struct("<2sBBI")
# direct evaluation below this many multiply-adds, otherwise FFT convolution
_DIRECT_LIMIT = 1 << 22


def output_length(h_min: float, eps_ext: float) -> int:
    """Leftover-hash output length ``max(0, floor(h_min - 2 log2(1/eps_ext)))``."""
    if not h_min >= 0:
        raise ValueError("h_min must be non-negative")
    if not 0.0 < eps_ext < 1.0:
        raise ValueError("eps_ext must lie in (0, 1)")
    return max(0, int(math.floor(h_min - 2.0 * math.log2(1.0 / eps_ext))))


@dataclass(frozen=True)
class ExtractorSpec:
    """Dimensions of one Toeplitz hash.

    Parameters
    ----------
    input_len, output_len : int
        Bits in and out.
    eps_ext : float
        Extractor error the output length was budgeted for.
    """

    input_len: int
    output_len: int
    eps_ext: float

    def __post_init__(self):
        if self.input_len < 1:
            raise ValueError("input_len must be positive")
        if not 0 <= self.output_len <= self.input_len:
            raise ValueError("output_len must lie in [0, input_len]")
        if not 0.0 < self.eps_ext < 1.0:
            raise ValueError("eps_ext must lie in (0, 1)")

    @property
    def seed_len(self) -> int:
        return self.input_len + self.output_len - 1 if self.output_len else 0

    @classmethod
    def from_min_entropy(cls, input_len: int, h_min: float, eps_ext: float) -> "ExtractorSpec":
        m = min(output_length(h_min, eps_ext), input_len)
        return cls(input_len, m, eps_ext)


def _as_bits(a, name):
    b = np.asarray(a)
    if b.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if b.size and (b.min() < 0 or b.max() > 1):
        raise ValueError(f"{name} must contain only bits")
    return b.astype(np.uint8)


def toeplitz_matrix(seed, n: int, m: int) -> np.ndarray:
    """Dense ``m x n`` matrix ``M[j, i] = seed[j - i + n - 1]``."""
    s = _as_bits(seed, "seed")
    if s.size != n + m - 1:
        raise ValueError("seed length must equal n + m - 1")
    j = np.arange(m)[:, None]
    i = np.arange(n)[None, :]
    return s[j - i + n - 1]


def toeplitz_extract(bits, seed, m: int) -> np.ndarray:
    """Hash ``bits`` to ``m`` bits with the Toeplitz matrix defined by ``seed``.

    Parameters
    ----------
    bits : array_like of {0, 1}
        Input of length ``n``.
    seed : array_like of {0, 1}
        ``n + m - 1`` seed bits.
    m : int
        Output length, ``0 <= m``.

    Returns
    -------
    ndarray of uint8, shape (m,)
    """
    x = _as_bits(bits, "input")
    n = x.size
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    s = _as_bits(seed, "seed")
    if n == 0 or s.size != n + m - 1:
        raise ValueError("seed length must equal input length + m - 1")
    # out[j] = sum_i x[i] s[j - i + n - 1] is entry j + n - 1 of the full convolution
    if n * m <= _DIRECT_LIMIT:
        full = np.convolve(x.astype(np.int64), s.astype(np.int64))
    else:
        full = np.rint(oaconvolve(x.astype(np.float64), s.astype(np.float64))).astype(np.int64)
    return (full[n - 1:n - 1 + m] & 1).astype(np.uint8)


def block_layout(n: int, m: int, block: int = BLOCK_BITS):
    """Split ``n`` input bits into blocks and share ``m`` output bits among them.

    Returns a list of ``(input_len, output_len)`` pairs.  Output bits are
    shared in proportion to block length, rounding down, with the
    remainder going to the earliest blocks.
    """
    if n < 1 or not 0 <= m <= n:
        raise ValueError("need n >= 1 and 0 <= m <= n")
    sizes = [min(block, n - k) for k in range(0, n, block)]
    outs = [m * s // n for s in sizes]
    rem = m - sum(outs)
    for k in range(len(sizes)):
        if rem == 0:
            break
        if outs[k] < sizes[k]:
            outs[k] += 1
            rem -= 1
    return list(zip(sizes, outs))


def block_seed_length(n: int, m: int, block: int = BLOCK_BITS) -> int:
    return sum(a + b - 1 for a, b in block_layout(n, m, block) if b)


def extract_blocks(bits, seed, m: int, block: int = BLOCK_BITS) -> np.ndarray:
    """Block-wise :func:`toeplitz_extract` with consecutive seed segments."""
    x = _as_bits(bits, "input")
    s = _as_bits(seed, "seed")
    layout = block_layout(x.size, m, block)
    need = sum(a + b - 1 for a, b in layout if b)
    if s.size != need:
        raise ValueError(f"seed must have {need} bits for this layout")
    out, xi, si = [], 0, 0
    for a, b in layout:
        if b:
            out.append(toeplitz_extract(x[xi:xi + a], s[si:si + a + b - 1], b))
            si += a + b - 1
        xi += a
    return np.concatenate(out) if out else np.zeros(0, dtype=np.uint8)


def pack_bits(bits) -> bytes:
    return np.packbits(_as_bits(bits, "bits"), bitorder="little").tobytes()


def unpack_bits(data: bytes, nbits: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size * 8 < nbits:
        raise ValueError("payload shorter than declared bit length")
    return np.unpackbits(raw, bitorder="little")[:nbits]


def write_bits(path, bits) -> Path:
    b = _as_bits(bits, "bits")
    if b.size >= 1 << 32:
        raise ValueError("bitstream too long for the 32-bit length field")
    path = Path(path)
    path.write_bytes(_HEADER.pack(MAGIC, FORMAT_VERSION, _LSB_FIRST, b.size) + pack_bits(b))
    return path


def read_bits(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("file too short for header")
    magic, version, order, nbits = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("bad magic")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    if order != _LSB_FIRST:
        raise ValueError("unsupported bit order")
    payload = data[_HEADER.size:]
    if len(payload) != (nbits + 7) // 8:
        raise ValueError("payload length does not match header")
    return unpack_bits(payload, nbits)
