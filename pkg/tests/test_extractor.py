import itertools

import numpy as np
import pytest

from sdirand.extractor import (
    BLOCK_BITS,
    ExtractorSpec,
    block_layout,
    block_seed_length,
    extract_blocks,
    output_length,
    pack_bits,
    read_bits,
    toeplitz_extract,
    toeplitz_matrix,
    unpack_bits,
    write_bits,
)


def naive(bits, seed, m):
    """GF(2) matrix-vector product with explicit Toeplitz entries."""
    n = len(bits)
    out = []
    for j in range(m):
        acc = 0
        for i in range(n):
            acc ^= int(seed[j - i + n - 1]) & int(bits[i])
        out.append(acc)
    return np.array(out, dtype=np.uint8)


def test_output_length_examples():
    assert output_length(100, 2 ** -10) == 80
    assert output_length(10, 2 ** -10) == 0
    assert output_length(0, 0.5) == 0
    assert output_length(100.9, 0.5) == 98
    with pytest.raises(ValueError):
        output_length(-1, 0.1)
    with pytest.raises(ValueError):
        output_length(10, 1.0)


def test_extractor_dimensions():
    s = ExtractorSpec.from_min_entropy(1000, 500.0, 2 ** -20)
    assert s.output_len == 460 and s.seed_len == 1459
    assert ExtractorSpec.from_min_entropy(10, 1e6, 0.5).output_len == 10
    assert ExtractorSpec(5, 0, 0.1).seed_len == 0
    with pytest.raises(ValueError):
        ExtractorSpec(5, 6, 0.1)
    with pytest.raises(ValueError):
        ExtractorSpec(0, 0, 0.1)


def test_matrix_is_toeplitz():
    rng = np.random.default_rng(0)
    seed = rng.integers(0, 2, 9)
    M = toeplitz_matrix(seed, 6, 4)
    assert M.shape == (4, 6)
    for j, i in itertools.product(range(1, 4), range(1, 6)):
        assert M[j, i] == M[j - 1, i - 1]
    np.testing.assert_array_equal(M[0], seed[5::-1])
    with pytest.raises(ValueError):
        toeplitz_matrix(seed, 6, 5)


def test_exhaustive_small():
    for n, m in [(1, 1), (3, 2), (4, 4), (6, 3)]:
        for s in range(2 ** (n + m - 1)):
            seed = np.array([(s >> k) & 1 for k in range(n + m - 1)], dtype=np.uint8)
            for v in range(2 ** n):
                x = np.array([(v >> k) & 1 for k in range(n)], dtype=np.uint8)
                np.testing.assert_array_equal(toeplitz_extract(x, seed, m), naive(x, seed, m))


def test_exhaustive_inputs_twelve_bits():
    rng = np.random.default_rng(1)
    n, m = 12, 5
    for _ in range(4):
        seed = rng.integers(0, 2, n + m - 1)
        M = toeplitz_matrix(seed, n, m)
        for v in range(2 ** n):
            x = np.array([(v >> k) & 1 for k in range(n)], dtype=np.uint8)
            np.testing.assert_array_equal(toeplitz_extract(x, seed, m), (M @ x) % 2)


@pytest.mark.parametrize("n,m", [(1000, 300), (5000, 2000), (3000, 3000), (1 << 14, 1 << 12)])
def test_random_against_matrix(n, m):
    rng = np.random.default_rng(n + m)
    x = rng.integers(0, 2, n)
    seed = rng.integers(0, 2, n + m - 1)
    ref = (toeplitz_matrix(seed, n, m).astype(np.int64) @ x) % 2
    np.testing.assert_array_equal(toeplitz_extract(x, seed, m), ref)


def test_fft_path_matches_direct():
    rng = np.random.default_rng(7)
    n, m = 1 << 16, 1 << 10  # beyond the direct-evaluation limit
    x = rng.integers(0, 2, n).astype(np.uint8)
    seed = rng.integers(0, 2, n + m - 1).astype(np.uint8)
    full = np.convolve(x.astype(np.int64), seed.astype(np.int64))
    np.testing.assert_array_equal(toeplitz_extract(x, seed, m), (full[n - 1:n - 1 + m] & 1))


def test_linearity():
    rng = np.random.default_rng(3)
    n, m = 257, 64
    seed = rng.integers(0, 2, n + m - 1)
    for _ in range(20):
        a, b = rng.integers(0, 2, n), rng.integers(0, 2, n)
        np.testing.assert_array_equal(toeplitz_extract(a ^ b, seed, m),
                                      toeplitz_extract(a, seed, m) ^ toeplitz_extract(b, seed, m))
    assert not toeplitz_extract(np.zeros(n, int), seed, m).any()


def test_extract_errors():
    with pytest.raises(ValueError):
        toeplitz_extract([0, 1, 2], [0, 0, 0], 1)
    with pytest.raises(ValueError):
        toeplitz_extract([0, 1], [0, 0], 2)
    with pytest.raises(ValueError):
        toeplitz_extract([0, 1], [0], -1)
    assert toeplitz_extract([0, 1], [], 0).size == 0


def test_block_layout():
    assert block_layout(10, 4, block=4) == [(4, 2), (4, 2), (2, 0)]
    for n, m, blk in [(100, 37, 16), (1000, 1000, 64), (5, 0, 2), (BLOCK_BITS + 5, 10, BLOCK_BITS)]:
        lay = block_layout(n, m, blk)
        assert sum(a for a, _ in lay) == n and sum(b for _, b in lay) == m
        assert all(0 <= b <= a <= blk for a, b in lay)
    with pytest.raises(ValueError):
        block_layout(4, 5)


def test_extract_blocks_consistency():
    rng = np.random.default_rng(5)
    n, m, blk = 1000, 300, 256
    x = rng.integers(0, 2, n)
    seed = rng.integers(0, 2, block_seed_length(n, m, blk))
    out = extract_blocks(x, seed, m, block=blk)
    assert out.size == m
    xi = si = 0
    parts = []
    for a, b in block_layout(n, m, blk):
        parts.append(toeplitz_extract(x[xi:xi + a], seed[si:si + a + b - 1], b))
        xi, si = xi + a, si + a + b - 1
    np.testing.assert_array_equal(out, np.concatenate(parts))
    # a single block reduces to the plain hash
    s1 = rng.integers(0, 2, n + m - 1)
    np.testing.assert_array_equal(extract_blocks(x, s1, m, block=n), toeplitz_extract(x, s1, m))
    with pytest.raises(ValueError):
        extract_blocks(x, seed[:-1], m, block=blk)


@pytest.mark.parametrize("nbits", [0, 1, 7, 8, 9, 1000])
def test_bit_file_round_trip(tmp_path, nbits):
    bits = np.random.default_rng(nbits).integers(0, 2, nbits)
    path = write_bits(tmp_path / "b.bin", bits)
    data = path.read_bytes()
    assert data[:2] == b"SB" and data[2] == 1 and data[3] == 0
    assert int.from_bytes(data[4:8], "little") == nbits
    assert len(data) == 8 + (nbits + 7) // 8
    np.testing.assert_array_equal(read_bits(path), bits)


def test_bit_order_is_lsb_first():
    assert pack_bits([1, 0, 0, 0, 0, 0, 0, 0, 0, 1]) == bytes([1, 2])
    np.testing.assert_array_equal(unpack_bits(bytes([5]), 3), [1, 0, 1])
    with pytest.raises(ValueError):
        unpack_bits(bytes([5]), 9)


def test_bad_files(tmp_path):
    good = write_bits(tmp_path / "g.bin", [1, 0, 1]).read_bytes()
    cases = {"short": good[:5], "magic": b"XX" + good[2:], "version": good[:2] + b"\x02" + good[3:],
             "order": good[:3] + b"\x01" + good[4:], "payload": good + b"\x00"}
    for name, data in cases.items():
        (tmp_path / name).write_bytes(data)
        with pytest.raises(ValueError):
            read_bits(tmp_path / name)
