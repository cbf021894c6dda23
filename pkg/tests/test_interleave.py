import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spidvc.interleave import (EVEN, ODD, InterleavePattern, alternate_parity, merge_checkerboard,
                               pack_key_group, split_checkerboard, temporal_deinterleave,
                               temporal_interleave, unpack_key_group)


def test_small_checkerboard():
    p = InterleavePattern.for_frame(32, 32, 16, EVEN)
    assert p.key_blocks() == [(0, 0), (1, 1)]
    assert p.wz_blocks() == [(0, 1), (1, 0)]


def test_cif_block_counts():
    p = InterleavePattern.for_frame(288, 352, 16)
    assert (p.grid_w, p.grid_h) == (22, 18)
    assert len(p.key_blocks()) == 198 and len(p.wz_blocks()) == 198


def test_alternate_parity():
    p = InterleavePattern.for_frame(32, 32, 16, EVEN)
    assert alternate_parity(p).parity == ODD
    assert alternate_parity(alternate_parity(p)) == p


def test_pack_cif_width():
    p = InterleavePattern.for_frame(288, 352, 16)
    frame = np.zeros((288, 352), dtype=np.uint8)
    assert pack_key_group(split_checkerboard(frame, p)[0], p).shape == (288, 176)


def test_pack_two_by_two():
    p = InterleavePattern.for_frame(32, 32, 16, EVEN)
    frame = np.zeros((32, 32), dtype=np.uint8)
    frame[:16, :16] = 1
    frame[16:, 16:] = 2
    frame[:16, 16:] = 9
    frame[16:, :16] = 9
    packed = pack_key_group(split_checkerboard(frame, p)[0], p)
    assert packed.shape == (32, 16)
    assert (packed[:16] == 1).all() and (packed[16:] == 2).all()


def test_complementary_interleave_tiles_frame():
    p = InterleavePattern.for_frame(64, 64, 16, EVEN)
    q = alternate_parity(p)
    a = np.full((64, 64), 10, dtype=np.uint8)
    b = np.full((64, 64), 20, dtype=np.uint8)
    combined = temporal_interleave(split_checkerboard(a, p)[0], p, split_checkerboard(b, q)[0], q)
    assert combined.shape == (64, 64)
    assert ((combined == 10) == p.key_mask()).all()
    assert ((combined == 20) == q.key_mask()).all()


def test_odd_block_columns_cannot_pack():
    p = InterleavePattern.for_frame(32, 48, 16)
    with pytest.raises(ValueError):
        pack_key_group(np.zeros((32, 48)), p)


frames = st.tuples(st.integers(1, 4), st.integers(1, 4), st.sampled_from([4, 8]),
                   st.integers(0, 1), st.integers(0, 2 ** 31 - 1))


@given(frames)
def test_split_merge_identity(args):
    gh, gw2, b, parity, seed = args
    h, w = gh * b, 2 * gw2 * b
    frame = np.random.default_rng(seed).integers(0, 256, (h, w)).astype(np.uint8)
    p = InterleavePattern.for_frame(h, w, b, parity)
    key, wz = split_checkerboard(frame, p)
    assert (merge_checkerboard(key, wz, p) == frame).all()
    assert len(p.key_blocks()) + len(p.wz_blocks()) == p.grid_w * p.grid_h
    assert (unpack_key_group(pack_key_group(key, p), p) == key).all()


@given(frames, st.booleans())
def test_temporal_interleave_identity(args, same):
    gh, gw2, b, parity, seed = args
    h, w = gh * b, 2 * gw2 * b
    rng = np.random.default_rng(seed)
    pa = InterleavePattern.for_frame(h, w, b, parity)
    pb = pa if same else alternate_parity(pa)
    ka = split_checkerboard(rng.integers(0, 256, (h, w)).astype(np.uint8), pa)[0]
    kb = split_checkerboard(rng.integers(0, 256, (h, w)).astype(np.uint8), pb)[0]
    ra, rb = temporal_deinterleave(temporal_interleave(ka, pa, kb, pb), pa, pb)
    assert (ra == ka).all() and (rb == kb).all()
