import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spidvc.interleave import InterleavePattern
from spidvc.model import CodecConfig
from spidvc.si_engine import (SEC, TEC, VEC, CandidateSI, bidir_me_key, build_side_information,
                              directional_interp, ebme, estimate_field, fuse_sad, median_decision,
                              median_vector, mode_select, rank_si, refinement_weight,
                              ring_positions, sec_conceal)
from spidvc.synthetic import generate

N = 16


def hybrid(frame, parity=0):
    """Current frame as the decoder sees it: KEY blocks known, WZ blocks zeroed."""
    p = InterleavePattern.for_frame(*frame.shape, N, parity)
    known = p.key_mask()
    return np.where(known, frame, 0).astype(np.float64), known, p


def interior(blocks, gh, gw, margin=1):
    return [(i, j) for i, j in blocks if margin <= i < gh - margin and margin <= j < gw - margin]


def deep_interior(blocks, gh, gw):
    """Blocks whose four neighbours are interior too: border KEY blocks may carry
    vectors pointing outside the frame, and OBMC blends neighbour vectors."""
    return interior(blocks, gh, gw, 2)


def block(a, i, j):
    return a[i * N:(i + 1) * N, j * N:(j + 1) * N]


def test_static_scene_zero_vectors():
    f = generate("static", 64, 64, frames=2)[0]
    cur, known, p = hybrid(f[1])
    fld = bidir_me_key(cur, p.key_blocks(), [f[0].astype(float)], [1], N)[0]
    for i, j in p.key_blocks():
        assert fld.get(i, j) == (0, 0) and fld.sad[i, j] == 0


def test_integer_shift_vectors():
    f = generate("translation", 96, 96, frames=2, step=4)[0]
    cur, known, p = hybrid(f[1])
    fld = bidir_me_key(cur, p.key_blocks(), [f[0].astype(float)], [1], N)[0]
    for i, j in interior(p.key_blocks(), 6, 6):
        assert fld.get(i, j) == (-16, 0)


def test_subpel_shift_vectors():
    f = generate("subpel", 96, 96, frames=2)[0]
    cur, known, p = hybrid(f[1])
    fld = bidir_me_key(cur, p.key_blocks(), [f[0].astype(float)], [1], N)[0]
    for i, j in interior(p.key_blocks(), 6, 6):
        vx, vy = fld.get(i, j)
        assert abs(vx + 2) <= 1 and abs(vy) <= 1


def _si(frames, f_cur, views=None, cfg=None):
    cur, known, p = hybrid(frames[f_cur])
    temporal = [(frames[f_cur - 1].astype(float), 1)]
    if f_cur + 1 < len(frames):
        temporal.append((frames[f_cur + 1].astype(float), 1))
    return build_side_information(cur, known, p.wz_blocks(), temporal, views or [],
                                  cfg or CodecConfig()), p


def test_static_tec_exact():
    f = generate("static", 64, 64, frames=3)[0]
    side, p = _si(f, 1)
    for i, j in p.wz_blocks():
        assert (block(side.tec.prediction, i, j) == block(f[1], i, j)).all()
        assert side.tec.wz_error[(i, j)] == 0


def test_translation_tec_exact_on_interior():
    f = generate("translation", 128, 128, frames=3, step=4)[0]
    side, p = _si(f, 1)
    for i, j in deep_interior(p.wz_blocks(), 8, 8):
        assert (block(side.tec.prediction, i, j) == block(f[1], i, j)).all()


def test_identical_views_vec_exact():
    f = generate("static", 64, 64, frames=3, views=2)
    cur, known, p = hybrid(f[1, 1])
    side = build_side_information(cur, known, p.wz_blocks(), [(f[1, 0].astype(float), 1)],
                                  [f[0, 1].astype(float)], CodecConfig())
    for i, j in p.wz_blocks():
        assert side.vec.vectors[(i, j)][1] == (0, 0)
        assert (block(side.vec.prediction, i, j) == block(f[1, 1], i, j)).all()


def test_stereo_vec_exact_on_interior():
    f = generate("stereo", 128, 128, frames=2, views=2, disparity=8)
    cur, known, p = hybrid(f[1, 1])
    # a noise frame as the temporal reference keeps TEC from matching anything
    noise = np.random.default_rng(0).integers(0, 256, (128, 128)).astype(float)
    side = build_side_information(cur, known, p.wz_blocks(), [(noise, 1)], [f[0, 1].astype(float)],
                                  CodecConfig())
    for i, j in deep_interior(p.wz_blocks(), 8, 8):
        assert side.vec.vectors[(i, j)][1] == (32, 0)
        assert (block(side.vec.prediction, i, j) == block(f[1, 1], i, j)).all()


def test_occluded_strip_has_larger_error():
    f = generate("occlusion", 96, 96, frames=1, views=2, strip=16)
    cur, known, p = hybrid(f[1, 0])
    noise = np.random.default_rng(0).integers(0, 256, (96, 96)).astype(float)
    side = build_side_information(cur, known, p.wz_blocks(), [(noise, 1)], [f[0, 0].astype(float)],
                                  CodecConfig())
    strip_col = 96 // 4 // N + 0  # strip starts at x = 24, inside block column 1
    occluded = [b for b in interior(p.wz_blocks(), 6, 6) if b[1] == strip_col]
    clear = [b for b in interior(p.wz_blocks(), 6, 6) if b[1] >= 3]
    err = lambda b: np.mean((block(side.vec.prediction, *b) - block(f[1, 0], *b)) ** 2)
    assert occluded and clear
    assert min(err(b) for b in occluded) > max(err(b) for b in clear)


def test_ebme_brute_force_4x4():
    rng = np.random.default_rng(0)
    cur = rng.integers(0, 256, (12, 12)).astype(float)
    ref = rng.integers(0, 256, (12, 12)).astype(float)
    known = np.ones((12, 12), dtype=bool)
    y0 = x0 = 4
    ring = ring_positions(y0, x0, 4, 2, known)
    assert len(ring[0]) == 32
    total = 0.0
    for k in range(1, 3):
        for t in range(4):
            for y, x in ((y0 - k, x0 + t), (y0 + 3 + k, x0 + t), (y0 + t, x0 - k), (y0 + t, x0 + 3 + k)):
                total += abs(cur[y, x] - ref[y, x + 1])
    assert ebme(cur, ref, ring, (4, 0)) == pytest.approx(total)


@given(st.integers(0, 2 ** 31 - 1), st.integers(-50, 50))
def test_ebme_constant_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    cur = rng.integers(0, 200, (32, 32)).astype(float)
    ref = rng.integers(0, 200, (32, 32)).astype(float)
    ring = ring_positions(8, 8, 8, 2, np.ones((32, 32), dtype=bool))
    vec = (int(rng.integers(-8, 9)), int(rng.integers(-8, 9)))
    assert ebme(cur + c, ref + c, ring, vec) == pytest.approx(ebme(cur, ref, ring, vec))


def test_sec_uniform_neighbourhood():
    cur = np.full((48, 48), 77.0)
    known = np.ones((48, 48), dtype=bool)
    known[16:32, 16:32] = False
    cur[~known] = 0
    res = sec_conceal(cur, known, 1, 1, N)
    assert np.allclose(res.prediction, 77.0)
    lines = {k: np.full(N, 77.0) for k in ("top", "bottom", "left", "right")}
    assert np.allclose(directional_interp(lines, N, 0.7), 77.0)


def test_sec_vertical_edge_uses_directional():
    cur = np.where(np.arange(48)[None, :] < 24, 50.0, 200.0) * np.ones((48, 1))
    truth = cur.copy()
    known = np.ones((48, 48), dtype=bool)
    known[16:32, 16:32] = False
    cur[~known] = 0
    res = sec_conceal(cur, known, 1, 1, N)
    assert res.interpolation == "DI"
    assert np.allclose(res.prediction, truth[16:32, 16:32])


def test_sec_white_noise_uses_bilinear():
    cur = np.random.default_rng(1).integers(0, 256, (48, 48)).astype(float)
    known = np.ones((48, 48), dtype=bool)
    known[16:32, 16:32] = False
    assert sec_conceal(cur, known, 1, 1, N).interpolation == "BI"


def test_mode_select_examples():
    assert mode_select(1, 5) == SEC
    assert mode_select(10, 5) != SEC
    assert mode_select(1, 2) != SEC


def _cand(method, errors, values, key_mse=1.0):
    pred = np.zeros((N, 2 * N))
    for k, v in enumerate(values):
        pred[:, k * N:(k + 1) * N] = v
    return CandidateSI(method, pred, {(0, k): e for k, e in enumerate(errors)}, N, key_mse,
                       {(0, k): method for k in range(len(errors))},
                       {(0, k): (0, (0, 0)) for k in range(len(errors))})


def test_fuse_sad_examples():
    fused = fuse_sad(_cand(TEC, [3, 9], [1, 1]), _cand(VEC, [5, 2], [2, 2]))
    assert fused.block_method == {(0, 0): TEC, (0, 1): VEC}
    assert (fused.prediction[:, :N] == 1).all() and (fused.prediction[:, N:] == 2).all()
    tie = fuse_sad(_cand(TEC, [4, 4], [1, 1]), _cand(VEC, [4, 4], [2, 2]))
    assert set(tie.block_method.values()) == {TEC}


@given(st.lists(st.tuples(st.integers(0, 1000), st.integers(0, 1000)), min_size=1, max_size=12))
def test_fuse_sad_min_oracle(errs):
    k = len(errs)
    tec = CandidateSI(TEC, np.zeros((N, k * N)), {(0, b): e[0] for b, e in enumerate(errs)}, N)
    vec = CandidateSI(VEC, np.ones((N, k * N)), {(0, b): e[1] for b, e in enumerate(errs)}, N)
    fused = fuse_sad(tec, vec)
    for b, (et, ev) in enumerate(errs):
        assert fused.wz_error[(0, b)] == min(et, ev)
        assert (fused.prediction[:, b * N:(b + 1) * N] == (1 if ev < et else 0)).all()


def test_rank_si_examples():
    fused = _cand("fused", [0], [0])
    tec, vec = _cand(TEC, [0], [0], 4.0), _cand(VEC, [0], [0], 9.0)
    assert [c.method for c in rank_si(fused, tec, vec)] == ["fused", TEC, VEC]
    assert [c.method for c in rank_si(fused, _cand(TEC, [0], [0], 9.0), vec)] == ["fused", TEC, VEC]
    assert [c.method for c in rank_si(fused, _cand(TEC, [0], [0], 20.0), vec)] == ["fused", VEC, TEC]
    assert [c.method for c in rank_si(fused, tec, None)] == ["fused", TEC]


def test_median_vector_and_decision():
    assert median_vector([(0, 0), (0, 0), (4, 0)]) == (0, 0)
    uniform = [(4, 0)] * 5
    assert median_decision((4, 0), uniform, (8, 0), [(0, 0)] * 5, threshold=1.0) == TEC
    # TEC vector is an outlier; VEC agrees with its neighbourhood
    assert median_decision((40, 0), uniform, (8, 0), [(8, 0)] * 5, threshold=1.0) == VEC
    # both outliers, TEC the milder one
    assert median_decision((12, 0), uniform, (40, 0), [(0, 0)] * 5, threshold=1.0) == TEC


def test_refinement_weight():
    assert refinement_weight(0, 128, 5) == 1.0
    assert refinement_weight(640, 128, 5) == pytest.approx(0.5)
    w = [refinement_weight(e, 128, 5) for e in np.linspace(1, 5000, 50)]
    assert all(a > b for a, b in zip(w, w[1:]))


@pytest.mark.parametrize("fusion", ["sad", "vector_median", "refine_si", "fusion_refine_si"])
def test_side_information_reads_only_decoded_pixels(fusion):
    f = generate("mixed", 64, 64, frames=3, views=2, seed=3)
    cur, known, p = hybrid(f[1, 1])
    garbage = cur.copy()
    garbage[~known] = np.random.default_rng(0).integers(0, 256, (~known).sum())
    args = (p.wz_blocks(), [(f[1, 0].astype(float), 1), (f[1, 2].astype(float), 1)],
            [f[0, 1].astype(float)], CodecConfig(fusion=fusion))
    a = build_side_information(cur, known, *args)
    b = build_side_information(garbage, known, *args)
    for x, y in zip(a.ranked, b.ranked):
        assert (x.prediction == y.prediction).all()


def test_side_information_needs_temporal_reference():
    f = generate("static", 32, 32, frames=1)[0]
    cur, known, p = hybrid(f[0])
    with pytest.raises(ValueError):
        build_side_information(cur, known, p.wz_blocks(), [], [], CodecConfig())


def test_estimate_field_subpel_off_is_integer():
    f = generate("translation", 64, 64, frames=2)[0]
    cur, known, p = hybrid(f[1])
    fld = estimate_field(cur, p.key_blocks(), f[0], N, 8, 8, subpel=False)
    assert (fld.vectors % 4 == 0).all()
