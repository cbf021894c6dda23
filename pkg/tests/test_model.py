import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spidvc.model import (CodecConfig, LayoutError, QuantSpec, build_gop_layout,
                          intra_positions, parse_keyed_text, reference_frames)


def test_intra_positions_gop2():
    layout = build_gop_layout(4, 7, 2)
    for v in (1, 3):
        assert layout.intra_frames(v) == [1, 3, 5, 7]
    for v in (2, 4):
        assert layout.intra_frames(v) == [1, 2, 4, 6]


def test_intra_positions_gop3():
    layout = build_gop_layout(2, 7, 3)
    assert layout.intra_frames(1) == [1, 4, 7]
    assert layout.intra_frames(2) == [1, 2, 5]


def test_single_frame_layout():
    layout = build_gop_layout(1, 1, 2)
    assert layout.kinds == (("I",),)
    assert layout.global_order == ()


def test_reference_frames_middle_view():
    layout = build_gop_layout(4, 7, 2)
    refs = reference_frames(2, 3, layout)
    assert refs.temporal == [(2, 2), (2, 4)]
    assert refs.inter_view == [(1, 3), (3, 3)]


def test_reference_frames_single_view_and_last_b():
    layout = build_gop_layout(1, 4, 2)
    refs = reference_frames(1, 4, layout)
    assert refs.inter_view == []
    assert refs.temporal == [(1, 3)]


def test_reference_frames_rejects_intra():
    with pytest.raises(LayoutError):
        reference_frames(1, 1, build_gop_layout(1, 3, 2))


@given(st.integers(1, 5), st.integers(1, 20), st.integers(2, 6),
       st.sampled_from(["min_distance", "min_delay"]))
def test_layout_invariants(views, frames, gop, mode):
    layout = build_gop_layout(views, frames, gop, mode)
    all_b = {(v, f) for v in range(1, views + 1) for f in layout.b_frames(v)}
    assert len(layout.global_order) == len(all_b)
    assert set(layout.global_order) == all_b
    for v in range(1, views + 1):
        assert len(layout.kinds[v - 1]) == frames
        assert set(layout.kinds[v - 1]) <= {"I", "B"}
        assert sorted(layout.decode_order[v - 1]) == layout.b_frames(v)
        if mode == "min_distance":
            # trailing B frames with no later I frame are bounded only by the GOP length
            closed = [f for f in layout.b_frames(v) if max(layout.intra_frames(v)) > f]
            for f in closed:
                assert layout.distance_to_intra(v, f) <= math.ceil(gop / 2)


@given(st.integers(1, 8), st.integers(1, 40), st.integers(2, 8))
def test_intra_positions_formula(view, frames, gop):
    pos = intra_positions(view, frames, gop)
    start = 1 if view % 2 else math.ceil((gop + 1) / 2)
    expected = {1} | {start + n * gop for n in range(frames) if start + n * gop <= frames}
    assert pos == sorted(expected)


def test_config_text_round_trip():
    cfg = CodecConfig(qp=32, levels=8, frame_subtraction=True, selective_feedback="smart")
    assert CodecConfig.from_text(cfg.to_text()) == cfg


def test_config_rejects_unknown_key_and_bad_values():
    with pytest.raises(ValueError):
        CodecConfig.from_mapping({"nope": "1"})
    with pytest.raises(ValueError):
        CodecConfig(levels=3)
    with pytest.raises(ValueError):
        parse_keyed_text("qp 36")


def test_operating_point_pairings():
    assert CodecConfig().operating_point(40).levels == 2
    assert CodecConfig().operating_point(28).levels == 16
    assert CodecConfig(domain="transform").operating_point(32).td_table == 3


def test_quant_spec():
    assert QuantSpec.pixel(4).delta_q == 64
    assert QuantSpec.pixel(16).bp_max == 4
    assert QuantSpec.transform(4).bp_max == 5
