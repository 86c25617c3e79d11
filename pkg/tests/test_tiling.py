import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panoreduce.errors import ContractError
from panoreduce.records import Detection
from panoreduce.tiling import (Patch, TilerParams, box_iou, merge_detections, patch_union, tile,
                               to_global)

SMALL = TilerParams(patch_w=300, patch_h=150, overlap_px=30)


def test_full_width_band_patch_count():
    mask = np.zeros((2048, 4096), dtype=bool)
    mask[966:1712] = True
    patches = tile(mask, None, TilerParams())
    # columns: ceil(4096 / 1080) = 4; rows: 1 + ceil((746 - 600) / 480) = 2
    assert len(patches) == 8
    assert sorted({p.v0 for p in patches}) == [966, 1446]
    assert sorted({p.u0 for p in patches}) == [0, 1080, 2160, 3240]
    assert all((p.width, p.height) == (1200, 600) for p in patches)
    assert [p.wraps_seam for p in patches if p.u0 == 3240] == [True, True]
    assert patch_union(patches, (4096, 2048))[mask].all()


def test_last_row_clamped_inside_image():
    mask = np.zeros((512, 1024), dtype=bool)
    mask[400:512, :50] = True
    patches = tile(mask, None, SMALL)
    assert max(p.v0 + p.height for p in patches) == 512


def test_arc_across_seam_uses_short_side():
    mask = np.zeros((512, 1024), dtype=bool)
    mask[200:260, 1000:] = True
    mask[200:260, :40] = True
    patches = tile(mask, None, SMALL)
    assert len(patches) == 1 and patches[0].u0 == 1000 and patches[0].wraps_seam


def test_patch_pixels_follow_seam():
    rgb = np.zeros((512, 1024, 3), np.uint8)
    rgb[..., 0] = np.arange(1024) % 256
    mask = np.zeros((512, 1024), dtype=bool)
    mask[200:260, 1000:1010] = True
    mask[200:260, 5:10] = True
    p = tile(mask, rgb, SMALL)[0]
    assert p.pixels.shape == (150, 300, 3)
    np.testing.assert_array_equal(p.pixels[0, :, 0], ((1000 + np.arange(300)) % 1024) % 256)


def test_empty_mask_and_oversized_patch():
    assert tile(np.zeros((512, 1024), bool), None, SMALL) == []
    with pytest.raises(ContractError):
        tile(np.ones((512, 1024), bool), None, TilerParams())


def test_patches_without_mask_pixels_dropped():
    mask = np.zeros((512, 1024), dtype=bool)
    mask[100:110, 0:1024:400] = True
    patches = tile(mask, None, SMALL)
    assert all(mask[p.v0:p.v0 + p.height][:, p.columns(1024)].any() for p in patches)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1023), st.integers(0, 511), st.integers(1, 400),
                          st.integers(1, 200)), min_size=1, max_size=5))
def test_union_covers_random_masks(rects):
    mask = np.zeros((512, 1024), dtype=bool)
    for u, v, w, h in rects:
        cols = (u + np.arange(w)) % 1024
        mask[v:v + h, cols] = True
    patches = tile(mask, None, SMALL)
    covered = patch_union(patches, (1024, 512))
    assert not (mask & ~covered).any()
    assert [(p.v0, p.u0) for p in patches] == sorted((p.v0, p.u0) for p in patches)


@pytest.mark.parametrize("u0, box, expected", [
    (100, (10, 5, 20, 15), [(110, 55, 120, 65)]),
    (1000, (10, 5, 20, 15), [(1010, 55, 1020, 65)]),
    (1000, (20, 5, 40, 15), [(1020, 55, 1024, 65), (0, 55, 16, 65)]),
    (1000, (30, 5, 40, 15), [(6, 55, 16, 65)]),
])
def test_to_global(u0, box, expected):
    p = Patch(0, u0, 50, 300, 150, u0 + 300 > 1024)
    assert to_global(p, box, 1024) == expected


def test_iou_values():
    assert box_iou((0, 0, 2, 1), (1, 0, 3, 1)) == pytest.approx(1 / 3)
    assert box_iou((0, 0, 1, 1), (2, 0, 3, 1)) == 0.0
    assert box_iou((0, 0, 4, 4), (0, 0, 4, 4)) == 1.0
    # periodic u: a box at the right edge overlaps its continuation at the left
    assert box_iou((1020, 0, 1024, 1), (0, 0, 4, 1), pano_width=1024) == 0.0
    assert box_iou((1020, 0, 1024, 1), (1022, 0, 1026, 1), pano_width=1024) == pytest.approx(1 / 3)


def test_merge_keeps_highest_score_per_class():
    dets = [Detection("face", (10, 10, 20, 20), 0.8), Detection("face", (11, 10, 21, 20), 0.9),
            Detection("plate", (10, 10, 20, 20), 0.5), Detection("face", (100, 10, 110, 20), 0.9)]
    out = merge_detections(dets, 0.5)
    assert out == [Detection("face", (11, 10, 21, 20), 0.9), Detection("face", (100, 10, 110, 20), 0.9),
                   Detection("plate", (10, 10, 20, 20), 0.5)]


def test_merge_prefers_larger_box_on_equal_score():
    clipped = Detection("face", (10, 10, 18, 20), 1.0)
    whole = Detection("face", (10, 10, 20, 20), 1.0)
    assert merge_detections([clipped, whole], 0.5) == [whole]


_box = st.tuples(st.integers(0, 200), st.integers(0, 100), st.integers(1, 40), st.integers(1, 40))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["face", "plate"]), _box,
                          st.sampled_from([0.3, 0.5, 0.9, 1.0])), max_size=12))
def test_merge_idempotent_and_sound(raw):
    dets = [Detection(c, (u, v, u + w, v + h), s) for c, (u, v, w, h), s in raw]
    once = merge_detections(dets, 0.5)
    assert merge_detections(once, 0.5) == once
    assert len(once) <= len(dets)
    for i, a in enumerate(once):
        for b in once[i + 1:]:
            assert a.cls != b.cls or box_iou(a.box, b.box) < 0.5
