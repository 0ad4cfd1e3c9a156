import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glsim.config import ArchConfig
from glsim.cropper import (
    PatchBox,
    PixelRect,
    box_to_pixels,
    crop_resize,
    enclosing_box,
    random_indices,
)
from glsim.dfsm import top_o
from glsim.errors import InvalidConfigError


def b16(stride=16):
    return ArchConfig(patch_size=16, stride=stride, depth=12, heads=12, width=768,
                      image_w=224, image_h=224, num_classes=10)


def test_enclosing_box_examples():
    assert enclosing_box(range(196), (14, 14)) == PatchBox(0, 13, 0, 13)
    assert enclosing_box([0], (14, 14)) == PatchBox(0, 0, 0, 0)
    # 17 -> (1, 3), 30 -> (2, 2)
    assert enclosing_box([17, 30], (14, 14)) == PatchBox(1, 2, 2, 3)


def test_enclosing_box_errors():
    with pytest.raises(InvalidConfigError):
        enclosing_box([], (14, 14))
    with pytest.raises(InvalidConfigError):
        enclosing_box([196], (14, 14))


def test_box_to_pixels_examples():
    assert box_to_pixels(PatchBox(0, 13, 0, 13), b16()) == PixelRect(0, 0, 224, 224)
    assert box_to_pixels(PatchBox(1, 2, 2, 3), b16()) == PixelRect(32, 16, 64, 48)
    assert box_to_pixels(PatchBox(17, 17, 17, 17), b16(12)) == PixelRect(204, 204, 220, 220)


def test_box_outside_grid():
    with pytest.raises(InvalidConfigError):
        box_to_pixels(PatchBox(0, 14, 0, 0), b16())


def test_crop_identity_is_bit_exact(rng):
    img = rng.normal(size=(20, 30, 3)).astype(np.float32)
    out = crop_resize(img, PixelRect(0, 0, 30, 20), 30, 20)
    assert out.dtype == np.float32
    assert out.tobytes() == img.tobytes()


def test_crop_two_by_two_to_one():
    img = np.array([[0.0, 1.0], [0.0, 1.0]], dtype=np.float32)[:, :, None].repeat(3, axis=2)
    out = crop_resize(img, PixelRect(0, 0, 2, 2), 1, 1)
    np.testing.assert_array_equal(out, np.full((1, 1, 3), 0.5, np.float32))


def test_crop_hand_bilinear_upsample():
    img = np.array([[0.0, 4.0]], dtype=np.float32)[:, :, None]
    out = crop_resize(img, PixelRect(0, 0, 2, 1), 4, 1)[0, :, 0]
    # source x = (d + 0.5) / 2 - 0.5 -> -0.25 (clamped 0), 0.25, 0.75, 1.25 (clamped 1)
    np.testing.assert_allclose(out, [0.0, 1.0, 3.0, 4.0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), data=st.data())
def test_crop_dims_and_convexity(seed, data):
    rng = np.random.default_rng(seed)
    h, w = data.draw(st.integers(1, 24)), data.draw(st.integers(1, 24))
    img = rng.normal(size=(h, w, 3)).astype(np.float32)
    x0 = data.draw(st.integers(0, w - 1))
    x1 = data.draw(st.integers(x0 + 1, w))
    y0 = data.draw(st.integers(0, h - 1))
    y1 = data.draw(st.integers(y0 + 1, h))
    ow, oh = data.draw(st.integers(1, 40)), data.draw(st.integers(1, 40))
    out = crop_resize(img, PixelRect(x0, y0, x1, y1), ow, oh)
    assert out.shape == (oh, ow, 3)
    region = img[y0:y1, x0:x1]
    assert np.all(out >= region.min(axis=(0, 1)))
    assert np.all(out <= region.max(axis=(0, 1)))


def test_crop_rejects_bad_rect(rng):
    img = np.zeros((4, 4, 3), np.float32)
    with pytest.raises(InvalidConfigError):
        crop_resize(img, PixelRect(0, 0, 5, 4), 4, 4)


def _covered(rect, idx, config):
    rows, cols = config.grid
    p, s = config.patch_size, config.stride
    for i in idx:
        r, c = divmod(int(i), cols)
        if not (rect.x0 <= c * s and c * s + p <= rect.x1 and rect.y0 <= r * s and r * s + p <= rect.y1):
            return False
    return True


@settings(max_examples=100, deadline=None)
@given(idx=st.lists(st.integers(0, 323), min_size=1, max_size=20, unique=True),
       extra=st.integers(0, 323), stride=st.sampled_from([16, 12]))
def test_containment_and_monotonicity(idx, extra, stride):
    c = b16(stride)
    n = c.num_patches
    idx = [i % n for i in idx]
    box = enclosing_box(idx, c.grid)
    assert _covered(box_to_pixels(box, c), idx, c)
    bigger = enclosing_box(idx + [extra % n], c.grid)
    assert bigger.row_min <= box.row_min and bigger.col_min <= box.col_min
    assert bigger.row_max >= box.row_max and bigger.col_max >= box.col_max


def test_crop_depends_only_on_selected_subset(rng):
    c = b16()
    s1 = rng.random(196)
    s2 = s1.copy()
    chosen = top_o(s1, 8)
    s2[chosen] += 10.0  # magnitudes change, subset does not
    s2[np.setdiff1d(np.arange(196), chosen)] *= 0.5
    assert list(top_o(s2, 8)) == list(chosen)
    r1 = box_to_pixels(enclosing_box(top_o(s1, 8), c.grid), c)
    r2 = box_to_pixels(enclosing_box(top_o(s2, 8), c.grid), c)
    assert r1 == r2


def test_random_indices_full_and_reproducible():
    assert list(random_indices(3, 10, 10)) == list(range(10))
    a, b = random_indices(42, 8, 196), random_indices(42, 8, 196)
    assert list(a) == list(b)
    assert len(set(a.tolist())) == 8
    assert not np.array_equal(random_indices(43, 8, 196), a)


def test_random_indices_uniform():
    counts = np.zeros(4)
    for seed in range(10_000):
        counts[random_indices(seed, 1, 4)[0]] += 1
    np.testing.assert_allclose(counts / 10_000, 0.25, atol=0.02)


def test_random_indices_range():
    with pytest.raises(InvalidConfigError):
        random_indices(0, 5, 4)
