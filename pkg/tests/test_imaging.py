import numpy as np
import pytest

from augeval.errors import ValidationError
from augeval.imaging import (
    build_edge_mask,
    canny,
    gaussian_blur,
    gaussian_kernel,
    hysteresis,
    sobel_gradients,
    to_grayscale,
)
from augeval.tensorio import Box, DetectionSet


def test_grayscale_white_black_red():
    white = np.full((1, 1, 3), 255, dtype=np.uint8)
    black = np.zeros((1, 1, 3), dtype=np.uint8)
    red = np.zeros((1, 1, 3), dtype=np.uint8)
    red[..., 0] = 255
    assert to_grayscale(white)[0, 0] == pytest.approx(1.0)
    assert to_grayscale(black)[0, 0] == 0.0
    assert to_grayscale(red)[0, 0] == pytest.approx(0.299)


def test_grayscale_rejects_empty():
    with pytest.raises(ValidationError):
        to_grayscale(np.zeros((0, 3, 3)))


def test_blur_constant_image_unchanged():
    img = np.full((9, 7), 0.4)
    out = gaussian_blur(img, 1.3)
    assert np.allclose(out, img, atol=1e-12)


def test_blur_impulse_peak_matches_kernel():
    # Separable blur of a unit impulse: center value is the squared 1-d peak.
    k = gaussian_kernel(1.0)
    img = np.zeros((15, 15))
    img[7, 7] = 1.0
    out = gaussian_blur(img, 1.0)
    assert out[7, 7] == pytest.approx(k.max() ** 2, abs=1e-12)


def test_blur_semigroup():
    rng = np.random.default_rng(3)
    img = gaussian_blur(rng.random((48, 48)), 2.0)  # smooth content
    twice = gaussian_blur(gaussian_blur(img, 1.0), 1.0)
    once = gaussian_blur(img, np.sqrt(2.0))
    assert np.max(np.abs(twice - once)) < 1e-3


def test_blur_preserves_mean():
    # Row-constant image: a pure vertical profile.
    profile = np.linspace(0.0, 1.0, 13)
    img = np.tile(profile[:, None], (1, 9))
    out = gaussian_blur(img, 1.7)
    assert abs(out.mean() - img.mean()) < 1e-6


def test_blur_rejects_nonpositive_sigma():
    with pytest.raises(ValidationError):
        gaussian_blur(np.zeros((4, 4)), 0.0)


def test_sobel_on_vertical_step():
    # Analytic response: columns adjacent to the step see the full 4x jump.
    img = np.zeros((5, 8))
    img[:, 4:] = 1.0
    gx, gy = sobel_gradients(img)
    assert np.allclose(gy, 0.0)
    assert np.allclose(gx[:, 3], 4.0)
    assert np.allclose(gx[:, 4], 4.0)
    assert np.allclose(gx[:, :3], 0.0)
    assert np.allclose(gx[:, 5:], 0.0)


def test_canny_constant_is_empty():
    assert canny(np.full((16, 16), 0.5)).sum() == 0


def test_canny_vertical_step_single_line():
    img = np.zeros((20, 24))
    img[:, 12:] = 1.0
    edges = canny(img)
    cols = np.unique(np.nonzero(edges)[1])
    # One contiguous full-height line within a pixel of the step.
    assert len(cols) == 1
    assert 11 <= cols[0] <= 12
    assert edges[:, cols[0]].all()


def test_canny_deterministic():
    rng = np.random.default_rng(11)
    img = rng.random((32, 32))
    assert np.array_equal(canny(img), canny(img))


def test_canny_threshold_order_enforced():
    with pytest.raises(ValidationError):
        canny(np.zeros((8, 8)), low=0.5, high=0.2)


def flood_fill_oracle(strong, weak):
    # Brute-force 8-connected reachability from any strong pixel.
    h, w = strong.shape
    out = strong.copy().astype(bool)
    changed = True
    while changed:
        changed = False
        for y in range(h):
            for x in range(w):
                if weak[y, x] and not out[y, x]:
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx < w and out[ny, nx]:
                                out[y, x] = True
                                changed = True
    return out.astype(np.uint8)


def test_hysteresis_matches_flood_fill_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        shape = (rng.integers(2, 17), rng.integers(2, 17))
        weak = rng.random(shape) < 0.45
        strong = weak & (rng.random(shape) < 0.3)
        got = hysteresis(strong, weak)
        want = flood_fill_oracle(strong.astype(np.uint8), weak.astype(np.uint8))
        assert np.array_equal(got, want)


def test_edge_mask_lower_half_only():
    mask = build_edge_mask(4, 6, DetectionSet([]))
    assert mask[:2].sum() == 0
    assert mask[2:].all()
    assert mask.mean() == 0.5


def test_edge_mask_box_covering_top_half():
    # Union enumeration oracle: lower half + full top-half box = all ones.
    boxes = DetectionSet([Box("traffic sign", 0.9, 0.0, 0.0, 6.0, 2.0)])
    mask = build_edge_mask(4, 6, boxes)
    assert mask.all()


def test_edge_mask_ignores_non_sign_classes():
    boxes = DetectionSet([Box("car", 0.9, 0.0, 0.0, 6.0, 2.0)])
    mask = build_edge_mask(4, 6, boxes)
    assert np.array_equal(mask, build_edge_mask(4, 6, DetectionSet([])))


def test_edge_mask_monotone_in_boxes():
    rng = np.random.default_rng(5)
    boxes = []
    prev = build_edge_mask(10, 10, DetectionSet([]))
    for _ in range(6):
        x1, y1 = rng.uniform(0, 8, 2)
        boxes.append(Box("stop sign", 0.5, x1, y1,
                         x1 + rng.uniform(0.5, 2), y1 + rng.uniform(0.5, 2)))
        cur = build_edge_mask(10, 10, DetectionSet(boxes))
        assert (cur >= prev).all()
        prev = cur


def test_edge_mask_odd_height_floor_rule():
    mask = build_edge_mask(5, 3, DetectionSet([]))
    assert mask[:2].sum() == 0
    assert mask[2:].all()
