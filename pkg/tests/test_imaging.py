"""Oracle tests for the raster primitives.

Every derived value is checked against an independent brute-force
computation: Otsu against an exact-rational scan of all 256 thresholds,
integral tables against the textbook row-recurrence, blur against a
direct 2-D convolution, downsampling against naive block means.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from sparseslide.imaging import (
    BinaryMask,
    GrayImage,
    Rect,
    binarize,
    build_integral,
    connected_components,
    downsample,
    gaussian_blur,
    invert,
    otsu_threshold,
    query_region_sum,
    read_mask_pgm,
    read_pgm,
    write_mask_pgm,
    write_pgm,
)


def random_gray(rng, max_side=64, lo=0, hi=255):
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    return GrayImage(rng.integers(lo, hi + 1, size=(h, w), dtype=np.uint8))


def random_mask(rng, max_side=64, density=0.5):
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    return BinaryMask((rng.random((h, w)) < density).astype(np.uint8))


# ---------------------------------------------------------------------------
# Rect
# ---------------------------------------------------------------------------


def test_rect_dimensions():
    r = Rect(2, 3, 7, 5)
    assert (r.width, r.height, r.area) == (5, 2, 10)
    assert not r.is_empty


def test_rect_inverted_is_empty():
    r = Rect(5, 5, 2, 9)
    assert r.is_empty
    assert r.width == 0 and r.area == 0


def test_rect_clipped():
    assert Rect(-3, -1, 12, 20).clipped(10, 8) == Rect(0, 0, 10, 8)
    assert Rect(2, 2, 4, 4).clipped(10, 8) == Rect(2, 2, 4, 4)


def test_rect_intersects():
    a = Rect(0, 0, 4, 4)
    assert a.intersects(Rect(3, 3, 6, 6))
    assert not a.intersects(Rect(4, 0, 8, 4))  # edge contact, half-open


# ---------------------------------------------------------------------------
# point operations
# ---------------------------------------------------------------------------


def test_invert_constants():
    assert invert(GrayImage.constant(3, 2, 0)) == GrayImage.constant(3, 2, 255)
    assert invert(GrayImage.constant(3, 2, 255)) == GrayImage.constant(3, 2, 0)


def test_invert_involution():
    rng = np.random.default_rng(0)
    img = random_gray(rng)
    assert invert(invert(img)) == img


def test_binarize_strict_inequality():
    assert binarize(GrayImage.constant(2, 2, 0), 0) == BinaryMask(np.zeros((2, 2), np.uint8))
    assert binarize(GrayImage.constant(2, 2, 255), 0) == BinaryMask(np.ones((2, 2), np.uint8))
    img = GrayImage(np.array([[0, 128, 255]], np.uint8))
    assert binarize(img, 128).bits.tolist() == [[0, 0, 1]]


def test_mask_rejects_values_above_one():
    with pytest.raises(ValueError):
        BinaryMask(np.array([[0, 2]], np.uint8))


def test_images_are_immutable():
    img = GrayImage.constant(2, 2, 5)
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 9


# ---------------------------------------------------------------------------
# gaussian blur
# ---------------------------------------------------------------------------


def test_blur_sigma_zero_identity():
    rng = np.random.default_rng(1)
    img = random_gray(rng, max_side=16)
    assert gaussian_blur(img, 0.0) == img


def test_blur_negative_sigma_rejected():
    with pytest.raises(ValueError):
        gaussian_blur(GrayImage.constant(4, 4, 10), -1.0)


def test_blur_preserves_constant():
    img = GrayImage.constant(12, 9, 100)
    assert gaussian_blur(img, 2.5) == img


def test_blur_impulse_matches_kernel_formula():
    """Centered impulse response equals the normalized 2-D Gaussian."""
    sigma = 1.0
    radius = math.ceil(3 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(xs**2) / (2 * sigma**2))
    k1 /= k1.sum()
    pixels = np.zeros((9, 9), np.uint8)
    pixels[4, 4] = 255
    out = gaussian_blur(GrayImage(pixels), sigma).pixels
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            expected = math.floor(255 * k1[radius + dy] * k1[radius + dx] + 0.5)
            assert out[4 + dy, 4 + dx] == expected


def blur_direct_2d(pixels, sigma):
    """Direct dense 2-D convolution with edge-repeat mirror padding."""
    radius = math.ceil(3 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(xs**2) / (2 * sigma**2))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    padded = np.pad(pixels.astype(np.float64), radius, mode="symmetric")
    h, w = pixels.shape
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            out[y, x] = np.sum(padded[y : y + 2 * radius + 1, x : x + 2 * radius + 1] * k2)
    return out


def test_blur_matches_direct_convolution():
    rng = np.random.default_rng(2)
    for sigma in (0.7, 1.0, 2.5):
        img = random_gray(rng, max_side=16)
        expected = np.clip(np.floor(blur_direct_2d(img.pixels, sigma) + 0.5), 0, 255)
        assert np.array_equal(gaussian_blur(img, sigma).pixels, expected.astype(np.uint8))


def test_blur_preserves_total_intensity():
    """Mirror padding keeps the float total exact; rounding moves each
    pixel by at most 0.5, bounding the drift by half the pixel count."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        img = random_gray(rng, max_side=32)
        sigma = float(rng.uniform(0.3, 4.0))
        out = gaussian_blur(img, sigma)
        drift = abs(int(out.pixels.sum(dtype=np.int64)) - int(img.pixels.sum(dtype=np.int64)))
        assert drift <= 0.5 * img.pixels.size


# ---------------------------------------------------------------------------
# otsu
# ---------------------------------------------------------------------------


def otsu_brute_force(pixels):
    """Exact-rational argmax of between-class variance, smallest t wins."""
    hist = np.bincount(pixels.ravel(), minlength=256)
    total = int(hist.sum())
    best_t, best = -1, Fraction(-1)
    for t in range(256):
        w0 = int(hist[: t + 1].sum())
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        s0 = int((hist[: t + 1] * np.arange(t + 1)).sum())
        s1 = int((hist * np.arange(256)).sum()) - s0
        mu0 = Fraction(s0, w0)
        mu1 = Fraction(s1, w1)
        variance = Fraction(w0 * w1) * (mu0 - mu1) ** 2
        if variance > best:
            best_t, best = t, variance
    return best_t


def test_otsu_examples():
    assert otsu_threshold(GrayImage(np.array([[0, 0, 0, 255, 255]], np.uint8))) == 0
    assert otsu_threshold(GrayImage.constant(5, 1, 7)) == 7
    assert otsu_threshold(GrayImage(np.array([[10, 10, 10, 10, 200, 200]], np.uint8))) == 10


def test_otsu_matches_exact_brute_force():
    rng = np.random.default_rng(4)
    for i in range(100):
        # narrow value ranges force histogram collisions and tied variances
        lo = int(rng.integers(0, 250))
        hi = min(255, lo + int(rng.integers(1, 40)))
        img = random_gray(rng, max_side=24, lo=lo, hi=hi)
        if len(np.unique(img.pixels)) == 1:
            continue
        assert otsu_threshold(img) == otsu_brute_force(img.pixels), f"instance {i}"


def test_otsu_tie_breaks_toward_smallest():
    # two-value histogram 100 vs 200: every t in [100,199] gives the same
    # class split, so the smallest must win
    img = GrayImage(np.array([[100, 200]], np.uint8))
    assert otsu_threshold(img) == 100


# ---------------------------------------------------------------------------
# downsample
# ---------------------------------------------------------------------------


def test_downsample_factor_one_identity():
    rng = np.random.default_rng(5)
    img = random_gray(rng, max_side=10)
    assert downsample(img, 1) == img


def test_downsample_constant():
    assert downsample(GrayImage.constant(4, 4, 80), 2) == GrayImage.constant(2, 2, 80)


def test_downsample_block_mean():
    img = GrayImage(np.array([[0, 100], [100, 200]], np.uint8))
    assert downsample(img, 2).pixels.tolist() == [[100]]


def test_downsample_partial_blocks_match_naive():
    rng = np.random.default_rng(6)
    for _ in range(25):
        img = random_gray(rng, max_side=17)
        factor = int(rng.integers(2, 6))
        out = downsample(img, factor)
        eh = -(-img.height // factor)
        ew = -(-img.width // factor)
        assert out.pixels.shape == (eh, ew)
        for by in range(eh):
            for bx in range(ew):
                block = img.pixels[by * factor : (by + 1) * factor, bx * factor : (bx + 1) * factor]
                expected = math.floor(block.mean() + 0.5)
                assert out.pixels[by, bx] == expected


# ---------------------------------------------------------------------------
# integral images
# ---------------------------------------------------------------------------


def naive_integral_table(bits):
    """Textbook row recurrence, pure Python."""
    h, w = bits.shape
    table = [[0] * (w + 1) for _ in range(h + 1)]
    for y in range(h):
        row = 0
        for x in range(w):
            row += int(bits[y, x])
            table[y + 1][x + 1] = table[y][x + 1] + row
    return table


def test_integral_two_by_two_ones():
    table = build_integral(BinaryMask(np.ones((2, 2), np.uint8))).table
    assert table.tolist() == [[0, 0, 0], [0, 1, 2], [0, 2, 4]]


def test_integral_all_zero():
    table = build_integral(BinaryMask(np.zeros((3, 4), np.uint8))).table
    assert not table.any()


def test_integral_matches_naive_recurrence():
    rng = np.random.default_rng(7)
    for _ in range(100):
        mask = random_mask(rng)
        table = build_integral(mask).table
        assert table.tolist() == naive_integral_table(mask.bits)


def test_query_full_image():
    ii = build_integral(BinaryMask(np.ones((2, 2), np.uint8)))
    assert query_region_sum(ii, Rect(0, 0, 2, 2)) == 4


def test_query_empty_rect():
    ii = build_integral(BinaryMask(np.ones((4, 4), np.uint8)))
    assert query_region_sum(ii, Rect(2, 2, 2, 3)) == 0
    assert query_region_sum(ii, Rect(3, 3, 1, 1)) == 0


def test_query_clips_out_of_bounds():
    mask = BinaryMask(np.ones((4, 4), np.uint8))
    ii = build_integral(mask)
    assert query_region_sum(ii, Rect(-5, -5, 10, 10)) == 16
    assert query_region_sum(ii, Rect(2, 2, 99, 99)) == 4
    assert query_region_sum(ii, Rect(6, 6, 9, 9)) == 0


def test_query_random_rects_match_naive_sums():
    rng = np.random.default_rng(8)
    for _ in range(40):
        mask = random_mask(rng, max_side=32)
        ii = build_integral(mask)
        for _ in range(25):
            x0, x1 = sorted(rng.integers(-4, mask.width + 5, size=2).tolist())
            y0, y1 = sorted(rng.integers(-4, mask.height + 5, size=2).tolist())
            rect = Rect(x0, y0, x1, y1)
            c = rect.clipped(mask.width, mask.height)
            expected = 0 if c.is_empty else int(mask.bits[c.y0 : c.y1, c.x0 : c.x1].sum())
            assert query_region_sum(ii, rect) == expected


def test_query_all_rects_via_band_prefix_identity():
    """Every rect sum is right for every rect, not just sampled ones.

    The 4-corner query of rect [x0,x1)x[y0,y1) reads only the band
    difference D = T[y1,:] - T[y0,:] at x0 and x1, and the correct answer
    for that band is the prefix-sum vector of its column sums. Checking D
    against an independently accumulated prefix vector for every (y0,y1)
    pair therefore proves all O(w^2 h^2) rect queries at once.
    """
    rng = np.random.default_rng(9)
    for _ in range(10):
        mask = random_mask(rng, max_side=24)
        t = build_integral(mask).table
        for y0 in range(mask.height + 1):
            for y1 in range(y0, mask.height + 1):
                band_cols = mask.bits[y0:y1].sum(axis=0, dtype=np.int64)
                prefix = np.concatenate(([0], np.cumsum(band_cols)))
                assert np.array_equal(t[y1] - t[y0], prefix)


# ---------------------------------------------------------------------------
# connected components
# ---------------------------------------------------------------------------


def test_components_empty_mask():
    assert connected_components(BinaryMask(np.zeros((3, 3), np.uint8))) == []


def test_components_solid_block():
    bits = np.zeros((5, 5), np.uint8)
    bits[1:4, 1:4] = 1
    comps = connected_components(BinaryMask(bits))
    assert len(comps) == 1
    assert comps[0].area == 9
    assert comps[0].bbox == Rect(1, 1, 4, 4)


def test_components_two_blocks():
    bits = np.zeros((2, 6), np.uint8)
    bits[:, 0:2] = 1
    bits[:, 4:6] = 1
    comps = connected_components(BinaryMask(bits))
    assert [c.area for c in comps] == [4, 4]
    assert [c.id for c in comps] == [1, 2]


def test_components_diagonal_touch_merges():
    bits = np.array([[1, 0], [0, 1]], np.uint8)
    comps = connected_components(BinaryMask(bits))
    assert len(comps) == 1 and comps[0].area == 2


def bfs_components(bits):
    """Independent 8-connected labeling by breadth-first queue."""
    from collections import deque

    h, w = bits.shape
    seen = np.zeros((h, w), dtype=bool)
    out = []
    for y in range(h):
        for x in range(w):
            if not bits[y, x] or seen[y, x]:
                continue
            queue = deque([(y, x)])
            seen[y, x] = True
            cells = []
            while queue:
                cy, cx = queue.popleft()
                cells.append((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            ys = [c[0] for c in cells]
            xs = [c[1] for c in cells]
            out.append((len(cells), Rect(min(xs), min(ys), max(xs) + 1, max(ys) + 1)))
    return out


def test_components_match_independent_bfs():
    rng = np.random.default_rng(10)
    for _ in range(40):
        mask = random_mask(rng, max_side=24, density=0.35)
        comps = connected_components(mask)
        oracle = bfs_components(mask.bits)
        assert [(c.area, c.bbox) for c in comps] == oracle
        assert [c.id for c in comps] == list(range(1, len(comps) + 1))


def test_component_areas_sum_to_set_bits():
    rng = np.random.default_rng(11)
    for _ in range(20):
        mask = random_mask(rng, density=0.6)
        comps = connected_components(mask)
        assert sum(c.area for c in comps) == int(mask.bits.sum())
        for c in comps:
            assert 1 <= c.area <= c.bbox.area


# ---------------------------------------------------------------------------
# PGM I/O
# ---------------------------------------------------------------------------


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    img = random_gray(rng, max_side=20)
    path = tmp_path / "img.pgm"
    write_pgm(img, path)
    assert read_pgm(path) == img


def test_mask_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    mask = random_mask(rng, max_side=20)
    path = tmp_path / "mask.pgm"
    write_mask_pgm(mask, path)
    assert read_mask_pgm(path) == mask


def test_pgm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n\x07\xff")
    img = read_pgm(path)
    assert img.pixels.tolist() == [[7, 255]]


def test_mask_pgm_any_nonzero_reads_as_one(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n3 1\n255\n\x00\x01\xc8")
    assert read_mask_pgm(path).bits.tolist() == [[0, 1, 1]]


def test_pgm_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(path)


def test_pgm_rejects_truncated_raster(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(ValueError):
        read_pgm(path)
