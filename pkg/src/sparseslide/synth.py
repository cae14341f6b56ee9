"""Synthetic slides and scorers for exercising the sampling pipeline.

Real gigapixel slides are unavailable in tests and CI, so this module
fabricates the two rasters the pipeline actually consumes: a thumbnail
whose tissue regions are unions of random ellipses (intensity ~60 on a
255 ground, so the blur/Otsu pipeline sees realistic soft edges), and an
annotation mask whose components are random connected blobs of exact
pixel area placed strictly inside tissue.

Everything is driven by the pure-Python generator in :mod:`.rng`; the
same spec and seed reproduce the same slide, cohort and scores anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .engine import PatchScorer
from .imaging import BinaryMask, GrayImage, build_integral
from .rng import Rng, derive_seed
from .tiling import (
    MODE_INFERENCE,
    SlideGrid,
    label_patches,
    label_threshold,
    tile_slide,
    tissue_mask,
)

THUMB_SCALE_DEFAULT = 2.0 / 40.0  # thumbnail rendered at the 2x level
ANN_SCALE_DEFAULT = 0.05

_PLACEMENT_ATTEMPTS = 200
_COVERAGE_ITERATION_CAP = 100_000


@dataclass(frozen=True)
class SynthSlideSpec:
    """Recipe for one synthetic slide.

    ``n_components == 0`` makes the slide negative (no annotation).
    ``component_area_range`` is in annotation-mask pixels, inclusive on
    both ends. ``clustering`` moves annotation components from scattered
    (0.0) to packed around a single tissue point (1.0).
    """

    ref_width: int
    ref_height: int
    tissue_coverage: float = 0.65
    n_components: int = 0
    component_area_range: tuple[int, int] = (30, 60)
    clustering: float = 0.0
    thumb_scale: float = THUMB_SCALE_DEFAULT
    ann_scale: float = ANN_SCALE_DEFAULT

    def __post_init__(self):
        if self.ref_width < 1 or self.ref_height < 1:
            raise ValueError("slide dimensions must be positive")
        if not 0.0 < self.tissue_coverage <= 1.0:
            raise ValueError("tissue_coverage must be in (0, 1]")
        if self.n_components < 0:
            raise ValueError("n_components must be >= 0")
        lo, hi = self.component_area_range
        if lo < 1 or hi < lo:
            raise ValueError("component_area_range must satisfy 1 <= lo <= hi")
        if not 0.0 <= self.clustering <= 1.0:
            raise ValueError("clustering must be in [0, 1]")
        if not 0.0 < self.thumb_scale <= 1.0 or not 0.0 < self.ann_scale <= 1.0:
            raise ValueError("scales must be in (0, 1]")

    @property
    def label(self) -> bool:
        return self.n_components > 0


@dataclass(frozen=True)
class SynthScorerSpec:
    """Class-conditional scorer: class mean plus bounded hash noise."""

    pos_mean: float = 0.85
    neg_mean: float = 0.15
    noise_scale: float = 0.10

    def __post_init__(self):
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


class _Ellipse(NamedTuple):
    cx: float
    cy: float
    rx: float
    ry: float


def _raster_ellipses(ellipses: list[_Ellipse], width: int, height: int, scale: float) -> np.ndarray:
    """Boolean union of the ellipses, coordinates multiplied by ``scale``."""
    out = np.zeros((height, width), dtype=bool)
    ys = np.arange(height, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    for e in ellipses:
        cx, cy, rx, ry = e.cx * scale, e.cy * scale, e.rx * scale, e.ry * scale
        x0 = max(0, int(np.floor(cx - rx)))
        x1 = min(width, int(np.ceil(cx + rx)) + 1)
        y0 = max(0, int(np.floor(cy - ry)))
        y1 = min(height, int(np.ceil(cy + ry)) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = (xs[x0:x1] - cx) / rx
        dy = (ys[y0:y1] - cy) / ry
        out[y0:y1, x0:x1] |= dy[:, None] ** 2 + dx[None, :] ** 2 <= 1.0
    return out


def _grow_tissue(rng: Rng, width: int, height: int, target: float) -> list[_Ellipse]:
    """Ellipse list whose union covers ~``target`` of a width x height frame.

    Each step adds an ellipse sized to a fraction of the remaining
    deficit, so the union lands within a fraction of a percent above the
    target instead of overshooting.
    """
    ellipses: list[_Ellipse] = []
    covered = np.zeros((height, width), dtype=bool)
    total = width * height
    frac = 0.0
    for _ in range(_COVERAGE_ITERATION_CAP):
        if frac >= target:
            return ellipses
        deficit = target - frac
        area_frac = min(0.03, max(0.002, 0.6 * deficit))
        area_px = area_frac * total
        aspect = rng.uniform(0.5, 2.0)
        rx = max(1.0, float(np.sqrt(area_px * aspect / np.pi)))
        ry = max(1.0, area_px / (np.pi * rx))
        e = _Ellipse(rng.uniform(0, width), rng.uniform(0, height), rx, ry)
        ellipses.append(e)
        covered |= _raster_ellipses([e], width, height, 1.0)
        frac = covered.sum() / total
    raise RuntimeError("spec infeasible: tissue coverage target not reached")


def _grow_component(
    rng: Rng,
    anchor: tuple[int, int],
    area: int,
    allowed: np.ndarray,
) -> list[tuple[int, int]] | None:
    """Random connected blob of exactly ``area`` pixels, or None if stuck.

    Growth is 4-connected over pixels where ``allowed`` is True, so the
    result is a single component under 8-connectivity as well.
    """
    ay, ax = anchor
    if not allowed[ay, ax]:
        return None
    height, width = allowed.shape
    body = {anchor}
    frontier = []
    seen = {anchor}

    def push_neighbors(y, x):
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < height and 0 <= nx < width and (ny, nx) not in seen:
                seen.add((ny, nx))
                if allowed[ny, nx]:
                    frontier.append((ny, nx))

    push_neighbors(ay, ax)
    while len(body) < area:
        if not frontier:
            return None
        pick = rng.randbelow(len(frontier))
        frontier[pick], frontier[-1] = frontier[-1], frontier[pick]
        y, x = frontier.pop()
        body.add((y, x))
        push_neighbors(y, x)
    return sorted(body)


def _block_neighborhood(blocked: np.ndarray, pixels: list[tuple[int, int]]) -> None:
    """Mark the pixels and their 8-neighborhoods as off-limits."""
    height, width = blocked.shape
    for y, x in pixels:
        blocked[max(0, y - 1) : min(height, y + 2), max(0, x - 1) : min(width, x + 2)] = True


def generate_slide(spec: SynthSlideSpec, seed: int) -> tuple[GrayImage, BinaryMask, tuple[int, int]]:
    """Fabricate one slide: thumbnail, annotation mask, reference dims.

    The thumbnail ground is 255 with tissue at 60. The annotation mask
    lives at ``spec.ann_scale`` relative to reference coordinates; its
    components have exact areas drawn from ``component_area_range``, are
    placed strictly inside tissue, and never touch each other (not even
    diagonally), so connected-component analysis recovers them exactly.
    """
    rng = Rng(seed)
    tw = max(1, int(np.ceil(spec.ref_width * spec.thumb_scale)))
    th = max(1, int(np.ceil(spec.ref_height * spec.thumb_scale)))
    aw = max(1, int(np.ceil(spec.ref_width * spec.ann_scale)))
    ah = max(1, int(np.ceil(spec.ref_height * spec.ann_scale)))

    if spec.tissue_coverage >= 0.995:
        tissue_thumb = np.ones((th, tw), dtype=bool)
        tissue_ann = np.ones((ah, aw), dtype=bool)
    else:
        ellipses = _grow_tissue(rng, tw, th, spec.tissue_coverage)
        tissue_thumb = _raster_ellipses(ellipses, tw, th, 1.0)
        tissue_ann = _raster_ellipses(ellipses, aw, ah, spec.ann_scale / spec.thumb_scale)

    thumb = np.full((th, tw), 255, dtype=np.uint8)
    thumb[tissue_thumb] = 60

    annotation = np.zeros((ah, aw), dtype=np.uint8)
    if spec.n_components > 0:
        tissue_flat = np.flatnonzero(tissue_ann)
        if len(tissue_flat) == 0:
            raise RuntimeError("spec infeasible: no tissue to annotate")
        blocked = np.zeros((ah, aw), dtype=bool)
        center_flat = int(tissue_flat[rng.randbelow(len(tissue_flat))])
        center = divmod(center_flat, aw)
        base_radius = 2.0 + (1.0 - spec.clustering) * min(aw, ah) / 3.0
        lo, hi = spec.component_area_range
        for _ in range(spec.n_components):
            area = rng.randint(lo, hi)
            body = None
            for attempt in range(_PLACEMENT_ATTEMPTS):
                if spec.clustering > 0 and rng.random() < spec.clustering:
                    # anchors pack around the cluster center; the radius
                    # relaxes with every failed attempt so dense packs
                    # stay feasible
                    radius = int(base_radius + 2 * attempt)
                    dy = rng.randint(-radius, radius)
                    dx = rng.randint(-radius, radius)
                    anchor = (center[0] + dy, center[1] + dx)
                    if not (0 <= anchor[0] < ah and 0 <= anchor[1] < aw):
                        continue
                else:
                    flat = int(tissue_flat[rng.randbelow(len(tissue_flat))])
                    anchor = divmod(flat, aw)
                body = _grow_component(rng, anchor, area, tissue_ann & ~blocked)
                if body is not None:
                    break
            if body is None:
                raise RuntimeError(
                    "spec infeasible: could not place annotation component "
                    f"of area {area} after {_PLACEMENT_ATTEMPTS} attempts"
                )
            for y, x in body:
                annotation[y, x] = 1
            _block_neighborhood(blocked, body)

    return GrayImage(thumb), BinaryMask(annotation), (spec.ref_width, spec.ref_height)


# ---------------------------------------------------------------------------
# scorers
# ---------------------------------------------------------------------------


class SyntheticScorer:
    """Deterministic class-conditional scorer with bounded hash noise.

    A patch scores its class mean plus ``noise_scale * u`` clamped to
    [0, 1], where u in [-1, 1) is a pure function of (slide id, patch
    index, scorer seed). The same patch therefore always receives the
    same score, across runs and across processes.
    """

    def __init__(
        self,
        spec: SynthScorerSpec,
        seed: int = 0,
        labels: dict[str, Sequence[bool]] | None = None,
    ):
        self.spec = spec
        self.seed = seed
        self._labels = labels

    def score(self, patch, grid: SlideGrid) -> float:
        if self._labels is not None:
            label = bool(self._labels[grid.slide_id][patch.index])
        else:
            label = patch.label
        base = self.spec.pos_mean if label else self.spec.neg_mean
        if self.spec.noise_scale == 0.0:
            return min(1.0, max(0.0, base))
        h = derive_seed(self.seed, grid.slide_id, patch.index)
        u = (h >> 11) * (2.0 / (1 << 53)) - 1.0
        return min(1.0, max(0.0, base + self.spec.noise_scale * u))


def synth_scorer(
    spec: SynthScorerSpec,
    labels: dict[str, Sequence[bool]] | None = None,
    seed: int = 0,
) -> SyntheticScorer:
    """Build the synthetic scorer; labels default to the grid's own."""
    return SyntheticScorer(spec, seed=seed, labels=labels)


def oracle_scorer(pos: float = 0.9, neg: float = 0.1) -> SyntheticScorer:
    """Noise-free scorer that ranks every positive above every negative."""
    return SyntheticScorer(SynthScorerSpec(pos_mean=pos, neg_mean=neg, noise_scale=0.0))


# ---------------------------------------------------------------------------
# cohorts
# ---------------------------------------------------------------------------


class SlideSample(NamedTuple):
    """One generated slide before tiling."""

    slide_id: str
    spec: SynthSlideSpec
    thumbnail: GrayImage
    annotation: BinaryMask
    ref_dims: tuple[int, int]


class CohortSlide(NamedTuple):
    """One tiled, labeled slide ready for evaluation."""

    grid: SlideGrid
    scorer: PatchScorer
    label: bool


def generate_samples(slide_specs: Sequence[SynthSlideSpec], seed: int) -> list[SlideSample]:
    """Generate all slides of a cohort; slide i uses seed ``seed + i``."""
    samples = []
    for i, spec in enumerate(slide_specs):
        thumb, annotation, dims = generate_slide(spec, seed + i)
        samples.append(SlideSample(f"slide_{i:03d}", spec, thumb, annotation, dims))
    return samples


def assemble_cohort(
    samples: Sequence[SlideSample],
    scorer_spec: SynthScorerSpec,
    seed: int,
    magnification: float,
    mode: str = MODE_INFERENCE,
    scorer_seed: int | None = None,
) -> tuple[list[CohortSlide], int | None]:
    """Tile, label and attach scorers to generated slides.

    The labeling threshold is pooled over every positive slide's
    annotation mask, mirroring how a shared threshold would be derived
    from a full annotation corpus. Returns the cohort and the threshold
    (None when the cohort has no positive slides).
    """
    grids = []
    for s in samples:
        mask = tissue_mask(s.thumbnail)
        grid = tile_slide(
            s.slide_id,
            s.ref_dims,
            magnification,
            mode,
            build_integral(mask),
            s.spec.thumb_scale,
            label=s.spec.label,
        )
        grids.append(grid)

    positive = [s for s in samples if s.spec.label]
    threshold = label_threshold([s.annotation for s in positive]) if positive else None
    labeled = []
    for s, grid in zip(samples, grids):
        if s.spec.label:
            grid = label_patches(grid, build_integral(s.annotation), s.spec.ann_scale, threshold)
            if grid.positive_patches == 0:
                raise RuntimeError(
                    f"spec infeasible: positive slide {s.slide_id} produced no "
                    "positive patches (components too small or lost to tiling)"
                )
        labeled.append(grid)

    scorer = synth_scorer(
        scorer_spec, seed=scorer_seed if scorer_seed is not None else derive_seed(seed, "scorer")
    )
    return [CohortSlide(g, scorer, g.label) for g in labeled], threshold


def generate_cohort(
    slide_specs: Sequence[SynthSlideSpec],
    scorer_spec: SynthScorerSpec,
    seed: int,
    magnification: float = 10.0,
    mode: str = MODE_INFERENCE,
) -> list[CohortSlide]:
    """Full synthetic cohort: generate, tile, label, attach scorer."""
    samples = generate_samples(slide_specs, seed)
    cohort, _ = assemble_cohort(samples, scorer_spec, seed, magnification, mode)
    return cohort
