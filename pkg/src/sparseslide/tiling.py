"""Patch grids over slide images.

A slide is addressed in reference coordinates: pixels of the highest
magnification level (40x). Every other level sees the same physical
patch, so a patch's footprint in reference pixels grows as the level
drops: round(224 * 40 / level) reference pixels per side.

Two stride policies exist. ``training_overlap`` steps 224 reference
pixels regardless of level, producing heavily overlapping patches at low
magnification (an augmentation trick). ``inference_tiling`` steps one
full patch span, producing disjoint tiles. Patches that stick out past
the slide edge are dropped rather than padded, and a patch is only kept
when at least 20% of its area lands on tissue.

The grid JSON written by :func:`save_grid` is the interchange unit
between the ``tile`` and ``run`` CLI commands.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass

from .imaging import (
    TISSUE_FRACTION_MIN,
    BinaryMask,
    GrayImage,
    IntegralImage,
    Rect,
    binarize,
    build_integral,
    connected_components,
    gaussian_blur,
    invert,
    otsu_threshold,
    query_region_sum,
)

log = logging.getLogger(__name__)

MAGNIFICATIONS = (2.5, 5.0, 10.0, 20.0, 40.0)
REFERENCE_MAGNIFICATION = 40.0
PATCH_SIZE = 224  # model input, pixels at the patch's own level

MODE_TRAINING = "training_overlap"
MODE_INFERENCE = "inference_tiling"
_MODES = (MODE_TRAINING, MODE_INFERENCE)

TISSUE_BLUR_SIGMA = 2.5


def validate_magnification(level: float) -> float:
    level = float(level)
    if level not in MAGNIFICATIONS:
        raise ValueError(f"magnification must be one of {MAGNIFICATIONS}, got {level}")
    return level


def patch_span_ref(level: float) -> int:
    """Side length of one patch in reference pixels."""
    validate_magnification(level)
    return round(PATCH_SIZE * REFERENCE_MAGNIFICATION / level)


def stride_for(level: float, mode: str) -> int:
    """Grid stride in reference pixels for the given policy."""
    validate_magnification(level)
    if mode == MODE_TRAINING:
        return PATCH_SIZE
    if mode == MODE_INFERENCE:
        return patch_span_ref(level)
    raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


@dataclass(frozen=True)
class Patch:
    """One grid cell: placement, tissue content and annotation label."""

    index: int
    grid_row: int
    grid_col: int
    rect_ref: Rect
    tissue_fraction: float
    annotated_pixels: int = 0
    label: bool = False


@dataclass(frozen=True)
class SlideGrid:
    """All retained patches of one slide at one magnification."""

    slide_id: str
    ref_width: int
    ref_height: int
    magnification: float
    mode: str
    patch_span: int
    stride: int
    patches: tuple[Patch, ...]
    label: bool = False
    label_threshold: int | None = None

    def __post_init__(self):
        validate_magnification(self.magnification)
        if self.mode not in _MODES:
            raise ValueError(f"unknown stride mode {self.mode!r}")
        if self.patch_span != patch_span_ref(self.magnification):
            raise ValueError("patch_span inconsistent with magnification")
        if self.stride != stride_for(self.magnification, self.mode):
            raise ValueError("stride inconsistent with magnification/mode")
        object.__setattr__(self, "patches", tuple(self.patches))
        seen = set()
        for pos, patch in enumerate(self.patches):
            if patch.index != pos:
                raise ValueError("patch indices must be contiguous raster order")
            r = patch.rect_ref
            if r.x0 < 0 or r.y0 < 0 or r.x1 > self.ref_width or r.y1 > self.ref_height:
                raise ValueError(f"patch {patch.index} exceeds slide bounds")
            if r.width != self.patch_span or r.height != self.patch_span:
                raise ValueError(f"patch {patch.index} has wrong span")
            key = (patch.grid_row, patch.grid_col)
            if key in seen:
                raise ValueError(f"duplicate grid coordinate {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def positive_patches(self) -> int:
        return sum(1 for p in self.patches if p.label)


def tissue_mask(thumbnail: GrayImage, sigma: float = TISSUE_BLUR_SIGMA) -> BinaryMask:
    """Foreground mask from a low-magnification thumbnail.

    Pipeline: photometric inversion (tissue is dark on a bright ground),
    Gaussian blur to close small holes, then Otsu binarization of the
    blurred image against its own threshold.
    """
    blurred = gaussian_blur(invert(thumbnail), sigma)
    return binarize(blurred, otsu_threshold(blurred))


def scale_rect(rect: Rect, scale: float) -> Rect:
    """Map a rect into a raster at ``scale`` times the resolution.

    Origin is floored and extent is ceiled, so the mapped rect covers
    every pixel the original touches even partially.
    """
    return Rect(
        math.floor(rect.x0 * scale),
        math.floor(rect.y0 * scale),
        math.ceil(rect.x1 * scale),
        math.ceil(rect.y1 * scale),
    )


def tile_slide(
    slide_id: str,
    ref_dims: tuple[int, int],
    magnification: float,
    mode: str,
    tissue_integral: IntegralImage,
    thumb_scale: float,
    label: bool = False,
) -> SlideGrid:
    """Lay a patch grid over a slide and keep the tissue-bearing cells.

    ``tissue_integral`` is the integral image of the thumbnail tissue
    mask and ``thumb_scale`` maps reference coordinates into it
    (thumbnail pixels per reference pixel, < 1). Patches are enumerated
    in raster order; each retained patch keeps its grid coordinates so
    dropped neighbors leave no holes in the numbering of rows/columns.
    """
    ref_width, ref_height = ref_dims
    span = patch_span_ref(magnification)
    stride = stride_for(magnification, mode)
    patches: list[Patch] = []
    if span > ref_width or span > ref_height:
        log.warning("slide %s is smaller than one %gx patch; empty grid", slide_id, magnification)
    else:
        for row, y in enumerate(range(0, ref_height - span + 1, stride)):
            for col, x in enumerate(range(0, ref_width - span + 1, stride)):
                rect = Rect(x, y, x + span, y + span)
                mapped = scale_rect(rect, thumb_scale).clipped(
                    tissue_integral.width, tissue_integral.height
                )
                if mapped.is_empty:
                    fraction = 0.0
                else:
                    fraction = query_region_sum(tissue_integral, mapped) / mapped.area
                if fraction >= TISSUE_FRACTION_MIN:
                    patches.append(Patch(len(patches), row, col, rect, fraction))
    return SlideGrid(
        slide_id=slide_id,
        ref_width=ref_width,
        ref_height=ref_height,
        magnification=validate_magnification(magnification),
        mode=mode,
        patch_span=span,
        stride=stride,
        patches=tuple(patches),
        label=label,
    )


def label_threshold(annotation_masks: list[BinaryMask]) -> int:
    """Minimum annotated area for a patch to count as positive.

    Pools the component areas of every annotation mask and takes the
    10th percentile by the nearest-rank rule (the ceil(n/10)-th smallest
    of n areas). Small stray components therefore cannot dominate the
    labeling, while 90% of real components stay above the threshold.
    """
    areas: list[int] = []
    for mask in annotation_masks:
        areas.extend(c.area for c in connected_components(mask))
    if not areas:
        raise ValueError("empty annotation corpus: no components to derive a threshold from")
    areas.sort()
    rank = -(-len(areas) // 10)  # ceil(n/10), integer-exact
    return areas[rank - 1]


def label_patches(
    grid: SlideGrid,
    annotation_integral: IntegralImage,
    ann_scale: float,
    threshold: int,
) -> SlideGrid:
    """Label each patch by its annotated pixel count.

    ``ann_scale`` maps reference coordinates into the annotation mask.
    A patch is positive when at least ``threshold`` annotation pixels
    fall inside its footprint. Only meaningful for positive slides;
    negative slides keep their all-negative default labels.
    """
    if not grid.label:
        raise ValueError("label_patches applies to positive slides only")
    relabeled = []
    for patch in grid.patches:
        mapped = scale_rect(patch.rect_ref, ann_scale).clipped(
            annotation_integral.width, annotation_integral.height
        )
        pixels = 0 if mapped.is_empty else query_region_sum(annotation_integral, mapped)
        relabeled.append(
            dataclasses.replace(patch, annotated_pixels=pixels, label=pixels >= threshold)
        )
    return dataclasses.replace(grid, patches=tuple(relabeled), label_threshold=threshold)


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def grid_to_dict(grid: SlideGrid) -> dict:
    return {
        "slide_id": grid.slide_id,
        "ref_width": grid.ref_width,
        "ref_height": grid.ref_height,
        "magnification": grid.magnification,
        "mode": grid.mode,
        "label": grid.label,
        "threshold": grid.label_threshold,
        "patches": [
            {
                "index": p.index,
                "grid_row": p.grid_row,
                "grid_col": p.grid_col,
                "rect": [p.rect_ref.x0, p.rect_ref.y0, p.rect_ref.x1, p.rect_ref.y1],
                "tissue_fraction": p.tissue_fraction,
                "annotated_pixels": p.annotated_pixels,
                "label": p.label,
            }
            for p in grid.patches
        ],
    }


def grid_from_dict(doc: dict) -> SlideGrid:
    magnification = validate_magnification(doc["magnification"])
    patches = tuple(
        Patch(
            index=p["index"],
            grid_row=p["grid_row"],
            grid_col=p["grid_col"],
            rect_ref=Rect(*p["rect"]),
            tissue_fraction=p["tissue_fraction"],
            annotated_pixels=p["annotated_pixels"],
            label=p["label"],
        )
        for p in doc["patches"]
    )
    return SlideGrid(
        slide_id=doc["slide_id"],
        ref_width=doc["ref_width"],
        ref_height=doc["ref_height"],
        magnification=magnification,
        mode=doc["mode"],
        patch_span=patch_span_ref(magnification),
        stride=stride_for(magnification, doc["mode"]),
        patches=patches,
        label=doc["label"],
        label_threshold=doc["threshold"],
    )


def dumps_grid(grid: SlideGrid) -> str:
    """Canonical JSON text for a grid (stable key order, no whitespace drift)."""
    return json.dumps(grid_to_dict(grid), sort_keys=True, separators=(",", ":")) + "\n"


def save_grid(grid: SlideGrid, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_grid(grid))


def load_grid(path) -> SlideGrid:
    with open(path, "r", encoding="utf-8") as fh:
        return grid_from_dict(json.load(fh))
