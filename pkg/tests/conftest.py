"""Shared helpers: hand-built grids and score-by-index scorers.

Most tests need a labeled grid without running the imaging pipeline, so
grids are assembled directly from Patch records (single row, full
tissue). Geometry is valid per SlideGrid's own invariants; only the
labels and scores matter to the consumers.
"""

from sparseslide.imaging import Rect
from sparseslide.tiling import MODE_INFERENCE, Patch, SlideGrid, patch_span_ref


def build_grid(labels, slide_id="s", magnification=40.0):
    """Single-row inference grid with one patch per label."""
    span = patch_span_ref(magnification)
    patches = tuple(
        Patch(
            index=i,
            grid_row=0,
            grid_col=i,
            rect_ref=Rect(i * span, 0, (i + 1) * span, span),
            tissue_fraction=1.0,
            label=bool(lab),
        )
        for i, lab in enumerate(labels)
    )
    return SlideGrid(
        slide_id=slide_id,
        ref_width=span * max(len(patches), 1),
        ref_height=span,
        magnification=magnification,
        mode=MODE_INFERENCE,
        patch_span=span,
        stride=span,
        patches=patches,
        label=any(labels),
    )


class SequenceScorer:
    """Deterministic scorer reading scores[patch.index]."""

    def __init__(self, values):
        self.values = [float(v) for v in values]

    def score(self, patch, grid):
        return self.values[patch.index]
