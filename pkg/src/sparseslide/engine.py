"""Sequential patch sampling with a bounded candidate list.

Instead of scoring every patch of a slide, patches are visited in a
uniformly random order and only the best few scores seen so far are
retained. The slide-level score is the mean of that candidate list, so
it converges onto the dense-scan score long before the scan finishes --
usually as soon as one high-scoring patch has been sampled.

Semantics that everything downstream relies on:

* the candidate list holds the top ``capacity`` scores of the patches
  sampled so far, with ties resolved in favor of the earlier arrival
  (a new score must be strictly greater than the current minimum to
  displace it);
* a patch can enter the list only at the moment it is sampled;
* the slide score before ``capacity`` patches have been sampled is the
  mean over the entries actually present, and 0.0 for an empty list.

Scores are combined with ``math.fsum`` so a slide score depends only on
the multiset of candidate scores, never on arrival or storage order.
"""

from __future__ import annotations

import csv
import math
from bisect import insort
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .rng import Rng
from .tiling import Patch, SlideGrid

DEFAULT_CAPACITY = 3


class PatchScorer(Protocol):
    """Anything that maps a patch to a deterministic score in [0, 1]."""

    def score(self, patch: Patch, grid: SlideGrid) -> float: ...


class TableScorer:
    """Scores looked up from a (slide_id, patch_index) table."""

    def __init__(self, table: dict[tuple[str, int], float]):
        self._table = dict(table)

    def score(self, patch: Patch, grid: SlideGrid) -> float:
        try:
            return self._table[(grid.slide_id, patch.index)]
        except KeyError:
            raise KeyError(
                f"no score for patch {patch.index} of slide {grid.slide_id!r}"
            ) from None


def load_score_table(path) -> TableScorer:
    """Read a score table CSV with columns slide_id, patch_index, score."""
    table: dict[tuple[str, int], float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            table[(row["slide_id"], int(row["patch_index"]))] = float(row["score"])
    return TableScorer(table)


class CandidateList:
    """Bounded top-scores list over a stream of (patch_index, score) pairs.

    Equivalent to keeping the top ``capacity`` of everything seen so far
    under (score descending, arrival ascending): an incoming score must
    strictly exceed the current minimum to enter a full list, and when
    several entries tie at the minimum the most recent arrival is the
    one evicted.
    """

    __slots__ = ("capacity", "_entries", "_arrivals")

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[list] = []  # [patch_index, score, arrival]
        self._arrivals = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def min_score(self) -> float:
        if not self._entries:
            raise ValueError("empty candidate list has no minimum")
        return min(e[1] for e in self._entries)

    def insert(self, patch_index: int, score: float) -> bool:
        """Offer one sampled patch; returns True when it entered the list."""
        if any(e[0] == patch_index for e in self._entries):
            raise ValueError(f"patch {patch_index} already in candidate list")
        self._arrivals += 1
        if len(self._entries) < self.capacity:
            self._entries.append([patch_index, score, self._arrivals])
            return True
        # eviction candidate: minimum score, ties broken toward the most
        # recent arrival (earlier arrivals hold their seat on equal scores)
        evict = min(range(len(self._entries)), key=lambda i: (self._entries[i][1], -self._entries[i][2]))
        if score > self._entries[evict][1]:
            self._entries[evict] = [patch_index, score, self._arrivals]
            return True
        return False

    def entries(self) -> tuple[tuple[int, float], ...]:
        """(patch_index, score) pairs, score descending, ties by ascending index."""
        return tuple(sorted(((e[0], e[1]) for e in self._entries), key=lambda e: (-e[1], e[0])))

    def slide_score(self) -> float:
        """Mean of the current entries; 0.0 when empty."""
        if not self._entries:
            return 0.0
        return math.fsum(e[1] for e in self._entries) / len(self._entries)


def slide_score(candidates: CandidateList) -> float:
    return candidates.slide_score()


def sample_permutation(n: int, rng: Rng) -> list[int]:
    """Uniform random permutation of range(n) by Fisher-Yates."""
    perm = list(range(n))
    rng.shuffle(perm)
    return perm


@dataclass(frozen=True)
class TraceStep:
    step: int  # 1-based
    patch_index: int
    score: float
    entered: bool
    candidates: tuple[tuple[int, float], ...]
    slide_score: float


@dataclass(frozen=True)
class InferenceTrace:
    slide_id: str
    capacity: int
    permutation: tuple[int, ...]
    steps: tuple[TraceStep, ...]
    rng_seed: int | None = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final_slide_score(self) -> float:
        return self.steps[-1].slide_score if self.steps else 0.0


def run_sequential(
    grid: SlideGrid,
    scorer: PatchScorer,
    permutation: Sequence[int],
    capacity: int = DEFAULT_CAPACITY,
    rng_seed: int | None = None,
) -> InferenceTrace:
    """Score every patch of a slide in the given order, recording each step.

    ``permutation`` must be a permutation of range(len(grid.patches)).
    An empty grid produces an empty trace (slide score 0.0).
    """
    if sorted(permutation) != list(range(len(grid.patches))):
        raise ValueError("permutation must cover every patch index exactly once")
    candidates = CandidateList(capacity)
    steps = []
    for step, patch_index in enumerate(permutation, start=1):
        patch = grid.patches[patch_index]
        score = scorer.score(patch, grid)
        entered = candidates.insert(patch_index, score)
        steps.append(
            TraceStep(
                step=step,
                patch_index=patch_index,
                score=score,
                entered=entered,
                candidates=candidates.entries(),
                slide_score=candidates.slide_score(),
            )
        )
    return InferenceTrace(grid.slide_id, capacity, tuple(permutation), tuple(steps), rng_seed)


def detection_step(trace: InferenceTrace, labels: Sequence[bool]) -> int | None:
    """First step whose sampled patch is positive and entered the list.

    Returns the 1-based step number, or None when no positive patch ever
    entered. Time to detection is the returned step minus one (the number
    of patches scored before the detection).
    """
    for step in trace.steps:
        if step.entered and labels[step.patch_index]:
            return step.step
    return None


def slide_score_prefix(
    scores: np.ndarray, permutation: Sequence[int], capacity: int
) -> np.ndarray:
    """Slide score after each step of a sequential run, as a float array.

    Lean equivalent of :func:`run_sequential` for callers that need only
    the score trajectory (cost curves run this millions of times). Only
    the candidate score multiset matters for the slide score, so this
    keeps a small ascending list instead of full (index, score) entries.
    """
    out = np.empty(len(permutation), dtype=np.float64)
    top: list[float] = []  # ascending, top[0] is the current minimum
    fsum = math.fsum
    for step, patch_index in enumerate(permutation):
        s = float(scores[patch_index])
        if len(top) < capacity:
            insort(top, s)
        elif s > top[0]:
            top.pop(0)
            insort(top, s)
        out[step] = fsum(top) / len(top)
    return out


# ---------------------------------------------------------------------------
# trace CSV
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("step", "patch_index", "score", "entered", "slide_score")


def write_trace_csv(trace: InferenceTrace, path) -> None:
    """One row per step: step, patch_index, score, entered (0/1), slide_score."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for s in trace.steps:
            writer.writerow(
                [s.step, s.patch_index, repr(s.score), int(s.entered), repr(s.slide_score)]
            )
