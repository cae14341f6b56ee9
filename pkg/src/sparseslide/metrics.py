"""Early-classification metrics for sequential patch sampling.

Answers the questions a screening deployment actually asks:

* How often does random sampling miss a positive slide outright?
  (closed-form failure rate from the slide's score ranking)
* How long until the first true detection? (negative-hypergeometric
  moments as the oracle reference, Monte Carlo for real scorers)
* How does cohort-level ranking quality (AP, ROC AUC) grow with the
  per-slide sampling budget? (cost curves over many replicates)
* At what budget does the curve cross a quality threshold, and what
  does that cost in wall-clock time on a given backend?

Cost-curve aggregation uses the population standard deviation over
replicates, and every statistic is reproducible bit-for-bit for a fixed
(cohort, seed, replicates, capacity).
"""

from __future__ import annotations

import csv
import math
from bisect import insort
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import DEFAULT_CAPACITY, PatchScorer, sample_permutation, slide_score_prefix
from .rng import Rng
from .tiling import SlideGrid

METRIC_AP = "ap"
METRIC_AUC = "auc"


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def failure_rate(rank: int, positives: int, capacity: int) -> float:
    """Probability that no positive patch ever enters the candidate list.

    ``rank`` is the number of negative patches scoring above the best
    positive patch, ``positives`` the number of positive patches on the
    slide, ``capacity`` the candidate-list size. A miss requires the
    first ``capacity`` draws from the rank-relevant pool to all be
    high-scoring negatives, which with fewer such negatives than list
    slots is impossible:

        prod_{i=0}^{capacity-1} (rank - i) / (rank + positives - i)

    for rank >= capacity, else exactly 0. The product form sidesteps
    factorial overflow for any slide size.
    """
    if rank < 0:
        raise ValueError("rank must be >= 0")
    if positives < 1:
        raise ValueError("failure rate is undefined without positive patches")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if rank < capacity:
        return 0.0
    p = 1.0
    for i in range(capacity):
        p *= (rank - i) / (rank + positives - i)
    return p


def top_positive_rank(scores: Sequence[float], labels: Sequence[bool]) -> int:
    """Number of negatives outranking the best positive under a dense scan.

    Ranking is by descending score; tied scores are resolved
    pessimistically, i.e. tied negatives count as ranking above tied
    positives. The top patch has rank 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if not labels.any():
        raise ValueError("no positive patches")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], labels[i]))
    for rank, i in enumerate(order):
        if labels[i]:
            return rank
    raise AssertionError("unreachable")


def nhg_moments(total: int, positives: int) -> tuple[float, float]:
    """Mean and variance of draws-before-first-positive, oracle scorer.

    Sampling without replacement from ``total`` patches of which
    ``positives`` are positive, the number of negatives drawn before the
    first positive is negative-hypergeometric with

        mean = (N - k) / (k + 1)
        var  = k (N - k) (N + 1) / ((k + 1)^2 (k + 2))
    """
    if positives < 1 or positives > total:
        raise ValueError("need 1 <= positives <= total")
    n, k = total, positives
    mean = (n - k) / (k + 1)
    var = k * (n - k) * (n + 1) / ((k + 1) ** 2 * (k + 2))
    return mean, var


def miss_rate(stats: Sequence["SlideEvalStats"]) -> float:
    """Fraction of slides with a strictly positive failure rate."""
    if not stats:
        raise ValueError("miss rate over an empty cohort is undefined")
    return sum(1 for s in stats if s.failure_rate > 0) / len(stats)


def estimate_wall_clock(n_patches: int, seconds_per_patch: float) -> float:
    """Sequential scan cost: patches times per-patch seconds."""
    if n_patches < 0 or seconds_per_patch < 0:
        raise ValueError("arguments must be non-negative")
    return n_patches * seconds_per_patch


# ---------------------------------------------------------------------------
# per-slide time-to-detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlideEvalStats:
    """Detection statistics for one positive slide."""

    slide_id: str
    total_patches: int  # N
    positive_patches: int  # k
    top_rank: int  # r
    failure_rate: float
    ttd_mean: float | None
    ttd_sd: float | None
    successful_trials: int
    total_trials: int


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population SD; collapses exactly when all values agree."""
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo, 0.0
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def ttd_monte_carlo(
    grid: SlideGrid,
    scorer: PatchScorer,
    labels: Sequence[bool] | None = None,
    capacity: int = DEFAULT_CAPACITY,
    trials: int = 10_000,
    rng: Rng | None = None,
) -> SlideEvalStats:
    """Monte Carlo time-to-detection for one positive slide.

    Each trial replays the sequential engine on a fresh uniform
    permutation and records the number of patches scored before a
    positive patch first enters the candidate list. The mean and
    population SD cover successful trials only; the failure rate is the
    closed form evaluated on the scorer's dense ranking, so a slide
    whose every trial failed still reports its analytic miss mass.

    Permutations are generated lazily (partial Fisher-Yates) and a trial
    stops as soon as it succeeds or runs out of positive patches, which
    keeps 10k-trial runs cheap without changing the sampled law.
    """
    if labels is None:
        labels = [p.label for p in grid.patches]
    labels = list(labels)
    n = len(grid.patches)
    if len(labels) != n:
        raise ValueError("labels must align with grid patches")
    k = sum(labels)
    if k < 1:
        raise ValueError(f"slide {grid.slide_id!r} has no positive patches")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng if rng is not None else Rng(0)
    scores = [scorer.score(p, grid) for p in grid.patches]
    rank = top_positive_rank(scores, labels)
    fail = failure_rate(rank, k, capacity)

    ttds: list[int] = []
    randbelow = rng.randbelow
    for _ in range(trials):
        order = list(range(n))
        top: list[float] = []
        remaining_pos = k
        for i in range(n):
            j = i + randbelow(n - i)
            order[i], order[j] = order[j], order[i]
            p = order[i]
            s = scores[p]
            if len(top) < capacity:
                insort(top, s)
                entered = True
            elif s > top[0]:
                top.pop(0)
                insort(top, s)
                entered = True
            else:
                entered = False
            if labels[p]:
                if entered:
                    ttds.append(i)
                    break
                remaining_pos -= 1
                if remaining_pos == 0:
                    break
    if ttds:
        mean, sd = _mean_sd(ttds)
    else:
        mean = sd = None
    return SlideEvalStats(
        slide_id=grid.slide_id,
        total_patches=n,
        positive_patches=k,
        top_rank=rank,
        failure_rate=fail,
        ttd_mean=mean,
        ttd_sd=sd,
        successful_trials=len(ttds),
        total_trials=trials,
    )


# ---------------------------------------------------------------------------
# ranking metrics
# ---------------------------------------------------------------------------


def average_precision(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the precision-recall steps, AP = sum (R_n - R_{n-1}) P_n.

    Items are ranked by descending score with ties broken by ascending
    item index, making the value deterministic under tied scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")  # stable = ascending index on ties
    ranked = labels[order]
    tp = np.cumsum(ranked)
    ranks = np.arange(1, len(scores) + 1)
    precisions = tp[ranked] / ranks[ranked]
    return math.fsum(precisions.tolist()) / n_pos


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative),
    counting ties as half. Computed from tie-averaged ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # 1-based ranks i+1 .. j+1 share their average, a dyadic rational
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum = math.fsum(ranks[labels].tolist())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


_METRIC_FNS: dict[str, Callable] = {METRIC_AP: average_precision, METRIC_AUC: roc_auc}


# ---------------------------------------------------------------------------
# cost curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    n: int
    mean: float
    sd: float


@dataclass(frozen=True)
class CostCurve:
    """Cohort metric as a function of the per-slide sampling budget."""

    metric: str
    replicates: int
    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        ns = [p.n for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("curve budgets must be strictly increasing")

    @property
    def budgets(self) -> list[int]:
        return [p.n for p in self.points]


def cost_curve(
    cohort: Sequence,
    metric: str,
    n_grid: Sequence[int],
    replicates: int,
    capacity: int = DEFAULT_CAPACITY,
    rng: Rng | None = None,
    threads: int = 1,
) -> CostCurve:
    """Metric-versus-budget curve over a cohort of (grid, scorer, label).

    For each replicate, every slide gets one fresh permutation; the
    slide score after ``n`` samples (clamped to the slide's patch count)
    feeds the cohort metric at each budget in ``n_grid``. Replicate
    ``i`` draws from ``rng.spawn(i)``, so results do not depend on
    thread scheduling and replays are bit-identical.
    """
    if metric not in _METRIC_FNS:
        raise ValueError(f"metric must be one of {sorted(_METRIC_FNS)}, got {metric!r}")
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a spread estimate")
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(n < 1 for n in n_grid) or any(
        b <= a for a, b in zip(n_grid, n_grid[1:])
    ):
        raise ValueError("n_grid must be non-empty, positive, strictly increasing")
    cohort = list(cohort)
    slide_labels = np.array([bool(label) for _, _, label in cohort])
    if not slide_labels.any() or slide_labels.all():
        raise ValueError("cohort must contain both positive and negative slides")
    rng = rng if rng is not None else Rng(0)

    score_arrays = []
    for grid, scorer, _ in cohort:
        score_arrays.append(
            np.array([scorer.score(p, grid) for p in grid.patches], dtype=np.float64)
        )
    budget_idx = np.asarray(n_grid, dtype=np.int64) - 1  # 0-based step positions
    metric_fn = _METRIC_FNS[metric]

    def one_replicate(rep: int) -> np.ndarray:
        rep_rng = rng.spawn(rep)
        slide_scores = np.zeros((len(cohort), len(n_grid)), dtype=np.float64)
        for si, scores in enumerate(score_arrays):
            n = len(scores)
            if n == 0:
                continue  # empty slide contributes score 0 at every budget
            perm = sample_permutation(n, rep_rng)
            prefix = slide_score_prefix(scores, perm, capacity)
            slide_scores[si] = prefix[np.minimum(budget_idx, n - 1)]
        return np.array(
            [metric_fn(slide_scores[:, ni], slide_labels) for ni in range(len(n_grid))]
        )

    values = np.empty((replicates, len(n_grid)), dtype=np.float64)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for rep, row in enumerate(pool.map(one_replicate, range(replicates))):
                values[rep] = row
    else:
        for rep in range(replicates):
            values[rep] = one_replicate(rep)

    points = []
    for ni, n in enumerate(n_grid):
        mean, sd = _mean_sd(values[:, ni].tolist())
        points.append(CurvePoint(n=n, mean=mean, sd=sd))
    return CostCurve(metric=metric, replicates=replicates, points=tuple(points))


def threshold_range(
    curve: CostCurve, threshold: float
) -> tuple[int | None, int | None]:
    """Budget range where the curve's mean +/- SD band covers ``threshold``.

    Returns (n_min, n_max): the smallest and largest qualifying budgets.
    n_max is None when the band still covers the threshold at the final
    tabulated budget (the range is open-ended); both are None when no
    budget qualifies.
    """
    qualifying = [
        p.n for p in curve.points if p.mean - p.sd <= threshold <= p.mean + p.sd
    ]
    if not qualifying:
        return None, None
    n_min = qualifying[0]
    n_max: int | None = qualifying[-1]
    if n_max == curve.points[-1].n:
        n_max = None
    return n_min, n_max


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

SLIDE_STATS_COLUMNS = (
    "slide_id",
    "N",
    "k",
    "r",
    "failure_rate",
    "ttd_mean",
    "ttd_sd",
    "successful_trials",
    "total_trials",
)

CURVE_COLUMNS = ("metric", "n", "mean", "sd")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_slide_stats_csv(stats: Sequence[SlideEvalStats], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SLIDE_STATS_COLUMNS)
        for s in stats:
            writer.writerow(
                [
                    s.slide_id,
                    s.total_patches,
                    s.positive_patches,
                    s.top_rank,
                    _fmt(s.failure_rate),
                    _fmt(s.ttd_mean),
                    _fmt(s.ttd_sd),
                    s.successful_trials,
                    s.total_trials,
                ]
            )


def write_cost_curve_csv(curve: CostCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for p in curve.points:
            writer.writerow([curve.metric, p.n, _fmt(p.mean), _fmt(p.sd)])
