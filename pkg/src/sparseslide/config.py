"""Experiment configuration.

A config is a JSON document; CLI flags override config values, which
override the defaults below. The default cohort is 20 positive and 86
negative slides sized so a full run stays in the minutes range on a
laptop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .synth import SynthScorerSpec, SynthSlideSpec
from .tiling import MAGNIFICATIONS

DEFAULT_SEED = 1
DEFAULT_CAPACITY = 3
DEFAULT_TRIALS_TTD = 10_000
DEFAULT_REPLICATES_CURVES = 500
DEFAULT_SECONDS_PER_PATCH = {"cpu": 3.0, "wasm": 0.28, "webgl": 0.05}
DEFAULT_THRESHOLDS = {"ap": 0.95, "auc": 0.98}
DEFAULT_POSITIVE_SLIDES = 20
DEFAULT_NEGATIVE_SLIDES = 86

# Sized for ~12x12 grid positions at 10x (patch span 896 reference px).
DEFAULT_COHORT_SYNTH = {
    "positive_slides": DEFAULT_POSITIVE_SLIDES,
    "negative_slides": DEFAULT_NEGATIVE_SLIDES,
    "ref_width": 10752,
    "ref_height": 10752,
    "tissue_coverage": 0.65,
    "n_components": 15,
    "component_area_range": [30, 60],
    "clustering": 0.3,
    "thumb_scale": 0.05,
    "ann_scale": 0.05,
}

DEFAULT_SCORER_SYNTH = {"pos_mean": 0.85, "neg_mean": 0.15, "noise_scale": 0.10}


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = DEFAULT_SEED
    magnifications: list[float] = field(default_factory=lambda: [10.0])
    capacity: int = DEFAULT_CAPACITY
    trials_ttd: int = DEFAULT_TRIALS_TTD
    replicates_curves: int = DEFAULT_REPLICATES_CURVES
    n_grid: dict = field(default_factory=lambda: {"mode": "all"})
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    seconds_per_patch: dict = field(default_factory=lambda: dict(DEFAULT_SECONDS_PER_PATCH))
    cohort: dict = field(default_factory=lambda: {"synthetic": dict(DEFAULT_COHORT_SYNTH)})
    scorer: dict = field(default_factory=lambda: {"synthetic": dict(DEFAULT_SCORER_SYNTH)})
    threads: int = 1

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name or "/" in self.name:
            raise ValueError("name must be a non-empty string without path separators")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        for m in self.magnifications:
            if float(m) not in MAGNIFICATIONS:
                raise ValueError(f"magnification {m} not in {MAGNIFICATIONS}")
        self.magnifications = [float(m) for m in self.magnifications]
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.trials_ttd < 1:
            raise ValueError("trials_ttd must be >= 1")
        if self.replicates_curves < 2:
            raise ValueError("replicates_curves must be >= 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        mode = self.n_grid.get("mode")
        if mode not in ("all", "stride", "list"):
            raise ValueError("n_grid.mode must be 'all', 'stride' or 'list'")
        if mode == "stride" and int(self.n_grid.get("step", 0)) < 1:
            raise ValueError("n_grid.step must be >= 1")
        if mode == "list":
            values = self.n_grid.get("values")
            if not values:
                raise ValueError("n_grid.values must be a non-empty list")
        if set(self.cohort) == {"synthetic"}:
            synth = self.cohort["synthetic"]
            if synth.get("positive_slides", 0) + synth.get("negative_slides", 0) < 1:
                raise ValueError("synthetic cohort must contain at least one slide")
        elif set(self.cohort) == {"grids"}:
            if not self.cohort["grids"]:
                raise ValueError("cohort.grids must list at least one grid file")
        else:
            raise ValueError("cohort must have exactly one of 'synthetic' or 'grids'")
        if set(self.scorer) == {"synthetic"}:
            pass
        elif set(self.scorer) == {"table"}:
            if not self.scorer["table"]:
                raise ValueError("scorer.table must name a score table CSV")
        else:
            raise ValueError("scorer must have exactly one of 'synthetic' or 'table'")

    # -- plumbing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a JSON object")
        return cls.from_dict(doc)

    def slide_specs(self) -> list[SynthSlideSpec]:
        """Per-slide specs for a synthetic cohort, positives first."""
        synth = self.cohort["synthetic"]
        common = dict(
            ref_width=synth["ref_width"],
            ref_height=synth["ref_height"],
            tissue_coverage=synth.get("tissue_coverage", 0.65),
            component_area_range=tuple(synth.get("component_area_range", (30, 60))),
            clustering=synth.get("clustering", 0.0),
            thumb_scale=synth.get("thumb_scale", 0.05),
            ann_scale=synth.get("ann_scale", 0.05),
        )
        positive = SynthSlideSpec(n_components=synth.get("n_components", 15), **common)
        negative = SynthSlideSpec(n_components=0, **common)
        return [positive] * synth.get("positive_slides", 0) + [negative] * synth.get(
            "negative_slides", 0
        )

    def scorer_spec(self) -> SynthScorerSpec | None:
        if "synthetic" not in self.scorer:
            return None
        s = self.scorer["synthetic"]
        return SynthScorerSpec(
            pos_mean=s.get("pos_mean", 0.85),
            neg_mean=s.get("neg_mean", 0.15),
            noise_scale=s.get("noise_scale", 0.10),
        )

    def budgets(self, max_patches: int) -> list[int]:
        """Resolve the n_grid policy against the cohort's largest slide."""
        mode = self.n_grid["mode"]
        if mode == "all":
            return list(range(1, max_patches + 1))
        if mode == "stride":
            step = int(self.n_grid["step"])
            ns = list(range(step, max_patches + 1, step))
            if not ns or ns[-1] != max_patches:
                ns.append(max_patches)
            if ns[0] != 1:
                ns.insert(0, 1)
            return ns
        return sorted({int(v) for v in self.n_grid["values"]})
