"""Synthetic source/target/control samples with a known kind of dataset shift.

Every sample is a two-component Gaussian mixture (unit covariance, component
means +/- MEAN_NORM along a fixed direction) labelled by a logistic rule
``y ~ Bernoulli(sigmoid(w . x))``. The control channel is the same recipe
with mean and label directions rotated by 90 degrees: a different process
living in the same feature space, shifted by the same domain transform.

Shift kinds:

* ``none``: target drawn exactly like source.
* ``covariate_shift``: target features move by ``magnitude`` along a fixed
  unit direction and are stretched by ``1 + 0.1 * magnitude`` along it;
  labels come from the unchanged rule, so p(y|x) is shared.
* ``prior_shift``: target rows are resampled so the signal fraction equals
  ``target_signal_fraction``; p(x|y) is unchanged.
* ``concept_shift``: the label rule is reversed for target rows on the far
  side of a threshold along a second direction. The affected share of the
  process-of-interest target grows as ``min(0.5, 0.2 * magnitude)``.

Geometry depends only on ``d``; the seed controls the draws. Each output
sample has its own sub-stream, so changing one count or the magnitude
leaves the other samples' random numbers untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from statistics import NormalDist

import numpy as np

from sim2real.dataset import Dataset, Domain, Schema, save_csv
from sim2real.errors import ConfigError
from sim2real.linalg import Rng, rand_normal

KINDS = ("none", "prior_shift", "covariate_shift", "concept_shift")
MEAN_NORM = 1.0
LABEL_SLOPE = 2.5
# angle between the label direction and the shift direction
SHIFT_ANGLE = math.pi / 3
SCALE_PER_MAGNITUDE = 0.1
CONCEPT_SHARE_PER_MAGNITUDE = 0.2
# control-target weights: gamma(shape 4, scale 1/4), mean 1
WEIGHT_SHAPE = 4
WEIGHT_SCALE = 0.25

LABEL_COLUMN = "signal"
WEIGHT_COLUMN = "weight"


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "covariate_shift"
    d: int = 10
    n_source: int = 5000
    n_target: int = 5000
    n_control_source: int = 2000
    n_control_target: int = 2000
    shift_magnitude: float = 1.0
    source_signal_fraction: float = 0.62
    target_signal_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.d, int) or self.d < 2:
            raise ConfigError(f"d must be an integer >= 2, got {self.d!r}")
        for name in ("n_source", "n_target", "n_control_source", "n_control_target"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 2:
                raise ConfigError(f"{name} must be an integer >= 2, got {value!r}")
        if not (math.isfinite(self.shift_magnitude) and self.shift_magnitude >= 0):
            raise ConfigError(f"shift_magnitude must be finite and >= 0, got {self.shift_magnitude}")
        for name in ("source_signal_fraction", "target_signal_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def effective_magnitude(self) -> float:
        return 0.0 if self.kind == "none" else float(self.shift_magnitude)


@dataclass(frozen=True)
class Geometry:
    """Fixed directions for a given feature count."""

    label_dir: np.ndarray
    ortho_dir: np.ndarray
    shift_dir: np.ndarray

    @classmethod
    def for_dim(cls, d: int) -> "Geometry":
        label_dir = np.ones(d) / math.sqrt(d)
        alt = np.array([(-1.0) ** j for j in range(d)])
        if d % 2:
            alt[-1] = 0.0
        ortho_dir = alt / np.linalg.norm(alt)
        shift_dir = math.cos(SHIFT_ANGLE) * label_dir + math.sin(SHIFT_ANGLE) * ortho_dir
        return cls(label_dir, ortho_dir, shift_dir)


@dataclass(frozen=True)
class Process:
    """One physics-like process: mixture mean direction and label rule."""

    mean_dir: np.ndarray
    weight_vector: np.ndarray

    def label_prob(self, x: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-(x @ self.weight_vector)))


@dataclass(frozen=True)
class DomainTransform:
    """What separates target from source, applied identically to every process."""

    kind: str
    shift_vector: np.ndarray
    scale_along_shift: float
    shift_dir: np.ndarray
    concept_dir: np.ndarray
    concept_threshold: float  # +inf disables the flip
    target_signal_fraction: float | None

    def move(self, x: np.ndarray) -> np.ndarray:
        along = x @ self.shift_dir
        delta = (self.scale_along_shift - 1.0) * along
        return x + np.outer(delta, self.shift_dir) + self.shift_vector[np.newaxis, :]

    def flipped(self, x: np.ndarray) -> np.ndarray:
        return x @ self.concept_dir > self.concept_threshold

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "shift_vector": [float(v) for v in self.shift_vector],
            "scale_along_shift": self.scale_along_shift,
            "shift_direction": [float(v) for v in self.shift_dir],
            "concept_direction": [float(v) for v in self.concept_dir],
            "concept_threshold": None if math.isinf(self.concept_threshold) else self.concept_threshold,
            "target_signal_fraction": self.target_signal_fraction,
        }


@dataclass(frozen=True)
class ScenarioBundle:
    source: Dataset
    target: Dataset
    control_source: Dataset
    control_target: Dataset
    truth: ScenarioConfig
    transform: DomainTransform
    process: Process
    control_process: Process

    def truth_dict(self) -> dict:
        return {
            "config": asdict(self.truth),
            "label_weights": {
                "process": [float(v) for v in self.process.weight_vector],
                "control": [float(v) for v in self.control_process.weight_vector],
            },
            "transform": {
                "process": self.transform.to_dict(),
                "control": self.transform.to_dict(),
            },
            "target_labels": "evaluation only",
        }


def schema_for(d: int, weight: bool = False) -> Schema:
    return Schema(
        feature_columns=tuple(f"f{j}" for j in range(d)),
        label_column=LABEL_COLUMN,
        weight_column=WEIGHT_COLUMN if weight else None,
    )


def build_transform(cfg: ScenarioConfig, geo: Geometry) -> DomainTransform:
    m = cfg.effective_magnitude
    moves = cfg.kind in ("none", "covariate_shift")
    shift_vector = m * geo.shift_dir if moves else np.zeros(cfg.d)
    scale = 1.0 + SCALE_PER_MAGNITUDE * m if moves else 1.0
    threshold = math.inf
    if cfg.kind == "concept_shift":
        share = min(0.5, CONCEPT_SHARE_PER_MAGNITUDE * m)
        if share > 0:
            threshold = NormalDist().inv_cdf(1.0 - share)
    return DomainTransform(
        kind=cfg.kind,
        shift_vector=shift_vector,
        scale_along_shift=scale,
        shift_dir=geo.shift_dir,
        concept_dir=geo.ortho_dir,
        concept_threshold=threshold,
        target_signal_fraction=cfg.target_signal_fraction if cfg.kind == "prior_shift" else None,
    )


def _draw(rng: Rng, n: int, process: Process, signal_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Mixture features and the uniforms that will decide their labels."""
    d = process.mean_dir.shape[0]
    sign = np.where(rng.uniform(n) < signal_fraction, 1.0, -1.0)
    x = rand_normal(rng, n, d) + np.outer(sign * MEAN_NORM, process.mean_dir)
    return x, rng.uniform(n)


def _label(x: np.ndarray, u: np.ndarray, process: Process, flip: np.ndarray | None = None) -> np.ndarray:
    p = process.label_prob(x)
    if flip is not None:
        p = np.where(flip, 1.0 - p, p)
    return (u < p).astype(np.int64)


def _sample_source(rng, n, process, cfg):
    x, u = _draw(rng, n, process, cfg.source_signal_fraction)
    return x, _label(x, u, process)


def _sample_target(rng, n, process, cfg, transform):
    if cfg.kind == "prior_shift":
        return _resample_prior(rng, n, process, cfg)
    x, u = _draw(rng, n, process, cfg.source_signal_fraction)
    x = transform.move(x)
    flip = transform.flipped(x) if cfg.kind == "concept_shift" else None
    return x, _label(x, u, process, flip)


def _resample_prior(rng, n, process, cfg):
    """Rows from the source law, kept in draw order until the class quotas fill."""
    n_sig = round(cfg.target_signal_fraction * n)
    n_sig = min(max(n_sig, 1), n - 1)
    quota = {1: n_sig, 0: n - n_sig}
    kept = {1: [], 0: []}
    while any(len(kept[c]) < quota[c] for c in (0, 1)):
        x, u = _draw(rng, 2 * n, process, cfg.source_signal_fraction)
        y = _label(x, u, process)
        for c in (0, 1):
            room = quota[c] - len(kept[c])
            if room > 0:
                kept[c].extend(x[y == c][:room])
    x = np.vstack([np.array(kept[1]), np.array(kept[0])])
    y = np.concatenate([np.ones(quota[1], dtype=np.int64), np.zeros(quota[0], dtype=np.int64)])
    order = rng.permutation(n)
    return x[order], y[order]


def generate(cfg: ScenarioConfig) -> ScenarioBundle:
    geo = Geometry.for_dim(cfg.d)
    process = Process(geo.label_dir, LABEL_SLOPE * geo.label_dir)
    control = Process(geo.ortho_dir, LABEL_SLOPE * geo.ortho_dir)
    transform = build_transform(cfg, geo)
    root = Rng(cfg.seed)

    schema = schema_for(cfg.d)
    weighted = schema_for(cfg.d, weight=True)

    xs, ys = _sample_source(root.spawn("source"), cfg.n_source, process, cfg)
    xt, yt = _sample_target(root.spawn("target"), cfg.n_target, process, cfg, transform)
    xcs, ycs = _sample_source(root.spawn("control_source"), cfg.n_control_source, control, cfg)
    xct, yct = _sample_target(root.spawn("control_target"), cfg.n_control_target, control, cfg, transform)
    weights = root.spawn("weights").gamma(WEIGHT_SHAPE, WEIGHT_SCALE, cfg.n_control_target)

    return ScenarioBundle(
        source=Dataset(xs, schema, Domain.SOURCE, labels=ys),
        target=Dataset(xt, schema, Domain.TARGET, labels=yt),
        control_source=Dataset(xcs, schema, Domain.SOURCE, labels=ycs),
        control_target=Dataset(xct, weighted, Domain.TARGET, labels=yct, weights=weights),
        truth=cfg,
        transform=transform,
        process=process,
        control_process=control,
    )


BUNDLE_FILES = {
    "source": "source.csv",
    "target": "target.csv",
    "control_source": "control_source.csv",
    "control_target": "control_target.csv",
}


def write_bundle(bundle: ScenarioBundle, outdir: str | Path) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for role, fname in BUNDLE_FILES.items():
        paths[role] = outdir / fname
        save_csv(getattr(bundle, role), paths[role])
    paths["truth"] = outdir / "truth.json"
    paths["truth"].write_text(json.dumps(bundle.truth_dict(), indent=2) + "\n", encoding="utf-8")
    return paths
