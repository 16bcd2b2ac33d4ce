"""Training drivers for the plain classifier and the domain-adversarial one.

Both drivers share one loop. Random streams are derived from ``cfg.seed``
by label (``split``, ``init``, ``batches``, ``domain``), so the class-batch
sequence of a DANN run is the same as that of the plain run with the same
seed; the domain batches come from their own stream.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from sim2real.dataset import Dataset, Standardizer, batch_indices, fit_standardizer, split
from sim2real.errors import ConfigError, ContractError, ParseError, ShapeError
from sim2real.linalg import Rng
from sim2real.network import NetParams, backward, forward, hidden_layer, init
from sim2real.optim import adam_init, adam_step
from sim2real.stats import accuracy

LAMBDA_MODES = ("constant", "ganin_schedule")
# logistic probe used to measure how much domain information the hidden layer keeps
PROBE_EPOCHS = 200
PROBE_LR = 0.05


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    hidden: int = 100
    batch_size: int = 3000
    train_fraction: float = 0.7
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lambda_mode: str = "constant"
    lambda_value: float = 1.0
    domain_batch_size: int = 3000
    use_domain_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "hidden", "batch_size"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.domain_batch_size, int) or self.domain_batch_size < 2:
            raise ConfigError(f"domain_batch_size must be an integer >= 2, got {self.domain_batch_size!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ConfigError(f"lambda_mode must be one of {LAMBDA_MODES}, got {self.lambda_mode!r}")
        if not (math.isfinite(self.lambda_value) and self.lambda_value >= 0):
            raise ConfigError(f"lambda_value must be finite and >= 0, got {self.lambda_value}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    class_loss: float
    domain_loss: Optional[float] = None
    lam: Optional[float] = None


HISTORY_COLUMNS = ("model", "epoch", "train_accuracy", "test_accuracy", "class_loss", "domain_loss", "lambda")


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


@dataclass
class History:
    model: str
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def metrics(self) -> list[str]:
        names = ["train_accuracy", "test_accuracy", "class_loss"]
        if self.model == "dann":
            names += ["domain_loss", "lambda"]
        return names

    def to_rows(self) -> list[dict]:
        rows = []
        for r in self.records:
            row = asdict(r)
            row["lambda"] = row.pop("lam")
            rows.append({"model": self.model, **row})
        return rows

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HISTORY_COLUMNS)
            for row in self.to_rows():
                writer.writerow(
                    [row["model"], row["epoch"]] + [_fmt(row[c]) for c in HISTORY_COLUMNS[2:]]
                )

    def write_json(self, path: str | Path) -> None:
        doc = {"model": self.model, "records": self.to_rows()}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "History":
        """Load a history written by ``write_csv`` or ``write_json``."""
        path = Path(path)
        try:
            if path.suffix == ".json":
                doc = json.loads(path.read_text(encoding="utf-8"))
                model, rows = doc["model"], doc["records"]
            else:
                with open(path, newline="", encoding="utf-8") as fh:
                    rows = list(csv.DictReader(fh))
                if not rows:
                    raise ParseError(f"{path}: history has no rows")
                model = rows[0]["model"]

            def num(v):
                return None if v in ("", None) else float(v)

            records = [
                EpochRecord(
                    epoch=int(row["epoch"]),
                    train_accuracy=float(row["train_accuracy"]),
                    test_accuracy=float(row["test_accuracy"]),
                    class_loss=float(row["class_loss"]),
                    domain_loss=num(row.get("domain_loss")),
                    lam=num(row.get("lambda")),
                )
                for row in rows
            ]
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: malformed history ({exc})") from None
        if model not in ("nn", "dann"):
            raise ParseError(f"{path}: unknown model tag {model!r}")
        return cls(model, records)


class TrainResult(NamedTuple):
    params: NetParams
    standardizer: Standardizer
    history: History


def lambda_at(mode: str, value: float, progress: float) -> float:
    """Reversal strength at training progress ``progress`` in [0, 1]."""
    if not 0.0 <= progress <= 1.0:
        raise ContractError(f"progress must lie in [0, 1], got {progress}")
    if mode == "constant":
        return float(value)
    if mode == "ganin_schedule":
        return float(value * (2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0))
    raise ConfigError(f"unknown lambda mode {mode!r}")


def epoch_progress(epoch_index: int, epochs: int) -> float:
    """0 on the first epoch, 1 on the last."""
    return 0.0 if epochs == 1 else epoch_index / (epochs - 1)


def source_split(cfg: TrainConfig, labeled: Dataset) -> tuple[Dataset, Dataset]:
    """The train/test split both drivers use for ``cfg``."""
    return split(labeled, cfg.train_fraction, Rng(cfg.seed).spawn("split"))


def predict(params: NetParams, standardizer: Standardizer, X: np.ndarray) -> np.ndarray:
    """Signal probability for each raw (unstandardized) row of ``X``."""
    return forward(params, standardizer.transform(X)).class_probs[:, 1]


class _Cycler:
    """Endless reshuffled pass over ``n`` rows, handing out fixed-size chunks."""

    def __init__(self, n: int, rng: Rng):
        self.n = n
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        out = []
        while k > 0:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            chunk = self.order[self.pos : self.pos + k]
            self.pos += chunk.size
            k -= chunk.size
            out.append(chunk)
        return np.concatenate(out)


def _require_labels(ds: Dataset, what: str) -> None:
    if ds.labels is None:
        raise ContractError(f"{what} needs labeled data")


EpochCallback = Callable[[EpochRecord, NetParams], None]


def _run(
    cfg: TrainConfig,
    labeled: Dataset,
    controls: Optional[tuple[Dataset, Dataset]],
    on_epoch: Optional[EpochCallback] = None,
) -> TrainResult:
    _require_labels(labeled, "training")
    if labeled.n < 10:
        raise ContractError(f"need at least 10 labeled rows, got {labeled.n}")
    root = Rng(cfg.seed)
    train, test = source_split(cfg, labeled)
    std = fit_standardizer(train)
    Xtr, ytr = std.transform(train.features), train.labels
    Xte, yte = std.transform(test.features), test.labels

    params = init(labeled.d, cfg.hidden, root.spawn("init"))
    state = adam_init(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    batch_rng = root.spawn("batches")

    adversarial = controls is not None
    if adversarial:
        c_src, c_tgt = controls
        for c in (c_src, c_tgt):
            if c.d != labeled.d:
                raise ShapeError(f"control set has {c.d} features, training set has {labeled.d}")
        Xcs, Xct = std.transform(c_src.features), std.transform(c_tgt.features)
        domain_rng = root.spawn("domain")
        feed_src = _Cycler(c_src.n, domain_rng.spawn("control_source"))
        feed_tgt = _Cycler(c_tgt.n, domain_rng.spawn("control_target"))
        half = cfg.domain_batch_size // 2
        w_src = w_tgt = None
        if cfg.use_domain_weights:
            w_src = c_src.weights_or_ones() / c_src.weights_or_ones().mean()
            w_tgt = c_tgt.weights_or_ones() / c_tgt.weights_or_ones().mean()
        dom_labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])

    history = History("dann" if adversarial else "nn")
    for epoch in range(cfg.epochs):
        lam = lambda_at(cfg.lambda_mode, cfg.lambda_value, epoch_progress(epoch, cfg.epochs))
        c_sum = d_sum = 0.0
        n_batches = 0
        for idx in batch_indices(train.n, cfg.batch_size, batch_rng):
            if adversarial:
                i_src, i_tgt = feed_src.take(half), feed_tgt.take(half)
                Xd = np.vstack([Xcs[i_src], Xct[i_tgt]])
                wd = None if w_src is None else np.concatenate([w_src[i_src], w_tgt[i_tgt]])
                grads, losses = backward(
                    params, Xtr[idx], class_labels=ytr[idx],
                    domain_labels=dom_labels, domain_weights=wd, lam=lam, X_domain=Xd,
                )
                d_sum += losses.domain_loss
            else:
                grads, losses = backward(params, Xtr[idx], class_labels=ytr[idx])
            c_sum += losses.class_loss * idx.size
            n_batches += 1
            state, params = adam_step(state, params, grads)

        history.records.append(
            EpochRecord(
                epoch=epoch + 1,
                train_accuracy=accuracy(forward(params, Xtr).class_probs[:, 1], ytr),
                test_accuracy=accuracy(forward(params, Xte).class_probs[:, 1], yte),
                class_loss=c_sum / train.n,
                domain_loss=d_sum / n_batches if adversarial else None,
                lam=lam if adversarial else None,
            )
        )
        if on_epoch is not None:
            on_epoch(history.records[-1], params)
    return TrainResult(params, std, history)


def train_nn(cfg: TrainConfig, labeled: Dataset, on_epoch: Optional[EpochCallback] = None) -> TrainResult:
    """Plain classifier: class loss only, domain head left at its initial values."""
    return _run(cfg, labeled, None, on_epoch)


def train_dann(
    cfg: TrainConfig,
    labeled: Dataset,
    control_source: Dataset,
    control_target: Dataset,
    on_epoch: Optional[EpochCallback] = None,
) -> TrainResult:
    """Class batches from ``labeled`` plus balanced control batches for the domain head.

    Each step pairs one class batch with ``domain_batch_size // 2`` rows from
    each control set (source tagged 0, target tagged 1) and takes one Adam
    step on the joint loss, with the reversal strength for the current epoch.
    """
    _require_labels(labeled, "training")
    for name, c in (("control_source", control_source), ("control_target", control_target)):
        if c is None or c.n == 0:
            raise ContractError(f"{name} is empty")
    return _run(cfg, labeled, (control_source, control_target), on_epoch)


def domain_probe(
    params: NetParams,
    standardizer: Standardizer,
    control_source: Dataset,
    control_target: Dataset,
    rng: Rng,
    epochs: int = PROBE_EPOCHS,
    lr: float = PROBE_LR,
) -> float:
    """Balanced held-out accuracy of a fresh logistic domain classifier on frozen hidden features.

    Each control set is split in half; the probe is fit full-batch with Adam
    on one half (domains weighted equally) and scored on the other.
    """
    parts = {}
    for tag, ds in ((0, control_source), (1, control_target)):
        h = hidden_layer(params, standardizer.transform(ds.features))
        order = rng.permutation(ds.n)
        cut = ds.n // 2
        parts[tag] = (h[order[:cut]], h[order[cut:]])
    H = np.vstack([parts[0][0], parts[1][0]])
    y = np.concatenate([np.zeros(len(parts[0][0])), np.ones(len(parts[1][0]))])
    w = np.where(y == 1, 0.5 / (y == 1).sum(), 0.5 / (y == 0).sum())

    head = {"w": np.zeros(H.shape[1]), "b": np.zeros(())}
    state = adam_init(head, lr=lr)
    for _ in range(epochs):
        z = H @ head["w"] + head["b"]
        err = (1.0 / (1.0 + np.exp(-z)) - y) * w
        state, head = adam_step(state, head, {"w": H.T @ err, "b": np.asarray(err.sum())})

    accs = []
    for tag in (0, 1):
        h_eval = parts[tag][1]
        pred = (h_eval @ head["w"] + head["b"]) >= 0
        accs.append(float(np.mean(pred == bool(tag))))
    return 0.5 * (accs[0] + accs[1])
