"""Command line front end.

    sim2real synth      --config run.json            # four CSVs + truth.json
    sim2real train      --config run.json --model nn|dann
    sim2real agreement  --config run.json --checkpoint out/dann/checkpoint.json
    sim2real report     out/nn/history.csv out/dann/history.csv --out curves.csv
    sim2real config                                   # print a default config

Exit codes: 0 success / gate passed, 1 gate failed, 2 bad configuration,
3 unreadable or malformed input, 4 checkpoint does not fit the data.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from sim2real import synth
from sim2real.dataset import Dataset, Domain, Schema, infer_schema, load_csv
from sim2real.errors import ConfigError, ParseError, SchemaError, Sim2RealError, ValidationError
from sim2real.network import load_checkpoint, save_checkpoint
from sim2real.stats import (
    AGREEMENT_THRESHOLD,
    HISTOGRAM_BINS,
    WeightedSample,
    accuracy,
    agreement_check,
    density_histogram,
)
from sim2real.train import History, TrainConfig, predict, train_dann, train_nn

EXIT_OK, EXIT_GATE_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3, 4

DATA_ROLES = ("source", "target", "control_source", "control_target")
SCHEMA_KEYS = {"features", "label", "weight", "id"}


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Everything a run needs, read from one JSON file.

    Relative data paths and ``output_dir`` resolve against the config
    file's directory. ``schema.features`` may be omitted, in which case
    every CSV column not used as label, weight or id is a feature.
    """

    base_dir: Path = field(default_factory=Path.cwd)
    output_dir: str = "out"
    schema: dict = field(default_factory=lambda: {"features": None, "label": "signal", "weight": "weight", "id": None})
    data: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    threshold: float = AGREEMENT_THRESHOLD

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def data_path(self, role: str) -> Optional[Path]:
        value = self.data.get(role)
        return None if value is None else self.path(value)

    def train_config(self) -> TrainConfig:
        if "epochs" not in self.train:
            raise ConfigError("train.epochs is required")
        return TrainConfig(**self.train)

    def scenario_config(self) -> synth.ScenarioConfig:
        return synth.ScenarioConfig(**self.scenario)


def default_config_dict() -> dict:
    return {
        "output_dir": "out",
        "schema": {"features": None, "label": synth.LABEL_COLUMN, "weight": synth.WEIGHT_COLUMN, "id": None},
        "data": {
            "source": "out/source.csv",
            "target": "out/target.csv",
            "control_source": "out/control_source.csv",
            "control_target": "out/control_target.csv",
        },
        "train": {k: v for k, v in asdict(TrainConfig(epochs=50)).items()},
        "scenario": asdict(synth.ScenarioConfig()),
        "threshold": AGREEMENT_THRESHOLD,
    }


def _check_keys(section: str, given: dict, allowed) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown config key {section}{key!r}")


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_override(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {part!r} is not a section")
    node[parts[-1]] = _parse_value(raw)


def load_run_config(path: Optional[str], overrides: list[str] = ()) -> RunConfig:
    if path is None:
        doc, base = {}, Path.cwd()
    else:
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise _Exit(EXIT_IO, f"config file not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{p}: top level must be an object")
        base = p.resolve().parent
    for assignment in overrides:
        _apply_override(doc, assignment)

    top = {"output_dir", "schema", "data", "train", "scenario", "threshold"}
    _check_keys("", doc, top)
    _check_keys("schema.", doc.get("schema", {}), SCHEMA_KEYS)
    _check_keys("data.", doc.get("data", {}), DATA_ROLES)
    _check_keys("train.", doc.get("train", {}), {f.name for f in fields(TrainConfig)})
    _check_keys("scenario.", doc.get("scenario", {}), {f.name for f in fields(synth.ScenarioConfig)})

    cfg = RunConfig(base_dir=base)
    if "output_dir" in doc:
        cfg.output_dir = doc["output_dir"]
    cfg.schema = {**cfg.schema, **doc.get("schema", {})}
    cfg.data = dict(doc.get("data", {}))
    cfg.train = dict(doc.get("train", {}))
    cfg.scenario = dict(doc.get("scenario", {}))
    if "threshold" in doc:
        if not isinstance(doc["threshold"], (int, float)) or not 0 < doc["threshold"] <= 1:
            raise ConfigError(f"threshold must be a number in (0, 1], got {doc['threshold']!r}")
        cfg.threshold = float(doc["threshold"])
    return cfg


def _schema_for(cfg: RunConfig, path: Path, label: bool, weight: bool) -> Schema:
    s = cfg.schema
    if s.get("features"):
        schema = Schema(tuple(s["features"]), s.get("label"), s.get("weight"), s.get("id"))
    else:
        schema = infer_schema(path, s.get("label"), s.get("weight"), s.get("id"))
    return schema.with_roles(label=label, weight=weight)


def _load(cfg: RunConfig, role: str, label: bool, weight: bool, domain: Domain, required: bool = True) -> Optional[Dataset]:
    path = cfg.data_path(role)
    if path is None:
        if required:
            raise ConfigError(f"data.{role} is required")
        return None
    if not path.exists():
        raise _Exit(EXIT_IO, f"cannot read {role} file {path}")
    schema = _schema_for(cfg, path, label, weight)
    if weight and schema.weight_column is not None:
        # a weight column is optional for control files; fall back to unit weights
        header = infer_schema(path).feature_columns
        if schema.weight_column not in header:
            schema = schema.with_roles(weight=False)
    return load_csv(path, schema, domain)


def cmd_synth(cfg: RunConfig, args) -> int:
    scenario = cfg.scenario_config()
    outdir = Path(args.out) if args.out else cfg.out
    paths = synth.write_bundle(synth.generate(scenario), outdir)
    for role, p in paths.items():
        print(f"{role}: {p}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    tcfg = cfg.train_config()
    model = args.model
    if model == "dann":
        for role in ("control_source", "control_target"):
            if cfg.data_path(role) is None:
                raise ConfigError(f"model dann needs data.{role}")
    source = _load(cfg, "source", label=True, weight=False, domain=Domain.SOURCE)
    if model == "dann":
        c_src = _load(cfg, "control_source", label=False, weight=True, domain=Domain.SOURCE)
        c_tgt = _load(cfg, "control_target", label=False, weight=True, domain=Domain.TARGET)
        result = train_dann(tcfg, source, c_src, c_tgt)
    else:
        result = train_nn(tcfg, source)

    outdir = Path(args.out) if args.out else cfg.out / model
    outdir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        outdir / "checkpoint.json",
        result.params,
        result.standardizer,
        source.schema,
        extra={"model": model, "train": asdict(tcfg)},
    )
    result.history.write_csv(outdir / "history.csv")
    result.history.write_json(outdir / "history.json")

    last = result.history.records[-1]
    print(f"model: {model}")
    print(f"epochs: {tcfg.epochs}")
    if model == "dann":
        print(f"lambda_mode: {tcfg.lambda_mode} (lambda_value={tcfg.lambda_value})")
    print(f"final_train_accuracy: {last.train_accuracy:.4f}")
    print(f"final_test_accuracy: {last.test_accuracy:.4f}")
    target = _load(cfg, "target", label=True, weight=False, domain=Domain.TARGET, required=False)
    if target is not None and target.labels is not None:
        probs = predict(result.params, result.standardizer, target.features)
        print(f"target_test_accuracy: {accuracy(probs, target.labels):.4f} (evaluation only)")
    print(f"checkpoint: {outdir / 'checkpoint.json'}")
    return EXIT_OK


def cmd_agreement(cfg: RunConfig, args) -> int:
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise _Exit(EXIT_IO, f"cannot read checkpoint {args.checkpoint}") from None
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise _Exit(EXIT_IO, f"malformed checkpoint {args.checkpoint}: {exc}") from None

    if cfg.schema.get("features"):
        wanted = Schema(tuple(cfg.schema["features"]))
        if wanted.fingerprint != ckpt.fingerprint:
            raise _Exit(EXIT_MISMATCH, "configured feature columns do not match the checkpoint schema fingerprint")

    paths = {
        "control_source": Path(args.control_source) if args.control_source else cfg.data_path("control_source"),
        "control_target": Path(args.control_target) if args.control_target else cfg.data_path("control_target"),
    }
    samples = {}
    for role, path in paths.items():
        if path is None:
            raise ConfigError(f"agreement needs data.{role} or --{role.replace('_', '-')}")
        if not path.exists():
            raise _Exit(EXIT_IO, f"cannot read {role} file {path}")
        weight_col = cfg.schema.get("weight") if role == "control_target" else None
        header = infer_schema(path).feature_columns
        schema = Schema(ckpt.schema.feature_columns, weight_column=weight_col if weight_col in header else None)
        try:
            ds = load_csv(path, schema, Domain.SOURCE if role == "control_source" else Domain.TARGET)
        except SchemaError as exc:
            raise _Exit(EXIT_MISMATCH, f"{role} does not fit the checkpoint: {exc}") from None
        samples[role] = WeightedSample(predict(ckpt.params, ckpt.standardizer, ds.features), ds.weights)

    report = agreement_check(samples["control_source"], samples["control_target"], cfg.threshold)
    outdir = Path(args.out) if args.out else Path(args.checkpoint).parent
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "agreement.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")

    edges, dens_src = density_histogram(samples["control_source"], HISTOGRAM_BINS)
    _, dens_tgt = density_histogram(samples["control_target"], HISTOGRAM_BINS)
    with open(outdir / "histogram.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_low", "bin_high", "density_source", "density_target"])
        for i in range(HISTOGRAM_BINS):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), repr(float(dens_src[i])), repr(float(dens_tgt[i]))])

    verdict = "PASS" if report.passed else "FAIL"
    print(f"ks_statistic: {report.statistic:.6f} threshold: {report.threshold} -> {verdict}")
    print(f"agreement: {outdir / 'agreement.json'}")
    return EXIT_OK if report.passed else EXIT_GATE_FAIL


def cmd_report(cfg: Optional[RunConfig], args) -> int:
    histories = []
    for path in args.histories:
        if not Path(path).exists():
            raise _Exit(EXIT_IO, f"cannot read history {path}")
        histories.append(History.read(path))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "epoch", "metric", "value"])
        for hist in histories:
            for row in hist.to_rows():
                for metric in hist.metrics():
                    writer.writerow([hist.model, row["epoch"], metric, repr(float(row[metric]))])
    print(f"curves: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sim2real", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. --set train.epochs=20")
        p.add_argument("--out", help="output directory (defaults derive from output_dir)")
        return p

    with_config(sub.add_parser("synth", help="generate a synthetic scenario"))
    p = with_config(sub.add_parser("train", help="train the plain or the adversarial classifier"))
    p.add_argument("--model", choices=("nn", "dann"), required=True)
    p = with_config(sub.add_parser("agreement", help="run the KS agreement gate on the control channel"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--control-source")
    p.add_argument("--control-target")
    p = sub.add_parser("report", help="merge history files into long-format curves")
    p.add_argument("histories", nargs="+")
    p.add_argument("--out", default="curves.csv")
    sub.add_parser("config", help="print a default configuration")
    return parser


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "agreement": cmd_agreement}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "config":
            print(json.dumps(default_config_dict(), indent=2))
            return EXIT_OK
        if args.command == "report":
            return cmd_report(None, args)
        cfg = load_run_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TypeError as exc:
        # wrong value types reaching a config dataclass
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, SchemaError, ValidationError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Sim2RealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
