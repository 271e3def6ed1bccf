"""Command-line entry point: ``generate``, ``train``, ``simulate``, ``evaluate``, ``ablate``.

Every command takes an optional ``--config`` JSON file; flags override it.
All randomness derives from the top-level ``--seed`` through labeled
sub-seeds, unless a config section pins its own ``seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .classifier import ForestConfig, RandomForest, SmoteConfig
from .corroboration import STRATEGIES, Aggregation
from .dataset import (
    DEFAULT_MAX_GAP_MS,
    GWS_LABELS,
    LabelDictionary,
    SyntheticConfig,
    generate_synthetic,
    load_sessions,
    write_sessions,
)
from .errors import ConfigError, CorroborationError
from .evaluation import ablate, format_table, write_ablation_csv, write_confusion_csv, write_report
from .features import WindowSpec
from .pipeline import SPLIT_MODES, train_pipeline
from .seeding import derive_seed
from .simulator import NetworkModel, SimConfig, read_traces, run_experiment, write_traces

log = logging.getLogger("corroborate")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
BROADCAST_MODES = ("held-out", "all")


@dataclass
class RunConfig:
    seed: int = 0
    labels: tuple[str, ...] | None = None
    synthetic: dict = field(default_factory=dict)
    window: dict = field(default_factory=dict)
    forest: dict = field(default_factory=dict)
    smote: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    max_gap_ms: int = DEFAULT_MAX_GAP_MS

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        sections = {f.name for f in fields(cls)}
        synthetic_fields = set(SyntheticConfig.__dataclass_fields__)
        if set(doc) <= synthetic_fields and not set(doc) <= {"seed", "labels"}:
            # A bare synthetic-generator document.
            return cls(seed=int(doc.get("seed", 0)), synthetic={k: v for k, v in doc.items() if k != "seed"})
        unknown = set(doc) - sections
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.seed = int(cfg.seed)
        if cfg.labels is not None:
            cfg.labels = tuple(cfg.labels)
        return cfg

    @classmethod
    def load(cls, path) -> RunConfig:
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        return cls.from_dict(doc)

    def sub_seed(self, section: dict, label: str) -> int:
        return int(section["seed"]) if "seed" in section else derive_seed(self.seed, label)

    def dictionary(self) -> LabelDictionary:
        if self.labels is not None:
            return LabelDictionary(self.labels)
        if "labels" in self.synthetic:
            return LabelDictionary(self.synthetic["labels"])
        return GWS_LABELS

    def synthetic_config(self) -> SyntheticConfig:
        sec = dict(self.synthetic)
        sec["seed"] = self.sub_seed(sec, "synthetic")
        if self.labels is not None:
            sec.setdefault("labels", list(self.labels))
        if "window_length_s" not in sec and "length_s" in self.window:
            sec["window_length_s"] = self.window["length_s"]
        return SyntheticConfig.from_dict(sec)

    def window_spec(self) -> WindowSpec:
        return _build(WindowSpec, self.window, "window")

    def forest_config(self) -> ForestConfig:
        sec = dict(self.forest)
        sec["seed"] = self.sub_seed(sec, "forest")
        return _build(ForestConfig, sec, "forest")

    def smote_config(self) -> SmoteConfig:
        sec = dict(self.smote)
        sec["seed"] = self.sub_seed(sec, "smote")
        return _build(SmoteConfig, sec, "smote")

    def split_settings(self) -> tuple[str, float, int]:
        sec = self.split
        mode = sec.get("mode", "window")
        if mode not in SPLIT_MODES:
            raise ConfigError(f"split mode must be one of {SPLIT_MODES}, got {mode!r}")
        return mode, float(sec.get("test_fraction", 0.2)), self.sub_seed(sec, "split")

    def sim_config(self) -> tuple[SimConfig, str]:
        sec = dict(self.simulation)
        known = {"aggregation", "alpha", "drop_probability", "latency_ms", "staleness_ms", "broadcast", "seed"}
        unknown = set(sec) - known
        if unknown:
            raise ConfigError(f"unknown simulation field(s): {sorted(unknown)}")
        broadcast = sec.get("broadcast", "held-out")
        if broadcast not in BROADCAST_MODES:
            raise ConfigError(f"broadcast must be one of {BROADCAST_MODES}, got {broadcast!r}")
        sim_seed = self.sub_seed(sec, "simulation")
        network = NetworkModel(
            float(sec.get("drop_probability", 0.0)),
            int(sec.get("latency_ms", 0)),
            derive_seed(sim_seed, "network"),
        )
        cfg = SimConfig(
            window=self.window_spec(),
            network=network,
            aggregation=Aggregation(sec.get("aggregation", "mean"), float(sec.get("alpha", 0.5))),
            staleness_ms=int(sec.get("staleness_ms", 5000)),
            max_gap_ms=int(self.max_gap_ms),
            seed=sim_seed,
        )
        return cfg, broadcast


def _build(cls, section: dict, name: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"{name} config: {exc}") from None


def _apply_common(args, cfg: RunConfig) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "labels", None):
        cfg.labels = tuple(n.strip() for n in args.labels.split(",") if n.strip())
    if getattr(args, "split", None):
        cfg.split = {**cfg.split, "mode": args.split}
    if getattr(args, "test_fraction", None) is not None:
        cfg.split = {**cfg.split, "test_fraction": args.test_fraction}
    if getattr(args, "trees", None) is not None:
        cfg.forest = {**cfg.forest, "n_trees": args.trees}
    sim = dict(cfg.simulation)
    for flag, key in (
        ("aggregation", "aggregation"),
        ("alpha", "alpha"),
        ("drop_prob", "drop_probability"),
        ("latency_ms", "latency_ms"),
        ("staleness_ms", "staleness_ms"),
        ("broadcast", "broadcast"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            sim[key] = value
    cfg.simulation = sim
    return cfg


def split_file_for(model_path) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + ".split.json")


# ---------------------------------------------------------------- commands


def cmd_generate(args, cfg: RunConfig) -> int:
    sessions = generate_synthetic(cfg.synthetic_config())
    paths = write_sessions(sessions, args.out)
    n_streams = sum(len(s.streams) for s in sessions)
    print(f"wrote {len(paths)} session file(s), {n_streams} stream(s) to {args.out}")
    return EXIT_OK


def _load_corpus(data, labels: LabelDictionary):
    sessions = load_sessions(data, labels)
    if not sessions:
        raise CorroborationError(f"{data}: no session CSV files found")
    return sessions


def cmd_train(args, cfg: RunConfig) -> int:
    labels = cfg.dictionary()
    sessions = _load_corpus(args.data, labels)
    mode, fraction, split_seed = cfg.split_settings()
    result = train_pipeline(
        sessions,
        labels,
        spec=cfg.window_spec(),
        forest=cfg.forest_config(),
        smote=cfg.smote_config(),
        split=mode,
        test_fraction=fraction,
        split_seed=split_seed,
        max_gap_ms=cfg.max_gap_ms,
        n_jobs=args.jobs,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out)
    manifest = {
        "split": mode,
        "test_fraction": fraction,
        "seed": split_seed,
        "test_sessions": result.test_sessions,
        "test_windows": [list(k) for k in result.test_keys()],
    }
    split_file_for(out).write_text(json.dumps(manifest) + "\n")
    print(f"split: {mode}")
    print(f"train windows: {len(result.train)} ({result.n_balanced} after SMOTE)")
    print(f"test windows: {len(result.test)}")
    print(f"trees: {len(result.model.trees)}")
    print(f"held-out standalone accuracy: {result.test_accuracy:.4f}")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    model = RandomForest.load(args.model)
    sessions = _load_corpus(args.data, model.labels)
    sim_cfg, broadcast = cfg.sim_config()
    split_path = Path(args.split_file) if args.split_file else split_file_for(args.model)
    include = participate = None
    if not args.all_windows and split_path.exists():
        manifest = json.loads(split_path.read_text())
        if manifest["split"] == "session":
            held = set(manifest["test_sessions"])
            sessions = [s for s in sessions if s.session_id in held]
        else:
            include = {(a, b, int(c)) for a, b, c in manifest["test_windows"]}
            if broadcast == "held-out":
                participate = include
        log.info("scoring held-out part of %s", split_path)
    elif not args.all_windows and args.split_file:
        raise ConfigError(f"{split_path}: split file not found")
    traces = run_experiment(sessions, model, sim_cfg, include=include, participate=participate)
    n = write_traces(traces, args.out)
    print(f"simulated {len(traces)} session(s), wrote {n} decision(s) to {args.out}")
    return EXIT_OK


def _trace_labels(args, cfg: RunConfig) -> LabelDictionary:
    if getattr(args, "model", None):
        return RandomForest.load(args.model).labels
    return cfg.dictionary()


def cmd_evaluate(args, cfg: RunConfig) -> int:
    traces = read_traces(args.traces, _trace_labels(args, cfg))
    result = ablate(traces)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(result, out)
    confusion = Path(args.confusion_out) if args.confusion_out else out.with_suffix(".confusion.csv")
    write_confusion_csv([result.standalone, result.corroborated], confusion)
    print(format_table(result))
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig) -> int:
    result = ablate(read_traces(args.traces, _trace_labels(args, cfg)))
    if args.out:
        write_ablation_csv(result, args.out)
    print(format_table(result))
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corroborate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
        p.add_argument("--out", required=out_help is not None, help=out_help)
        p.add_argument("--labels", help="comma-separated activity dictionary")

    p = sub.add_parser("generate", help="write a synthetic corpus as session CSVs")
    common(p, "output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="window, split, balance and fit the forest")
    common(p, "model JSON path")
    p.add_argument("--data", required=True, help="directory of session CSVs")
    p.add_argument("--split", choices=SPLIT_MODES)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--trees", type=int, help="number of trees")
    p.add_argument("--jobs", type=int, default=1, help="parallel tree-training processes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="replay sessions through the corroboration protocol")
    common(p, "trace JSON-lines path")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split-file", help="split manifest (default: next to the model)")
    p.add_argument("--all-windows", action="store_true", help="score every window, ignore the split")
    p.add_argument("--aggregation", choices=STRATEGIES)
    p.add_argument("--alpha", type=float, help="local weight for --aggregation weighted")
    p.add_argument("--drop-prob", type=float)
    p.add_argument("--latency-ms", type=int)
    p.add_argument("--staleness-ms", type=int)
    p.add_argument("--broadcast", choices=BROADCAST_MODES,
                   help="with a window split: which windows broadcast (default held-out)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="metrics JSON and confusion CSV from a trace file")
    common(p, "report JSON path")
    p.add_argument("--traces", required=True)
    p.add_argument("--model", help="take the label dictionary from this model")
    p.add_argument("--confusion-out", help="confusion CSV path (default: <out>.confusion.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="standalone vs corroborated comparison table")
    common(p, None)
    p.add_argument("--traces", required=True)
    p.add_argument("--model", help="take the label dictionary from this model")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _apply_common(args, RunConfig.load(args.config))
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"corroborate {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorroborationError, OSError) as exc:
        print(f"corroborate {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
