"""Command-line experiment harness.

Subcommands: generate, oracle, train, infer, ate, report, sweep.
Every experiment is described by one JSON config with explicit seeds;
all outputs carry the config hash so any row can be traced back.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .gnn import GraphSpec
from .inference import DEFAULT_SAMPLES, density_table, estimate_ate, marginal_log_prob
from .ivgae import IvgaeModel, ModelConfig, TrainConfig, train
from .scm import (Intervention, RegimeDataset, Scm, ScmError, ancestral_sample, builtin_scm,
                  exact_ate, exact_joint, load_net, random_noise_probs)

log = logging.getLogger("gnncausal")

EXIT_OK, EXIT_USAGE, EXIT_ALL_FAILED = 0, 1, 2
METRICS = ("train_elbo", "valid_elbo", "test_elbo", "valid_logp", "test_logp")


class UsageError(Exception):
    pass


class AllSeedsFailed(Exception):
    pass


# config

@dataclass
class ExperimentConfig:
    name: str
    scm: dict
    regimes: list[str]
    samples: int = 10000
    data_seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0])
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = "runs"
    ate: dict | None = None
    is_samples: int = DEFAULT_SAMPLES
    alg1_literal: bool = False
    workers: int = 1
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise UsageError("config needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise UsageError(f"seeds must be distinct: {self.seeds}")
        if self.samples <= 0:
            raise UsageError("samples per regime must be positive")
        if not self.regimes:
            raise UsageError("config needs at least one regime")
        if self.is_samples <= 0:
            raise UsageError("importance samples must be positive")
        if not ({"builtin", "net"} & set(self.scm)):
            raise UsageError("scm must name a 'builtin' structure or a 'net'")
        self.interventions  # validates regime syntax

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        try:
            doc["model"] = ModelConfig(**doc.get("model", {}))
            doc["train"] = TrainConfig(**doc.get("train", {}))
            return cls(**doc)
        except TypeError as exc:
            raise UsageError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        doc = self.to_dict()
        for k in ("out", "workers", "sweep"):
            doc.pop(k)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]

    @property
    def interventions(self) -> list[Intervention]:
        try:
            return [Intervention.parse(r) for r in self.regimes]
        except ScmError as exc:
            raise UsageError(str(exc)) from exc

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def instances(self) -> list[tuple[str, Scm]]:
        """One (label, SCM) per parameterization named by the config."""
        spec = self.scm
        if "net" in spec:
            scm = load_net(spec["net"])
            return [(scm.name, scm)]
        name = spec["builtin"].upper()
        if "noise_probs" in spec:
            return [(name, builtin_scm(name, spec["noise_probs"]))]
        seeds = spec.get("noise_seeds", [spec.get("noise_seed", 0)])
        return [(f"{name}-p{s}", builtin_scm(name, random_noise_probs(s))) for s in seeds]


def regime_slug(label: str) -> str:
    return label.replace("=", "-").replace(",", "+")


def data_path(cfg: ExperimentConfig, instance: str, label: str) -> Path:
    return cfg.out_dir / instance / "data" / f"{regime_slug(label)}.csv"


def checkpoint_path(cfg: ExperimentConfig, instance: str, seed: int) -> Path:
    return cfg.out_dir / instance / f"seed_{seed}" / "model.json"


def manifest_path(cfg: ExperimentConfig, instance: str) -> Path:
    return cfg.out_dir / instance / "manifest.json"


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# generate

def cmd_generate(cfg: ExperimentConfig) -> list[Path]:
    paths = []
    for inst, scm in cfg.instances():
        for k, iv in enumerate(cfg.interventions):
            ds = ancestral_sample(scm, iv, cfg.samples, seed=cfg.data_seed * 1000 + k)
            path = data_path(cfg, inst, iv.label())
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                ds.write(path)
            except OSError as exc:
                raise UsageError(f"cannot write {path}: {exc}") from exc
            paths.append(path)
    return paths


def load_datasets(cfg: ExperimentConfig, instance: str) -> list[RegimeDataset]:
    out = []
    for iv in cfg.interventions:
        path = data_path(cfg, instance, iv.label())
        if not path.exists():
            raise UsageError(f"missing dataset {path}; run `generate` first")
        out.append(RegimeDataset.read(path))
    return out


# train

def _train_one(job: tuple) -> dict:
    cfg_doc, instance, seed = job
    cfg = ExperimentConfig.from_dict(cfg_doc)
    scm = dict(cfg.instances())[instance]
    datasets = load_datasets(cfg, instance)
    tcfg = replace(cfg.train, seed=seed, is_samples=cfg.is_samples)
    model = IvgaeModel(GraphSpec.from_scm(scm), cfg.model, seed=seed)
    model, trace = train(model, datasets, tcfg)
    ckpt = checkpoint_path(cfg, instance, seed)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    model.save(ckpt, tcfg, extra={"config_hash": cfg.hash(), "instance": instance})
    return {"seed": seed, **trace.summary()}


def aggregate(runs: Sequence[dict]) -> dict:
    """Mean/best/worst per metric over runs that did not fail."""
    ok = [r for r in runs if not r.get("failed")]
    agg: dict[str, Any] = {"n_runs": len(runs), "n_failed": len(runs) - len(ok),
                           "failed_seeds": [r["seed"] for r in runs if r.get("failed")]}
    for m in METRICS:
        vals = [r[m] for r in ok if m in r]
        if vals:
            agg[m] = {"mean": float(np.mean(vals)), "best": float(np.max(vals)), "worst": float(np.min(vals))}
    return agg


def _map(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_train(cfg: ExperimentConfig) -> list[dict]:
    instances = [inst for inst, _ in cfg.instances()]
    for inst in instances:
        load_datasets(cfg, inst)
    jobs = [(cfg.to_dict(), inst, s) for inst in instances for s in cfg.seeds]
    results = _map(_train_one, jobs, cfg.workers)
    manifests = []
    for inst in instances:
        runs = [r for (_, i, _), r in zip(jobs, results) if i == inst]
        man = {
            "config_hash": cfg.hash(), "name": cfg.name, "instance": inst,
            "regimes": [iv.label() for iv in cfg.interventions],
            "runs": runs, "aggregate": aggregate(runs),
        }
        _dump(manifest_path(cfg, inst), man)
        manifests.append(man)
    if all(m["aggregate"]["n_failed"] == m["aggregate"]["n_runs"] for m in manifests):
        raise AllSeedsFailed(f"every seed failed for {cfg.name}")
    return manifests


# inference and reports

def _load_manifests(cfg: ExperimentConfig) -> list[dict]:
    out = []
    for inst, _ in cfg.instances():
        p = manifest_path(cfg, inst)
        if p.exists():
            out.append(json.loads(p.read_text()))
    if not out:
        raise UsageError(f"no manifests under {cfg.out_dir}; run `train` first")
    return out


def _models(cfg: ExperimentConfig, man: dict):
    for run in man["runs"]:
        if run.get("failed"):
            continue
        yield run, IvgaeModel.load(checkpoint_path(cfg, man["instance"], run["seed"]))


def density_rows(cfg: ExperimentConfig, regimes: Sequence[Intervention] | None = None) -> list[dict]:
    scms = dict(cfg.instances())
    rows = []
    for man in _load_manifests(cfg):
        scm = scms.get(man["instance"])
        if scm is None:
            raise UsageError(f"no oracle reference for instance {man['instance']}")
        for run, model in _models(cfg, man):
            for k, iv in enumerate(regimes or cfg.interventions):
                rep = density_table(model, scm, iv, cfg.is_samples, seed=run["seed"] * 100 + k,
                                    alg1_literal=cfg.alg1_literal)
                for r in rep.rows():
                    rows.append({"config_hash": cfg.hash(), "instance": man["instance"], "seed": run["seed"],
                                 "regime": rep.regime, **r})
    return rows


def ate_rows(cfg: ExperimentConfig) -> list[dict]:
    if not cfg.ate:
        raise UsageError("config has no 'ate' section")
    x, y = cfg.ate["x"], cfg.ate["y"]
    scms = dict(cfg.instances())
    rows = []
    for man in _load_manifests(cfg):
        truth = exact_ate(scms[man["instance"]], x, y)
        for run, model in _models(cfg, man):
            est = estimate_ate(model, x, y, cfg.is_samples, seed=run["seed"], alg1_literal=cfg.alg1_literal)
            rows.append({"config_hash": cfg.hash(), "instance": man["instance"],
                         "structure": man["instance"].split("-")[0], "seed": run["seed"],
                         "ate_true": truth, "ate_est": est, "abs_error": abs(est - truth)})
    return rows


def aggregate_rows(manifests: Sequence[dict]) -> list[dict]:
    if not manifests:
        raise UsageError("empty manifest list")
    rows = []
    for man in manifests:
        agg = man["aggregate"]
        row = {"config_hash": man["config_hash"], "instance": man["instance"],
               "regimes": len(man["regimes"]), "n_runs": agg["n_runs"], "n_failed": agg["n_failed"]}
        for m in METRICS:
            for s in ("mean", "best", "worst"):
                row[f"{m}_{s}"] = agg.get(m, {}).get(s, float("nan"))
        rows.append(row)
    return rows


def cmd_report(cfg: ExperimentConfig, manifests: Sequence[dict] | None = None) -> dict[str, Path]:
    manifests = _load_manifests(cfg) if manifests is None else manifests
    out = cfg.out_dir / "report"
    files = {}
    agg = aggregate_rows(manifests)
    _write_csv(out / "aggregate.csv", agg)
    _dump(out / "aggregate.json", agg)
    files["aggregate"] = out / "aggregate.csv"
    dens = density_rows(cfg)
    _write_csv(out / "density.csv", dens)
    files["density"] = out / "density.csv"
    if cfg.ate:
        ate = ate_rows(cfg)
        _write_csv(out / "ate.csv", ate)
        _dump(out / "ate.json", ate)
        files["ate"] = out / "ate.csv"
    return files


# sweep

def sweep_grid(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Expand ``sweep`` ({"train.lr": [...], "model.hidden": [...]}) into configs."""
    if not cfg.sweep:
        raise UsageError("config has no 'sweep' section")
    keys = sorted(cfg.sweep)
    out = []
    for combo in itertools.product(*(cfg.sweep[k] for k in keys)):
        doc = cfg.to_dict()
        doc["sweep"] = {}
        parts = []
        for key, val in zip(keys, combo):
            section, _, attr = key.rpartition(".")
            target = doc[section] if section else doc
            if attr not in target:
                raise UsageError(f"unknown sweep key {key!r}")
            target[attr] = val
            parts.append(f"{attr}={val}")
        label = "_".join(parts)
        doc["out"] = str(cfg.out_dir / "sweep" / label)
        out.append((label, ExperimentConfig.from_dict(doc)))
    return out


def cmd_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Train every grid point; rank by mean validation ELBO."""
    rows = []
    for label, sub in sweep_grid(cfg):
        cmd_generate(sub)
        try:
            mans = cmd_train(sub)
        except AllSeedsFailed:
            mans = _load_manifests(sub)
        for man in mans:
            agg = man["aggregate"]
            rows.append({"config_hash": sub.hash(), "point": label, "instance": man["instance"],
                         "n_failed": agg["n_failed"],
                         **{f"{m}_mean": agg.get(m, {}).get("mean", float("nan")) for m in METRICS}})
    rows.sort(key=lambda r: -np.nan_to_num(r["valid_elbo_mean"], nan=-np.inf))
    _write_csv(cfg.out_dir / "sweep" / "sweep.csv", rows)
    return rows


# oracle

def _oracle_scm(args) -> Scm:
    if args.net:
        return load_net(args.net)
    if args.noise:
        return builtin_scm(args.scm.upper(), [float(p) for p in args.noise.split(",")])
    return builtin_scm(args.scm.upper(), random_noise_probs(args.noise_seed))


def cmd_oracle(args) -> dict:
    scm = _oracle_scm(args)
    iv = Intervention.parse(args.do)
    result: dict[str, Any] = {"scm": scm.name, "regime": iv.label()}
    if args.scm:
        result["noise"] = scm.noise_probs
    if args.ate:
        result["ate"] = exact_ate(scm, *args.ate)
    if args.joint or args.marginals or not args.ate:
        table = exact_joint(scm, iv)
        if args.joint:
            result["joint"] = {"".join(map(str, a)): float(p)
                               for a, p in zip(_assignments(scm.d), table.probs)}
        if args.marginals or not (args.joint or args.ate):
            result["marginals"] = table.marginals()
    return result


def _assignments(d: int):
    return itertools.product((0, 1), repeat=d)


# argparse plumbing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gnncausal", description="iVGAE causal inference experiment harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def exp(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="experiment JSON")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the config list")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--samples", type=int, help=f"importance samples (default {DEFAULT_SAMPLES})")
        sp.add_argument("--alg1-literal", action="store_true", help="omit the prior term in importance weights")
        sp.add_argument("--workers", type=int, help="process pool size")
        return sp

    exp("generate", "sample regime datasets")
    exp("train", "train one model per seed and write a manifest")
    inf = exp("infer", "query trained models")
    inf.add_argument("--do", action="append", help="regime, e.g. 'X=1' or 'tub=coin0.5' (repeatable)")
    inf.add_argument("--query", help="assignment to score, e.g. 'Y=1,Z=0'; default per-node marginals")
    exp("ate", "estimated vs exact ATE per seed")
    exp("report", "aggregate, density and ATE tables")
    exp("sweep", "grid sweep over the config's 'sweep' section")

    o = sub.add_parser("oracle", help="exact quantities from an SCM")
    src = o.add_mutually_exclusive_group(required=True)
    src.add_argument("--scm", choices=["m1", "m2", "m3", "M1", "M2", "M3"])
    src.add_argument("--net", help="builtin net name or Bayesian-network JSON path")
    o.add_argument("--noise-seed", type=int, default=0)
    o.add_argument("--noise", help="comma-separated noise probabilities for X,Y,Z,W")
    o.add_argument("--do", default="", help="regime, e.g. 'X=1'")
    o.add_argument("--ate", nargs=2, metavar=("X", "Y"))
    o.add_argument("--joint", action="store_true")
    o.add_argument("--marginals", action="store_true")
    return p


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    changes: dict[str, Any] = {}
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.out:
        changes["out"] = args.out
    if args.samples is not None:
        changes["is_samples"] = args.samples
    if args.alg1_literal:
        changes["alg1_literal"] = True
    if args.workers is not None:
        changes["workers"] = args.workers
    return replace(cfg, **changes) if changes else cfg


def _parse_query(text: str) -> dict[str, int]:
    out = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        k, _, v = part.partition("=")
        if v not in ("0", "1"):
            raise UsageError(f"bad query term {part!r}")
        out[k] = int(v)
    return out


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:          # argparse usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle":
            _print(cmd_oracle(args))
            return EXIT_OK
        cfg = _config_from_args(args)
        if args.command == "generate":
            for path in cmd_generate(cfg):
                print(path)
        elif args.command == "train":
            for man in cmd_train(cfg):
                _print({"instance": man["instance"], "config_hash": man["config_hash"], **man["aggregate"]})
        elif args.command == "infer":
            regimes = [Intervention.parse(r) for r in args.do] if args.do else None
            if args.query:
                q = _parse_query(args.query)
                for man in _load_manifests(cfg):
                    for run_, model in _models(cfg, man):
                        for iv in regimes or cfg.interventions:
                            res = marginal_log_prob(model, q, iv, cfg.is_samples, run_["seed"], cfg.alg1_literal)
                            _print({"instance": man["instance"], "seed": run_["seed"],
                                    "config_hash": cfg.hash(), **res.to_record()})
            else:
                rows = density_rows(cfg, regimes)
                _write_csv(cfg.out_dir / "report" / "infer.csv", rows)
                _print(rows)
        elif args.command == "ate":
            rows = ate_rows(cfg)
            _write_csv(cfg.out_dir / "report" / "ate.csv", rows)
            _print(rows)
        elif args.command == "report":
            for kind, path in cmd_report(cfg).items():
                print(f"{kind}: {path}")
        elif args.command == "sweep":
            rows = cmd_sweep(cfg)
            _print(rows[0] if rows else {})
    except AllSeedsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except (UsageError, ScmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
