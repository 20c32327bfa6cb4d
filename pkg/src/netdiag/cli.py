"""Operator command line.

Subcommands: extract, train, diagnose, eval, synth.  Machine-readable
JSON goes to stdout; human summaries go to stderr (silenced by
--quiet).  Exit codes: 0 healthy/ok, 2 usage or config error, 3
training failure, 4 catalog mismatch, 10 link fault found, 20 client
fault(s) found.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .errors import (
    BadHeader,
    CatalogMismatch,
    ConfigError,
    EmptyTrace,
    IoFailure,
    MalformedRow,
    NetdiagError,
    StageError,
    UnknownLabel,
)
from .evaluation import GroundTruth, evaluate_verdicts, render_report
from .features import default_catalog, extract_signature
from .preprocess import (
    DEFAULT_FAULT_REGISTRY,
    LabelKind,
    encode_labels,
    load_database,
    save_database,
)
from .scenarios import (
    DEFAULT_TRANSFER_BYTES,
    emit_corpus,
    preset_healthy,
    preset_paper_matrix,
    read_labels,
    scenario_from_json,
)
from .svm import KernelSpec, SvmConfig
from .trace import read_pair

ENV_CONFIG = "NETDIAG_CONFIG"

_USAGE_ERRORS = (
    ConfigError,
    BadHeader,
    MalformedRow,
    EmptyTrace,
    UnknownLabel,
    IoFailure,
    StageError,
)


@dataclass(frozen=True)
class CliConfig:
    catalog_version: str
    seed: int
    fault_registry: dict[str, int]
    link_profile: str
    lpd: clf.PipelineConfig
    cfd: dict[str, clf.PipelineConfig]


def _parse_kernel(raw: dict, where: str) -> KernelSpec:
    unknown = set(raw) - {"variant", "sigma"}
    if unknown:
        raise ConfigError(f"{where}.kernel: unknown keys {sorted(unknown)}")
    try:
        return KernelSpec(raw.get("variant", "quadratic"), raw.get("sigma"))
    except ValueError as exc:
        raise ConfigError(f"{where}.kernel: {exc}") from exc


def _parse_pipeline(raw: dict, where: str, base: clf.PipelineConfig) -> clf.PipelineConfig:
    allowed = {"kernel", "C", "max_iter", "tol", "candidate_sizes", "cv_folds", "fp_penalty"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    svm = base.svm
    if "kernel" in raw:
        svm = replace(svm, kernel=_parse_kernel(raw["kernel"], where))
    try:
        svm = replace(
            svm,
            C=float(raw.get("C", svm.C)),
            max_iter=int(raw.get("max_iter", svm.max_iter)),
            tol=float(raw.get("tol", svm.tol)),
        )
        out = replace(
            base,
            svm=svm,
            cv_folds=int(raw.get("cv_folds", base.cv_folds)),
            fp_penalty=float(raw.get("fp_penalty", base.fp_penalty)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if "candidate_sizes" in raw:
        sizes = raw["candidate_sizes"]
        if not isinstance(sizes, list) or not all(isinstance(q, int) for q in sizes):
            raise ConfigError(f"{where}.candidate_sizes must be a list of integers")
        out = replace(out, candidate_sizes=tuple(sizes))
    return out


def load_config(path: str | None, seed_override: int | None) -> CliConfig:
    raw = {}
    source = path or os.environ.get(ENV_CONFIG)
    if source:
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    allowed = {"catalog_version", "seed", "fault_registry", "link_profile", "lpd", "cfd"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = seed_override
    registry = {str(k): int(v) for k, v in raw.get("fault_registry", DEFAULT_FAULT_REGISTRY).items()}
    lpd = _parse_pipeline(raw.get("lpd", {}), "lpd", clf.default_lpd_config(seed=seed))
    cfd_raw = dict(raw.get("cfd", {}))
    default_raw = cfd_raw.pop("default", {})
    unknown_faults = set(cfd_raw) - set(registry)
    if unknown_faults:
        raise ConfigError(f"cfd config for unknown faults {sorted(unknown_faults)}")
    cfd = {}
    for name in registry:
        base = _parse_pipeline(default_raw, "cfd.default", clf.default_cf_config(name, seed=seed))
        cfd[name] = _parse_pipeline(cfd_raw.get(name, {}), f"cfd.{name}", base)
    return CliConfig(
        catalog_version=str(raw.get("catalog_version", "v1")),
        seed=seed,
        fault_registry=registry,
        link_profile=str(raw.get("link_profile", "default")),
        lpd=lpd,
        cfd=cfd,
    )


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _discover_pairs(tracedir: Path) -> list[tuple[str, Path, Path]]:
    pairs = []
    for down in sorted(tracedir.glob("*.down.csv")):
        pair_id = down.name[: -len(".down.csv")]
        up = tracedir / f"{pair_id}.up.csv"
        if not up.exists():
            raise ConfigError(f"orphan trace {down.name}: missing partner {up.name}")
        pairs.append((pair_id, down, up))
    for up in sorted(tracedir.glob("*.up.csv")):
        pair_id = up.name[: -len(".up.csv")]
        if not (tracedir / f"{pair_id}.down.csv").exists():
            raise ConfigError(f"orphan trace {up.name}: missing partner {pair_id}.down.csv")
    if not pairs:
        raise ConfigError(f"no trace pairs found in {tracedir}")
    return pairs


def cmd_extract(args, config: CliConfig) -> int:
    catalog = default_catalog()
    if config.catalog_version != catalog.version:
        raise CatalogMismatch(
            f"configured catalog {config.catalog_version!r} unavailable; this build provides {catalog.version!r}"
        )
    tracedir = Path(args.traces)
    labels = read_labels(args.labels or tracedir / "labels.csv")
    kind = LabelKind(args.kind)
    rows = []
    for pair_id, down, up in _discover_pairs(tracedir):
        if pair_id not in labels:
            raise ConfigError(f"no label row for trace pair {pair_id!r}")
        link_tag, client_tag = labels[pair_id]
        tag = link_tag if kind is LabelKind.LINK else client_tag
        if kind is LabelKind.CLIENT and "+" in tag:
            raise ConfigError(
                f"pair {pair_id!r} carries multiple faults {tag!r}; single-fault rows only for training"
            )
        sig = extract_signature(read_pair(down, up), catalog)
        rows.append((sig.values, tag))
    db = encode_labels(rows, catalog.feature_names, kind, catalog.version, config.fault_registry)
    if args.append:
        existing = load_database(args.append)
        if existing.catalog_version != db.catalog_version:
            raise CatalogMismatch(
                f"mixed catalog versions: {existing.catalog_version!r} vs {db.catalog_version!r}"
            )
        db = replace(
            existing,
            X=np.vstack([existing.X, db.X]),
            y=np.concatenate([existing.y, db.y]),
        )
    save_database(db, args.out)
    _say(args, f"extracted {db.n} signature rows x {db.m} features -> {args.out}")
    _emit({"rows": db.n, "features": db.m, "database": str(args.out)})
    return 0


def cmd_train(args, config: CliConfig) -> int:
    db = load_database(args.db)
    if db.catalog_version != config.catalog_version:
        raise CatalogMismatch(
            f"database catalog {db.catalog_version!r} != configured {config.catalog_version!r}"
        )
    bundle = Path(args.out)
    if args.stage == "lpd":
        if db.label_kind is not LabelKind.LINK:
            raise ConfigError("--stage lpd needs a link-labeled database (labels +1/-1)")
        lpd = clf.train_lpd(db, config.lpd, link_profile=config.link_profile)
        clf.save_lpd_part(bundle, lpd, config.catalog_version)
        meta = lpd.model.training_meta
        summary = {
            "stage": "lpd",
            "bundle": str(bundle),
            "kernel": lpd.model.kernel.variant,
            "chosen_q": lpd.selection.chosen_q,
            "cv_accuracy": lpd.selection.cv_accuracy[
                lpd.selection.candidate_sizes.index(lpd.selection.chosen_q)
            ],
            "converged": meta.converged,
        }
        _say(
            args,
            f"lpd: kernel={summary['kernel']} q={summary['chosen_q']} "
            f"cv_acc={summary['cv_accuracy']:.4f} converged={meta.converged}",
        )
        if not meta.converged:
            _say(args, "warning: solver hit the iteration cap; model kept")
        _emit(summary)
        return 0
    if db.label_kind is not LabelKind.CLIENT:
        raise ConfigError("--stage cfd needs a client-labeled database")
    network = clf.train_cfd(db, config.cfd, seed=config.seed)
    clf.save_cfd_part(bundle, network, config.catalog_version)
    modules = {}
    for module in network.modules:
        meta = module.model.training_meta
        modules[module.fault_name] = {
            "kernel": module.model.kernel.variant,
            "chosen_q": module.selection.chosen_q,
            "converged": meta.converged,
        }
        _say(
            args,
            f"cfd/{module.fault_name}: kernel={module.model.kernel.variant} "
            f"q={module.selection.chosen_q} converged={meta.converged}",
        )
    _emit({"stage": "cfd", "bundle": str(bundle), "modules": modules})
    return 0


def cmd_diagnose(args, config: CliConfig) -> int:
    catalog = default_catalog()
    lpd, cfd, bundle_catalog = clf.load_bundle(args.bundle)
    if bundle_catalog != catalog.version:
        raise CatalogMismatch(
            f"bundle built for catalog {bundle_catalog!r}, extractor is {catalog.version!r}"
        )
    pair = read_pair(args.down, args.up)
    verdict = clf.diagnose(lpd, cfd, pair, catalog)
    _emit(verdict.to_dict())
    _say(args, verdict.summary())
    if verdict.link is clf.LinkState.FAULTY:
        return 10
    return 20 if verdict.client_faults else 0


def cmd_eval(args, config: CliConfig) -> int:
    catalog = default_catalog()
    lpd, cfd, bundle_catalog = clf.load_bundle(args.bundle)
    if bundle_catalog != catalog.version:
        raise CatalogMismatch(
            f"bundle built for catalog {bundle_catalog!r}, extractor is {catalog.version!r}"
        )
    tracedir = Path(args.traces)
    labels = read_labels(args.labels or tracedir / "labels.csv")
    labeled = []
    for pair_id, down, up in _discover_pairs(tracedir):
        if pair_id not in labels:
            raise ConfigError(f"no label row for trace pair {pair_id!r}")
        link_tag, client_tag = labels[pair_id]
        faults = frozenset() if client_tag == "HEALTHY" else frozenset(client_tag.split("+"))
        labeled.append((read_pair(down, up), GroundTruth(link_tag == "FAULTY", faults)))
    report = evaluate_verdicts(labeled, lpd, cfd, catalog)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    out.with_suffix(".txt").write_text(render_report(report), encoding="utf-8")
    _say(args, render_report(report).rstrip("\n"))
    _emit(report)
    return 0


def cmd_synth(args, config: CliConfig) -> int:
    if args.scenario:
        scenarios = scenario_from_json(args.scenario)
    elif args.preset == "healthy":
        scenarios = preset_healthy(config.seed, args.bytes)
    elif args.preset == "paper-matrix":
        scenarios = preset_paper_matrix(args.per_class, config.seed, args.bytes)
    else:
        raise ConfigError(f"unknown preset {args.preset!r}")
    emit_corpus(scenarios, args.out)
    _say(args, f"wrote {len(scenarios)} scenario pairs to {args.out}")
    _emit({"scenarios": len(scenarios), "outdir": str(args.out)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help=f"JSON config path (or ${ENV_CONFIG})")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override config seed")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress stderr summaries")

    parser = argparse.ArgumentParser(prog="netdiag", description=__doc__, parents=[common])
    parser.set_defaults(config=None, seed=None, quiet=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="trace pairs -> signature database")
    p.add_argument("--traces", required=True, help="directory of <id>.down.csv/<id>.up.csv")
    p.add_argument("--labels", default=None, help="labels.csv (default: <traces>/labels.csv)")
    p.add_argument("--kind", choices=["link", "client"], required=True)
    p.add_argument("--out", required=True, help="output database CSV")
    p.add_argument("--append", default=None, help="existing database to append to")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="signature database -> model bundle")
    p.add_argument("--db", required=True)
    p.add_argument("--stage", choices=["lpd", "cfd"], required=True)
    p.add_argument("--out", required=True, help="bundle directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diagnose", parents=[common], help="trace pair -> verdict")
    p.add_argument("--bundle", required=True)
    p.add_argument("--down", required=True)
    p.add_argument("--up", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("eval", parents=[common], help="labeled trace corpus -> accuracy report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", required=True, help="report path prefix (.json/.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="emit synthetic trace corpora")
    p.add_argument("--preset", default=None, choices=["healthy", "paper-matrix"])
    p.add_argument("--scenario", default=None, help="scenario JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=11, dest="per_class")
    p.add_argument("--bytes", type=int, default=DEFAULT_TRANSFER_BYTES)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not (args.preset or args.scenario):
        print("synth needs --preset or --scenario", file=sys.stderr)
        return 2
    try:
        config = load_config(args.config, args.seed)
        return args.func(args, config)
    except CatalogMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NetdiagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if args.command == "train" else 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
