"""Command-line entry point: ``botgan <subcommand> ...``.

Every subcommand writes a ``*.manifest.json`` beside its main output. Failures
print ``error [<stage>]: <message>`` to stderr and exit with status 1; usage
errors exit with status 2.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import dataset as ds
from . import forest as rf
from . import gan, harness, metrics
from . import numerics as nx
from . import oversampling as ovs
from .errors import BotGanError

log = logging.getLogger("botgan")


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _config(path):
    return harness.load_config(path) if path else None


def _schema_classes(args):
    cfg = _config(getattr(args, "config", None))
    if cfg is not None:
        return cfg.schema, cfg.classes, cfg
    return ds.FeatureSchema(), ds.ClassMap(), None


def _load(path, schema, classes, stage="load"):
    try:
        return ds.load_csv(path, schema, classes)
    except (BotGanError, OSError) as exc:
        raise StageError(stage, f"{path}: {exc}") from exc


def _phi(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    if b < 1 or a < 0:
        raise argparse.ArgumentTypeError(f"invalid expansion multiple {text!r}")
    return a, b


def _file_digest(path) -> str | None:
    p = Path(path)
    return hashlib.sha256(p.read_bytes()).hexdigest() if p.is_file() else None


def write_manifest(out: Path, args, seeds: dict, cfg=None, extra: dict | None = None) -> Path:
    out = Path(out)
    target = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    inputs = {k: str(v) for k, v in sorted(vars(args).items())
              if k not in ("func",) and v is not None}
    manifest = {
        "command": args.command,
        "arguments": inputs,
        "config_sha256": cfg.digest() if cfg is not None else None,
        "seeds": seeds,
        "versions": {"botgan": __version__, "numpy": np.__version__,
                     "python": platform.python_version(), "kernel_backend": kernels.BACKEND},
    }
    if extra:
        manifest.update(extra)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return target


# --- subcommands -------------------------------------------------------------

def cmd_fixture(args):
    cfg = _config(args.config)
    if cfg is None or cfg.fixture is None:
        raise StageError("config", "fixture needs a config with a [data.fixture] table")
    p = harness.Pipeline(cfg)
    d = p.data()
    ds.write_csv(d, args.out)
    write_manifest(Path(args.out), args, p.seeds, cfg, {"records": len(d)})
    print(f"wrote {len(d)} records to {args.out}")


def cmd_explore(args):
    schema, classes, cfg = _schema_classes(args)
    d = _load(args.data, schema, classes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cat, _ in schema.categories:
        try:
            model = metrics.pca_fit(d, cat)
        except BotGanError as exc:
            raise StageError("pca", f"{cat}: {exc}") from exc
        proj = metrics.pca_project(model, d)
        for c, label in enumerate(classes.labels):
            values = proj[d.labels == c]
            path = out / f"kde_{cat}_{label}.csv"
            try:
                curve = metrics.kde_curve(values, args.grid)
            except BotGanError as exc:
                log.warning("skipping %s/%s: %s", cat, label, exc)
                continue
            harness.write_table(path, ["x", "density"], curve.tolist())
            written.append(path.name)
    write_manifest(out, args, {}, cfg, {"outputs": sorted(written)})
    print(f"wrote {len(written)} curves to {out}")


def cmd_train_gan(args):
    schema, classes, cfg = _schema_classes(args)
    d = _load(args.data, schema, classes)
    scaler = ds.fit_standardizer(d)
    values = {}
    if cfg is not None:
        values.update(cfg.gan)
        values.update(cfg.cgan if args.variant == "cgan" else cfg.acgan)
    if args.epochs is not None:
        values["epochs"] = args.epochs
    try:
        gcfg = gan.GanConfig.from_mapping(values, variant=args.variant, classes=classes.k, seed=args.seed)
        model = gan.build(gcfg, schema, classes)
        report = gan.train(model, ds.transform(scaler, d))
    except BotGanError as exc:
        raise StageError("train-gan", str(exc)) from exc
    gan.save_model(model, args.out, scaler)
    write_manifest(Path(args.out), args, {"gan": args.seed}, cfg,
                   {"losses": {"d_loss": report.d_loss, "g_loss": report.g_loss}})
    print(f"trained {args.variant} for {len(report)} epochs; saved {args.out}")


def cmd_generate(args):
    model, scaler = gan.load_model(args.model)
    try:
        c = model.classes.index(args.label)
    except ValueError:
        raise StageError("generate", f"unknown class {args.label!r}; known: {list(model.classes.labels)}") from None
    try:
        synth = gan.generate(model, {c: args.count}, args.seed)
    except BotGanError as exc:
        raise StageError("generate", str(exc)) from exc
    if scaler is not None:
        synth = ds.inverse_transform(scaler, synth)
    ds.write_csv(synth, args.out, provenance=True)
    write_manifest(Path(args.out), args, {"generate": args.seed})
    print(f"wrote {len(synth)} {args.label} rows to {args.out}")


def cmd_augment(args):
    schema, classes, cfg = _schema_classes(args)
    base = _load(args.data, schema, classes)
    synth = _load(args.synthetic, schema, classes)
    try:
        out = ds.augment(base, synth)
    except BotGanError as exc:
        raise StageError("augment", str(exc)) from exc
    ds.write_csv(out, args.out, provenance=True)
    write_manifest(Path(args.out), args, {}, cfg, {"records": len(out)})
    print(f"wrote {len(out)} records to {args.out}")


def cmd_oversample(args):
    schema, classes, cfg = _schema_classes(args)
    d = _load(args.data, schema, classes)
    target = None if args.phi is None else ovs.phi_target(d, *args.phi)
    try:
        if args.method == "adasyn":
            out = ovs.adasyn(d, target, args.k, args.seed)
        else:
            out = ovs.smote_enn(d, target, args.seed, args.k)
    except BotGanError as exc:
        raise StageError("oversample", str(exc)) from exc
    ds.write_csv(out, args.out, provenance=True)
    write_manifest(Path(args.out), args, {"oversample": args.seed}, cfg, {"records": len(out)})
    print(f"wrote {len(out)} records to {args.out}")


def cmd_fit_rf(args):
    schema, classes, cfg = _schema_classes(args)
    d = _load(args.data, schema, classes)
    base = cfg.forest if cfg is not None else rf.ForestConfig()
    fcfg = rf.ForestConfig(**{**base.__dict__, "seed": args.seed,
                              **({"n_trees": args.trees} if args.trees else {})})
    try:
        model = rf.fit(d, fcfg)
    except BotGanError as exc:
        raise StageError("fit-rf", str(exc)) from exc
    arrays, meta = rf.forest_arrays(model)
    meta["classes"] = list(classes.labels)
    meta["schema"] = [list(c) for c in schema.categories]
    nx.save_npz(args.out, arrays, meta)
    write_manifest(Path(args.out), args, {"forest": args.seed}, cfg)
    print(f"fit {fcfg.n_trees} trees; saved {args.out}")


def cmd_evaluate(args):
    arrays, meta = nx.load_npz(args.model)
    if meta.get("kind") != "forest":
        raise StageError("evaluate", f"{args.model} is not a forest checkpoint")
    model = rf.forest_from_arrays(arrays, meta)
    schema = ds.FeatureSchema(tuple(tuple(c) for c in meta["schema"]))
    classes = ds.ClassMap(tuple(meta["classes"]))
    d = _load(args.data, schema, classes)
    try:
        report = metrics.evaluate(rf.predict(model, d), d.labels, classes.k)
    except BotGanError as exc:
        raise StageError("evaluate", str(exc)) from exc
    report.to_json(args.out)
    write_manifest(Path(args.out), args, {})
    print(json.dumps(report.scalars(), indent=2))


def cmd_experiment(args):
    cfg = _config(args.config)
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    names = harness.EXPERIMENTS if args.name == "all" else (args.name,)
    p = harness.Pipeline(cfg)
    for name in names:
        try:
            result = harness.run_experiment(name, cfg, p)
        except BotGanError as exc:
            raise StageError(f"experiment {name}", str(exc)) from exc
        status = "skipped" if result is None else f"{len(result)} cells"
        print(f"{name}: {status} -> {Path(cfg.output_dir) / name}")


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="botgan", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"botgan {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    p = add("fixture", cmd_fixture, "write the synthetic fixture dataset described by a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = add("explore", cmd_explore, "PCA + KDE curve CSVs per (category, class)")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid", type=int, default=200)

    p = add("train-gan", cmd_train_gan, "train a CGAN or AC-GAN and save a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--variant", choices=gan.VARIANTS, default="acgan")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("generate", cmd_generate, "sample rows of one class from a trained GAN")
    p.add_argument("--model", required=True)
    p.add_argument("--class", dest="label", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("augment", cmd_augment, "append synthetic rows to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)

    p = add("oversample", cmd_oversample, "ADASYN or SMOTE-ENN oversampling")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--method", choices=("adasyn", "smote_enn"), default="adasyn")
    p.add_argument("--phi", type=_phi, help="expansion multiple a:b (default: balance classes)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("fit-rf", cmd_fit_rf, "fit a random forest and save it")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--trees", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score a saved forest on a labelled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = add("experiment", cmd_experiment, "run a named experiment (or 'all') from a config")
    p.add_argument("name", choices=harness.EXPERIMENTS + ("all",))
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    except (BotGanError, ValueError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
