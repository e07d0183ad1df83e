"""Config-driven experiment runner.

One :class:`Pipeline` holds the split, the scaler, both trained GANs and every
synthetic set, built lazily and cached, so several experiments in one run share
the same base split and the same synthetic data. Results land in
``<output_dir>/<experiment>/``: one JSON per cell, a flat CSV table, heatmap
CSVs where applicable, and ``manifest.json``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__, kernels
from . import dataset as ds
from . import forest as rf
from . import gan
from . import metrics
from . import oversampling as ovs
from .errors import BadConfig, MissingExternalData

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

log = logging.getLogger(__name__)

EXPERIMENTS = ("imbalance", "fidelity", "train_on_original", "evolution_matrix",
               "temporal", "discriminator_vs_rf")

# train-set variants ad1..ad4 and the matching test-set variants
TRAIN_VARIANTS = {"ad1": "acgan", "ad2": "cgan", "ad3": "adasyn", "ad4": "original"}
TEST_VARIANTS = ("original", "adasyn", "cgan", "acgan")


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: Path = Path("results")
    schema: ds.FeatureSchema = field(default_factory=ds.FeatureSchema)
    classes: ds.ClassMap = field(default_factory=ds.ClassMap)
    train_csv: Path | None = None
    fixture: dict | None = None
    train_fraction: float = 0.75
    phi: tuple[int, int] = (2, 1)
    gan: dict = field(default_factory=dict)
    cgan: dict = field(default_factory=dict)
    acgan: dict = field(default_factory=dict)
    forest: rf.ForestConfig = field(default_factory=rf.ForestConfig)
    k_adasyn: int = 5
    k_smote: int = 5
    k_enn: int = 3
    fidelity_bins: int = 50
    generate_classes: tuple[str, ...] | None = None  # None: every class
    experiments: tuple[str, ...] = EXPERIMENTS
    temporal: dict = field(default_factory=dict)
    source_text: str = ""

    def __post_init__(self):
        a, b = (int(v) for v in self.phi)
        if b < 1 or a < 0:
            raise BadConfig(f"invalid expansion multiple {a}:{b}")
        self.phi = (a, b)
        unknown = set(self.experiments) - set(EXPERIMENTS)
        if unknown:
            raise BadConfig(f"unknown experiments: {sorted(unknown)}")
        if (self.train_csv is None) == (self.fixture is None):
            raise BadConfig("give exactly one of data.train_csv or data.fixture")
        if self.train_csv is not None and not Path(self.train_csv).exists():
            raise BadConfig(f"train CSV not found: {self.train_csv}")

    def gan_config(self, variant: str, seed: int) -> gan.GanConfig:
        values = dict(self.gan)
        values.update(self.cgan if variant == "cgan" else self.acgan)
        return gan.GanConfig.from_mapping(values, variant=variant, classes=self.classes.k, seed=seed)

    def digest(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()


def _schema_from(values) -> ds.FeatureSchema:
    if values is None:
        return ds.FeatureSchema()
    if isinstance(values, int):
        return ds.FeatureSchema.proportional(values)
    return ds.FeatureSchema(tuple((c["name"], c["width"]) for c in values))


def config_from_mapping(raw: Mapping, base_dir: Path = Path("."), source_text: str | None = None
                        ) -> ExperimentConfig:
    raw = dict(raw)
    data = dict(raw.get("data", {}))
    resolve = lambda p: None if p is None else (base_dir / p if not Path(p).is_absolute() else Path(p))
    fixture = data.get("fixture")
    schema = _schema_from(data.get("schema", fixture.get("width") if fixture else None))
    labels = raw.get("classes")
    if labels is None and fixture is not None:
        k = len(fixture["classes"]) if "classes" in fixture else int(fixture["n_classes"])
        classes = ds.ClassMap.generic(k)
    else:
        classes = ds.ClassMap(tuple(labels)) if labels else ds.ClassMap()
    forest_cfg = dict(raw.get("forest", {}))
    temporal = dict(raw.get("temporal", {}))
    for key in ("old_train_csv",):
        if key in temporal:
            temporal[key] = resolve(temporal[key])
    if "new_test_csvs" in temporal:
        temporal["new_test_csvs"] = {k: resolve(v) for k, v in temporal["new_test_csvs"].items()}
    over = dict(raw.get("oversampling", {}))
    gen = raw.get("generate_classes")
    if source_text is None:
        source_text = json.dumps(raw, sort_keys=True, default=str)
    return ExperimentConfig(
        seed=int(raw.get("seed", 0)),
        output_dir=resolve(raw.get("output_dir", "results")),
        schema=schema,
        classes=classes,
        train_csv=resolve(data.get("train_csv")),
        fixture=fixture,
        train_fraction=float(data.get("train_fraction", 0.75)),
        phi=tuple(raw.get("phi", (2, 1))),
        gan=dict(raw.get("gan", {})),
        cgan=dict(raw.get("cgan", {})),
        acgan=dict(raw.get("acgan", {})),
        forest=rf.ForestConfig(**forest_cfg),
        k_adasyn=int(over.get("k_adasyn", 5)),
        k_smote=int(over.get("k_smote", 5)),
        k_enn=int(over.get("k_enn", 3)),
        fidelity_bins=int(raw.get("fidelity_bins", 50)),
        generate_classes=tuple(gen) if gen is not None else None,
        experiments=tuple(raw.get("experiments", EXPERIMENTS)),
        temporal=temporal,
        source_text=source_text,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return config_from_mapping(tomllib.loads(text), path.parent, text)


def derive_seed(root: int, name: str) -> int:
    h = hashlib.sha256(f"{root}:{name}".encode()).digest()
    return int.from_bytes(h[:4], "little")


# --- pipeline ----------------------------------------------------------------

class Pipeline:
    """Lazily built, cached experiment state for one config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.seeds: dict[str, int] = {}
        self._cache: dict = {}
        self.notes: list[str] = []

    def seed(self, name: str) -> int:
        if name not in self.seeds:
            self.seeds[name] = derive_seed(self.cfg.seed, name)
        return self.seeds[name]

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # data
    def data(self) -> ds.Dataset:
        def build():
            c = self.cfg
            if c.train_csv is not None:
                return ds.load_csv(c.train_csv, c.schema, c.classes)
            fx = c.fixture
            if "classes" in fx:
                spec = ds.spec_from_mapping(fx["classes"])
            elif fx.get("kind", "factor") == "sparse":
                spec = ds.sparse_spec(c.schema.total_width, c.classes.k, fx.get("density", 0.4),
                                      fx.get("separation", 0.5), fx.get("modes", 3),
                                      fx.get("spike", 1e-6), self.seed("fixture_spec"))
            elif fx.get("kind", "factor") == "factor":
                spec = ds.factor_spec(c.schema.total_width, c.classes.k, fx.get("latent_dim", 3),
                                      fx.get("separation", 2.0), fx.get("noise", 0.05),
                                      self.seed("fixture_spec"), fx.get("modes", 1))
            else:
                raise BadConfig(f"unknown fixture kind {fx['kind']!r}; use 'factor' or 'sparse'")
            return ds.make_fixture(spec, fx.get("n_per_class", 500), c.schema,
                                   self.seed("fixture"), c.classes)
        return self._cached("data", build)

    def split(self) -> tuple[ds.Dataset, ds.Dataset]:
        return self._cached("split", lambda: ds.stratified_split(
            self.data(), self.cfg.train_fraction, self.seed("split")))

    def scaler(self) -> ds.Standardizer:
        return self._cached("scaler", lambda: ds.fit_standardizer(self.split()[0]))

    def train(self) -> ds.Dataset:
        return self._cached("train_s", lambda: ds.transform(self.scaler(), self.split()[0]))

    def test(self) -> ds.Dataset:
        return self._cached("test_s", lambda: ds.transform(self.scaler(), self.split()[1]))

    # generators
    def model(self, variant: str) -> gan.GanModel:
        def build():
            m = gan.build(self.cfg.gan_config(variant, self.seed(f"gan_{variant}")),
                          self.cfg.schema, self.cfg.classes)
            report = gan.train(m, self.train())
            self._cache[("report", variant)] = report
            log.info("trained %s: %d epochs, final d_loss %.4f g_loss %.4f", variant,
                     len(report), report.d_loss[-1] if len(report) else float("nan"),
                     report.g_loss[-1] if len(report) else float("nan"))
            return m
        return self._cached(("model", variant), build)

    def _requested(self, base: ds.Dataset) -> dict[int, int]:
        counts = ds.expansion_counts(base, *self.cfg.phi)
        if self.cfg.generate_classes is not None:
            keep = {self.cfg.classes.index(label) for label in self.cfg.generate_classes}
            counts = {c: n for c, n in counts.items() if c in keep}
        return {c: n for c, n in counts.items() if n > 0}

    def synthetic(self, technique: str, side: str) -> ds.Dataset:
        """Synthetic rows for ``side`` in {"train", "test"}, sized by the expansion multiple."""
        def build():
            base = self.train() if side == "train" else self.test()
            if technique == "adasyn":
                target = {c: int(base.class_counts()[c]) + n for c, n in self._requested(base).items()}
                out = ovs.adasyn(base, target, self.cfg.k_adasyn, self.seed(f"adasyn_{side}"))
                return ovs.synthetic_only(out, "adasyn")
            return gan.generate(self.model(technique), self._requested(base),
                                self.seed(f"generate_{technique}_{side}"))
        return self._cached(("synth", technique, side), build)

    def train_variant(self, technique: str) -> ds.Dataset:
        if technique == "original":
            return self.train()
        return self._cached(("train_variant", technique),
                            lambda: ds.augment(self.train(), self.synthetic(technique, "train")))

    def test_variant(self, technique: str) -> ds.Dataset:
        if technique == "original":
            return self.test()
        return self._cached(("test_variant", technique),
                            lambda: ds.augment(self.test(), self.synthetic(technique, "test")))

    def forest(self, technique: str) -> rf.Forest:
        def build():
            cfg = rf.ForestConfig(**{**asdict(self.cfg.forest), "seed": self.seed(f"forest_{technique}")})
            return rf.fit(self.train_variant(technique), cfg)
        return self._cached(("forest", technique), build)

    def evaluate(self, model: rf.Forest, data: ds.Dataset) -> metrics.EvalReport:
        return metrics.evaluate(rf.predict(model, data), data.labels, data.classes.k)

    def check_hygiene(self, train: ds.Dataset):
        """Assert no hold-out test row reached a training set."""
        test = self.test()
        train_rows = {r.tobytes() for r in train.features[train.provenance == "original"]}
        leaked = sum(r.tobytes() in train_rows for r in test.features)
        if leaked:
            raise AssertionError(f"{leaked} test records found in a training set")


# --- experiments -------------------------------------------------------------

def run_imbalance(p: Pipeline) -> dict[str, metrics.EvalReport]:
    train, test = p.train(), p.test()
    cfg = p.cfg
    sets = {
        "Original": train,
        "ADASYN": ovs.adasyn(train, None, cfg.k_adasyn, p.seed("adasyn_balance")),
        "SMOTE-ENN": ovs.smote_enn(train, None, p.seed("smote_enn_balance"),
                                   cfg.k_smote, cfg.k_enn),
        f"CGAN {cfg.phi[0]}:{cfg.phi[1]}": p.train_variant("cgan"),
    }
    out = {}
    for name, data in sets.items():
        p.check_hygiene(data)
        fcfg = rf.ForestConfig(**{**asdict(cfg.forest), "seed": p.seed(f"forest_imbalance_{name}")})
        out[name] = p.evaluate(rf.fit(data, fcfg), test)
    return out


def run_fidelity(p: Pipeline) -> dict[str, metrics.FidelityReport]:
    real = p.train()
    bins = p.cfg.fidelity_bins
    return {t: metrics.fidelity(real, p.synthetic(t, "train"), bins) for t in ("adasyn", "cgan", "acgan")}


def run_train_on_original(p: Pipeline) -> dict[str, metrics.EvalReport]:
    model = p.forest("original")
    return {t: p.evaluate(model, p.test_variant(t)) for t in TEST_VARIANTS}


def run_evolution_matrix(p: Pipeline) -> dict[tuple[str, str], metrics.EvalReport]:
    out = {}
    for row, technique in TRAIN_VARIANTS.items():
        p.check_hygiene(p.train_variant(technique))
        model = p.forest(technique)
        for col in TEST_VARIANTS:
            out[(row, col)] = p.evaluate(model, p.test_variant(col))
    return out


def run_discriminator_vs_rf(p: Pipeline) -> dict[tuple[str, str], metrics.EvalReport]:
    """Mixed test = original test + CGAN and AC-GAN synthetic rows (each at the expansion multiple)."""
    mixed = ds.augment(p.test_variant("cgan"), p.synthetic("acgan", "test"))
    acgan_model = p.model("acgan")
    k = p.cfg.classes.k
    out = {}
    for test_name, data in (("mixed", mixed), ("original", p.test())):
        out[("RF_CGAN", test_name)] = p.evaluate(p.forest("cgan"), data)
        out[("RF_AC-GAN", test_name)] = p.evaluate(p.forest("acgan"), data)
        _, labels = gan.discriminate_classes(acgan_model, data)
        out[("D_AC-GAN", test_name)] = metrics.evaluate(labels, data.labels, k)
    return out


def run_temporal(p: Pipeline) -> dict[tuple[str, str], metrics.EvalReport] | None:
    """Train on an older binary dataset, test on newer ones; None when inputs are absent."""
    t = p.cfg.temporal
    old = t.get("old_train_csv")
    new = t.get("new_test_csvs") or {}
    missing = [str(x) for x in [old, *new.values()] if x is None or not Path(x).exists()]
    if old is None or not new or missing:
        raise MissingExternalData(f"temporal experiment inputs missing: {missing or 'not configured'}")
    classes = ds.ClassMap(tuple(t.get("classes", ("bot", "human"))))
    schema = _schema_from(t.get("schema")) if "schema" in t else p.cfg.schema
    old_raw = ds.load_csv(old, schema, classes)
    scaler = ds.fit_standardizer(old_raw)
    train = ds.transform(scaler, old_raw)
    a, b = p.cfg.phi

    values = dict(p.cfg.gan)
    values.update(p.cfg.acgan)
    gcfg = gan.GanConfig.from_mapping(values, variant="acgan", classes=classes.k,
                                      seed=p.seed("temporal_gan"))
    model = gan.build(gcfg, schema, classes)
    gan.train(model, train)
    counts = {c: n for c, n in ds.expansion_counts(train, a, b).items() if n > 0}
    mask = t.get("generate_classes")
    if mask is not None:
        counts = {c: n for c, n in counts.items() if classes.labels[c] in mask}
    variants = {
        "plain": train,
        "adasyn": ovs.adasyn(train, ovs.phi_target(train, a, b), p.cfg.k_adasyn,
                             p.seed("temporal_adasyn")),
        "acgan": ds.augment(train, gan.generate(model, counts, p.seed("temporal_generate"))),
    }
    out = {}
    for name, data in variants.items():
        fcfg = rf.ForestConfig(**{**asdict(p.cfg.forest), "seed": p.seed(f"temporal_forest_{name}")})
        model_rf = rf.fit(data, fcfg)
        for test_name, path in sorted(new.items()):
            test = ds.transform(scaler, ds.load_csv(path, schema, classes))
            out[(test_name, name)] = p.evaluate(model_rf, test)
    return out


RUNNERS = {
    "imbalance": run_imbalance,
    "fidelity": run_fidelity,
    "train_on_original": run_train_on_original,
    "evolution_matrix": run_evolution_matrix,
    "temporal": run_temporal,
    "discriminator_vs_rf": run_discriminator_vs_rf,
}


# --- output ------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def _cell_name(key) -> str:
    parts = key if isinstance(key, tuple) else (key,)
    return "__".join(str(p).replace(" ", "_").replace(":", "-") for p in parts)


def write_table(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_results(name: str, result, out_dir: Path) -> list[Path]:
    """Serialize one experiment's result dict; returns the files written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for key, report in result.items():
        path = out_dir / f"{_cell_name(key)}.json"
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        files.append(path)
    if name == "fidelity":
        rows = [[k, r.ks_score, r.kl_score] for k, r in result.items()]
        files.append(write_table(out_dir / "fidelity.csv", ["technique", "ks_score", "kl_score"], rows))
        return files

    scalar_names = list(metrics.EvalReport.SCALARS)
    key_cols = {
        "imbalance": ["technique"],
        "train_on_original": ["test_set"],
        "evolution_matrix": ["train_set", "test_set"],
        "discriminator_vs_rf": ["contender", "test_set"],
        "temporal": ["test_data", "train_data"],
    }[name]
    rows = []
    for key, report in result.items():
        parts = list(key) if isinstance(key, tuple) else [key]
        s = report.scalars()
        rows.append(parts + [s[m] for m in scalar_names])
    files.append(write_table(out_dir / f"{name}.csv", key_cols + scalar_names, rows))
    if name == "evolution_matrix":
        for metric in ("precision_macro", "g_mean"):
            hm = [[row, col, result[(row, col)].scalars()[metric]]
                  for row in TRAIN_VARIANTS for col in TEST_VARIANTS]
            files.append(write_table(out_dir / f"{metric}_heatmap.csv", ["train_set", "test_set", metric], hm))
    return files


def write_manifest(p: Pipeline, name: str, out_dir: Path, files: list[Path], status: str) -> Path:
    import numpy

    manifest = {
        "experiment": name,
        "status": status,
        "config_sha256": p.cfg.digest(),
        "root_seed": p.cfg.seed,
        "seeds": dict(sorted(p.seeds.items())),
        "phi": list(p.cfg.phi),
        "mixed_test_composition": "original test + CGAN and AC-GAN synthetic rows, each at the expansion multiple per class",
        "versions": {"botgan": __version__, "numpy": numpy.__version__,
                     "python": platform.python_version(), "kernel_backend": kernels.BACKEND},
        "notes": p.notes,
        "outputs": sorted(f.name for f in files),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_experiment(name: str, cfg: ExperimentConfig, pipeline: Pipeline | None = None):
    """Run one named experiment, write its outputs, and return the in-memory result.

    Returns ``None`` for the temporal experiment when its external inputs are
    missing (a skip notice goes into the manifest).
    """
    if name not in RUNNERS:
        raise BadConfig(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    p = pipeline or Pipeline(cfg)
    out_dir = Path(cfg.output_dir) / name
    try:
        result = RUNNERS[name](p)
    except MissingExternalData as exc:
        log.warning("skipping %s: %s", name, exc)
        p.notes.append(f"skipped: {exc}")
        out_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(p, name, out_dir, [], "skipped")
        return None
    files = write_results(name, result, out_dir)
    write_manifest(p, name, out_dir, files, "ok")
    return result


def run_all(cfg: ExperimentConfig) -> dict:
    p = Pipeline(cfg)
    return {name: run_experiment(name, cfg, p) for name in cfg.experiments}
