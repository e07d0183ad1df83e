"""Conditional GAN and auxiliary-classifier GAN for tabular records.

Both variants share the generator: a label embedding is concatenated to the
noise vector and mapped to one standardized feature row. They differ in the
discriminator:

* ``cgan``  -- the label embedding is concatenated to the (real or fake) row
  and a single sigmoid unit scores real vs. fake.
* ``acgan`` -- the discriminator sees only the row; a shared trunk feeds a
  sigmoid source head and a K-way class head.

Training alternates one discriminator update and one generator update per
mini-batch, discriminator first. The generator uses the non-saturating loss
by default (``g_loss="saturating"`` restores the literal minimax form).
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import numerics as nx
from .dataset import ClassMap, Dataset, FeatureSchema, Standardizer
from .errors import (
    BadConfig,
    LabelOutOfRange,
    NonFiniteActivation,
    NonFiniteLoss,
    UntrainedModel,
    WrongVariant,
)

VARIANTS = ("cgan", "acgan")


@dataclass(frozen=True)
class GanConfig:
    variant: str = "acgan"
    noise_dim: int = 128
    embed_dim: int = 6
    classes: int = 6
    batch_size: int = 512
    lr: float = 2e-4
    epochs: int = 300
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    g_hidden: tuple[int, ...] = (256, 512)
    d_hidden: tuple[int, ...] = (512, 256)
    leaky_alpha: float = 0.2
    g_loss: str = "non_saturating"
    fake_class_loss: bool = True  # acgan: include E[log P(C=c|X_fake)] in the D loss

    def __post_init__(self):
        object.__setattr__(self, "g_hidden", tuple(int(h) for h in self.g_hidden))
        object.__setattr__(self, "d_hidden", tuple(int(h) for h in self.d_hidden))
        if self.variant not in VARIANTS:
            raise BadConfig(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("noise_dim", "embed_dim", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise BadConfig(f"{name} must be >= 1")
        if self.classes < 2:
            raise BadConfig("classes must be >= 2")
        if self.epochs < 0:
            raise BadConfig("epochs must be >= 0")
        if not self.lr > 0:
            raise BadConfig("lr must be > 0")
        if not self.d_hidden:
            raise BadConfig("discriminator needs at least one hidden layer")
        if any(h < 1 for h in self.g_hidden + self.d_hidden):
            raise BadConfig("hidden widths must be >= 1")
        if self.g_loss not in ("non_saturating", "saturating"):
            raise BadConfig(f"unknown generator loss {self.g_loss!r}")

    @classmethod
    def from_mapping(cls, values: Mapping, **overrides) -> "GanConfig":
        known = {f for f in cls.__dataclass_fields__}
        merged = {k: v for k, v in dict(values).items() if k in known}
        merged.update(overrides)
        unknown = set(values) - known
        if unknown:
            raise BadConfig(f"unknown GAN config keys: {sorted(unknown)}")
        return cls(**merged)


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        n = self.inputs.shape[0]
        if self.labels.shape[0] != n or self.noise.shape[0] != n:
            raise ValueError("batch row counts disagree")


@dataclass
class TrainReport:
    variant: str
    d_loss: list = field(default_factory=list)
    g_loss: list = field(default_factory=list)
    class_loss_real: list = field(default_factory=list)
    class_loss_fake: list = field(default_factory=list)
    wall_time: float = 0.0
    final_epoch: int = 0

    def __len__(self):
        return len(self.d_loss)

    def to_dict(self) -> dict:
        return asdict(self)


class GanModel:
    """Generator/discriminator pair plus their optimizer state."""

    def __init__(self, config: GanConfig, schema: FeatureSchema, classes: ClassMap | None = None):
        if classes is None:
            classes = ClassMap.generic(config.classes)
        if classes.k != config.classes:
            raise BadConfig(f"config has {config.classes} classes, class map has {classes.k}")
        self.config = config
        self.schema = schema
        self.classes = classes
        self.width = schema.total_width
        self.trained = False
        self.epochs_done = 0

        seeds = np.random.SeedSequence(config.seed).generate_state(7)
        c, a = config, config.leaky_alpha
        z_in = c.noise_dim + c.embed_dim
        g_sizes = (z_in, *c.g_hidden, self.width)
        self.generator = nx.DenseNet.build(
            g_sizes, ["leaky_relu"] * len(c.g_hidden) + ["linear"], int(seeds[0]), alpha=a)
        self.g_embed = nx.Embedding.build(c.classes, c.embed_dim, int(seeds[1]))

        if c.variant == "cgan":
            d_sizes = (self.width + c.embed_dim, *c.d_hidden, 1)
            self.discriminator = nx.DenseNet.build(
                d_sizes, ["leaky_relu"] * len(c.d_hidden) + ["sigmoid"], int(seeds[2]), alpha=a)
            self.d_embed = nx.Embedding.build(c.classes, c.embed_dim, int(seeds[3]))
            self.source_head = self.class_head = None
        else:
            trunk = (self.width, *c.d_hidden)
            self.discriminator = nx.DenseNet.build(
                trunk, ["leaky_relu"] * len(c.d_hidden), int(seeds[2]), alpha=a)
            self.d_embed = None
            self.source_head = nx.DenseNet.build((c.d_hidden[-1], 1), ["sigmoid"], int(seeds[4]))
            self.class_head = nx.DenseNet.build((c.d_hidden[-1], c.classes), ["linear"], int(seeds[5]))

        self.noise_rng = np.random.default_rng(int(seeds[6]))
        self.opt_g = nx.AdamState.for_params(self.g_params(), c.lr, c.beta1, c.beta2)
        self.opt_d = nx.AdamState.for_params(self.d_params(), c.lr, c.beta1, c.beta2)

    @property
    def variant(self) -> str:
        return self.config.variant

    def g_params(self) -> list[np.ndarray]:
        return self.generator.params() + [self.g_embed.table]

    def d_params(self) -> list[np.ndarray]:
        if self.variant == "cgan":
            return self.discriminator.params() + [self.d_embed.table]
        return self.discriminator.params() + self.source_head.params() + self.class_head.params()

    def d_input_width(self) -> int:
        return self.discriminator.in_dim

    def sample_noise(self, n: int) -> np.ndarray:
        return self.noise_rng.standard_normal((n, self.config.noise_dim))

    def _bump_g(self):
        self.generator.version += 1

    def _bump_d(self):
        for net in (self.discriminator, self.source_head, self.class_head):
            if net is not None:
                net.version += 1


def build(config: GanConfig, schema: FeatureSchema, classes: ClassMap | None = None) -> GanModel:
    return GanModel(config, schema, classes)


# --- forward / backward composites -------------------------------------------

def _check_labels(m: GanModel, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= m.config.classes):
        raise LabelOutOfRange(f"labels must lie in [0, {m.config.classes})")
    return labels


def generator_forward(m: GanModel, noise: np.ndarray, labels: np.ndarray):
    e = nx.embed_lookup(m.g_embed, labels)
    return nx.forward(m.generator, np.hstack([noise, e]))


def _generator_grads(m: GanModel, tape, labels, grad_out) -> list[np.ndarray]:
    pg = nx.backward(m.generator, tape, grad_out)
    z = m.config.noise_dim
    return pg.as_list() + [nx.embed_backward(m.g_embed, labels, pg.input[:, z:])]


def _cgan_d_forward(m: GanModel, x, labels):
    e = nx.embed_lookup(m.d_embed, labels)
    return nx.forward(m.discriminator, np.hstack([x, e]))


def _cgan_d_backward(m: GanModel, tape, labels, grad_out):
    """Returns (D parameter grads, grad w.r.t. the row part of the input)."""
    pg = nx.backward(m.discriminator, tape, grad_out)
    w = m.width
    grads = pg.as_list() + [nx.embed_backward(m.d_embed, labels, pg.input[:, w:])]
    return grads, pg.input[:, :w]


def _acgan_d_forward(m: GanModel, x):
    h, trunk_tape = nx.forward(m.discriminator, x)
    src, src_tape = nx.forward(m.source_head, h)
    logits, cls_tape = nx.forward(m.class_head, h)
    return src, logits, (trunk_tape, src_tape, cls_tape)


def _acgan_d_backward(m: GanModel, tapes, grad_src, grad_logits):
    trunk_tape, src_tape, cls_tape = tapes
    ps = nx.backward(m.source_head, src_tape, grad_src)
    pc = nx.backward(m.class_head, cls_tape, grad_logits)
    pt = nx.backward(m.discriminator, trunk_tape, ps.input + pc.input)
    return pt.as_list() + ps.as_list() + pc.as_list(), pt.input


def _sum_grads(a: list, b: list) -> list:
    return [x + y for x, y in zip(a, b)]


def _g_adv_loss(m: GanModel, p_fake):
    """Generator adversarial term and its gradient w.r.t. D's fake-source output."""
    if m.config.g_loss == "non_saturating":
        return nx.bce_loss(p_fake, 1.0)
    loss, grad = nx.bce_loss(p_fake, 0.0)
    return -loss, -grad  # minimize E[log(1 - D(G(z|c)))]


def cgan_d_loss(m: GanModel, batch: Batch, fake=None):
    """Discriminator loss BCE(D(x|c),1) + BCE(D(G(z|c)|c),0) and its gradients."""
    if fake is None:
        fake, _ = generator_forward(m, batch.noise, batch.labels)
    p_real, t_real = _cgan_d_forward(m, batch.inputs, batch.labels)
    p_fake, t_fake = _cgan_d_forward(m, fake, batch.labels)
    l_real, g_real = nx.bce_loss(p_real, 1.0)
    l_fake, g_fake = nx.bce_loss(p_fake, 0.0)
    grads_real, _ = _cgan_d_backward(m, t_real, batch.labels, g_real)
    grads_fake, _ = _cgan_d_backward(m, t_fake, batch.labels, g_fake)
    return l_real + l_fake, _sum_grads(grads_real, grads_fake)


def cgan_g_loss(m: GanModel, batch: Batch):
    fake, g_tape = generator_forward(m, batch.noise, batch.labels)
    p_fake, d_tape = _cgan_d_forward(m, fake, batch.labels)
    loss, grad = _g_adv_loss(m, p_fake)
    _, grad_fake = _cgan_d_backward(m, d_tape, batch.labels, grad)
    return loss, _generator_grads(m, g_tape, batch.labels, grad_fake)


def acgan_d_loss(m: GanModel, batch: Batch, fake=None, parts=("source", "class")):
    """Discriminator loss: source BCE on real+fake plus class CE on real (and fake).

    Returns ``(total, grads, class_loss_real, class_loss_fake)``. ``parts``
    restricts which terms enter the total and the gradients.
    """
    if fake is None:
        fake, _ = generator_forward(m, batch.noise, batch.labels)
    k = m.config.classes
    total = 0.0
    grads = None
    cl = {}
    for x, is_real in ((batch.inputs, True), (fake, False)):
        src, logits, tapes = _acgan_d_forward(m, x)
        l_src, g_src = nx.bce_loss(src, 1.0 if is_real else 0.0)
        l_cls, g_cls = nx.softmax_ce_loss(logits, batch.labels)
        cl[is_real] = l_cls
        use_class = "class" in parts and (is_real or m.config.fake_class_loss)
        if "source" not in parts:
            l_src, g_src = 0.0, np.zeros_like(src)
        if not use_class:
            l_cls, g_cls = 0.0, np.zeros((x.shape[0], k))
        total += l_src + l_cls
        g, _ = _acgan_d_backward(m, tapes, g_src, g_cls)
        grads = g if grads is None else _sum_grads(grads, g)
    return total, grads, cl[True], cl[False]


def acgan_g_loss(m: GanModel, batch: Batch, parts=("source", "class")):
    fake, g_tape = generator_forward(m, batch.noise, batch.labels)
    src, logits, tapes = _acgan_d_forward(m, fake)
    loss = 0.0
    g_src = np.zeros_like(src)
    g_cls = np.zeros_like(logits)
    if "source" in parts:
        l_src, g_src = _g_adv_loss(m, src)
        loss += l_src
    if "class" in parts:
        l_cls, g_cls = nx.softmax_ce_loss(logits, batch.labels)
        loss += l_cls
    _, grad_fake = _acgan_d_backward(m, tapes, g_src, g_cls)
    return loss, _generator_grads(m, g_tape, batch.labels, grad_fake)


# --- training ----------------------------------------------------------------

def _finite_or_raise(values, epoch, step):
    for v in values:
        if not math.isfinite(v):
            raise NonFiniteLoss("non-finite loss during adversarial training", epoch, step)


def train_step_cgan(m: GanModel, real: Batch, *, update_d: bool = True, update_g: bool = True,
                    epoch=None, step=None) -> tuple[float, float]:
    if m.variant != "cgan":
        raise WrongVariant("train_step_cgan needs a cgan model")
    labels = _check_labels(m, real.labels)
    fake, g_tape = generator_forward(m, real.noise, labels)
    d_loss, d_grads = cgan_d_loss(m, real, fake=fake)
    _finite_or_raise([d_loss], epoch, step)
    if update_d:
        nx.adam_step(m.d_params(), d_grads, m.opt_d)
        m._bump_d()

    p_fake, d_tape = _cgan_d_forward(m, fake, labels)
    g_loss, grad = _g_adv_loss(m, p_fake)
    _finite_or_raise([g_loss], epoch, step)
    if update_g:
        _, grad_fake = _cgan_d_backward(m, d_tape, labels, grad)
        nx.adam_step(m.g_params(), _generator_grads(m, g_tape, labels, grad_fake), m.opt_g)
        m._bump_g()
    return d_loss, g_loss


def train_step_acgan(m: GanModel, real: Batch, *, update_d: bool = True, update_g: bool = True,
                     epoch=None, step=None) -> tuple[float, float, float, float]:
    if m.variant != "acgan":
        raise WrongVariant("train_step_acgan needs an acgan model")
    labels = _check_labels(m, real.labels)
    fake, g_tape = generator_forward(m, real.noise, labels)
    d_loss, d_grads, cl_real, cl_fake = acgan_d_loss(m, real, fake=fake)
    _finite_or_raise([d_loss, cl_real, cl_fake], epoch, step)
    if update_d:
        nx.adam_step(m.d_params(), d_grads, m.opt_d)
        m._bump_d()

    src, logits, tapes = _acgan_d_forward(m, fake)
    l_src, g_src = _g_adv_loss(m, src)
    l_cls, g_cls = nx.softmax_ce_loss(logits, labels)
    g_loss = l_src + l_cls
    _finite_or_raise([g_loss], epoch, step)
    if update_g:
        _, grad_fake = _acgan_d_backward(m, tapes, g_src, g_cls)
        nx.adam_step(m.g_params(), _generator_grads(m, g_tape, labels, grad_fake), m.opt_g)
        m._bump_g()
    return d_loss, g_loss, cl_real, cl_fake


def train(m: GanModel, train_data: Dataset, epochs: int | None = None) -> TrainReport:
    """Run ``epochs`` passes (default: the config's) of alternating D/G updates.

    The data must already be standardized. Each epoch shuffles with a
    generator derived from ``(seed, epoch)``; noise comes from the model's own
    stream so a resumed model continues the same trajectory.
    """
    epochs = m.config.epochs if epochs is None else int(epochs)
    report = TrainReport(m.variant, final_epoch=m.epochs_done)
    if epochs == 0:
        return report
    if len(train_data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if train_data.schema.total_width != m.width:
        raise BadConfig(f"data width {train_data.schema.total_width} != model width {m.width}")
    x_all, y_all = train_data.features, train_data.labels
    n, bs = len(train_data), m.config.batch_size
    step_fn = train_step_cgan if m.variant == "cgan" else train_step_acgan
    start = time.perf_counter()
    for _ in range(epochs):
        epoch = m.epochs_done
        order = np.random.default_rng([m.config.seed, epoch]).permutation(n)
        sums = np.zeros(4)
        steps = 0
        for step, lo in enumerate(range(0, n, bs)):
            idx = order[lo:lo + bs]
            batch = Batch(x_all[idx], y_all[idx], m.sample_noise(idx.size))
            try:
                out = step_fn(m, batch, epoch=epoch, step=step)
            except NonFiniteActivation as exc:
                raise NonFiniteLoss(f"non-finite activation: {exc}", epoch, step) from exc
            sums[:len(out)] += out
            steps += 1
        means = sums / steps
        report.d_loss.append(float(means[0]))
        report.g_loss.append(float(means[1]))
        if m.variant == "acgan":
            report.class_loss_real.append(float(means[2]))
            report.class_loss_fake.append(float(means[3]))
        m.epochs_done += 1
        m.trained = True
    report.final_epoch = m.epochs_done
    report.wall_time = time.perf_counter() - start
    return report


# --- inference ---------------------------------------------------------------

def generate(m: GanModel, counts: Mapping[int, int], seed: int, chunk: int = 4096) -> Dataset:
    """Draw ``counts[c]`` rows G(z|c), z ~ N(0, I), per class, in standardized space."""
    if not m.trained:
        raise UntrainedModel("generate() needs a trained model")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in sorted(counts):
        n = int(counts[c])
        if not 0 <= c < m.config.classes:
            raise LabelOutOfRange(f"class index {c} outside [0, {m.config.classes})")
        for lo in range(0, n, chunk):
            size = min(chunk, n - lo)
            labels = np.full(size, c, dtype=np.int64)
            noise = rng.standard_normal((size, m.config.noise_dim))
            out, _ = generator_forward(m, noise, labels)
            xs.append(out)
            ys.append(labels)
    if not xs:
        return Dataset.empty(m.schema, m.classes)
    return Dataset(m.schema, m.classes, np.vstack(xs), np.concatenate(ys),
                   np.full(sum(len(y) for y in ys), m.variant, dtype="<U9"))


def discriminate_classes(m: GanModel, x, chunk: int = 8192) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities from the AC-GAN class head, and their argmax labels."""
    if m.variant != "acgan":
        raise WrongVariant("only an acgan discriminator has a class head")
    feats = x.features if isinstance(x, Dataset) else np.asarray(x, dtype=np.float64)
    probs = []
    for lo in range(0, feats.shape[0], chunk):
        h, _ = nx.forward(m.discriminator, feats[lo:lo + chunk])
        logits, _ = nx.forward(m.class_head, h)
        probs.append(nx.softmax(logits))
    p = np.vstack(probs) if probs else np.zeros((0, m.config.classes))
    return p, np.argmax(p, axis=1)


# --- checkpoints -------------------------------------------------------------

def save_model(m: GanModel, path, standardizer: Standardizer | None = None):
    arrays, meta = {}, {
        "kind": "gan",
        "config": asdict(m.config),
        "schema": [list(c) for c in m.schema.categories],
        "schema_hash": m.schema.digest(),
        "classes": list(m.classes.labels),
        "trained": m.trained,
        "epochs_done": m.epochs_done,
        "noise_rng": m.noise_rng.bit_generator.state,
        "nets": {},
    }
    nets = {"G": m.generator, "D": m.discriminator, "S": m.source_head, "C": m.class_head}
    for name, net in nets.items():
        if net is not None:
            a, nm = nx.net_arrays(name, net)
            arrays.update(a)
            meta["nets"][name] = nm
    arrays["G_embed"] = m.g_embed.table
    if m.d_embed is not None:
        arrays["D_embed"] = m.d_embed.table
    for name, state in (("opt_g", m.opt_g), ("opt_d", m.opt_d)):
        a, sm = nx.adam_arrays(name, state)
        arrays.update(a)
        meta[name] = sm
    if standardizer is not None:
        arrays["std/mean"] = standardizer.mean
        arrays["std/std"] = standardizer.std
    return nx.save_npz(path, arrays, meta)


def load_model(path) -> tuple[GanModel, Standardizer | None]:
    arrays, meta = nx.load_npz(path)
    if meta.get("kind") != "gan":
        raise ValueError(f"{path}: not a GAN checkpoint")
    schema = FeatureSchema(tuple(tuple(c) for c in meta["schema"]))
    if schema.digest() != meta["schema_hash"]:
        raise ValueError(f"{path}: schema hash mismatch")
    config = GanConfig(**meta["config"])
    m = GanModel(config, schema, ClassMap(tuple(meta["classes"])))
    m.generator = nx.net_from_arrays("G", arrays, meta["nets"]["G"])
    m.discriminator = nx.net_from_arrays("D", arrays, meta["nets"]["D"])
    if "S" in meta["nets"]:
        m.source_head = nx.net_from_arrays("S", arrays, meta["nets"]["S"])
        m.class_head = nx.net_from_arrays("C", arrays, meta["nets"]["C"])
    m.g_embed = nx.Embedding(arrays["G_embed"].copy())
    if "D_embed" in arrays:
        m.d_embed = nx.Embedding(arrays["D_embed"].copy())
    m.opt_g = nx.adam_from_arrays("opt_g", arrays, meta["opt_g"])
    m.opt_d = nx.adam_from_arrays("opt_d", arrays, meta["opt_d"])
    m.noise_rng.bit_generator.state = meta["noise_rng"]
    m.trained = meta["trained"]
    m.epochs_done = meta["epochs_done"]
    std = None
    if "std/mean" in arrays:
        std = Standardizer(arrays["std/mean"], arrays["std/std"])
    return m, std
