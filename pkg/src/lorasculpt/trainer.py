"""Two-phase sparse, regularized adapter training and comparison baselines.

Steps are numbered from 0. Steps ``0 .. warmup_steps - 1`` update dense
adapters; at the start of step ``warmup_steps`` magnitude masks are built
once from the current factors, and from then on masked entries are zeroed
before every forward pass and again after every parameter update.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import regularizer as reg
from .adapter import build_mask, structural_sparsity
from .errors import ConfigError, TrainingError
from .model import CONNECTOR, LLM, ArchSpec, ToyModel, build_model, mse
from .numcore import RandomStream, matmul
from .retention import DEFAULT_EPS, retention_mask
from .tasks import TaskSpec
from .theory import SparsitySpec, expected_product_sparsity

LORASCULPT = "lorasculpt"
LORA = "lora"
L2REG = "l2reg"
POSTHOC_PRUNE = "posthoc_prune"
DARE = "dare"
BASELINES = (LORASCULPT, LORA, L2REG, POSTHOC_PRUNE, DARE)

PRETRAIN_INIT_STREAM = 2
PRETRAIN_BATCH_STREAM = 3
ADAPTER_STREAM = 4
FINETUNE_STREAM = 5
DARE_STREAM = 6

TRACE_COLUMNS = ("step", "task_loss", "cmr_frob", "cmr_l1", "total_loss")


@dataclass
class TrainConfig:
    total_steps: int = 400
    warmup_steps: int | None = None  # None: ceil(0.1 * total_steps)
    lr: float = 0.5
    momentum: float = 0.9
    batch_size: int = 64
    retained_density: float = 0.1
    omega: float = 1.0
    epsilon: float = DEFAULT_EPS
    alpha: float = 1e-3
    beta: float = 1e-5
    seed: int = 0
    baseline: str = LORASCULPT
    reg_tags: list[str] | None = None  # None: connector -> l1, others -> frobenius
    prune_connector: bool = False
    l2_lambda: float = 1e-3
    p_drop: float = 0.5
    rank: int = 8
    scaling: float = 1.0
    hidden_dims: tuple[int, ...] = (32, 32)
    pretrain_steps: int = 3000
    pretrain_lr: float = 0.05

    def __post_init__(self):
        self.validate()

    @property
    def warmup(self) -> int:
        if self.warmup_steps is None:
            return max(1, math.ceil(0.1 * self.total_steps))
        return self.warmup_steps

    def validate(self) -> None:
        if not 1 <= self.warmup < self.total_steps:
            raise ConfigError(
                f"need 1 <= warmup_steps < total_steps, got {self.warmup} and {self.total_steps}")
        if not 0.0 < self.retained_density <= 1.0:
            raise ConfigError(f"retained_density must lie in (0, 1], got {self.retained_density}")
        if self.lr <= 0 or self.pretrain_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.pretrain_steps < 1 or self.rank < 1:
            raise ConfigError("batch_size, pretrain_steps and rank must be positive")
        if self.alpha < 0 or self.beta < 0 or self.l2_lambda < 0:
            raise ConfigError("penalty coefficients must be non-negative")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError("p_drop must lie in [0, 1)")
        if self.omega <= 0 or self.epsilon <= 0 or self.scaling <= 0:
            raise ConfigError("omega, epsilon and scaling must be positive")
        if self.baseline not in BASELINES:
            raise ConfigError(f"unknown baseline {self.baseline!r}")
        if self.reg_tags is not None:
            bad = [t for t in self.reg_tags if t not in reg.TAGS]
            if bad:
                raise ConfigError(f"unknown regularizer tags {bad}")

    def arch(self, task: TaskSpec) -> ArchSpec:
        return ArchSpec(task.input_dim, tuple(self.hidden_dims), task.output_dim,
                        self.rank, self.scaling)

    def tags_for(self, model: ToyModel) -> list[str]:
        if self.reg_tags is not None:
            if len(self.reg_tags) != len(model.layers):
                raise ConfigError(
                    f"{len(self.reg_tags)} regularizer tags for {len(model.layers)} layers")
            return list(self.reg_tags)
        return [reg.L1 if l.role == CONNECTOR else reg.FROBENIUS for l in model.layers]


@dataclass
class TraceRow:
    step: int
    task_loss: float
    cmr_frob: float
    cmr_l1: float
    total_loss: float

    def as_tuple(self) -> tuple:
        return (self.step, self.task_loss, self.cmr_frob, self.cmr_l1, self.total_loss)


@dataclass
class EvalReport:
    source_scores: list[float]
    target_score: float
    source_mse: list[float]
    target_mse: float
    layer_sparsity: list[float] = field(default_factory=list)
    layer_expected: list[float] = field(default_factory=list)
    layer_shapes: list[tuple[int, int, int]] = field(default_factory=list)
    layer_roles: list[str] = field(default_factory=list)

    @property
    def source(self) -> float:
        return float(np.mean(self.source_scores))

    @property
    def target(self) -> float:
        return self.target_score

    @property
    def avg(self) -> float:
        return (self.source + self.target) / 2.0

    def summary(self) -> str:
        return f"Source={self.source:.6f} Target={self.target:.6f} Avg={self.avg:.6f}"


def score(mse_value: float) -> float:
    return 1.0 / (1.0 + mse_value)


def _check_finite(value: float, step: int, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {what}", step)


# overflow is caught by _check_finite; the floating-point warnings are noise
@np.errstate(over="ignore", invalid="ignore")
def pretrain_base(seed: int, task: TaskSpec, arch: ArchSpec, steps: int,
                  lr: float = 0.05, momentum: float = 0.9, batch_size: int = 64) -> ToyModel:
    """Fit fresh base weights to the source-task mixture with momentum SGD.

    Adapters start with ``B = 0`` and are never touched here, so the returned
    model computes exactly the base function.
    """
    if steps < 1:
        raise ConfigError("pretraining needs at least one step")
    model = build_model(RandomStream(seed, PRETRAIN_INIT_STREAM),
                        RandomStream(seed, ADAPTER_STREAM), arch)
    batches = RandomStream(seed, PRETRAIN_BATCH_STREAM)
    velocity = [np.zeros_like(l.w0) for l in model.layers]
    for step in range(steps):
        x, y = task.sample_sources(batches, batch_size)
        weights = model.weights(base_only=True)
        pred, acts = model.forward(x, weights, keep=True)
        loss = mse(pred, y)
        _check_finite(loss, step, "pretraining loss")
        grads = model.backward(2.0 * (pred - y) / pred.size, acts, weights)
        for layer, v, g in zip(model.layers, velocity, grads):
            v *= momentum
            v += g
            layer.w0 -= lr * v
    return model


def _prunable(layer, cfg: TrainConfig) -> bool:
    return layer.role == LLM or cfg.prune_connector


@np.errstate(over="ignore", invalid="ignore")
def _finetune(model: ToyModel, task: TaskSpec, cfg: TrainConfig, *, sparsify: bool,
              alpha: float, beta: float, l2_lambda: float = 0.0,
              on_step=None) -> tuple[ToyModel, list[TraceRow]]:
    model = model.copy()
    tags = cfg.tags_for(model)
    rcfg = reg.RegularizerConfig(alpha, beta, tags)
    ret = [retention_mask(l.w0, cfg.omega, cfg.epsilon) for l in model.layers]
    batches = RandomStream(cfg.seed, FINETUNE_STREAM)
    vel = [(np.zeros_like(l.adapter.B), np.zeros_like(l.adapter.A)) for l in model.layers]
    masked = [l for l in model.layers if sparsify and _prunable(l, cfg)]
    s = cfg.retained_density
    trace = []
    for step in range(cfg.total_steps):
        if masked and step >= cfg.warmup:
            for layer in masked:
                if step == cfg.warmup:
                    layer.adapter.set_masks(s, s)
                layer.adapter.project()
        x, y = task.sample(batches, task.target, cfg.batch_size)
        weights = model.weights()
        pred, acts = model.forward(x, weights, keep=True)
        task_loss = mse(pred, y)
        wgrads = model.backward(2.0 * (pred - y) / pred.size, acts, weights)

        frob_terms, l1_terms = [], []
        grads = []
        for layer, mask, tag, gw in zip(model.layers, ret, tags, wgrads):
            ad = layer.adapter
            b, a = ad.masked_factors()
            gb = ad.scaling * matmul(gw, a.T)
            ga = ad.scaling * matmul(b.T, gw)
            if tag == reg.FROBENIUS:
                rg = reg.cmr_frobenius_grad(mask, ad)
                frob_terms.append(rg.loss_value)
                if alpha > 0:
                    gb = gb + alpha * rg.grad_B
                    ga = ga + alpha * rg.grad_A
            elif tag == reg.L1:
                rg = reg.cmr_l1_grad(mask, ad)
                l1_terms.append(rg.loss_value)
                if beta > 0:
                    gb = gb + beta * rg.grad_B
                    ga = ga + beta * rg.grad_A
            if l2_lambda > 0:
                rg = reg.squared_product_grad(ad)
                gb = gb + l2_lambda * rg.grad_B
                ga = ga + l2_lambda * rg.grad_A
            grads.append((gb, ga))

        total = reg.total_loss(task_loss, frob_terms, l1_terms, rcfg)
        _check_finite(total, step, "training loss")
        for layer, (vb, va), (gb, ga) in zip(model.layers, vel, grads):
            vb *= cfg.momentum
            vb += gb
            va *= cfg.momentum
            va += ga
            layer.adapter.B -= cfg.lr * vb
            layer.adapter.A -= cfg.lr * va
            if layer.adapter.has_masks:
                layer.adapter.project()
        frob_sum = reg.total_loss(0.0, frob_terms, [], reg.RegularizerConfig(1.0, 0.0))
        l1_sum = reg.total_loss(0.0, [], l1_terms, reg.RegularizerConfig(0.0, 1.0))
        trace.append(TraceRow(step, task_loss, frob_sum, l1_sum, total))
        if on_step is not None:
            on_step(step, model)
    return model, trace


def train_lorasculpt(model: ToyModel, task: TaskSpec, cfg: TrainConfig,
                     on_step=None) -> tuple[ToyModel, list[TraceRow]]:
    """Warmup, one-shot magnitude pruning, then masked training with the penalties.

    ``on_step(step, model)`` is called after every update (for monitoring).
    """
    cfg.validate()
    return _finetune(model, task, cfg, sparsify=True, alpha=cfg.alpha, beta=cfg.beta,
                     on_step=on_step)


def dare_delta(delta: np.ndarray, p_drop: float, rng: RandomStream) -> np.ndarray:
    """Drop each entry with probability ``p_drop`` and rescale survivors by ``1/(1-p_drop)``."""
    keep = rng.uniform(delta.size).reshape(delta.shape) >= p_drop
    return np.where(keep, delta / (1.0 - p_drop), 0.0)


def posthoc_prune_delta(delta: np.ndarray, density: float) -> np.ndarray:
    return delta * build_mask(delta, density)


def train_baseline(model: ToyModel, task: TaskSpec, cfg: TrainConfig,
                   on_step=None) -> tuple[ToyModel, list[TraceRow]]:
    cfg.validate()
    if cfg.baseline == LORASCULPT:
        return train_lorasculpt(model, task, cfg, on_step)
    l2 = cfg.l2_lambda if cfg.baseline == L2REG else 0.0
    tuned, trace = _finetune(model, task, cfg, sparsify=False, alpha=0.0, beta=0.0,
                             l2_lambda=l2, on_step=on_step)
    if cfg.baseline == DARE:
        for i, layer in enumerate(tuned.layers):
            layer.delta_override = dare_delta(layer.delta(), cfg.p_drop,
                                              RandomStream(cfg.seed, DARE_STREAM + (i << 32)))
    elif cfg.baseline == POSTHOC_PRUNE:
        for layer in tuned.layers:
            layer.delta_override = posthoc_prune_delta(layer.delta(), cfg.retained_density)
    return tuned, trace


def layer_sparsity(layer) -> tuple[float, float]:
    """(actual, expected) density of a layer's weight delta.

    Masked adapters report the structural density of the mask product and the
    closed-form expectation; post-processed deltas report their numeric
    nonzero fraction; dense adapters report 1.0 against an expectation of 1.0.
    """
    ad = layer.adapter
    if layer.delta_override is not None:
        d = layer.delta_override
        return float(np.count_nonzero(d)) / d.size, 1.0
    if ad.has_masks:
        p, q = ad.shape
        spec = SparsitySpec(p, q, ad.rank, ad.density_A, ad.density_B)
        return structural_sparsity(ad), expected_product_sparsity(spec)
    return 1.0, 1.0


def evaluate(model: ToyModel, task: TaskSpec) -> EvalReport:
    mses = []
    for idx in range(len(task.teachers)):
        x, y = task.eval_batch(idx)
        mses.append(mse(model.forward(x), y))
    sparsity = [layer_sparsity(l) for l in model.layers]
    return EvalReport(
        source_scores=[score(m) for m in mses[:-1]],
        target_score=score(mses[-1]),
        source_mse=mses[:-1],
        target_mse=mses[-1],
        layer_sparsity=[a for a, _ in sparsity],
        layer_expected=[e for _, e in sparsity],
        layer_shapes=[(*l.w0.shape, l.adapter.rank) for l in model.layers],
        layer_roles=[l.role for l in model.layers],
    )


def write_trace_csv(trace: list[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([row.step, *(repr(v) for v in row.as_tuple()[1:])])


def write_eval_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", "mse", "score"])
        for i, (m, sc) in enumerate(zip(report.source_mse, report.source_scores)):
            w.writerow([f"source{i}", repr(m), repr(sc)])
        w.writerow(["target", repr(report.target_mse), repr(report.target_score)])
        w.writerow(["Source", "", repr(report.source)])
        w.writerow(["Target", "", repr(report.target)])
        w.writerow(["Avg", "", repr(report.avg)])


LAYER_COLUMNS = ("layer_idx", "role", "p", "q", "r", "structural_sparsity", "expected_sparsity")


def write_layers_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LAYER_COLUMNS)
        for i, (role, (p, q, r), act, exp) in enumerate(zip(
                report.layer_roles, report.layer_shapes, report.layer_sparsity,
                report.layer_expected)):
            w.writerow([i, role, p, q, r, repr(act), repr(exp)])
