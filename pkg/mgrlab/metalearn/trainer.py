"""This file handles the training loop for the metalearn part of the project.

One outer iteration does, in order:

1. an optional finder step (meta-gradient for the MPS methods, gradient
   ascent for the hard-example methods), which takes exactly one
   discarded virtual classifier step;
2. one real classifier step on the method's objective with freshly
   sampled latents.

Each phase fires a hook event (``virtual_step``, ``finder_update``,
``real_update``) so tests can assert the call trace.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mgrlab.augment import (
    TransformDraw,
    TransformSpec,
    draw_latent_noise,
    draw_transform,
)
from mgrlab.bench.datasets import Benchmark
from mgrlab.bench.metrics import accuracy, frechet_distance, leakage_rate
from mgrlab.diffcore import (
    OptState,
    RngStream,
    Tape,
    Tensor,
    adam_state,
    gradient,
    no_record,
    ops,
    optimizer_step,
    sgd_state,
    step_decay,
)
from mgrlab.metalearn.config import (
    HARD_METHODS,
    LATENT_AUG_METHODS,
    MetaConfig,
)
from mgrlab.metalearn.errors import (
    DegenerateEpsilonError,
    MetaConfigError,
)
from mgrlab.metalearn.hypergrad import BilevelProblem, meta_gradient
from mgrlab.metalearn.records import EpochRow, RunRecord
from mgrlab.models import (
    Finder,
    LatentPrior,
    LeakyGenerator,
    MainModel,
    build_main_model,
    checkpoint_arrays,
    restore_checkpoint,
    write_checkpoint,
)
from mgrlab.models.networks import Params
from mgrlab.objectives import (
    Batch,
    kl_penalty,
    latent_augment_loss,
    pcr_loss,
    pseudo_cross_entropy,
    ssl_consistency_loss,
    task_loss,
)

logger = logging.getLogger(__name__)

Hook = Callable[[str, "TrainState"], None]

_TRANSFORM_METHODS = frozenset(
    {
        "gda-ssl",
        "pcr",
        "mgr",
        "f-hard-ce",
        "f-hard-pcr",
        "mgr-latentaug",
        "real-cr",
    }
)


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

# This class keeps the stream set data and behavior in one place.
@dataclass
class Streams:
    """One labelled stream per consumer, all derived from the run seed."""

    init: RngStream
    batches: RngStream
    val: RngStream
    prior_meta: RngStream
    labels_meta: RngStream
    augment_meta: RngStream
    prior_main: RngStream
    labels_main: RngStream
    augment: RngStream
    latent: RngStream
    eval: RngStream

    @classmethod
    def from_root(cls, rng: RngStream) -> Streams:
        return cls(
            init=rng.child("init"),
            batches=rng.child("batches"),
            val=rng.child("val"),
            prior_meta=rng.child("prior-meta"),
            labels_meta=rng.child("labels-meta"),
            augment_meta=rng.child("augment-meta"),
            prior_main=rng.child("prior-main"),
            labels_main=rng.child("labels-main"),
            augment=rng.child("augment"),
            latent=rng.child("latent"),
            eval=rng.child("eval"),
        )


# This class keeps the train state data and behavior in one place.
@dataclass
class TrainState:
    cfg: MetaConfig
    benchmark: Benchmark
    model: MainModel
    finder: Finder | None
    model_opt: OptState
    finder_opt: OptState | None
    streams: Streams
    transform: TransformSpec
    prior: LatentPrior
    epoch: int = 0
    iteration: int = 0
    skipped_meta_steps: int = 0
    hooks: list[Hook] = field(default_factory=list)
    val_order: np.ndarray | None = None
    val_cursor: int = 0

    @property
    def generator(self) -> LeakyGenerator:
        return self.benchmark.generator

    @property
    def inner_lr(self) -> float:
        if self.cfg.inner_lr is not None:
            return self.cfg.inner_lr
        return self.model_opt.lr

    def emit(self, event: str) -> None:
        for hook in self.hooks:
            hook(event, self)

    def next_val_batch(self) -> Batch:
        val = self.benchmark.val
        if self.val_order is None:
            self.val_order = self.streams.val.permutation(len(val))
            self.val_cursor = 0
        size = min(self.cfg.val_batch_size, len(val))
        picks = np.arange(self.val_cursor, self.val_cursor + size)
        rows = np.take(self.val_order, picks, mode="wrap")
        self.val_cursor = (self.val_cursor + size) % len(val)
        return Batch(Tensor(val.inputs[rows]), val.labels[rows])


# This class keeps the train result data and behavior in one place.
@dataclass
class TrainResult:
    record: RunRecord
    model: MainModel
    finder: Finder | None
    state: TrainState


# This function builds the train state work used in this file.
def build_state(
    cfg: MetaConfig,
    benchmark: Benchmark,
    rng: RngStream,
    hooks: Iterable[Hook] = (),
) -> TrainState:
    cfg.validate()
    streams = Streams.from_root(rng)
    spec = benchmark.spec
    model = build_main_model(
        spec.data_dim,
        cfg.hidden,
        cfg.feature_dim,
        spec.num_classes,
        streams.init,
        with_aux_head=cfg.needs_aux_head,
    )
    finder = None
    finder_opt = None
    if cfg.uses_finder:
        finder = Finder(
            cfg.finder_variant,
            benchmark.generator.latent_dim,
            streams.init.child("finder"),
            hidden=cfg.finder_hidden,
        )
        finder_opt = adam_state(finder.parameters(), cfg.finder_lr)
    return TrainState(
        cfg=cfg,
        benchmark=benchmark,
        model=model,
        finder=finder,
        model_opt=sgd_state(
            model.parameters(),
            cfg.lr,
            momentum=cfg.momentum,
            nesterov=cfg.nesterov,
            weight_decay=cfg.weight_decay,
        ),
        finder_opt=finder_opt,
        streams=streams,
        transform=cfg.transform_spec(benchmark.generator.spread),
        prior=LatentPrior(benchmark.generator.latent_dim),
        hooks=list(hooks),
    )


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

# This class keeps the pseudo draw data and behavior in one place.
@dataclass(frozen=True)
class PseudoDraw:
    """Random inputs of one pseudo batch, fixed before any evaluation."""

    z: Tensor
    labels: np.ndarray
    transform: TransformDraw | None = None
    noise: np.ndarray | None = None


def _draw_pseudo(
    state: TrainState,
    prior: RngStream,
    labels: RngStream,
    augment: RngStream,
    rows: int | None = None,
) -> PseudoDraw:
    cfg = state.cfg
    n = cfg.pseudo_batch_size
    z = state.prior.sample(n, prior)
    y = labels.integers(0, state.benchmark.spec.num_classes, n)
    transform = None
    if cfg.method in _TRANSFORM_METHODS:
        transform = draw_transform(
            rows or n, state.benchmark.spec.data_dim, state.transform, augment
        )
    noise = None
    if cfg.method in LATENT_AUG_METHODS:
        noise = draw_latent_noise(
            z.shape, state.streams.latent, cfg.latent_noise_variance
        )
    return PseudoDraw(z, y.astype(np.int64), transform, noise)


# This function computes the pseudo term work used in this file.
def pseudo_term(
    state: TrainState,
    draw: PseudoDraw,
    real: Batch,
    model_params: Params | None = None,
    finder_params: Params | None = None,
    use_finder: bool = True,
) -> Tensor | None:
    """The method's regularizer on synthetic (or, for real-cr, real) data.

    With ``use_finder=False`` the latents in ``draw`` are taken as final.
    """
    method = state.cfg.method
    model = state.model
    if method == "base":
        return None
    if method == "real-cr":
        return pcr_loss(model, real.x, draw.transform, params=model_params)

    z_out = (
        state.finder.forward(draw.z, finder_params)
        if state.finder is not None and use_finder
        else draw.z
    )
    x_p = state.generator.generate(z_out, draw.labels)
    pseudo = Batch(x_p, draw.labels)

    match method:
        case "gda" | "gda-mps":
            return pseudo_cross_entropy(model, pseudo, model_params)
        case "gda-mh":
            return pseudo_cross_entropy(model, pseudo, model_params, aux=True)
        case "gda-ssl":
            return ssl_consistency_loss(
                model,
                x_p,
                draw.transform,
                form=state.cfg.ssl_form,
                params=model_params,
            )
        case "mgr-latentonly":
            return latent_augment_loss(
                model,
                state.generator,
                z_out,
                draw.labels,
                noise=draw.noise,
                params=model_params,
            )
    loss = pcr_loss(model, x_p, draw.transform, params=model_params)
    if method == "mgr-latentaug":
        loss = ops.add(
            loss,
            latent_augment_loss(
                model,
                state.generator,
                z_out,
                draw.labels,
                noise=draw.noise,
                params=model_params,
            ),
        )
    return loss


def _classifier_loss(
    state: TrainState,
    draw: PseudoDraw,
    real: Batch,
    model_params: Params | None = None,
    use_finder: bool = True,
) -> Tensor:
    loss = task_loss(state.model.classify(real.x, model_params), real.y)
    term = pseudo_term(
        state, draw, real, model_params, use_finder=use_finder
    )
    if term is None:
        return loss
    return ops.add(loss, ops.mul(state.cfg.lam, term))


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

# This function builds the meta problem work used in this file.
def build_meta_problem(
    state: TrainState,
    real: Batch,
    val: Batch,
    draw: PseudoDraw,
) -> BilevelProblem:
    cfg = state.cfg
    model, finder = state.model, state.finder

    def train_loss(theta: Sequence[Tensor]) -> Tensor:
        return task_loss(model.classify(real.x, model.bind(theta)), real.y)

    def pseudo_loss(
        theta: Sequence[Tensor], phi: Sequence[Tensor]
    ) -> Tensor:
        return pseudo_term(
            state, draw, real, model.bind(theta), finder.bind(phi)
        )

    def val_loss(theta: Sequence[Tensor]) -> Tensor:
        return task_loss(model.classify(val.x, model.bind(theta)), val.y)

    penalty = None
    if cfg.kl_enabled and cfg.lam_kl > 0:

        def penalty(phi: Sequence[Tensor]) -> Tensor:
            return kl_penalty(
                finder.forward(draw.z, finder.bind(phi)), cfg.kl_form
            )

    return BilevelProblem(
        theta=model.parameters(),
        phi=finder.parameters(),
        train_loss=train_loss,
        pseudo_loss=pseudo_loss,
        val_loss=val_loss,
        lam=cfg.lam,
        inner_lr=state.inner_lr,
        penalty=penalty,
        lam_kl=cfg.lam_kl if penalty is not None else 0.0,
        trace=state.emit,
    )


# This function runs the mps step work used in this file.
def mps_step(state: TrainState, real: Batch) -> bool:
    """Finder meta step; returns False when the step was skipped."""
    if state.finder is None:
        raise MetaConfigError(
            f"method '{state.cfg.method}' does not train a finder"
        )
    streams = state.streams
    draw = _draw_pseudo(
        state, streams.prior_meta, streams.labels_meta, streams.augment_meta
    )
    problem = build_meta_problem(state, real, state.next_val_batch(), draw)
    try:
        grads = meta_gradient(
            problem, state.cfg.meta_mode, state.cfg.eps_const
        )
    except DegenerateEpsilonError as exc:
        state.skipped_meta_steps += 1
        logger.warning(
            "Skipping finder step at iteration %d: %s", state.iteration, exc
        )
        state.emit("finder_skipped")
        return False
    optimizer_step(state.finder_opt, state.finder.parameters(), grads)
    state.emit("finder_update")
    return True


# This function computes the hard example loss work used in this file.
def hard_example_loss(
    state: TrainState,
    draw: PseudoDraw,
    objective: str,
    finder_params: Params | None = None,
) -> Tensor:
    z_out = state.finder.forward(draw.z, finder_params)
    x_p = state.generator.generate(z_out, draw.labels)
    if objective == "ce":
        return pseudo_cross_entropy(state.model, Batch(x_p, draw.labels))
    return pcr_loss(state.model, x_p, draw.transform)


# This function runs the hard example update work used in this file.
def hard_example_f_update(
    state: TrainState,
    objective: str,
    draw: PseudoDraw | None = None,
) -> float:
    """Gradient ascent of the finder on a training loss of the classifier.

    Returns the chosen loss before the step.
    """
    if objective not in ("ce", "pcr"):
        raise ValueError(f"objective must be 'ce' or 'pcr', got {objective}")
    cfg = state.cfg
    if draw is None:
        streams = state.streams
        draw = _draw_pseudo(
            state,
            streams.prior_meta,
            streams.labels_meta,
            streams.augment_meta,
        )
    if draw.transform is None and objective == "pcr":
        draw = replace(
            draw,
            transform=draw_transform(
                draw.z.shape[0],
                state.benchmark.spec.data_dim,
                state.transform,
                state.streams.augment_meta,
            ),
        )
    phi = state.finder.parameters()
    with Tape() as tape:
        loss = hard_example_loss(state, draw, objective)
        total = ops.neg(loss)
        if cfg.kl_enabled and cfg.lam_kl > 0:
            total = ops.add(
                total,
                ops.mul(
                    cfg.lam_kl,
                    kl_penalty(state.finder.forward(draw.z), cfg.kl_form),
                ),
            )
    grads = gradient(tape, total, phi) if phi else []
    for param in phi:
        param.zero_grad()
    optimizer_step(state.finder_opt, phi, grads)
    state.emit("finder_update")
    return loss.item()


# This function runs the main step work used in this file.
def main_step(state: TrainState, real: Batch) -> float:
    """Real classifier step on freshly sampled pseudo data."""
    streams = state.streams
    draw = _draw_pseudo(
        state,
        streams.prior_main,
        streams.labels_main,
        streams.augment,
        rows=len(real) if state.cfg.method == "real-cr" else None,
    )
    if state.finder is not None:
        # The finder is fixed during the classifier step.
        with no_record():
            z_out = state.finder.forward(draw.z)
        draw = replace(draw, z=Tensor(z_out.values))

    params = state.model.parameters()
    with Tape() as tape:
        loss = _classifier_loss(state, draw, real, use_finder=False)
    grads = gradient(tape, loss, params)
    for param in params:
        param.zero_grad()
    optimizer_step(state.model_opt, params, grads)
    state.emit("real_update")
    return loss.item()


# ---------------------------------------------------------------------------
# Evaluation and loop
# ---------------------------------------------------------------------------

# This function evaluates the epoch work used in this file.
def evaluate(state: TrainState, epoch: int) -> dict[str, float]:
    bench, model, cfg = state.benchmark, state.model, state.cfg
    draws = state.streams.eval.child(f"epoch-{epoch}")
    with no_record():
        val_logits = model.classify(Tensor(bench.val.inputs))
        val_loss = task_loss(val_logits, bench.val.labels).item()
        test_logits = model.classify(Tensor(bench.test.inputs)).values

        z = state.prior.sample(cfg.frechet_samples, draws)
        y = draws.integers(0, bench.spec.num_classes, cfg.frechet_samples)
        z_out = state.finder.forward(z) if state.finder is not None else z
        x_p = state.generator.generate(z_out, y)
        fake = model.features(x_p).values
        real = model.features(Tensor(bench.train.inputs)).values
    return {
        "val_loss": val_loss,
        "val_acc": accuracy(val_logits.values, bench.val.labels),
        "test_acc": accuracy(test_logits, bench.test.labels),
        "frechet": frechet_distance(real, fake),
        "leak_rate": leakage_rate(z_out.values, state.generator),
    }


# This function runs the training work used in this file.
def train(
    method: str,
    benchmark: Benchmark,
    cfg: MetaConfig,
    rng: RngStream,
    checkpoint_dir: Path | None = None,
    on_epoch: Callable[[EpochRow], None] | None = None,
    hooks: Iterable[Hook] = (),
) -> TrainResult:
    """Train one (method, seed) cell and restore its best-validation model."""
    cfg = replace(cfg, method=method)
    state = build_state(cfg, benchmark, rng, hooks)
    record = RunRecord(method=method, seed=rng.seed, lam=cfg.lam)
    train_set = benchmark.train
    iterations = math.ceil(len(train_set) / cfg.batch_size)
    started = time.perf_counter()
    best_acc = -1.0
    best_arrays = checkpoint_arrays(state.model, state.finder)

    logger.info(
        "Training %s seed=%d lambda=%.2f epochs=%d iterations/epoch=%d",
        method,
        rng.seed,
        cfg.lam,
        cfg.epochs,
        iterations,
    )
    for epoch in range(1, cfg.epochs + 1):
        state.epoch = epoch
        state.model_opt.lr = step_decay(
            cfg.lr, epoch - 1, cfg.milestones, cfg.gamma
        )
        state.val_order = None
        order = state.streams.batches.permutation(len(train_set))
        losses = []
        for it in range(iterations):
            rows = order[it * cfg.batch_size : (it + 1) * cfg.batch_size]
            real = Batch(
                Tensor(train_set.inputs[rows]), train_set.labels[rows]
            )
            if cfg.uses_meta:
                mps_step(state, real)
            elif cfg.method in HARD_METHODS:
                hard_example_f_update(state, HARD_METHODS[cfg.method])
            losses.append(main_step(state, real))
            state.iteration += 1

        row = EpochRow(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            **evaluate(state, epoch),
        )
        record.add(row)
        logger.info(
            "%s seed=%d epoch %d/%d loss=%.4f val_acc=%.4f test_acc=%.4f "
            "leak=%.3f",
            method,
            rng.seed,
            epoch,
            cfg.epochs,
            row.train_loss,
            row.val_acc,
            row.test_acc,
            row.leak_rate,
        )
        if on_epoch is not None:
            on_epoch(row)

        if row.val_acc > best_acc:
            best_acc = row.val_acc
            record.selected_epoch = epoch
            best_arrays = checkpoint_arrays(state.model, state.finder)
            if checkpoint_dir is not None:
                write_checkpoint(
                    Path(checkpoint_dir) / "best.mgrl", best_arrays
                )
        if checkpoint_dir is not None and epoch in cfg.milestones:
            write_checkpoint(
                Path(checkpoint_dir) / f"milestone-{epoch}.mgrl",
                checkpoint_arrays(state.model, state.finder),
            )

    restore_checkpoint(best_arrays, state.model, state.finder)
    record.wall_clock = time.perf_counter() - started
    record.skipped_meta_steps = state.skipped_meta_steps
    if state.skipped_meta_steps:
        logger.warning(
            "%s seed=%d skipped %d finder steps",
            method,
            rng.seed,
            state.skipped_meta_steps,
        )
    return TrainResult(record, state.model, state.finder, state)


# This function creates the seed stream work used in this file.
def seed_stream(seed: int) -> RngStream:
    """Root stream of one training cell."""
    return RngStream(seed, "train")
