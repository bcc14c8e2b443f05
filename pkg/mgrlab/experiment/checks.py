"""This file handles the invariant suite for the experiment part.

Each check returns a ``CheckResult`` rather than raising, so ``mgrlab
check`` can report all of them in one pass.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, replace

import numpy as np

from mgrlab.augment import (
    TransformSpec,
    apply_transform,
    draw_latent_noise,
    draw_transform,
)
from mgrlab.bench import BenchmarkSpec, make_benchmark
from mgrlab.diffcore import (
    RngStream,
    Tape,
    Tensor,
    grad_check,
    gradient,
    no_record,
    ops,
    registered_kinds,
)
from mgrlab.experiment.errors import CheckError
from mgrlab.metalearn import (
    BilevelProblem,
    MetaConfig,
    TrainState,
    build_state,
    inner_update,
    meta_gradient_exact,
    meta_gradient_fd,
    seed_stream,
    train,
)
from mgrlab.metalearn.trainer import PseudoDraw, build_meta_problem
from mgrlab.models import LatentPrior, MainModel, build_main_model
from mgrlab.objectives import (
    Batch,
    gda_objective,
    kl_penalty,
    latent_augment_loss,
    multihead_loss,
    pcr_loss,
    ssl_consistency_loss,
    task_loss,
)

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
COSINE_FLOOR = 0.99
FD_SEGMENT_REACH = 2.0
MAX_INSTANCE_DRAWS = 64

TINY_SPEC = BenchmarkSpec(
    num_classes=3, n=60, test_size=60, leak_rate=0.3, seed=7
)
TINY_TRAINING = MetaConfig(
    epochs=2,
    batch_size=16,
    pseudo_batch_size=16,
    val_batch_size=6,
    hidden=(16,),
    feature_dim=8,
    frechet_samples=64,
)


# This class keeps the check result data and behavior in one place.
@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _scalarize(rng: RngStream) -> Callable[[Tensor], Tensor]:
    """Random weighted sum, so no gradient is trivially symmetric."""
    weights: dict[tuple[int, ...], np.ndarray] = {}

    def reduce(y: Tensor) -> Tensor:
        if y.shape not in weights:
            weights[y.shape] = rng.normal(y.shape)
        return ops.sum_(ops.mul(Tensor(weights[y.shape]), y))

    return reduce


# This function builds the op cases work used in this file.
def op_cases(rng: RngStream) -> dict[str, tuple[np.ndarray, Callable]]:
    """One (input, tensor-to-tensor map) pair per registered op kind."""
    c34 = rng.normal((3, 4))
    c4 = rng.normal(4)
    c42 = rng.normal((4, 2))
    positive = rng.uniform(0.5, 1.5, (3, 4))
    return {
        "add": (rng.normal((3, 4)), lambda x: ops.add(x, c4)),
        "sub": (rng.normal((3, 4)), lambda x: ops.sub(c34, x)),
        "mul": (rng.normal((3, 4)), lambda x: ops.mul(x, c34)),
        "div": (positive, lambda x: ops.div(c34, x)),
        "neg": (rng.normal((3, 4)), ops.neg),
        "tanh": (rng.normal((3, 4)), ops.tanh),
        "exp": (0.5 * rng.normal((3, 4)), ops.exp),
        "log": (positive, ops.log),
        "sigmoid": (rng.normal((3, 4)), ops.sigmoid),
        "leaky_relu": (
            rng.normal((3, 4)),
            lambda x: ops.leaky_relu(x, 0.1),
        ),
        "matmul": (rng.normal((3, 4)), lambda x: ops.matmul(x, c42)),
        "transpose": (rng.normal((3, 4)), ops.transpose),
        "reshape": (rng.normal((3, 4)), lambda x: ops.reshape(x, (4, 3))),
        "expand": (rng.normal(4), lambda x: ops.expand(x, (3, 4))),
        "take": (rng.normal((3, 4)), lambda x: ops.take(x, 1, 3)),
        "embed": (rng.normal((3, 4)), lambda x: ops.embed(x, 1, 6)),
        "concat": (
            rng.normal((3, 4)),
            lambda x: ops.concat([x, c34], axis=1),
        ),
        "sum": (rng.normal((3, 4)), lambda x: ops.sum_(x, axis=0)),
        "mean": (rng.normal((3, 4)), lambda x: ops.mean(x, axis=1)),
        "sqnorm": (rng.normal((3, 4)), lambda x: ops.sqnorm(x, axis=1)),
        "log_softmax": (rng.normal((3, 4)), ops.log_softmax),
        "lerp": (
            rng.uniform(0.1, 0.9, (3, 1)),
            lambda x: ops.lerp(c34, positive, x),
        ),
    }


# This function checks the op gradients work used in this file.
def check_op_gradients(instances: int = 5, seed: int = 0) -> CheckResult:
    worst = 0.0
    kinds = set(registered_kinds())
    covered = set()
    for i in range(instances):
        rng = RngStream(seed + i, "check-ops")
        reduce = _scalarize(rng.child("weights"))
        for kind, (values, op) in op_cases(rng).items():
            covered.add(kind)
            x = Tensor(values, requires_grad=True)
            worst = max(worst, grad_check(lambda t: reduce(op(t)), x))
    missing = sorted(kinds - covered)
    passed = worst < GRAD_TOLERANCE and not missing
    detail = f"max relative error {worst:.2e} over {len(covered)} kinds"
    if missing:
        detail += f"; uncovered kinds: {', '.join(missing)}"
    return CheckResult("op-gradients", passed, detail)


# This function builds the loss cases work used in this file.
def loss_cases(rng: RngStream) -> dict[str, tuple[Tensor, Callable]]:
    """(leaf, scalar function of it) for every loss in the package."""
    bench = make_benchmark(TINY_SPEC, rng.child("bench"))
    gen = bench.generator
    model = build_main_model(2, (8,), 5, 3, rng.child("model"), True)
    n = 6
    x_p = rng.normal((n, 2))
    y = rng.integers(0, 3, n)
    real = Batch(Tensor(rng.normal((n, 2))), rng.integers(0, 3, n))
    spec = TransformSpec(noise_std=0.05)
    draw = draw_transform(n, 2, spec, rng)
    z = LatentPrior(gen.latent_dim).sample(n, rng).values
    noise = draw_latent_noise(z.shape, rng)
    head_w = model.params["head.weight"]
    aux_w = model.params["aux_head.weight"]
    # The ssl target is a constant, so the difference quotient must not
    # move it along with x_p or the head.
    with no_record():
        clean = model.classify(Tensor(x_p)).values
    return {
        "task": (
            Tensor(rng.normal((n, 3)), requires_grad=True),
            lambda t: task_loss(t, y),
        ),
        "gda": (
            head_w,
            lambda _: gda_objective(
                model, real, Batch(Tensor(x_p), y), 0.5
            ),
        ),
        "multihead": (
            aux_w,
            lambda _: multihead_loss(
                model, real, Batch(Tensor(x_p), y), 0.5
            ),
        ),
        "pcr-input": (
            Tensor(x_p, requires_grad=True),
            lambda t: pcr_loss(model, t, draw),
        ),
        "pcr-weights": (
            model.params["extractor.layer0.weight"],
            lambda _: pcr_loss(model, Tensor(x_p), draw),
        ),
        "ssl": (
            Tensor(x_p, requires_grad=True),
            lambda t: ssl_consistency_loss(
                model, t, draw, clean_logits=clean
            ),
        ),
        "ssl-weights": (
            head_w,
            lambda _: ssl_consistency_loss(
                model, Tensor(x_p), draw, clean_logits=clean
            ),
        ),
        "kl": (
            Tensor(rng.normal((n, 4)), requires_grad=True),
            kl_penalty,
        ),
        "latent-aug": (
            Tensor(z, requires_grad=True),
            lambda t: latent_augment_loss(model, gen, t, y, noise=noise),
        ),
    }


# This function checks the loss gradients work used in this file.
def check_loss_gradients(instances: int = 5, seed: int = 0) -> CheckResult:
    worst: dict[str, float] = {}
    for i in range(instances):
        rng = RngStream(seed + i, "check-losses")
        for name, (leaf, loss) in loss_cases(rng).items():
            worst[name] = max(worst.get(name, 0.0), grad_check(loss, leaf))
    failing = {k: v for k, v in worst.items() if v >= GRAD_TOLERANCE}
    detail = ", ".join(f"{k}={v:.1e}" for k, v in sorted(worst.items()))
    return CheckResult("loss-gradients", not failing, detail)


# This function checks the head isolation work used in this file.
def check_pcr_head_isolation(seed: int = 0) -> CheckResult:
    rng = RngStream(seed, "check-head")
    model = build_main_model(2, (8, 8), 5, 3, rng)
    x_p = Tensor(rng.normal((10, 2)))
    draw = draw_transform(10, 2, TransformSpec(), rng)
    head = model.head_parameters()
    with Tape() as tape:
        loss = pcr_loss(model, x_p, draw)
    grads = gradient(tape, loss, [*head, *model.extractor_parameters()])
    head_zero = all(np.all(g.values == 0.0) for g in grads[: len(head)])
    extractor_moves = any(np.any(g.values != 0) for g in grads[len(head) :])
    return CheckResult(
        "pcr-head-isolation",
        head_zero and extractor_moves,
        f"head gradient exactly zero: {head_zero}",
    )


# This function checks the kl identities work used in this file.
def check_kl_identities() -> CheckResult:
    centered = kl_penalty(Tensor([[1.0, -1.0], [-1.0, 1.0]])).item()
    shifted = kl_penalty(Tensor([[2.0], [0.0]])).item()
    passed = centered == 0.0 and shifted == 0.5
    return CheckResult(
        "kl-identities",
        passed,
        f"(mu=0, s=1) -> {centered!r}, (mu=1, s=1) -> {shifted!r}",
    )


def _extractor_signs(
    model: MainModel, x: np.ndarray, weights: Mapping[str, np.ndarray]
) -> np.ndarray:
    """Sign of every extractor pre-activation on ``x``, flattened."""
    extractor = model.extractor
    h = x
    signs = []
    for i in range(extractor.depth):
        pre = (
            h @ weights[f"extractor.layer{i}.weight"]
            + weights[f"extractor.layer{i}.bias"]
        )
        signs.append(np.ravel(pre > 0))
        h = np.where(pre > 0, pre, extractor.slope * pre)
    return np.concatenate(signs)


# This function checks the difference segment work used in this file.
def fd_segment_is_smooth(
    problem: BilevelProblem,
    state: TrainState,
    draw: PseudoDraw,
    eps_const: float = 0.01,
    reach: float = FD_SEGMENT_REACH,
) -> bool:
    """Whether the finite-difference segment stays on one linear piece.

    The segment is ``theta +- reach * eps * v`` with ``eps`` and ``v`` as
    in ``meta_gradient_fd``.  Only the pseudo term is evaluated there, so
    only extractor units on the clean and transformed pseudo inputs are
    compared, at both ends and the middle.
    """
    virtual = inner_update(problem)
    with Tape() as tape:
        val = problem.val_loss(virtual)
    direction = [g.values for g in gradient(tape, val, virtual)]
    norm = float(np.sqrt(sum(np.sum(d * d) for d in direction)))
    if norm == 0:
        return False
    step = reach * eps_const / norm
    with no_record():
        z_out = state.finder.forward(draw.z)
        x_p = state.generator.generate(z_out, draw.labels)
        strong = apply_transform(x_p, draw.transform)
    inputs = np.concatenate([x_p.values, strong.values])
    names = list(state.model.params)
    patterns = [
        _extractor_signs(
            state.model,
            inputs,
            {
                name: p.values + t * step * d
                for name, p, d in zip(
                    names, problem.theta, direction, strict=True
                )
            },
        )
        for t in (-1.0, 0.0, 1.0)
    ]
    return all(np.array_equal(patterns[1], p) for p in patterns[::2])


# This function draws one meta problem instance used in this file.
def meta_problem_draw(
    seed: int = 0,
    attempt: int = 0,
    width: int = 16,
    lam: float = 1.0,
) -> tuple[BilevelProblem, TrainState, PseudoDraw]:
    """A small MGR meta step with a randomized (non-identity) finder."""
    training = replace(
        TINY_TRAINING,
        method="mgr",
        hidden=(width,),
        lam=lam,
        kl_enabled=False,
        inner_lr=0.1,
        pseudo_batch_size=8,
    )
    bench = make_benchmark(TINY_SPEC)
    state = build_state(training, bench, seed_stream(seed))
    rng = RngStream(seed, f"meta-problem-{attempt}")
    for param in state.finder.parameters():
        param.values[...] = 0.3 * rng.normal(param.shape)
    rows = rng.permutation(len(bench.train))[:16]
    real = Batch(Tensor(bench.train.inputs[rows]), bench.train.labels[rows])
    val = Batch(Tensor(bench.val.inputs), bench.val.labels)
    n = training.pseudo_batch_size
    draw = PseudoDraw(
        z=state.prior.sample(n, rng),
        labels=rng.integers(0, bench.spec.num_classes, n),
        transform=draw_transform(n, 2, state.transform, rng),
    )
    return build_meta_problem(state, real, val, draw), state, draw


# This function builds the meta problem fixture work used in this file.
def random_meta_problem(
    seed: int = 0,
    width: int = 16,
    lam: float = 1.0,
    smooth: bool = True,
) -> tuple[BilevelProblem, TrainState]:
    """The first ``meta_problem_draw`` for ``seed`` that passes
    ``fd_segment_is_smooth``, so the finite difference and the exact
    hypergradient differentiate the same piece of the network.

    ``smooth=False`` returns the first draw unfiltered.
    """
    for attempt in range(MAX_INSTANCE_DRAWS):
        problem, state, draw = meta_problem_draw(seed, attempt, width, lam)
        if not smooth or fd_segment_is_smooth(problem, state, draw):
            return problem, state
        logger.debug("meta problem %d/%d crosses a kink", seed, attempt)
    raise CheckError(
        f"no kink-free meta problem for seed {seed} in "
        f"{MAX_INSTANCE_DRAWS} draws"
    )


def _cosine(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    u = np.concatenate([x.ravel() for x in a])
    v = np.concatenate([x.ravel() for x in b])
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


# This function checks the hypergradient agreement work used in this file.
def check_fd_vs_exact(instances: int = 3, seed: int = 0) -> CheckResult:
    cosines = []
    for i in range(instances):
        problem, _ = random_meta_problem(seed + i)
        fd = meta_gradient_fd(problem)
        exact = meta_gradient_exact(problem)
        cosines.append(_cosine(fd, exact))
    low = min(cosines)
    return CheckResult(
        "fd-vs-exact",
        low >= COSINE_FLOOR,
        f"min cosine {low:.5f} over {instances} instances",
    )


# This function checks the determinism work used in this file.
def check_determinism(seed: int = 0) -> CheckResult:
    bench = make_benchmark(TINY_SPEC)
    first = train("mgr", bench, TINY_TRAINING, seed_stream(seed)).record
    second = train("mgr", bench, TINY_TRAINING, seed_stream(seed)).record
    same = [r.as_csv() for r in first.rows] == [
        r.as_csv() for r in second.rows
    ]
    return CheckResult(
        "determinism", same, f"{len(first.rows)} epochs compared"
    )


# This function times the meta steps work used in this file.
def meta_step_timing(
    width: int = 64, repeats: int = 3, seed: int = 0
) -> dict[str, float]:
    """Mean seconds per meta-gradient in each mode; reported, not asserted."""
    timings = {}
    for mode, fn in (("fd", meta_gradient_fd), ("exact", meta_gradient_exact)):
        problem, _ = random_meta_problem(seed, width=width, smooth=False)
        fn(problem)
        started = time.perf_counter()
        for _ in range(repeats):
            fn(problem)
        timings[mode] = (time.perf_counter() - started) / repeats
    logger.info(
        "Meta step at width %d: fd %.4fs, exact %.4fs",
        width,
        timings["fd"],
        timings["exact"],
    )
    return timings


# This function runs the checks work used in this file.
def run_checks(instances: int = 5) -> list[CheckResult]:
    checks = (
        lambda: check_op_gradients(instances),
        lambda: check_loss_gradients(instances),
        check_pcr_head_isolation,
        check_kl_identities,
        lambda: check_fd_vs_exact(min(instances, 3)),
        check_determinism,
    )
    results = []
    for check in checks:
        try:
            results.append(check())
        except Exception as exc:
            logger.exception("Invariant check crashed")
            results.append(
                CheckResult(
                    getattr(check, "__name__", "check"),
                    False,
                    f"{type(exc).__name__}: {exc}",
                )
            )
    return results
