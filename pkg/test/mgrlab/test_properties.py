"""Property tests over randomly drawn inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mgrlab.bench import frechet_distance, leakage_rate
from mgrlab.diffcore import RngStream, Tensor, grad_check, ops, step_decay
from mgrlab.experiment import parse_config
from mgrlab.experiment.checks import GRAD_TOLERANCE, op_cases
from mgrlab.models import LeakyGenerator, leak_threshold, random_projections
from mgrlab.objectives import kl_penalty

seeds = st.integers(min_value=0, max_value=2**31 - 1)


@settings(max_examples=15, deadline=None)
@given(seed=seeds, kind=st.sampled_from(["tanh", "log_softmax", "matmul"]))
def test_op_gradients_match_finite_differences(seed, kind):
    rng = RngStream(seed, "property")
    values, op = op_cases(rng)[kind]
    weights = {}

    def reduce(t):
        out = op(t)
        if out.shape not in weights:
            weights[out.shape] = Tensor(rng.normal(out.shape))
        return ops.sum(ops.mul(out, weights[out.shape]))

    x = Tensor(values, requires_grad=True)
    assert grad_check(reduce, x) < GRAD_TOLERANCE


@settings(max_examples=25, deadline=None)
@given(
    seed=seeds,
    rows=st.integers(min_value=2, max_value=40),
    dim=st.integers(min_value=1, max_value=4),
)
def test_kl_penalty_is_non_negative(seed, rows, dim):
    z = Tensor(RngStream(seed, "kl").normal((rows, dim)) * 3.0 + 1.0)

    assert kl_penalty(z).item() >= -1e-12


@settings(max_examples=25, deadline=None)
@given(seed=seeds, shift=st.floats(min_value=-3.0, max_value=3.0))
def test_frechet_is_symmetric_and_non_negative(seed, shift):
    rng = RngStream(seed, "frechet")
    a = rng.normal((200, 3))
    b = rng.normal((150, 3)) * 1.5 + shift

    forward = frechet_distance(a, b)
    assert forward >= 0.0
    assert np.isclose(forward, frechet_distance(b, a), rtol=1e-6, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, rate=st.floats(min_value=0.05, max_value=0.95))
def test_leakage_rate_counts_the_gate(seed, rate):
    rng = RngStream(seed, "leak")
    gen = LeakyGenerator(
        modes=np.eye(3, 2),
        spread=0.7,
        threshold=leak_threshold(rate),
        sharpness=10.0,
        projections=random_projections(3, 4, 2, rng.child("proj")),
        latent_dim=4,
    )
    z = rng.normal((300, 4))

    observed = leakage_rate(z, gen)
    assert 0.0 <= observed <= 1.0
    assert observed == np.mean(z[:, 0] > gen.threshold)



@given(
    base=st.floats(min_value=1e-4, max_value=1.0),
    epoch=st.integers(min_value=0, max_value=300),
)
def test_step_decay_never_increases(base, epoch):
    milestones = (60, 120, 160)

    assert step_decay(base, epoch + 1, milestones) <= step_decay(
        base, epoch, milestones
    )
    assert step_decay(base, epoch, milestones) <= base


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(min_value=0.1, max_value=1.0))
def test_config_hash_survives_a_round_trip(lam):
    config = parse_config(f"training:\n  lam: {lam!r}\n")

    again = parse_config(config.canonical_json())

    assert again.config_hash() == config.config_hash()
