"""Tests for the strong transformation and latent noise."""

import numpy as np
import pytest

from mgrlab.augment import (
    AugmentError,
    TransformSpec,
    apply_transform,
    draw_latent_noise,
    draw_transform,
    errors,
    latent_perturb,
    strong_transform,
)
from mgrlab.diffcore import RngStream, Tensor, grad_check, ops

IDENTITY = TransformSpec(
    rotation_max=0.0, scale_range=(1.0, 1.0), noise_std=0.0
)


# This class keeps the test transform spec data and behavior in one place.
class TestTransformSpec:
    def test_identity_flag(self):
        assert IDENTITY.is_identity
        assert not TransformSpec().is_identity

    @pytest.mark.parametrize(
        "spec",
        [
            TransformSpec(scale_range=(1.2, 0.8)),
            TransformSpec(scale_range=(0.0, 1.0)),
            TransformSpec(rotation_max=-0.1),
            TransformSpec(noise_std=-1.0),
            TransformSpec(ops_per_sample=0),
        ],
    )
    def test_invalid_settings(self, spec):
        with pytest.raises(AugmentError):
            spec.validate()

    def test_error_lives_with_the_other_error_types(self):
        assert AugmentError is errors.AugmentError
        assert issubclass(AugmentError, ValueError)


# This class keeps the test transform data and behavior in one place.
class TestTransform:
    def test_identity_spec_leaves_points(self, rng):
        x = Tensor(rng.normal((5, 2)))
        out = strong_transform(x, IDENTITY, rng)

        np.testing.assert_array_equal(out.values, x.values)

    def test_matches_per_row_affine_map(self, rng):
        x = rng.normal((6, 3))
        draw = draw_transform(6, 3, TransformSpec(ops_per_sample=3), rng)
        out = apply_transform(Tensor(x), draw).values

        for i in range(6):
            expected = draw.jacobian(i) @ x[i] + draw.offset[i]
            np.testing.assert_allclose(out[i], expected, atol=1e-12)

    def test_rotation_alone_preserves_norm(self, rng):
        spec = TransformSpec(
            rotation_max=1.0, scale_range=(1.0, 1.0), noise_std=0.0
        )
        x = rng.normal((8, 2))
        out = apply_transform(Tensor(x), draw_transform(8, 2, spec, rng))

        np.testing.assert_allclose(
            np.linalg.norm(out.values, axis=1), np.linalg.norm(x, axis=1)
        )

    def test_draw_is_reproducible(self):
        a = draw_transform(4, 2, TransformSpec(), RngStream(0, "aug"))
        b = draw_transform(4, 2, TransformSpec(), RngStream(0, "aug"))

        np.testing.assert_array_equal(a.angle, b.angle)
        np.testing.assert_array_equal(a.offset, b.offset)

    def test_one_op_per_sample(self, rng):
        draw = draw_transform(200, 2, TransformSpec(ops_per_sample=1), rng)
        rotated = draw.angle != 0
        scaled = draw.scale != 1
        noisy = np.any(draw.offset != 0, axis=1)

        assert np.all(rotated.astype(int) + scaled + noisy <= 1)

    def test_rotation_needs_two_dims(self, rng):
        with pytest.raises(AugmentError, match="two data dimensions"):
            draw_transform(3, 1, TransformSpec(), rng)

    def test_one_dim_without_rotation(self, rng):
        spec = TransformSpec(rotation_max=0.0)
        x = Tensor(rng.normal((3, 1)))
        out = apply_transform(x, draw_transform(3, 1, spec, rng))

        assert out.shape == (3, 1)

    def test_differentiable_in_input(self, rng):
        draw = draw_transform(4, 3, TransformSpec(), rng)
        x = Tensor(rng.normal((4, 3)), requires_grad=True)
        w = rng.normal((4, 3))

        error = grad_check(
            lambda t: ops.sum_(ops.mul(Tensor(w), apply_transform(t, draw))),
            x,
        )

        assert error < 1e-4


# This class keeps the test latent noise data and behavior in one place.
class TestLatentNoise:
    def test_variance(self):
        noise = draw_latent_noise((4000, 4), RngStream(0, "latent"))

        assert noise.var() == pytest.approx(1e-3, rel=0.05)

    def test_perturb_shifts_by_noise(self, rng):
        z = Tensor(np.zeros((3, 4)))
        out = latent_perturb(z, rng, variance=0.5)

        assert out.shape == (3, 4)
        assert np.any(out.values != 0)
