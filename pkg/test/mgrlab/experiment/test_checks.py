"""Tests for the built-in gradient and invariant checks."""

import numpy as np
import pytest

from mgrlab.diffcore import RngStream, registered_kinds
from mgrlab.experiment import CheckError
from mgrlab.experiment.checks import (
    COSINE_FLOOR,
    MAX_INSTANCE_DRAWS,
    CheckResult,
    check_determinism,
    check_fd_vs_exact,
    check_kl_identities,
    check_loss_gradients,
    check_op_gradients,
    check_pcr_head_isolation,
    fd_segment_is_smooth,
    meta_problem_draw,
    meta_step_timing,
    op_cases,
    random_meta_problem,
    run_checks,
)


# This class keeps the test checks data and behavior in one place.
class TestChecks:
    def test_op_cases_cover_every_kind(self):
        cases = op_cases(RngStream(0, "cover"))

        assert set(cases) == set(registered_kinds())

    @pytest.mark.parametrize(
        "check",
        [
            lambda: check_op_gradients(instances=2),
            lambda: check_loss_gradients(instances=2),
            check_pcr_head_isolation,
            check_kl_identities,
            lambda: check_fd_vs_exact(instances=2),
            check_determinism,
        ],
    )
    def test_each_check_passes(self, check):
        result = check()

        assert isinstance(result, CheckResult)
        assert result.passed, result.detail

    def test_fd_detail_reports_the_floor(self):
        result = check_fd_vs_exact(instances=1)

        low = float(result.detail.split()[2])
        assert low >= COSINE_FLOOR

    def test_meta_problem_is_a_plain_mgr_step(self):
        problem, state = random_meta_problem(seed=1)

        assert state.finder is not None
        assert problem.lam == 1.0
        assert problem.inner_lr == 0.1
        assert problem.penalty is None

    def test_run_checks_reports_crashes(self, monkeypatch):
        def broken():
            raise RuntimeError("bad tape")

        monkeypatch.setattr(
            "mgrlab.experiment.checks.check_kl_identities", broken
        )

        results = run_checks(instances=1)

        crashed = [r for r in results if not r.passed]
        assert len(results) == 6
        assert len(crashed) == 1
        assert "bad tape" in crashed[0].detail

    def test_timing_is_reported(self):
        seconds = meta_step_timing(width=8, repeats=1)

        assert set(seconds) == {"fd", "exact"}
        assert seconds["fd"] > 0.0
        assert seconds["exact"] > 0.0

    def test_fd_agrees_on_five_instances(self):
        result = check_fd_vs_exact(instances=5)

        assert result.passed, result.detail

    def test_first_smooth_draw_is_the_one_returned(self):
        attempt = next(
            a
            for a in range(MAX_INSTANCE_DRAWS)
            if fd_segment_is_smooth(*meta_problem_draw(1, a))
        )
        _, expected, _ = meta_problem_draw(1, attempt)
        _, state = random_meta_problem(1)

        for got, want in zip(
            state.finder.parameters(),
            expected.finder.parameters(),
            strict=True,
        ):
            np.testing.assert_array_equal(got.values, want.values)

    def test_a_long_segment_crosses_a_kink(self):
        problem, state, draw = meta_problem_draw(0)

        assert not fd_segment_is_smooth(problem, state, draw, reach=1e6)

    def test_unfiltered_problem_keeps_the_first_draw(self, monkeypatch):
        def never(*args, **kwargs):
            raise AssertionError("smoothness was evaluated")

        monkeypatch.setattr(
            "mgrlab.experiment.checks.fd_segment_is_smooth", never
        )

        problem, _ = random_meta_problem(0, smooth=False)

        assert problem.inner_lr == 0.1

    def test_no_smooth_draw_raises(self, monkeypatch):
        monkeypatch.setattr(
            "mgrlab.experiment.checks.fd_segment_is_smooth",
            lambda *args, **kwargs: False,
        )
        monkeypatch.setattr("mgrlab.experiment.checks.MAX_INSTANCE_DRAWS", 2)

        with pytest.raises(CheckError, match="in 2 draws"):
            random_meta_problem(0)


# This class keeps the test full-size gradient checks in one place.
@pytest.mark.slow
class TestFullGradientChecks:
    def test_every_loss_over_a_hundred_instances(self):
        result = check_loss_gradients(instances=100)

        assert result.passed, result.detail

    def test_every_op_over_a_hundred_instances(self):
        result = check_op_gradients(instances=100)

        assert result.passed, result.detail
