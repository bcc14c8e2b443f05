"""This file handles the test logic for the lib part of the project."""

import pytest

TINY_YAML = """\
benchmark:
  num_classes: 3
  n: 60
  test_size: 90
  seed: 11
training:
  epochs: 2
  batch_size: 18
  pseudo_batch_size: 12
  val_batch_size: 6
  hidden: [12]
  feature_dim: 6
  frechet_samples: 48
experiment:
  methods: [base, pcr, mgr]
  seeds: [0, 1]
  sweep_fractions: [0.5, 1.0]
"""


def write_config(directory, text=TINY_YAML, name="experiment.yaml"):
    """Write an experiment file into ``directory`` and return its path."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(text, encoding="utf-8")
    return path


# This class keeps the registry test mixin data and behavior in one place.
class RegistryTestMixin(object):
    """
    Automatically load in a session and a scratch directory, this is common
    for tests that run experiments and inspect the run registry.
    """

    @pytest.fixture(autouse=True)
    def set_common_fixtures(self, session, tmp_path):
        self.session = session
        self.tmp_path = tmp_path
        self.out = tmp_path / "runs"
