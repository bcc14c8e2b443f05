"""Tests for the command line verbs and their exit codes."""

import json

from click.testing import CliRunner

from lib.test import TINY_YAML, RegistryTestMixin, write_config
from mgrlab.experiment.commands import EXIT_CONFIG, EXIT_FAILURE, cli
from mgrlab.experiment.errors import RunError

ONE_EPOCH = TINY_YAML.replace("epochs: 2", "epochs: 1").replace(
    "seeds: [0, 1]", "seeds: [0]"
)


# This class keeps the test commands data and behavior in one place.
class TestCommands(RegistryTestMixin):
    def invoke(self, *args):
        return CliRunner().invoke(cli, [str(a) for a in args])

    def test_run_succeeds(self):
        path = write_config(self.tmp_path, ONE_EPOCH)

        result = self.invoke("run", path, "--output-dir", self.out)

        assert result.exit_code == 0, result.output
        assert "complete: 3 cells" in result.output
        manifest = json.loads((self.out / "manifest.json").read_text())
        assert manifest["status"] == "complete"

    def test_output_dir_from_app_config(self, app, monkeypatch):
        monkeypatch.setitem(app.config, "MGRLAB_OUTPUT_DIR", str(self.out))
        path = write_config(
            self.tmp_path,
            ONE_EPOCH.replace("methods: [base, pcr, mgr]", "methods: [base]"),
        )

        result = self.invoke("run", path)

        assert result.exit_code == 0, result.output
        assert (self.out / "manifest.json").is_file()

    def test_bad_config_exits_2(self):
        path = write_config(self.tmp_path, "training:\n  lam: 1.5\n")

        result = self.invoke("run", path, "--output-dir", self.out)

        assert result.exit_code == EXIT_CONFIG
        assert "config error: line 2" in result.output
        assert not self.out.exists()

    def test_missing_config_exits_2(self):
        result = self.invoke("run", self.tmp_path / "absent.yaml")

        assert result.exit_code == EXIT_CONFIG

    def test_run_failure_exits_3(self, monkeypatch):
        def fail(*args, **kwargs):
            raise RunError("worker lost")

        monkeypatch.setattr("mgrlab.experiment.commands.run", fail)
        path = write_config(self.tmp_path, ONE_EPOCH)

        result = self.invoke("run", path, "--output-dir", self.out)

        assert result.exit_code == EXIT_FAILURE
        assert "worker lost" in result.output

    def test_failed_cells_exit_3(self, monkeypatch):
        def explode(*args, **kwargs):
            raise RuntimeError("diverged")

        monkeypatch.setattr("mgrlab.experiment.runner.train", explode)
        path = write_config(self.tmp_path, ONE_EPOCH)

        result = self.invoke("run", path, "--output-dir", self.out)

        assert result.exit_code == EXIT_FAILURE
        manifest = json.loads((self.out / "manifest.json").read_text())
        assert manifest["status"] == "failed"

    def test_export_embeddings(self):
        path = write_config(self.tmp_path, ONE_EPOCH)
        ran = self.invoke("run", path, "--output-dir", self.out)
        assert ran.exit_code == 0, ran.output
        checkpoint = self.out / "mgr" / "seed-0" / "checkpoints" / "best.mgrl"
        target = self.tmp_path / "emb.csv"

        result = self.invoke(
            "export-embeddings", checkpoint, target, "--synthetic", 4
        )

        assert result.exit_code == 0, result.output
        assert f"wrote {54 + 6 + 90 + 4} rows" in result.output
        assert target.is_file()

    def test_export_corrupt_checkpoint_exits_3(self):
        path = write_config(self.tmp_path, ONE_EPOCH)
        self.invoke("run", path, "--output-dir", self.out)
        checkpoint = self.out / "pcr" / "seed-0" / "checkpoints" / "best.mgrl"
        checkpoint.write_bytes(b"not a checkpoint")

        result = self.invoke(
            "export-embeddings", checkpoint, self.tmp_path / "emb.csv"
        )

        assert result.exit_code == EXIT_FAILURE

    def test_check_passes(self):
        result = self.invoke("check", "--instances", 1)

        assert result.exit_code == 0, result.output
        assert "FAIL" not in result.output
        assert "[  ok]" in result.output

    def test_sweep_writes_table(self):
        text = ONE_EPOCH.replace(
            "methods: [base, pcr, mgr]", "methods: [base, pcr]"
        )
        path = write_config(self.tmp_path, text)

        result = self.invoke("sweep", path, "--output-dir", self.out)

        assert result.exit_code == 0, result.output
        payload = json.loads((self.out / "sweep.json").read_text())
        assert set(payload["table"]) == {"0.5", "1"}
        assert len(payload["cells"]) == 4

    def test_grid_lists_choices(self):
        text = ONE_EPOCH.replace(
            "methods: [base, pcr, mgr]", "methods: [pcr, mgr]"
        )
        path = write_config(self.tmp_path, text)

        result = self.invoke("grid", path, "--output-dir", self.out)

        assert result.exit_code == 0, result.output
        assert "(from pcr)" in result.output


# This class keeps the test flask binding data and behavior in one place.
class TestFlaskBinding:
    def test_lab_group_is_registered(self, app):
        assert "lab" in app.cli.commands
