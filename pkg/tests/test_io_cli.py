import json

import numpy as np
import pytest

from chdarcy import cli
from chdarcy import config as cf
from chdarcy import diagnostics as dg
from chdarcy import dynamics as dyn
from chdarcy import io as cio
from chdarcy import spectral as sp

from conftest import make_model, random_state


def small_config(**overrides):
    base = {
        "domain": {"kind": "interval", "lengths": [1.0]},
        "modes": [8],
        "dt": 0.001,
        "T": 0.01,
        "params": {"A": 1.0, "B": 0.01, "K": 1.0, "D": 1.0,
                   "chi": 0.05, "b": 0.1},
        "potential": "quartic-double-well",
        "sources": {"kind": "hawkins", "f0": 0.1},
        "sigma_inf": {"kind": "constant", "value": 1.0},
        "initial": {
            "phi": {"kind": "cosine", "mean": 0.0, "amplitude": 0.2,
                    "mode": [1]},
            "sigma": {"kind": "constant", "value": 0.5},
        },
    }
    base.update(overrides)
    return base


class TestDiagnosticsCsv:
    def collect(self, basis, n_steps=5):
        model = make_model()
        config = dyn.StepperConfig(dt=1e-3)
        collector = dg.DiagnosticsCollector(model, config)
        dyn.run(random_state(basis, 5, scale=0.1), config, model,
                n_steps * config.dt, observer=collector.observe)
        return collector.records

    def test_round_trip_is_bit_exact(self, interval_basis, tmp_path):
        records = self.collect(interval_basis)
        path = tmp_path / "diag.csv"
        cio.write_diagnostics_csv(records, path)
        rows = cio.read_diagnostics_csv(path)
        assert len(rows) == len(records)
        for rec, row in zip(records, rows):
            assert row == rec.row()

    def test_empty_file_keeps_header(self, tmp_path):
        path = tmp_path / "diag.csv"
        cio.write_diagnostics_csv([], path)
        assert cio.read_diagnostics_csv(path) == []

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "diag.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(cio.SnapshotFormatError):
            cio.read_diagnostics_csv(path)


class TestSnapshots:
    def test_round_trip_bitwise(self, rect_basis, tmp_path):
        state = random_state(rect_basis, 77, t=0.25)
        path = tmp_path / "s.snap"
        cio.write_field_snapshot(state, path)
        back = cio.read_field_snapshot(path)
        assert back.t == state.t
        assert np.array_equal(back.alpha.data, state.alpha.data)
        assert np.array_equal(back.gamma.data, state.gamma.data)

    def test_supplied_basis_must_match(self, interval_basis, rect_basis,
                                       tmp_path):
        path = tmp_path / "s.snap"
        cio.write_field_snapshot(random_state(interval_basis, 1), path)
        cio.read_field_snapshot(path, interval_basis)  # matching is fine
        with pytest.raises(cio.SnapshotFormatError):
            cio.read_field_snapshot(path, rect_basis)

    def test_corrupt_header_rejected(self, tmp_path):
        path = tmp_path / "s.snap"
        path.write_bytes(b"chd-snapshot 9\nkind interval\n")
        with pytest.raises(cio.SnapshotFormatError):
            cio.read_field_snapshot(path)

    def test_truncated_payload_rejected(self, interval_basis, tmp_path):
        path = tmp_path / "s.snap"
        cio.write_field_snapshot(random_state(interval_basis, 1), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(cio.SnapshotFormatError):
            cio.read_field_snapshot(path)


class TestCheckpoints:
    def test_round_trip(self, interval_basis, tmp_path):
        state = random_state(interval_basis, 8, t=0.125)
        acc = np.array([0.1, 0.2, 0.3, 0.4])
        path = tmp_path / "c.ckpt"
        cio.write_checkpoint(cio.Checkpoint("deadbeef", state, acc), path)
        back = cio.read_checkpoint(path)
        assert back.config_hash == "deadbeef"
        assert back.state.t == state.t
        assert np.array_equal(back.state.alpha.data, state.alpha.data)
        assert np.array_equal(back.accumulators, acc)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "c.ckpt"
        path.write_bytes(b"not-a-checkpoint\n")
        with pytest.raises(cio.SnapshotFormatError):
            cio.read_checkpoint(path)


class TestParseConfig:
    def test_minimal_valid(self):
        config = cf.parse_config(json.dumps(small_config()))
        assert config.validation.passed
        assert config.validation.regime == "case2"
        basis = config.build_basis()
        assert basis.n_modes == 8
        state = config.build_initial_state(basis)
        assert abs(state.gamma.mean() - 0.5) < 1e-13

    def test_content_hash_ignores_duration_and_cadence(self):
        a = cf.parse_config(json.dumps(small_config()))
        b = cf.parse_config(json.dumps(small_config(T=0.5, cadence=7)))
        c = cf.parse_config(json.dumps(small_config(dt=0.002)))
        assert a.content_hash() == b.content_hash()
        assert a.content_hash() != c.content_hash()

    def test_large_chemotaxis_rejected_with_named_assumption(self):
        spec = small_config()
        spec["params"]["chi"] = 10.0
        with pytest.raises(cf.ConfigError) as err:
            cf.parse_config(json.dumps(spec))
        assert any("smallness" in v for v in err.value.violations)

    def test_negative_permeability_rejected_with_path(self):
        spec = small_config()
        spec["params"]["K"] = -1.0
        with pytest.raises(cf.ConfigError) as err:
            cf.parse_config(json.dumps(spec))
        assert any(v.startswith("$.params") for v in err.value.violations)

    def test_zero_permeability_needs_limit_mode(self):
        spec = small_config()
        spec["params"]["K"] = 0.0
        with pytest.raises(cf.ConfigError) as err:
            cf.parse_config(json.dumps(spec))
        assert any("no-flow" in v for v in err.value.violations)
        spec["limit_mode"] = "no-flow"
        config = cf.parse_config(json.dumps(spec))
        assert config.build_stepper().no_flow

    def test_unknown_key_strict_vs_lenient(self):
        spec = small_config(extra_knob=1)
        with pytest.raises(cf.ConfigError) as err:
            cf.parse_config(json.dumps(spec))
        assert any("extra_knob" in v for v in err.value.violations)
        cf.parse_config(json.dumps(spec), strict=False)

    def test_missing_key_reported_by_path(self):
        spec = small_config()
        del spec["dt"]
        with pytest.raises(cf.ConfigError) as err:
            cf.parse_config(json.dumps(spec))
        assert any("dt" in v for v in err.value.violations)

    def test_invalid_json_rejected(self):
        with pytest.raises(cf.ConfigError):
            cf.parse_config("{not json")

    def test_initial_mode_outside_basis_rejected(self):
        spec = small_config()
        spec["initial"]["phi"]["mode"] = [20]
        with pytest.raises(cf.ConfigError) as err:
            cf.parse_config(json.dumps(spec))
        assert any("$.initial.phi.mode" in v for v in err.value.violations)

    def test_random_profile_is_seed_deterministic(self):
        spec = small_config()
        spec["initial"]["phi"] = {"kind": "random", "amplitude": 0.1,
                                  "cutoff": 4, "seed": 3}
        a = cf.parse_config(json.dumps(spec))
        b = cf.parse_config(json.dumps(spec))
        basis = a.build_basis()
        sa = a.build_initial_state(basis)
        sb = b.build_initial_state(basis)
        assert np.array_equal(sa.alpha.data, sb.alpha.data)


class TestCli:
    def write_config(self, tmp_path, spec=None):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(spec or small_config()))
        return path

    def test_validate_ok(self, tmp_path, capsys):
        path = self.write_config(tmp_path)
        assert cli.main(["validate", "--config", str(path)]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "regime:" in out

    def test_run_writes_outputs(self, tmp_path):
        path = self.write_config(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["run", "--config", str(path), "--out", str(out)])
        assert code == cli.EXIT_OK
        assert (out / "diagnostics.csv").exists()
        assert (out / "final.snap").exists()
        assert (out / "checkpoint.ckpt").exists()
        rows = cio.read_diagnostics_csv(out / "diagnostics.csv")
        assert len(rows) == 11  # initial plus 10 steps at cadence 1

    def test_run_t_zero(self, tmp_path):
        path = self.write_config(tmp_path, small_config(T=0.0))
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(path),
                         "--out", str(out)]) == cli.EXIT_OK
        assert len(cio.read_diagnostics_csv(out / "diagnostics.csv")) == 1

    def test_config_error_exit_code(self, tmp_path, capsys):
        spec = small_config()
        spec["params"]["chi"] = 10.0
        path = self.write_config(tmp_path, spec)
        assert cli.main(["validate", "--config", str(path)]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config_is_io_failure(self, tmp_path):
        assert cli.main(["validate", "--config",
                         str(tmp_path / "nope.json")]) == cli.EXIT_IO

    def test_resume_reproduces_full_run(self, tmp_path):
        full_cfg = self.write_config(tmp_path, small_config(T=0.01))
        half_cfg = tmp_path / "half.json"
        half_cfg.write_text(json.dumps(small_config(T=0.005)))

        full_out = tmp_path / "full"
        half_out = tmp_path / "half"
        rest_out = tmp_path / "rest"
        assert cli.main(["run", "--config", str(full_cfg),
                         "--out", str(full_out)]) == cli.EXIT_OK
        assert cli.main(["run", "--config", str(half_cfg),
                         "--out", str(half_out)]) == cli.EXIT_OK
        assert cli.main(["resume", "--config", str(full_cfg),
                         "--checkpoint", str(half_out / "checkpoint.ckpt"),
                         "--out", str(rest_out)]) == cli.EXIT_OK

        merged = (cio.read_diagnostics_csv(half_out / "diagnostics.csv")
                  + cio.read_diagnostics_csv(rest_out / "diagnostics.csv"))
        assert merged == cio.read_diagnostics_csv(full_out / "diagnostics.csv")
        assert (rest_out / "final.snap").read_bytes() \
            == (full_out / "final.snap").read_bytes()

    def test_resume_hash_mismatch_is_config_error(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg),
                         "--out", str(out)]) == cli.EXIT_OK
        other = tmp_path / "other.json"
        other.write_text(json.dumps(small_config(dt=0.002)))
        code = cli.main(["resume", "--config", str(other),
                         "--checkpoint", str(out / "checkpoint.ckpt"),
                         "--out", str(tmp_path / "r")])
        assert code == cli.EXIT_CONFIG

    def test_resume_missing_checkpoint_is_io_failure(self, tmp_path):
        cfg = self.write_config(tmp_path)
        code = cli.main(["resume", "--config", str(cfg),
                         "--checkpoint", str(tmp_path / "nope.ckpt"),
                         "--out", str(tmp_path / "r")])
        assert code == cli.EXIT_IO

    def test_sweep_chi_writes_table(self, tmp_path):
        cfg = self.write_config(tmp_path, small_config(T=0.005))
        out = tmp_path / "sweep"
        code = cli.main(["sweep-chi", "--config", str(cfg), "--out", str(out),
                         "--values", "0.4,0.2"])
        assert code == cli.EXIT_OK
        lines = (out / "sweep_chi.csv").read_text().strip().splitlines()
        assert lines[0].startswith("value,")
        assert len(lines) == 3

    def test_seed_override_changes_random_profile(self, tmp_path):
        # no per-profile seed here, so the run-level seed is what varies
        spec = small_config(T=0.0)
        spec["initial"]["phi"] = {"kind": "random", "amplitude": 0.1,
                                  "cutoff": 4}
        cfg = self.write_config(tmp_path, spec)
        outs = []
        for seed in ("10", "11"):
            out = tmp_path / f"o{seed}"
            assert cli.main(["run", "--config", str(cfg), "--out", str(out),
                             "--seed", seed]) == cli.EXIT_OK
            outs.append((out / "final.snap").read_bytes())
        assert outs[0] != outs[1]
