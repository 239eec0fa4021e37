"""Config parsing and validation, the record cache, CLI exit codes, and
plot emission.  Pipeline runs here use deliberately tiny geometries; the
point is plumbing, determinism and error mapping, not statistics."""

import json
import os
import xml.etree.ElementTree as ET

import pytest

import lrplab.pipelines as pipelines
from lrplab.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_NUMERIC, EXIT_OK, main
from lrplab.config import ExperimentConfig
from lrplab.errors import ConfigurationError, InvariantViolation, NumericValidityError
from lrplab.plots import emit_plot_data
from lrplab.records import RecordStore, cache_root, canonical_json
from lrplab.pipelines import run_config


def tiny_config(out_dir, command="sample", **overrides):
    raw = {
        "command": command,
        "betas": [1.0],
        "base_seed": 11,
        "out_dir": str(out_dir),
        "sample": {"window": 64, "replicates": 3},
        "chainck": {"n": 64, "draws": 2},
        "delta": {"n_grid": [8, 16, 32], "replicates": 2},
    }
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)


def write_config(path, raw):
    with open(path, "w") as fh:
        json.dump(raw, fh)
    return str(path)


class TestConfig:
    def test_nested_round_trip(self):
        cfg = tiny_config("/tmp/x", command="delta")
        again = ExperimentConfig.from_dict(cfg.to_nested())
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_hash_ignores_key_order_and_tracks_content(self):
        a = ExperimentConfig.from_dict(
            {"command": "sample", "betas": [1.0], "base_seed": 3}
        )
        b = ExperimentConfig.from_dict(
            {"base_seed": 3, "betas": [1.0], "command": "sample"}
        )
        assert a.config_hash() == b.config_hash()
        c = ExperimentConfig.from_dict(
            {"command": "sample", "betas": [1.0], "base_seed": 4}
        )
        assert c.config_hash() != a.config_hash()

    def test_unknown_keys_are_named(self):
        with pytest.raises(ConfigurationError, match="bogus"):
            ExperimentConfig.from_dict({"command": "sample", "bogus": 1})
        with pytest.raises(ConfigurationError, match="delta.bogus"):
            ExperimentConfig.from_dict(
                {"command": "delta", "delta": {"bogus": 1}}
            )

    def test_validation_names_the_field(self):
        checks = [
            ({"command": "nope"}, "command"),
            ({"command": "sample", "betas": []}, "betas"),
            ({"command": "sample", "betas": [0.0]}, "betas"),
            ({"command": "delta", "delta": {"n_grid": [32, 16, 64]}},
             "delta.n_grid"),
            ({"command": "spectral", "spectral": {"time_grid": [4, 8, 15]}},
             "spectral.time_grid"),
            ({"command": "tails", "tails": {"lambda_grid": [0.5, 2]}},
             "tails.lambda_grid"),
            ({"command": "delta", "delta": {"replicates": 1}},
             "delta.replicates"),
            ({"command": "sample", "max_discard": 1.5}, "max_discard"),
        ]
        for raw, field in checks:
            with pytest.raises(ConfigurationError, match=field):
                ExperimentConfig.from_dict(raw)

    def test_top_level_replicates_flows_into_sections(self):
        cfg = ExperimentConfig.from_dict(
            {"command": "delta", "replicates": 7,
             "exit": {"replicates": 9}}
        )
        assert cfg.delta_replicates == 7
        assert cfg.tails_replicates == 7
        assert cfg.exit_replicates == 9  # explicit section wins

    def test_load_toml_and_json_agree(self, tmp_path):
        toml_path = tmp_path / "a.toml"
        toml_path.write_text(
            'command = "sample"\nbetas = [1.0]\nbase_seed = 5\n'
            "[sample]\nwindow = 64\nreplicates = 3\n"
        )
        json_path = write_config(tmp_path / "a.json", {
            "command": "sample", "betas": [1.0], "base_seed": 5,
            "sample": {"window": 64, "replicates": 3},
        })
        a = ExperimentConfig.load(toml_path)
        b = ExperimentConfig.load(json_path)
        assert a.config_hash() == b.config_hash()

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("command = [unclosed\n")
        with pytest.raises(ConfigurationError, match="cannot parse"):
            ExperimentConfig.load(bad)


class TestCanonicalJson:
    def test_sorted_and_numpy_free(self):
        import numpy as np

        text = canonical_json({"b": np.float64(2.5), "a": [np.int64(3)]})
        assert text == '{"a":[3],"b":2.5}'


class TestRecordCache:
    def test_run_then_hit(self, tmp_path):
        cfg = tiny_config(tmp_path)
        rdir = run_config(cfg)
        assert os.path.basename(rdir).startswith("sample-")
        stamp = RecordStore.load_record(rdir)["created_unix"]
        again = run_config(cfg)
        assert again == rdir
        assert RecordStore.load_record(rdir)["created_unix"] == stamp

    def test_force_reruns(self, tmp_path):
        cfg = tiny_config(tmp_path)
        rdir = run_config(cfg)
        stamp = RecordStore.load_record(rdir)["created_unix"]
        again = run_config(cfg, force=True)
        assert again == rdir
        assert RecordStore.load_record(rdir)["created_unix"] != stamp

    def test_incomplete_record_refuses_without_force(self, tmp_path):
        cfg = tiny_config(tmp_path)
        rdir = RecordStore(cache_root(cfg)).record_dir(cfg)
        os.makedirs(rdir)  # record.json missing: a crashed run
        with pytest.raises(ConfigurationError, match="incomplete"):
            run_config(cfg)
        assert run_config(cfg, force=True) == rdir
        assert os.path.exists(os.path.join(rdir, "record.json"))

    def test_tampered_config_refuses_without_force(self, tmp_path):
        cfg = tiny_config(tmp_path)
        rdir = run_config(cfg)
        path = os.path.join(rdir, "record.json")
        stored = json.load(open(path))
        stored["config"]["base_seed"] = 999
        json.dump(stored, open(path, "w"))
        with pytest.raises(ConfigurationError, match="different config"):
            run_config(cfg)
        assert run_config(cfg, force=True) == rdir

    def test_summaries_byte_identical_across_roots(self, tmp_path):
        cfg = tiny_config(tmp_path / "a")
        r1 = run_config(cfg)
        r2 = run_config(cfg, out_override=str(tmp_path / "b"))
        b1 = open(os.path.join(r1, "summary.json"), "rb").read()
        b2 = open(os.path.join(r2, "summary.json"), "rb").read()
        assert b1 == b2

    def test_thread_count_does_not_change_results(self, tmp_path):
        cfg = tiny_config(tmp_path / "a", command="delta")
        r1 = run_config(cfg, threads=1)
        r2 = run_config(cfg, threads=2, out_override=str(tmp_path / "b"))
        b1 = open(os.path.join(r1, "summary.json"), "rb").read()
        b2 = open(os.path.join(r2, "summary.json"), "rb").read()
        assert b1 == b2

    def test_cache_root_precedence(self, tmp_path, monkeypatch):
        cfg = tiny_config(tmp_path / "cfgdir")
        monkeypatch.setenv("LRP_CACHE_DIR", str(tmp_path / "envdir"))
        assert cache_root(cfg) == str(tmp_path / "envdir")
        assert cache_root(cfg, str(tmp_path / "over")) == str(tmp_path / "over")
        monkeypatch.delenv("LRP_CACHE_DIR")
        assert cache_root(cfg) == str(tmp_path / "cfgdir")


class TestCliExitCodes:
    def test_success_prints_record_dir(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.json", {
            "command": "sample", "betas": [1.0], "base_seed": 2,
            "out_dir": str(tmp_path),
            "sample": {"window": 64, "replicates": 3},
        })
        assert main(["sample", "--config", path]) == EXIT_OK
        out = capsys.readouterr().out.strip()
        assert os.path.exists(os.path.join(out, "summary.json"))

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["sample", "--config", str(tmp_path / "nope.toml")])
        assert code == EXIT_CONFIG
        assert "cannot read" in capsys.readouterr().err

    def test_command_subcommand_mismatch(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.json", {
            "command": "chainck", "betas": [1.0], "out_dir": str(tmp_path),
        })
        assert main(["sample", "--config", path]) == EXIT_CONFIG
        assert "declares command" in capsys.readouterr().err

    def test_bad_threads(self, tmp_path):
        path = write_config(tmp_path / "c.json", {
            "command": "sample", "betas": [1.0], "out_dir": str(tmp_path),
            "sample": {"window": 64, "replicates": 3},
        })
        assert main(["sample", "--config", path, "--threads", "0"]) == EXIT_CONFIG

    def test_unknown_subcommand_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate", "--config", "x"])
        assert exc.value.code == 2

    def test_numeric_failure_maps_to_3(self, tmp_path, capsys):
        # the window is far too small for the walk horizon, so every
        # annealed trace leaks and the discard guard trips
        path = write_config(tmp_path / "c.json", {
            "command": "spectral", "betas": [2.0], "out_dir": str(tmp_path),
            "spectral": {"time_grid": [16, 32, 64], "replicates": 3},
            "window": {"multiplier": 0.01},
        })
        assert main(["spectral", "--config", path]) == EXIT_NUMERIC
        assert "numeric validity" in capsys.readouterr().err

    def test_degenerate_delta_maps_to_3(self, tmp_path, capsys):
        # at vanishing beta the resistance growth exponent fits above 1,
        # where no scale functions exist; the run must fail cleanly
        path = write_config(tmp_path / "c.json", {
            "command": "exit", "betas": [1e-12], "out_dir": str(tmp_path),
            "delta": {"n_grid": [16, 32, 64], "replicates": 2},
            "exit": {"r_grid": [1.0, 2.0, 4.0], "replicates": 2},
        })
        assert main(["exit", "--config", path]) == EXIT_NUMERIC
        assert "outside" in capsys.readouterr().err

    def test_error_mapping(self, tmp_path, monkeypatch, capsys):
        def boom(cfg, pmap=None):
            raise InvariantViolation("synthetic")

        monkeypatch.setitem(pipelines.RUNNERS, "sample", boom)
        path = write_config(tmp_path / "c.json", {
            "command": "sample", "betas": [1.0], "out_dir": str(tmp_path),
            "sample": {"window": 64, "replicates": 3},
        })
        assert main(["sample", "--config", path]) == EXIT_INVARIANT
        assert "invariant violation" in capsys.readouterr().err


class TestPlots:
    def test_lambda_plot_csv_and_svg(self, tmp_path):
        cfg = tiny_config(tmp_path, command="delta")
        rdir = run_config(cfg)
        paths = emit_plot_data(rdir, "lambda", svg=True)
        csvs = [p for p in paths if p.endswith(".csv")]
        svgs = [p for p in paths if p.endswith(".svg")]
        assert len(csvs) == 1 and len(svgs) == 1
        lines = open(csvs[0]).read().splitlines()
        assert lines[0] == "n,lambda_hat,se"
        n, lam, se = lines[1].split(",")
        assert int(n) == 8 and float(lam) > 0 and float(se) >= 0
        root = ET.parse(svgs[0]).getroot()
        assert root.tag.endswith("svg")
        assert root.findall(".//{http://www.w3.org/2000/svg}circle")

    def test_spectral_plot_schema(self, tmp_path):
        cfg = tiny_config(
            tmp_path, command="spectral",
            spectral={"time_grid": [8, 16, 32], "replicates": 3,
                      "quenched_envs": 1},
        )
        rdir = run_config(cfg)
        paths = emit_plot_data(rdir, "spectral")
        lines = open(paths[0]).read().splitlines()
        assert lines[0] == "n,mean_p2n,se,fit_line"
        assert len(lines) == 4

    def test_plot_requires_matching_record(self, tmp_path):
        cfg = tiny_config(tmp_path)  # sample record: no lambda.csv
        rdir = run_config(cfg)
        with pytest.raises(ConfigurationError, match="lambda.csv"):
            emit_plot_data(rdir, "lambda")

    def test_unknown_plot_kind(self, tmp_path, capsys):
        assert main(["plot", "--record", str(tmp_path), "--which", "sombrero"]
                    ) == EXIT_CONFIG
        assert "unknown plot kind" in capsys.readouterr().err

    def test_plot_via_cli_prints_paths(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path, command="delta")
        rdir = run_config(cfg)
        assert main(["plot", "--record", rdir, "--which", "lambda"]) == EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        assert out and all(os.path.exists(p) for p in out)
