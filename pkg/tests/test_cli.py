import csv
import json
import time

import pytest

from molsearch import config as config_mod
from molsearch.chem import canonical_form, parse_smiles, read_smiles_file
from molsearch.cli import main
from molsearch.config import ConfigError, data_path, load, parse_override, read_reward_file
from molsearch.policy import SequencePolicy
from molsearch.reward import SampleProfile, dump_profiles

CORPUS = data_path("corpus.smi")


def lines(path):
    return read_smiles_file(path)


class TestFitPrior:
    def test_bundled_corpus(self, tmp_path, capsys):
        out = tmp_path / "p.json"
        assert main(["fit-prior", str(CORPUS), "--out", str(out)]) == 0
        assert "2000 sequences" in capsys.readouterr().out
        assert SequencePolicy.load(out).order == 6

    def test_invalid_lines_counted(self, tmp_path, capsys):
        src = lines(CORPUS)[:180] + ["C1CC", "C(", "CC=", "Xx"] * 5
        f = tmp_path / "c.smi"
        f.write_text("\n".join(src) + "\n")
        assert main(["fit-prior", str(f), "--out", str(tmp_path / "p.json")]) == 0
        assert "180 sequences used, 20 invalid lines skipped" in capsys.readouterr().out

    def test_too_few_lines(self, tmp_path, capsys):
        f = tmp_path / "c.smi"
        f.write_text("\n".join(lines(CORPUS)[:50]) + "\n")
        assert main(["fit-prior", str(f), "--out", str(tmp_path / "p.json")]) == 1
        assert "too few valid lines" in capsys.readouterr().err
        assert not (tmp_path / "p.json").exists()

    def test_missing_file(self, tmp_path):
        assert main(["fit-prior", str(tmp_path / "nope.smi"), "--out", str(tmp_path / "p.json")]) == 1


class TestCalibrate:
    def test_fixture_band_and_round_trip(self, tmp_path, capsys):
        out = tmp_path / "reward.toml"
        assert main(["calibrate", "--out", str(out)]) == 0
        cfg, diag = read_reward_file(out)
        assert 0.01 <= diag["wr"] <= 0.05
        assert cfg.theta_t == 1.0
        again, diag2 = read_reward_file(out)
        assert again == cfg and diag2 == diag

    def test_flat_oracle_fails(self, tmp_path, capsys):
        zeros = (0.0,) * 8
        dump_profiles([SampleProfile(f"z{i}", zeros) for i in range(8)], tmp_path / "panel.json")
        dump_profiles([SampleProfile("flat", zeros)], tmp_path / "targets.json")
        rc = main(["calibrate", "--panel", str(tmp_path / "panel.json"), "--target", "flat",
                   "--set", f"paths.targets={json.dumps(str(tmp_path / 'targets.json'))}",
                   "--set", "reward.calibration_samples=200", "--out", str(tmp_path / "r.toml")])
        assert rc == 1
        assert "winning-rate band" in capsys.readouterr().err
        assert not (tmp_path / "r.toml").exists()


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    t0 = time.perf_counter()
    assert main(["run", "--budget", "200", "--out", str(root / "a"), "-q"]) == 0
    elapsed = time.perf_counter() - t0
    assert main(["run", "--budget", "200", "--out", str(root / "b"), "-q"]) == 0
    return root, elapsed


class TestRun:
    def test_smoke_fast(self, smoke):
        assert smoke[1] < 10.0

    def test_artifacts(self, smoke):
        a = smoke[0] / "a"
        assert {p.name for p in a.iterdir()} == {"results.jsonl", "metrics.csv", "summary.json", "tree.json",
                                                 "config.toml"}
        with open(a / "metrics.csv") as fh:
            assert next(csv.reader(fh)) == ["iteration", "n_valid", "n_win", "wr", "rr", "best_reward", "queue_size"]

    def test_byte_identical(self, smoke):
        root = smoke[0]
        assert (root / "a" / "results.jsonl").read_bytes() == (root / "b" / "results.jsonl").read_bytes()

    def test_echoed_config_reruns(self, smoke, tmp_path):
        a = smoke[0] / "a"
        assert main(["run", "--config", str(a / "config.toml"), "--out", str(tmp_path / "c"), "-q"]) == 0
        assert (tmp_path / "c" / "results.jsonl").read_bytes() == (a / "results.jsonl").read_bytes()

    def test_summary_line(self, tmp_path, capsys):
        assert main(["run", "--budget", "50", "--ablation", "no-ga,no-self-train", "--out", str(tmp_path), "-q",
                     "--set", "reward.calibrate=false", "--set", "reward.theta_z=-1.5"]) == 0
        out = capsys.readouterr().out
        assert "top-1 reward" in out and "total valid samplings" in out
        echo = load(tmp_path / "config.toml")
        assert echo["run"]["ablation"] == ["no-ga", "no-self-train"]
        assert not any(r["source"] == "ga" for r in map(json.loads, open(tmp_path / "results.jsonl")))

    def test_bad_overrides(self, capsys):
        assert main(["run", "--set", "run.bogus=1"]) == 2
        assert main(["run", "--set", "nosection.x=1"]) == 2
        assert main(["run", "--set", "run.budget=\"many\""]) == 2
        assert main(["run", "--ablation", "no-ga,no-mcts"]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--budget", "lots"])
        assert exc.value.code == 2


class TestReport:
    def test_identical_rows(self, smoke, tmp_path):
        root = smoke[0]
        out = tmp_path / "table.csv"
        assert main(["report", str(root / "a"), str(root / "b"), "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 2
        a, b = ({k: v for k, v in r.items() if k != "run"} for r in rows)
        assert a == b
        assert rows[0]["verification_panel"].startswith("verification:")

    def test_corpus_only_run_has_zero_novelty(self, tmp_path):
        run_dir = tmp_path / "fake"
        run_dir.mkdir()
        rows = []
        for s in lines(CORPUS)[:12]:
            rows.append({"canonical": canonical_form(parse_smiles(s)), "raw": s, "reward": 1.0, "y_t": 0.0,
                         "y_z": 0.0, "y_z_verify": 0.1, "source": "prior", "iteration": 1})
        (run_dir / "results.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
        (run_dir / "summary.json").write_text(json.dumps(
            {"total_valid": 24, "distinct_valid": 12, "verification_panel": "verification:abc"}))
        out = tmp_path / "t.csv"
        assert main(["report", str(run_dir), "--out", str(out)]) == 0
        row = next(csv.DictReader(open(out)))
        assert float(row["novelty"]) == 0.0
        assert float(row["uniqueness"]) == 0.5
        assert float(row["mean_y_z_verify"]) == pytest.approx(0.1)

    def test_training_panel_rejected(self, smoke, tmp_path):
        src = smoke[0] / "a"
        dst = tmp_path / "x"
        dst.mkdir()
        (dst / "results.jsonl").write_bytes((src / "results.jsonl").read_bytes())
        summary = json.loads((src / "summary.json").read_text())
        summary["verification_panel"] = "training:0000000000"
        (dst / "summary.json").write_text(json.dumps(summary))
        assert main(["report", str(dst)]) == 1


class TestValidate:
    def test_all_valid(self, tmp_path, capsys):
        f = tmp_path / "v.smi"
        f.write_text("CCO\nc1ccccc1\nCC(=O)O\n")
        assert main(["validate", str(f)]) == 0
        assert capsys.readouterr().out.count("VALID") == 3

    def test_ring_unclosed(self, tmp_path, capsys):
        f = tmp_path / "v.smi"
        f.write_text("C1CC\n")
        assert main(["validate", str(f), "-q"]) == 1
        assert capsys.readouterr().out.strip() == "ring-unclosed @3"

    def test_empty(self, tmp_path, capsys):
        f = tmp_path / "v.smi"
        f.write_text("")
        assert main(["validate", str(f)]) == 0
        assert capsys.readouterr().out == ""


class TestConfig:
    def test_defaults_resolve_to_fixtures(self):
        cfg = load()
        assert cfg["paths"]["corpus"] == str(CORPUS)
        assert config_mod.run_config(cfg).budget == 10_000

    def test_relative_paths(self, tmp_path):
        (tmp_path / "c.toml").write_text('[paths]\ncorpus = "data/x.smi"\n')
        assert load(tmp_path / "c.toml")["paths"]["corpus"] == str(tmp_path / "data" / "x.smi")

    def test_override_parsing(self):
        assert parse_override("run.budget=5") == {"run": {"budget": 5}}
        assert parse_override("target.id=target001") == {"target": {"id": "target001"}}
        assert parse_override("run.ablation=no-ga,no-self-train")["run"]["ablation"] == "no-ga,no-self-train"
        with pytest.raises(ConfigError):
            parse_override("budget=5")

    def test_type_checks(self):
        with pytest.raises(ConfigError):
            load(overrides=["mcts.c=true"])
        with pytest.raises(ConfigError):
            load(overrides=["ga.population=3"])
        assert load(overrides=["mcts.c=2"])["mcts"]["c"] == 2.0
        assert load(overrides=["run.ablation=no-ga"])["run"]["ablation"] == ["no-ga"]

    def test_echo_round_trip(self, tmp_path):
        cfg = load(overrides=["run.seed=7", "mcts.mix=0.5"])
        (tmp_path / "e.toml").write_text(config_mod.dumps(cfg))
        assert load(tmp_path / "e.toml") == cfg
