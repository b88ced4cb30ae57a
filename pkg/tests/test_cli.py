import csv
import json
import os

import pytest

from muoppo import experiment as ex
from muoppo.cli import main
from muoppo.data import gaussian_pool, write_csv_pool


def small_config(tmp_path, **over):
    cfg = {
        "dataset": {"train_per_class": 1500, "test_per_class": 500},
        "m": 4, "bag_size": 300, "gamma": 2, "repeats": 2, "desk": True,
        "selector": "loss",
    }
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_round_trip():
    cfg = ex.ExperimentConfig(m=6, pair=[5, 1], selector="loss", trainer="mcm", seed=3)
    back = ex.ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.to_json() == cfg.to_json()


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ex.ExperimentConfig.from_dict({"bogus": 1})


def test_config_defaults():
    cfg = ex.ExperimentConfig()
    assert cfg.gamma == 4 and cfg.warmup_epochs == 10 and cfg.train_epochs == 300
    assert cfg.bag_spec(0).pair == (9, 0)
    assert ex.ExperimentConfig(desk=True).epochs == 50


class TestSynth:
    def test_manifest_and_determinism(self, tmp_path):
        conf = small_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", conf, "--out", str(a)]) == 0
        assert main(["synth", "--config", conf, "--out", str(b)]) == 0
        man = json.loads((a / "manifest.json").read_text())
        assert man["files"] == [f"bag_{j:02d}.csv" for j in range(4)]
        assert man["pair"] == [3, 0]
        for name in man["files"]:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_flag_overrides_config(self, tmp_path):
        conf = small_config(tmp_path)
        out = tmp_path / "o"
        assert main(["synth", "--config", conf, "--out", str(out), "--m", "3", "--pair", "2,0"]) == 0
        assert json.loads((out / "manifest.json").read_text())["m"] == 3

    def test_env_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MUOPPO_OUTPUT", str(tmp_path / "envroot"))
        assert main(["synth", "--config", small_config(tmp_path)]) == 0
        assert (tmp_path / "envroot" / "manifest.json").exists()


class TestEstimate:
    def test_report_and_rerun(self, tmp_path):
        conf = small_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["estimate", "--config", conf, "--out", str(a)]) == 0
        assert main(["estimate", "--config", conf, "--out", str(b)]) == 0
        assert (a / "estimation.csv").read_bytes() == (b / "estimation.csv").read_bytes()
        rows = read_rows(a / "estimation.csv")
        assert len(rows) == 2 * 4
        for r in rows:
            assert float(r["abs_error"]) == abs(float(r["estimated_prior"]) - float(r["true_prior"]))
        echo = ex.ExperimentConfig.from_json((a / "config.json").read_text())
        assert echo.gamma == 2
        summary = read_rows(a / "summary.csv")[0]
        maes = [sum(float(r["abs_error"]) for r in rows if r["repeat"] == k) / 4 for k in "01"]
        assert float(summary["mae_x100_mean"]) == pytest.approx(100 * sum(maes) / 2, rel=1e-12)

    def test_failed_repeat_exit_code(self, tmp_path):
        pool = tmp_path / "pool.csv"
        write_csv_pool(gaussian_pool(20, 2, seed=0), pool)
        conf = small_config(tmp_path, dataset={"source": "csv", "path": str(pool), "test_path": str(pool)})
        assert main(["estimate", "--config", conf, "--out", str(tmp_path / "o")]) == 1
        rows = read_rows(tmp_path / "o" / "estimation.csv")
        assert all(r["status"].startswith("error: CapacityError") for r in rows)


class TestTrainEvalAblate:
    def test_train_then_eval(self, tmp_path):
        conf = small_config(tmp_path, repeats=1)
        out = tmp_path / "t"
        assert main(["train", "--config", conf, "--out", str(out)]) == 0
        acc = read_rows(out / "accuracy.csv")
        assert len(acc) == 1 and 0.0 <= float(acc[0]["accuracy"]) <= 1.0
        ckpt = out / "scorer_seed0.plsc"
        assert ckpt.exists()
        assert main(["eval", "--config", conf, "--out", str(out), str(ckpt)]) == 0
        ev = read_rows(out / "eval.csv")
        assert float(ev[0]["accuracy"]) == float(acc[0]["accuracy"])

    def test_ablate_none_equals_train(self, tmp_path):
        conf = small_config(tmp_path, repeats=1)
        assert main(["train", "--config", conf, "--out", str(tmp_path / "t")]) == 0
        assert main(["ablate", "--drop", "none", "--config", conf, "--out", str(tmp_path / "n")]) == 0
        t = read_rows(tmp_path / "t" / "accuracy.csv")[0]
        n = read_rows(tmp_path / "n" / "ablation.csv")[0]
        assert t["accuracy"] == n["accuracy"] and t["mae"] == n["mae"]

    @pytest.mark.parametrize("drop", ["prior-estimation", "confident-collection", "warmup"])
    def test_ablations_run(self, tmp_path, drop):
        conf = small_config(tmp_path, repeats=1)
        assert main(["ablate", "--drop", drop, "--config", conf, "--out", str(tmp_path / drop)]) == 0
        row = read_rows(tmp_path / drop / "ablation.csv")[0]
        assert row["variant"] == f"drop={drop}" and row["status"] == "ok"

    def test_report_collects(self, tmp_path):
        conf = small_config(tmp_path, repeats=1)
        assert main(["estimate", "--config", conf, "--out", str(tmp_path / "runs" / "e")]) == 0
        assert main(["report", str(tmp_path / "runs")]) == 0
        rows = read_rows(tmp_path / "runs" / "report.csv")
        assert rows[0]["run"] == "e"


def test_estimated_test_prior_mode(tmp_path):
    conf = small_config(tmp_path, repeats=1)
    out = tmp_path / "p"
    assert main(["train", "--config", conf, "--out", str(out), "--estimate-pi-d"]) == 0
    row = read_rows(out / "accuracy.csv")[0]
    assert row["pi_D_mode"] == "estimate"
    assert float(row["pi_D"]) == pytest.approx(0.5, abs=0.1)
    assert os.path.exists(out / "run.json")
