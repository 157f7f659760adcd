import csv

import yaml

from letf.cli import CSV_COLUMNS, main

BASE = {
    "model": {"name": "lorenz63"},
    "pipeline": {"id": "esrf"},
    "ensemble": {"size": 5},
    "run": {"n_cycles": 12, "burn_in": 2},
}


def write_config(tmp_path, cfg, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestValidate:
    def test_defaults_echoed(self, tmp_path, capsys):
        code = main(["validate", write_config(tmp_path, BASE)])
        out = capsys.readouterr().out
        assert code == 0
        effective = yaml.safe_load(out)
        assert effective["model"]["dt_internal"] == 0.01
        assert effective["run"]["burn_in"] == 2
        assert effective["seeds"]["truth"] == 101

    def test_missing_model_names_key(self, tmp_path, capsys):
        cfg = {k: v for k, v in BASE.items() if k != "model"}
        code = main(["validate", write_config(tmp_path, cfg)])
        err = capsys.readouterr().err
        assert code == 2
        assert "model.name" in err

    def test_alpha_out_of_range_rejected(self, tmp_path, capsys):
        cfg = dict(BASE, pipeline={"id": "hybrid", "alpha": 1.3})
        code = main(["validate", write_config(tmp_path, cfg)])
        assert code == 2
        assert "alpha" in capsys.readouterr().err

    def test_nonpositive_lambda_rejected(self, tmp_path, capsys):
        cfg = dict(BASE, pipeline={"id": "etpf_sinkhorn", "lambda": 0.0})
        code = main(["validate", write_config(tmp_path, cfg)])
        assert code == 2
        assert "lambda" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = dict(BASE, extra={"oops": 1})
        code = main(["validate", write_config(tmp_path, cfg)])
        assert code == 2
        assert "extra" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert main(["validate", "/nonexistent/config.yaml"]) == 2


class TestRun:
    def test_single_run_writes_one_row(self, tmp_path):
        out = tmp_path / "results.csv"
        code = main(["run", write_config(tmp_path, BASE), "--out", str(out)])
        assert code == 0
        rows = read_rows(out)
        assert len(rows) == 1
        assert list(rows[0].keys()) == CSV_COLUMNS
        assert rows[0]["pipeline"] == "esrf"
        assert rows[0]["M"] == "5"
        assert float(rows[0]["rmse"]) >= 0.0
        assert rows[0]["error"] == ""

    def test_rerun_is_identical_except_wall_time(self, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        cfg = write_config(tmp_path, BASE)
        assert main(["run", cfg, "--out", str(out1)]) == 0
        assert main(["run", cfg, "--out", str(out2)]) == 0
        row1, row2 = read_rows(out1)[0], read_rows(out2)[0]
        for col in CSV_COLUMNS:
            if col != "wall_time_s":
                assert row1[col] == row2[col], col

    def test_append_safe(self, tmp_path):
        out = tmp_path / "results.csv"
        cfg = write_config(tmp_path, BASE)
        main(["run", cfg, "--out", str(out)])
        main(["run", cfg, "--out", str(out)])
        rows = read_rows(out)
        assert len(rows) == 2
        assert rows[0]["config_hash"] == rows[1]["config_hash"]

    def test_sweep_rows_and_ordering(self, tmp_path):
        cfg = dict(BASE)
        cfg["sweep"] = {"axes": {"ensemble.size": [3, 4, 5, 6, 7],
                                 "pipeline.id": ["esrf", "netf_symmetric"]}}
        out = tmp_path / "sweep.csv"
        code = main(["run", write_config(tmp_path, cfg), "--out", str(out)])
        assert code == 0
        rows = read_rows(out)
        assert len(rows) == 10
        # lexicographic by axis name: ensemble.size outer, pipeline.id inner
        ms = [int(r["M"]) for r in rows]
        assert ms == [3, 3, 4, 4, 5, 5, 6, 6, 7, 7]
        pipes = [r["pipeline"] for r in rows[:2]]
        assert pipes == ["esrf", "netf_symmetric"]

    def test_sweep_cap(self, tmp_path, capsys):
        cfg = dict(BASE)
        cfg["sweep"] = {"axes": {"ensemble.size": list(range(3, 103))},
                        "cap": 10}
        code = main(["run", write_config(tmp_path, cfg), "--out",
                     str(tmp_path / "x.csv")])
        assert code == 2
        assert "cap" in capsys.readouterr().err

    def test_seed_offset_changes_seeds(self, tmp_path):
        out = tmp_path / "r.csv"
        cfg = write_config(tmp_path, BASE)
        main(["run", cfg, "--out", str(out), "--seed-offset", "7"])
        row = read_rows(out)[0]
        assert row["seed_truth"] == "108"

    def test_failed_cell_recorded_and_nonzero_exit(self, tmp_path, capsys):
        cfg = {
            "model": {"name": "lorenz96", "params": {"p": 5, "f": 1e9}},
            "pipeline": {"id": "esrf"},
            "ensemble": {"size": 4},
            "run": {"n_cycles": 5, "burn_in": 1},
            "observations": {"kind": "every_second", "r_value": 8.0},
        }
        out = tmp_path / "fail.csv"
        code = main(["run", write_config(tmp_path, cfg), "--out", str(out)])
        assert code == 1
        rows = read_rows(out)
        assert len(rows) == 1
        assert rows[0]["error"] != ""
        assert "failed_cells" in capsys.readouterr().err

    def test_parallel_workers_match_serial(self, tmp_path):
        cfg = dict(BASE)
        cfg["sweep"] = {"axes": {"ensemble.size": [3, 4, 5, 6]}}
        path = write_config(tmp_path, cfg)
        out_serial = tmp_path / "serial.csv"
        out_par = tmp_path / "par.csv"
        main(["run", path, "--out", str(out_serial)])
        main(["run", path, "--out", str(out_par), "--workers", "2"])
        rows_s, rows_p = read_rows(out_serial), read_rows(out_par)
        for a, b in zip(rows_s, rows_p):
            for col in CSV_COLUMNS:
                if col != "wall_time_s":
                    assert a[col] == b[col]

    def test_repetitions_offset_seeds(self, tmp_path):
        cfg = dict(BASE)
        cfg["sweep"] = {"axes": {"ensemble.size": [4]}, "repetitions": 3}
        out = tmp_path / "rep.csv"
        main(["run", write_config(tmp_path, cfg), "--out", str(out)])
        rows = read_rows(out)
        assert [r["seed_truth"] for r in rows] == ["101", "102", "103"]
