import re

import pytest

matplotlib = pytest.importorskip("matplotlib")

from plot_prior_posterior import load_samples, main as scatter_main, plot_prior_posterior
from plot_rmse_vs_alpha import main as alpha_main, plot_rmse_vs_alpha
from plot_rmse_vs_m import main as m_main, plot_rmse_vs_m
from results_table import ResultTable


def data_marker_counts(svg_path):
    """Per-line2d-group <use> counts; data lines carry one use per marker."""
    svg = open(svg_path).read()
    counts = []
    for chunk in re.split(r'<g id="', svg)[1:]:
        if chunk.startswith("line2d_"):
            body = chunk.split('<g id="')[0]
            counts.append(chunk.split('"')[0:1] and body.count("<use"))
    return counts


class TestResultTable:
    def test_load_excludes_error_rows(self, results_csv):
        table = ResultTable.load(results_csv)
        assert table.n_errors == 1
        assert all(row["rmse"] is not None for row in table.rows)
        assert len(table.rows) == 28

    def test_filter(self, results_csv):
        table = ResultTable.load(results_csv)
        only = table.filter("pipeline=esrf")
        assert {row["pipeline"] for row in only.rows} == {"esrf"}
        both = table.filter("pipeline=esrf|etpf_exact;M=20")
        assert len(both.rows) == 2

    def test_filter_rejects_unknown_column(self, results_csv):
        with pytest.raises(ValueError):
            ResultTable.load(results_csv).filter("nope=1")

    def test_column_contract_enforced(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            ResultTable.load(str(bad))


class TestRmseVsM:
    def test_reruns_are_byte_identical(self, results_csv, tmp_path):
        table = ResultTable.load(results_csv).filter("pipeline=esrf|etpf_exact")
        a = plot_rmse_vs_m(table, str(tmp_path / "a"))
        b = plot_rmse_vs_m(table, str(tmp_path / "b"))
        assert open(a["path"], "rb").read() == open(b["path"], "rb").read()

    def test_one_line_per_pipeline(self, results_csv, tmp_path):
        table = ResultTable.load(results_csv).filter("pipeline=esrf|etpf_exact")
        info = plot_rmse_vs_m(table, str(tmp_path))
        assert info["points_per_line"] == {"esrf": 3, "etpf_exact": 3}
        assert info["excluded"] == 1

    def test_single_m_rejected(self, results_csv, tmp_path):
        table = ResultTable.load(results_csv).filter("M=20;pipeline=esrf")
        with pytest.raises(ValueError):
            plot_rmse_vs_m(table, str(tmp_path))

    def test_cli_empty_filter_errors(self, results_csv, tmp_path, capsys):
        code = m_main(["--csv", results_csv, "--out", str(tmp_path),
                       "--filter", "pipeline=missing_pipeline"])
        assert code == 1
        assert "missing_pipeline" in capsys.readouterr().err


class TestRmseVsAlpha:
    def test_eleven_markers_per_m_line(self, results_csv, tmp_path):
        table = ResultTable.load(results_csv).filter("pipeline=hybrid:etpf2_exact")
        info = plot_rmse_vs_alpha(table, str(tmp_path))
        assert info["points_per_line"] == {20: 11, 30: 11}
        # structural check on the SVG: the two marker-rich line groups are
        # the data lines, with exactly 11 drawn markers each
        counts = sorted(data_marker_counts(info["path"]))
        assert counts[-2:] == [11, 11]
        assert all(c <= 3 for c in counts[:-2])

    def test_reruns_are_byte_identical(self, results_csv, tmp_path):
        table = ResultTable.load(results_csv).filter("pipeline=hybrid:etpf2_exact")
        a = plot_rmse_vs_alpha(table, str(tmp_path / "a"))
        b = plot_rmse_vs_alpha(table, str(tmp_path / "b"))
        assert open(a["path"], "rb").read() == open(b["path"], "rb").read()

    def test_missing_cells_break_lines(self, results_csv, tmp_path):
        table = ResultTable.load(results_csv).filter("pipeline=hybrid:etpf2_exact")
        # drop one alpha cell from the M=20 line
        table.rows = [row for row in table.rows
                      if not (row["M"] == 20 and row["alpha"] == 0.5)]
        info = plot_rmse_vs_alpha(table, str(tmp_path))
        assert info["points_per_line"] == {20: 10, 30: 11}

    def test_cli_roundtrip(self, results_csv, tmp_path, capsys):
        code = alpha_main(["--csv", results_csv, "--out", str(tmp_path),
                           "--filter", "pipeline=hybrid:etpf2_exact"])
        assert code == 0
        out = capsys.readouterr().out.strip()
        assert out.endswith("rmse_vs_alpha.svg")


class TestPriorPosterior:
    def test_counts_out_of_range_samples(self, samples_csv, tmp_path):
        prior, trans = load_samples(samples_csv)
        info = plot_prior_posterior(prior, trans, str(tmp_path))
        # fixture: (4.9, 12.1) exceeds dim 1 and (5.6, 10.4) exceeds dim 0
        assert info["n_outside"] == 2
        assert info["n_samples"] == 8

    def test_identity_transform_stays_inside(self, tmp_path):
        import numpy as np
        rng = np.random.default_rng(1)
        prior = rng.standard_normal((2, 40))
        info = plot_prior_posterior(prior, prior.copy(), str(tmp_path))
        assert info["n_outside"] == 0

    def test_collapsed_transform(self, tmp_path):
        import numpy as np
        rng = np.random.default_rng(2)
        prior = rng.standard_normal((2, 30))
        mean = prior.mean(axis=1, keepdims=True)
        info = plot_prior_posterior(prior, np.repeat(mean, 30, axis=1), str(tmp_path))
        assert info["n_outside"] == 0

    def test_reruns_are_byte_identical(self, samples_csv, tmp_path):
        prior, trans = load_samples(samples_csv)
        a = plot_prior_posterior(prior, trans, str(tmp_path / "a"))
        b = plot_prior_posterior(prior, trans, str(tmp_path / "b"))
        assert open(a["path"], "rb").read() == open(b["path"], "rb").read()

    def test_cli_reports_counter(self, samples_csv, tmp_path, capsys):
        code = scatter_main(["--csv", samples_csv, "--out", str(tmp_path)])
        assert code == 0
        assert "outside the prior range" in capsys.readouterr().out

    def test_dimension_mismatch(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("prior_0,transformed_0,transformed_1\n1,2,3\n")
        with pytest.raises(ValueError):
            load_samples(str(bad))
