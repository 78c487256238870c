import csv
import json

import numpy as np
import pytest

from fracnls.cli import main
from fracnls.config import parse_config
from fracnls.experiments import (
    ExitTimeRecord,
    exit_times_monotone,
    fit_exit_exponent,
    normalform_reports,
    run_resonance_report,
)
from fracnls.normalform import Poly, torus_modes


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestValidation:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", {"s": 0.75, "cutoff": 3, "colour": "red"})
        assert main(["spectrum", cfg]) == 1
        assert "colour" in capsys.readouterr().err

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            parse_config({"K": 3, "N": 7, "s_grid": []}, "scan")

    def test_wrong_experiment(self, tmp_path):
        cfg = write(tmp_path, "c.json", {"experiment": "scan", "s": 0.75, "cutoff": 3})
        assert main(["spectrum", cfg]) == 1

    def test_eps_must_decrease(self):
        with pytest.raises(ValueError):
            parse_config({"s": 0.75, "N": 4, "eps": [0.1, 0.2], "T_max": 1.0}, "exit_time")

    def test_missing_file(self, tmp_path):
        assert main(["spectrum", str(tmp_path / "nope.json")]) == 1

    def test_uncertified_exit_time_study(self, tmp_path):
        cfg = write(tmp_path, "c.json", {"s": 1.0, "N": 4, "eps": [0.1], "T_max": 1.0,
                                         "K": 3, "scan_N": 7, "output_dir": str(tmp_path / "o")})
        assert main(["exit-time", cfg]) == 1


def test_spectrum(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "c.json", {"domain": "sphere", "d": 2, "s": 1.0, "cutoff": 3, "output_dir": str(out)})
    assert main(["spectrum", cfg]) == 0
    rows = read_csv(out / "spectrum.csv")
    assert list(rows[0]) == ["j", "lambda", "omega", "multiplicity", "d_omega_ds"]
    assert float(rows[2]["omega"]) == 6.0 and int(rows[3]["multiplicity"]) == 7
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["cutoff"] == 3 and "version" in manifest


class TestScan:
    def test_resonance_interval_and_determinism(self, tmp_path):
        doc = {"domain": "torus", "d": 1, "K": 3, "N": 7, "s_range": [0.9, 1.1], "step": 0.05,
               "lemma_K": 3, "output_dir": str(tmp_path / "a")}
        assert main(["scan", write(tmp_path, "a.json", doc)]) == 0
        doc["output_dir"] = str(tmp_path / "b")
        assert main(["scan", write(tmp_path, "b.json", doc)]) == 0
        for name in ("scan.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

        rows = read_csv(tmp_path / "a" / "scan.csv")
        at_one = next(r for r in rows if float(r["s"]) == 1.0)
        assert float(at_one["min_divisor"]) == 0.0
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        hits = [iv for iv in summary["bad_intervals"] if iv["L"] in ("1:1,5:-2,7:1", "1:-1,5:2,7:-1")]
        assert len(hits) == 1 and hits[0]["s_lo"] < 1.0 < hits[0]["s_hi"]
        assert "1:1,5:-2,7:1" in summary["minimizers"]["1.0"]
        assert summary["total_measure"] > 0
        assert all(entry["min_scaled_proof_exponent"] > 0 for entry in summary["lemma_bound_report"])

    def test_runner_api(self, tmp_path):
        cfg = parse_config({"domain": "sphere", "d": 2, "K": 1, "N": 1, "s_grid": [0.75],
                            "output_dir": str(tmp_path)}, "scan")
        res = run_resonance_report(cfg)
        assert res.exit_code == 0
        assert res.summary["bad_intervals"] == [] and res.summary["total_measure"] == 0.0


class TestSimulate:
    def base(self, tmp_path, **kw):
        doc = {"s": 0.75, "N": 6, "eps": 0.1, "T_end": 2.0, "dt": 0.01, "observer_stride": 20,
               "seed": 4, "output_dir": str(tmp_path / "o"), **kw}
        return write(tmp_path, "c.json", doc)

    def test_linear_actions_constant(self, tmp_path):
        assert main(["simulate", self.base(tmp_path, taylor=[0.0])]) == 0
        rows = read_csv(tmp_path / "o" / "trajectory.csv")
        acts = np.array([[float(r[f"I_{j}"]) for j in range(7)] for r in rows])
        assert np.max(np.abs(acts - acts[0])) <= 1e-14
        assert list(rows[0])[-1] == "exceeded_2eps"

    def test_reproducible(self, tmp_path):
        cfg = self.base(tmp_path, compare_s=1.0)
        assert main(["simulate", cfg]) == 0
        first = (tmp_path / "o" / "trajectory.csv").read_bytes()
        state = (tmp_path / "o" / "final_state.json").read_text()
        assert main(["simulate", cfg]) == 0
        assert (tmp_path / "o" / "trajectory.csv").read_bytes() == first
        assert (tmp_path / "o" / "final_state.json").read_text() == state
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["seed"] == 4 and manifest["config"]["seed"] == 4
        assert (tmp_path / "o" / "trajectory_s1.csv").exists()
        snap = json.loads(state)
        assert snap["N"] == 6 and len(snap["xi"]) == 13 and snap["time"] == pytest.approx(2.0)

    def test_initial_state_file(self, tmp_path):
        src = tmp_path / "init.json"
        src.write_text(json.dumps({"N": 6, "time": 0.0, "xi": [[0.0, 0.0]] * 6 + [[0.1, 0.0]] + [[0.0, 0.0]] * 6}))
        assert main(["simulate", self.base(tmp_path, initial_state=str(src))]) == 0
        rows = read_csv(tmp_path / "o" / "trajectory.csv")
        assert float(rows[0]["I_0"]) == pytest.approx(0.01)

    def test_abort_reported(self, tmp_path):
        cfg = self.base(tmp_path, eps=2.0, r=1.0, blowup_factor=1.0000001, dt=0.1, T_end=20.0, observer_stride=1)
        assert main(["simulate", cfg]) == 2
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["abort_reasons"]["trajectory.csv"]


class TestNormalForm:
    def test_cubic_all_pass(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["normalform", write(tmp_path, "c.json", {"s": 1.0, "N": 1, "K": 2, "output_dir": str(out)})]) == 0
        reports = json.loads((out / "reports.json").read_text())
        assert reports["all_passed"]
        assert [c["level"] for c in reports["action_commutation"]] == [0, 1]
        Z = json.loads((out / "Z.json").read_text())
        assert Z["terms"] and set(Z["terms"][0]) == {"J", "L", "re", "im"}
        assert '"Z_terms"' in capsys.readouterr().out

    def test_zero_nonlinearity(self, tmp_path):
        out = tmp_path / "o"
        cfg = write(tmp_path, "c.json", {"s": 0.75, "N": 2, "taylor": [0.0], "output_dir": str(out)})
        assert main(["normalform", cfg]) == 0
        for name in ("Hp.json", "Z.json", "R.json"):
            assert json.loads((out / name).read_text())["terms"] == []

    def test_corrupted_Z_reported(self):
        Z = Poly.from_monomials(torus_modes(2), [({1: 1}, {2: 1}, 1.0)])
        rep = normalform_reports(Z, 2)
        assert not rep["all_passed"]
        assert rep["level_balance"]["violations"][0]["J"] == "1:1"
        assert rep["level_balance"]["violations"][0]["L"] == "2:1"
        assert rep["gauge"]["passed"]

    def test_term_cap(self, tmp_path):
        cfg = write(tmp_path, "c.json", {"s": 0.75, "N": 2, "term_cap": 5, "output_dir": str(tmp_path / "o")})
        assert main(["normalform", cfg]) == 2


class TestExitTime:
    def test_linear_flow_is_censored(self, tmp_path):
        out = tmp_path / "o"
        doc = {"s": 0.75, "N": 6, "eps": [0.2, 0.1, 0.05], "T_max": 20.0, "taylor": [0.0],
               "dt": 0.05, "observer_stride": 10, "output_dir": str(out)}
        assert main(["exit-time", write(tmp_path, "c.json", doc)]) == 3
        rows = read_csv(out / "exit_times.csv")
        assert len(rows) == 9
        assert all(r["T_exit"] == "censored" and r["censored"] == "1" for r in rows)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["fit"]["status"] == "all_censored" and summary["fit"]["slope"] is None
        assert all(summary["monotone_per_seed"].values())
        assert summary["resolution"] == pytest.approx(0.5)

    def test_fit_skips_censored_rows(self):
        recs = [
            ExitTimeRecord(0.4, 1, 10.0, 4.0, 0.75),
            ExitTimeRecord(0.2, 1, 40.0, 4.0, 0.75),
            ExitTimeRecord(0.1, 1, 160.0, 4.0, 0.75),
            ExitTimeRecord(0.05, 1, None, 4.0, 0.75),
        ]
        fit = fit_exit_exponent(recs)
        assert fit["n_points"] == 3 and fit["slope"] == pytest.approx(2.0)
        assert exit_times_monotone(recs) == {1: True}

    def test_monotonicity_violation(self):
        recs = [ExitTimeRecord(0.2, 7, None, 4.0, 0.75), ExitTimeRecord(0.1, 7, 5.0, 4.0, 0.75)]
        assert exit_times_monotone(recs) == {7: False}
