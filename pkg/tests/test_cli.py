import json

import numpy as np
import pytest

from sdstab.cli import main, reverify_report

FX = "tests/fixtures"


def run(argv):
    return main(argv)


class TestBoundCommand:
    def test_two_v_reported(self, capsys, tmp_path):
        out = tmp_path / "r.json"
        code = run(["bound", "--two-v", "--alpha", "4.3957", "--alpha-b", "241.9335",
                    "--gamma1", "1.2491", "--gamma2", "60.5024", "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        tau = float([l for l in text.splitlines() if l.startswith("tau_max")][0].split("=")[1])
        assert tau == pytest.approx(0.0116, abs=1e-4)
        rep = json.loads(out.read_text())
        assert rep["results"]["tau_max"] == pytest.approx(tau, rel=1e-9)

    def test_generic_no_coupling(self, capsys):
        code = run(["bound", "--generic", "--alpha1", "1", "--alpha2", "0",
                    "--alphat2", "2", "--q", "0.3678794"])
        assert code == 0
        text = capsys.readouterr().out
        tau = float(text.splitlines()[0].split("=")[1])
        assert tau == pytest.approx(0.5, abs=1e-6)

    def test_single_v(self, capsys):
        code = run(["bound", "--single-v", "--alpha", "1", "--alpha-b", "1", "--alpha-f", "1"])
        assert code == 0
        tau = float(capsys.readouterr().out.splitlines()[0].split("=")[1])
        assert tau == pytest.approx(0.0772, abs=1e-4)

    def test_constants_file(self, capsys, tmp_path):
        doc = tmp_path / "c.json"
        doc.write_text(json.dumps({"alpha": 1.0, "alpha_b": 1.0, "alpha_f": 1.0}))
        assert run(["bound", "--single-v", "--constants", str(doc)]) == 0

    def test_missing_constant_exit_3(self, capsys):
        assert run(["bound", "--two-v", "--alpha", "1.0"]) == 3

    def test_infeasible_exit_2(self, capsys):
        code = run(["bound", "--generic", "--alpha1", "1", "--alpha2", "1",
                    "--alphat1", "1", "--alphat2", "1", "--beta2", "1.0"])
        assert code == 2


class TestVerifyCommand:
    def test_pass_with_tau(self, capsys, tmp_path):
        out = tmp_path / "rep.json"
        code = run(["verify", "--model", f"{FX}/ex1_sub1.json",
                    "--cert", f"{FX}/cert_ex1_sub1_analysis.json", "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "PASS" in text
        assert "tau_max = 0.0116" in text

    def test_perturbed_rate_fails_exit_1(self, capsys, tmp_path):
        cert = json.loads(open(f"{FX}/cert_ex1_sub1_analysis.json").read())
        cert["alpha_bar"] *= 1.5
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cert))
        code = run(["verify", "--model", f"{FX}/ex1_sub1.json", "--cert", str(bad)])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_missing_p_tilde_exit_3(self, capsys, tmp_path):
        cert = json.loads(open(f"{FX}/cert_ex1_sub1_analysis.json").read())
        del cert["P_tilde"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cert))
        assert run(["verify", "--model", f"{FX}/ex1_sub1.json", "--cert", str(bad)]) == 3

    def test_report_self_contained(self, capsys, tmp_path):
        out = tmp_path / "rep.json"
        run(["verify", "--model", f"{FX}/ex1_sub2.json",
             "--cert", f"{FX}/cert_ex1_sub2_analysis.json", "--out", str(out)])
        rep = json.loads(out.read_text())
        margins = reverify_report(rep)
        for name, value in rep["results"]["margins"].items():
            assert margins[name] == pytest.approx(value, abs=1e-12)


class TestSimulateCommand:
    def test_deterministic_csv_bytes(self, capsys, tmp_path):
        outs = []
        for tag in ("a", "b"):
            traj = tmp_path / f"{tag}.csv"
            code = run(["simulate", "--model", f"{FX}/ex1_sub1.json",
                        "--schedule", "periodic:0.0234", "--paths", "1",
                        "--horizon", "1", "--seed", "7", "--store-stride", "5",
                        "--traj-out", str(traj)])
            assert code == 0
            outs.append(traj.read_bytes())
        assert outs[0] == outs[1]

    def test_zero_initial_state_note_exit_0(self, capsys):
        code = run(["simulate", "--model", f"{FX}/ex1_sub1.json",
                    "--schedule", "periodic:0.0234", "--paths", "2",
                    "--horizon", "0.5", "--seed", "1", "--x0", "0,0"])
        assert code == 0
        assert "unavailable" in capsys.readouterr().out

    def test_gain_from_certificate(self, capsys):
        code = run(["simulate", "--model", f"{FX}/ex1_sub1_control.json",
                    "--cert", f"{FX}/cert_ex1_sub1_design.json",
                    "--schedule", "periodic:0.0234", "--paths", "20",
                    "--horizon", "2", "--seed", "3", "--store-stride", "5"])
        assert code == 0
        text = capsys.readouterr().out
        rate = float([l for l in text.splitlines() if l.startswith("ms_decay_rate")][0].split("=")[1])
        assert rate < 0

    def test_divergent_exit_1(self, capsys, tmp_path):
        # unstable plant without feedback: most paths blow up
        doc = {"name": "unstable", "n": 1, "A": [[1000.0]], "diffusion": [[[0.0]]],
               "B_bar": [[0.0]], "x0": [1.0]}
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        code = run(["simulate", "--model", str(mp), "--schedule", "periodic:10.0",
                    "--paths", "4", "--horizon", "60", "--dt-sim", "1.0",
                    "--seed", "1"])
        assert code == 1


class TestReportCommand:
    def test_merged_table_and_curve(self, capsys, tmp_path):
        r1 = tmp_path / "b.json"
        run(["bound", "--two-v", "--alpha", "4.3957", "--alpha-b", "241.9335",
             "--gamma1", "1.2491", "--gamma2", "60.5024", "--out", str(r1)])
        r2 = tmp_path / "v.json"
        run(["verify", "--model", f"{FX}/ex1_sub1.json",
             "--cert", f"{FX}/cert_ex1_sub1_analysis.json", "--out", str(r2)])
        capsys.readouterr()
        curve = tmp_path / "curve.csv"
        code = run(["report", str(r1), str(r2), "--curve-out", str(curve)])
        assert code == 0
        text = capsys.readouterr().out
        assert "bound" in text and "verify" in text
        lines = curve.read_text().splitlines()
        assert lines[0] == "report,q,tau"
        assert len(lines) == 1 + 200

    def test_empty_exit_3(self, capsys):
        assert run(["report"]) == 3


class TestExitCodes:
    def test_unknown_command_exit_3(self, capsys):
        assert run(["nonsense"]) == 3

    def test_bad_model_path_exit_3(self, capsys):
        assert run(["verify", "--model", "does/not/exist.json",
                    "--cert", f"{FX}/cert_ex1_sub1_analysis.json"]) == 3


class TestDesignCommand:
    def test_sweep_echoes_choice(self, capsys, tmp_path):
        doc = {"name": "easy", "n": 2, "A": [[-1.0, 0.0], [0.0, -1.0]],
               "diffusion": [], "B_hat": [[1.0, 0.0], [0.0, 1.0]]}
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        cert = tmp_path / "cert.json"
        code = run(["design", "--model", str(mp), "--c-tilde", "sweep:0.5,1,2,5,10",
                    "--cert-out", str(cert), "--out", str(tmp_path / "rep.json")])
        assert code == 0
        text = capsys.readouterr().out
        assert "c_tilde =" in text and "tau_max =" in text
        # the written certificate verifies against the model
        assert run(["verify", "--model", str(mp), "--cert", str(cert)]) == 0

    def test_unstabilizable_exit_2(self, capsys, tmp_path):
        # unstable mode outside the input range
        doc = {"name": "stuck", "n": 2, "A": [[1.0, 0.0], [0.0, -1.0]],
               "diffusion": [], "B_hat": [[0.0], [1.0]]}
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        assert run(["design", "--model", str(mp)]) == 2


class TestDtaAndCurves:
    def test_dta_bound_matches_single_v(self, capsys):
        code = run(["bound", "--dta", "--c-bar", "0.36", "--h", "0.1",
                    "--alpha-u", "4", "--alpha-b", "1", "--alpha-f", "1"])
        assert code == 0
        tau_dta = float(capsys.readouterr().out.splitlines()[0].split("=")[1])
        run(["bound", "--single-v", "--alpha", "2", "--alpha-b", "1", "--alpha-f", "1"])
        tau_single = float(capsys.readouterr().out.splitlines()[0].split("=")[1])
        assert tau_dta == pytest.approx(tau_single, rel=1e-9)

    def test_curves_for_all_bound_modes(self, capsys, tmp_path):
        reports = []
        for tag, argv in (
            ("g", ["bound", "--generic", "--alpha1", "1", "--alpha2", "1",
                   "--alphat1", "1", "--alphat2", "1"]),
            ("s", ["bound", "--single-v", "--alpha", "1", "--alpha-b", "1", "--alpha-f", "1"]),
            ("t", ["bound", "--two-v", "--alpha", "1", "--alpha-b", "1",
                   "--gamma1", "1", "--gamma2", "1"]),
        ):
            out = tmp_path / f"{tag}.json"
            assert run(argv + ["--out", str(out)]) == 0
            reports.append(str(out))
        capsys.readouterr()
        curve = tmp_path / "curves.csv"
        assert run(["report", *reports, "--curve-out", str(curve)]) == 0
        lines = curve.read_text().splitlines()
        assert len(lines) == 1 + 3 * 200
        vals = [float(l.split(",")[2]) for l in lines[1:]]
        assert all(v > 0 for v in vals)


class TestReportFormats:
    def test_csv_summary(self, capsys, tmp_path):
        rep = tmp_path / "b.json"
        run(["bound", "--two-v", "--alpha", "1", "--alpha-b", "1",
             "--gamma1", "1", "--gamma2", "1", "--out", str(rep)])
        out = tmp_path / "summary.csv"
        assert run(["report", str(rep), "--format", "csv", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("report,command,model,tau_max")
        assert len(lines) == 2


class TestPlanarCliRoundTrip:
    def test_design_then_simulate(self, capsys, tmp_path):
        cert = tmp_path / "planar_cert.json"
        code = run(["design", "--model", f"{FX}/planar.json",
                    "--cert-out", str(cert), "--out", str(tmp_path / "rep.json")])
        assert code == 0
        text = capsys.readouterr().out
        tau = float([l for l in text.splitlines() if l.startswith("tau_max")][0].split("=")[1])
        assert tau >= 0.015
        assert run(["verify", "--model", f"{FX}/planar.json", "--cert", str(cert)]) == 0
        capsys.readouterr()
        code = run(["simulate", "--model", f"{FX}/planar.json", "--cert", str(cert),
                    "--schedule", f"periodic:{0.9 * tau:.6f}", "--paths", "1",
                    "--horizon", "5", "--seed", "0", "--store-stride", "50"])
        assert code == 0
        out = capsys.readouterr().out
        median = float([l for l in out.splitlines()
                        if l.startswith("as_exponent_median")][0].split("=")[1])
        assert median < 0
