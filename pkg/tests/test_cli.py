import json

from beliefq.cli import main


def lines_of(path):
    return path.read_text().splitlines()


class TestQbdCommand:
    def test_m1_benchmark(self, capsys):
        assert main(["qbd", "--M", "1"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("# qbd stability bound v1")
        assert out[1] == "M,mu_star"
        assert out[2] == "1,0.5"

    def test_lambda_invariant_output_bytes(self, capsys):
        assert main(["qbd", "--M", "4", "--lambda", "0.3"]) == 0
        first = capsys.readouterr().out
        assert main(["qbd", "--M", "4", "--lambda", "0.7"]) == 0
        second = capsys.readouterr().out
        assert first == second

    def test_m_sweep_rows_sorted(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["qbd", "--rho", "0.4", "--M-sweep", "2:6:2",
                     "--output", str(out)]) == 0
        rows = lines_of(out)[2:]
        assert [r.split(",")[0] for r in rows] == ["2", "4", "6"]

    def test_summary_json(self, tmp_path):
        summary = tmp_path / "s.json"
        assert main(["qbd", "--M", "3", "--summary", str(summary),
                     "--output", str(tmp_path / "o.csv")]) == 0
        doc = json.loads(summary.read_text())
        assert doc["M"] == 3 and "mu_star" in doc

    def test_controller_file_roundtrip(self, tmp_path, benchmark):
        from beliefq.policy import myopic_controller
        ctl_path = tmp_path / "ctl.json"
        ctl_path.write_text(myopic_controller(benchmark, 4).to_json())
        out = tmp_path / "o.csv"
        assert main(["qbd", "--controller", str(ctl_path),
                     "--output", str(out)]) == 0
        assert lines_of(out)[2].startswith("4,")

    def test_malformed_controller_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["qbd", "--controller", str(bad)]) == 2
        assert "malformed" in capsys.readouterr().err


class TestSimulateCommand:
    def test_scheme_none_benchmark(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert main(["simulate", "--scheme", "none", "--horizon", "300000",
                     "--seeds", "2", "--output", str(out)]) == 0
        header, row = lines_of(out)[1], lines_of(out)[2]
        assert header == "rho,scheme,throughput,stderr,seeds"
        cells = row.split(",")
        assert cells[1] == "none"
        assert abs(float(cells[2]) - 0.5) < 0.01
        assert cells[4] == "2"

    def test_rho_sweep_row_count(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["simulate", "--scheme", "all", "--rho-sweep", "0:0.1:0.05",
                     "--horizon", "30000", "--warmup", "1000", "--seeds", "1",
                     "--output", str(out)]) == 0
        rows = lines_of(out)[2:]
        assert len(rows) == 3 * 5
        rhos = [float(r.split(",")[0]) for r in rows]
        assert rhos == sorted(rhos)

    def test_deterministic_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--scheme", "output", "--horizon", "50000",
                "--seeds", "2", "--warmup", "100"]
        assert main(args + ["--output", str(a)]) == 0
        assert main(args + ["--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_parallel_jobs_same_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["simulate", "--scheme", "all", "--rho-sweep", "0:0.4:0.2",
                "--horizon", "20000", "--warmup", "500", "--seeds", "1"]
        assert main(base + ["--output", str(a)]) == 0
        assert main(base + ["--jobs", "4", "--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_config_exits_2(self, capsys):
        assert main(["simulate", "--config", "/no/such/config.json"]) == 2
        assert "/no/such/config.json" in capsys.readouterr().err

    def test_bad_sweep_spec_exits_2(self, capsys):
        assert main(["simulate", "--rho-sweep", "1:0:0.1"]) == 2

    def test_standard_sweep_has_101_points(self):
        from beliefq.cli import _parse_sweep
        grid = _parse_sweep("0:1:0.01", "--rho-sweep")
        assert grid.size == 101
        assert grid[0] == 0.0 and grid[-1] == 1.0


class TestSolveCommand:
    def test_closed_form_schemes_rejected(self, capsys):
        assert main(["solve", "--scheme", "full"]) == 2
        assert "closed form" in capsys.readouterr().err
        assert main(["solve", "--scheme", "none"]) == 2

    def test_solve_writes_summary_and_curve(self, tmp_path, capsys):
        summary = tmp_path / "summary.json"
        curve = tmp_path / "curve.csv"
        assert main(["solve", "--scheme", "output", "--rho", "0.5",
                     "--cells", "60", "--output", str(summary),
                     "--emit-curve", str(curve)]) == 0
        doc = json.loads(summary.read_text())
        assert doc["scheme"] == "output"
        assert abs(doc["mu_star"] - 0.554) < 0.01
        rows = lines_of(curve)
        assert rows[1] == "omega1,omega2_threshold"
        assert len(rows) == 62

    def test_policy_csv(self, tmp_path):
        policy = tmp_path / "policy.csv"
        assert main(["solve", "--scheme", "state", "--cells", "20",
                     "--policy-csv", str(policy)]) == 0
        assert len(lines_of(policy)) == 2 + 400

    def test_emit_controller(self, tmp_path):
        ctl_path = tmp_path / "ctl.json"
        assert main(["solve", "--scheme", "output", "--cells", "50",
                     "--emit-controller", str(ctl_path),
                     "--controller-cells", "10"]) == 0
        from beliefq.policy import FiniteController
        ctl = FiniteController.from_json(ctl_path.read_text())
        assert ctl.M == 10

    def test_non_convergence_exits_3(self):
        assert main(["solve", "--scheme", "output", "--cells", "40",
                     "--tol", "1e-13", "--max-iters", "2"]) == 3

    def test_table1_preset_smoke(self, tmp_path, capsys):
        out = tmp_path / "table.json"
        assert main(["solve", "--table1", "--cells", "40",
                     "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert len(doc["rows"]) == 4
        assert set(doc["rows"][0]) == {"rho1", "rho2", "mu_state",
                                       "mu_output", "mu_queue"}
        printed = capsys.readouterr().out
        assert printed.count("rho1=") == 4

    def test_solve_needs_scheme_or_table(self, capsys):
        assert main(["solve"]) == 2


class TestValidateCommand:
    def test_quick_battery_passes(self, capsys):
        assert main(["validate", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "all checks passed" in out

    def test_config_override(self, tmp_path, capsys):
        cfg = {"lambda": 0.4,
               "server1": {"gamma": 0.5, "rho": 0.3, "mu0": 0.25, "mu1": 0.75},
               "server2": {"gamma": 0.5, "rho": 0.6, "mu0": 0.2, "mu1": 0.8}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["validate", "--quick", "--config", str(path)]) == 0
