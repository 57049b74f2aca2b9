import copy
import csv
import json
import subprocess
import sys

import pytest

from macrate.errors import ConfigError
from macrate.harness import parse_config, run_experiment, run_suite, scenario_s1, write_outputs
from macrate.harness.cli import main
from macrate.harness.report import ClaimRecord, VerificationReport, combine
from macrate.harness.verification import CLAIMS


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def small_s1(horizon=400):
    return scenario_s1(horizon=horizon, seed=2)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(small_s1())
        assert cfg.policy == "both" and cfg.oracle_cadence == "every-slot"
        assert cfg.fading.v_hat == (1e-4, 1e-4)
        assert not cfg.overridden

    def test_cli_overrides(self):
        cfg = parse_config(small_s1(), seed=9, out="x", fmt="json")
        assert (cfg.fading.seed, cfg.out_dir, cfg.fmt) == (9, "x", "json")

    def test_cadence_default_for_many_users(self):
        doc = small_s1()
        doc["fading"]["m"] = 4
        doc["fading"]["v_hat"] = 1e-4
        doc["profile"]["powers"] = [1.0] * 4
        doc["utility"]["weights"] = [1.0] * 4
        assert parse_config(doc).oracle_cadence == "block-boundaries"

    @pytest.mark.parametrize("mutate", [
        lambda d: d["profile"].update(powers=[1.0, 1.0, 1.0]),
        lambda d: d["utility"].update(weights=[1.0]),
        lambda d: d["fading"].update(v_hat=[1e-4]),
        lambda d: d["fading"].update(h0=[1.0, 1.0, 1.0]),
        lambda d: d.pop("fading"),
        lambda d: d.update(policy="optimal"),
        lambda d: d["fading"].update(horizon=1.5),
        lambda d: d["fading"].update(h_min=3.0),
        lambda d: d.update(extra=1),
        lambda d: d["utility"].update(family="weighted-linear"),
        lambda d: d["oracle"].update(cadence="hourly") if "oracle" in d else d.update(oracle={"cadence": "hourly"}),
    ])
    def test_rejects(self, mutate):
        doc = copy.deepcopy(small_s1())
        mutate(doc)
        with pytest.raises(ConfigError):
            parse_config(doc)


class TestReport:
    def test_record_semantics(self):
        assert ClaimRecord("a", 1.0, 1.0, 0.0).passed
        assert not ClaimRecord("a", 1.1, 1.0, 0.05).passed
        assert ClaimRecord("a", 1.04, 1.0, 0.05, kind="abs").passed
        assert not ClaimRecord("a", 0.9, 1.0, 0.05, kind="abs").passed
        assert not ClaimRecord("a", float("nan"), 1.0, 0.05).passed

    def test_combine(self):
        rec = combine("x", [ClaimRecord("p", 0.0, 1.0, 0.0, note="easy"),
                            ClaimRecord("q", 2.0, 1.0, 0.5, note="hard")])
        assert not rec.passed and rec.observed == 2.0
        assert set(rec.details) == {"easy", "hard"}

    def test_unasserted_failure_does_not_fail_report(self):
        rep = VerificationReport([ClaimRecord("a", 2.0, 1.0, 0.0, asserted=False),
                                  ClaimRecord("b", 0.0, 1.0, 0.0)])
        assert rep.passed and rep.failures() == []
        assert json.loads(rep.to_json())["pass"] is True
        assert rep.to_csv().splitlines()[0].startswith("claim,observed,bound")


class TestExperiment:
    def test_s1_claims_pass(self):
        res = run_experiment(parse_config(small_s1()))
        assert res.report.passed
        ids = [r.claim for r in res.report.records]
        assert "thm1-bound" in ids and "thm3-bound" in ids and "thm2-ratio" in ids

    def test_inflate_fails(self):
        res = run_experiment(parse_config(small_s1()), inflate=100.0)
        assert not res.report.passed
        assert {r.claim for r in res.report.failures()} == {"thm1-bound", "thm3-bound"}

    def test_static_channel(self):
        doc = small_s1()
        doc["fading"]["v_hat"] = 0
        res = run_experiment(parse_config(doc))
        assert res.report.passed
        for run in res.runs.values():
            assert run.max_track_err() == pytest.approx(0.0, abs=1e-12)

    def test_overrides_unassert_bounds(self):
        doc = small_s1()
        doc["overrides"] = {"k": 3, "alpha": 0.01, "gamma": 0.01}
        res = run_experiment(parse_config(doc))
        assert res.runs["approximate"].params.k == 3
        assert res.runs["improved"].params.gamma == 0.01
        bounds = [r for r in res.report.records if r.claim in ("thm1-bound", "thm3-bound")]
        assert bounds and not any(r.asserted for r in bounds)

    def test_single_policy(self):
        doc = small_s1()
        doc["policy"] = "improved"
        res = run_experiment(parse_config(doc))
        assert list(res.runs) == ["improved"]

    def test_outputs_csv_and_json(self, tmp_path):
        res = run_experiment(parse_config(small_s1(100)))
        paths = write_outputs(res, tmp_path / "c", "csv")
        assert sorted(p.name for p in paths) == ["approximate.csv", "improved.csv", "summary.json", "trace.csv"]
        rows = list(csv.reader((tmp_path / "c" / "approximate.csv").open()))
        assert len(rows) == 101
        summary = json.loads((tmp_path / "c" / "summary.json").read_text())
        params = summary["policies"]["approximate"]["params"]
        assert {"k", "alpha", "theta"} <= set(params)
        assert {"c", "gamma"} <= set(summary["policies"]["improved"]["params"])
        jpaths = write_outputs(res, tmp_path / "j", "json")
        assert sorted(p.name for p in jpaths) == ["approximate.json", "improved.json", "summary.json", "trace.json"]
        data = json.loads((tmp_path / "j" / "improved.json").read_text())
        assert len(data["allocated"]) == 100


class TestCli:
    def test_simulate_exit_codes(self, tmp_path, capsys):
        good = write_config(tmp_path, small_s1(200))
        assert main(["simulate", "--config", good, "--out", str(tmp_path / "o")]) == 0
        assert main(["simulate", "--config", good, "--out", str(tmp_path / "f"), "--debug-inflate", "10"]) == 1
        bad = small_s1()
        bad["profile"]["powers"] = [1.0]
        assert main(["simulate", "--config", write_config(tmp_path, bad, "bad.json")]) == 2
        assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
        (tmp_path / "broken.json").write_text("{")
        assert main(["simulate", "--config", str(tmp_path / "broken.json")]) == 2
        err = capsys.readouterr().err
        assert "user count mismatch" in err

    def test_simulate_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, small_s1(300))
        for d in ("a", "b"):
            assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d), "--seed", "17"]) == 0
        for name in ("trace.csv", "approximate.csv", "improved.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "18"]) == 0
        assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "c" / "trace.csv").read_bytes()

    def test_bounds(self, capsys):
        assert main(["bounds", "--A", "0.5", "--B", "1", "--what", "1e-4", "--wbar", "1e-4", "--format", "json"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["worst_case"]["k"] == 42
        assert out["worst_case"]["theta"] == pytest.approx(0.6108, abs=1e-4)
        assert out["average_case"]["k"] == 2208
        main(["bounds", "--A", "0.5", "--B", "1", "--what", "5e-5", "--wbar", "5e-5", "--format", "json"])
        half = json.loads(capsys.readouterr().out)
        assert half["worst_case"]["bound"] < out["worst_case"]["bound"]
        assert half["average_case"]["bound"] < out["average_case"]["bound"]
        assert main(["bounds", "--A", "0.5", "--B", "1", "--what", "1e-4", "--wbar", "2e-4"]) == 2
        assert "exceeds" in capsys.readouterr().err
        assert main(["bounds", "--A", "0.5", "--B", "1", "--what", "1e-4", "--wbar", "1e-4"]) == 0
        assert "theta" in capsys.readouterr().out

    def test_project(self, capsys):
        assert main(["project", "--H", "1,1", "--P", "1,1", "--N0", "1", "--point", "0.5,0.5"]) == 0
        out = capsys.readouterr().out
        assert out.count("(0.2746531, 0.2746531)") == 2
        assert main(["project", "--H", "1,1", "--P", "1,1", "--point=-0.1,0.1", "--format", "json"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["approximate"] == [0.0, 0.1] and data["oracle"] == pytest.approx([0.0, 0.1])
        assert main(["project", "--H", "1,1", "--P", "1,1", "--point", "0.1,0.1", "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["approximate"] == [0.1, 0.1]
        assert main(["project", "--H", "1", "--P", "1,1", "--point", "0.1,0.1"]) == 2

    def test_project_parse_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["project", "--H", "a,b", "--P", "1,1", "--point", "0,0"])
        assert exc.value.code == 2

    def test_verify(self, capsys, tmp_path):
        assert main(["verify", "--suite", "lemmas", "--size", "quick", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        report = json.loads((tmp_path / "verification.json").read_text())
        assert {c["claim"] for c in report["claims"]} == {k for k, (_, g) in CLAIMS.items() if g == "lemmas"}

    def test_verify_negative_control(self, capsys):
        code = main(["verify", "--suite", "theorems", "--size", "quick", "--claim", "thm1-bound",
                     "--debug-inflate", "5", "--format", "csv"])
        assert code == 1
        assert "thm1-bound" in capsys.readouterr().out

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "macrate.harness.cli", "bounds", "--A", "0.5", "--B", "1",
                               "--what", "1e-4", "--wbar", "1e-4"], capture_output=True, text=True)
        assert proc.returncode == 0 and "worst_case" in proc.stdout


def test_verify_all_covers_every_claim():
    rep = run_suite("all", "quick", only={"solve-c", "polymatroid"})
    assert [r.claim for r in rep.records] == ["polymatroid", "solve-c"]
    assert set(CLAIMS) == {
        "projection-suite", "polymatroid", "appendix-witness", "lemma1-bound", "lemma2-step",
        "oracle-calibration", "thm1-bound", "thm2-ratio", "lemma3-block", "thm3-bound", "solve-c",
        "determinism",
    }
    with pytest.raises(ValueError):
        run_suite("everything")
