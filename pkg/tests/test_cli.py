import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import optimize

from switchsel import cli, config
from switchsel.criteria import Criterion, glrt_threshold, select, switch_select
from switchsel.errors import UndefinedMLE
from switchsel.switchcrit import SwitchState, sw_update

CONFIGS = Path(__file__).parent.parent / "configs"


def run_main(argv, capsys, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_select_eight_ones(tmp_path, capsys):
    data = write(tmp_path, "ones.csv", "1\n" * 8)
    code, out, _ = run_main(["select", "--config", str(CONFIGS / "bernoulli.toml"), "--data", data], capsys)
    assert code == 0
    res = json.loads(out)
    model = config.load(CONFIGS / "bernoulli.toml").model()
    lib = select(Criterion.switch(), np.ones(8), model)
    assert res["selected"] == 1 == lib.selected
    assert res["evidence"] == lib.evidence
    assert res["log_evidence"] == lib.log_evidence
    assert res["estimator"] == "map_fallback"
    assert res["manifest"]["subcommand"] == "select" and res["manifest"]["seed"] == 20240611


def test_select_aic_matches_library(tmp_path, capsys):
    # eight ones have no interior MLE: both the library and the CLI refuse
    data = write(tmp_path, "ones.csv", "1\n" * 8)
    code, _, err = run_main(["select", "--config", str(CONFIGS / "bernoulli.toml"), "--data", data,
                             "--criterion", "aic", "--alpha", "0.05"], capsys)
    model = config.load(CONFIGS / "bernoulli.toml").model()
    with pytest.raises(UndefinedMLE):
        select(Criterion.aic(glrt_threshold(0.05)), np.ones(8), model)
    assert code == 3 and "UndefinedMLE" in err
    # with an interior MLE the decision and evidence are the library's
    data = write(tmp_path, "mixed.csv", "1\n1\n1\n1\n1\n1\n0\n1\n")
    code, out, _ = run_main(["select", "--config", str(CONFIGS / "bernoulli.toml"), "--data", data,
                             "--criterion", "aic", "--alpha", "0.05"], capsys)
    res = json.loads(out)
    lib = select(Criterion.aic(glrt_threshold(0.05)), [1, 1, 1, 1, 1, 1, 0, 1], model)
    assert code == 0
    assert (res["selected"], res["evidence"]) == (lib.selected, lib.evidence)
    assert res["evidence_is_log"] is True
    assert res["aic_t"] == glrt_threshold(0.05)


def test_select_empty_file(tmp_path, capsys):
    data = write(tmp_path, "empty.csv", "")
    code, out, _ = run_main(["select", "--data", data], capsys)
    res = json.loads(out)
    assert code == 0 and (res["n"], res["selected"], res["evidence"]) == (0, 0, 1.0)


def test_select_jsonl_and_alpha(tmp_path, capsys):
    data = write(tmp_path, "x.jsonl", "\n".join(["0.9", "[1.4]", "1.1", "0.7", "1.3"]) + "\n")
    code, out, _ = run_main(["select", "--data", data, "--alpha", "0.05", "--criterion", "bayes"], capsys)
    res = json.loads(out)
    assert code == 0 and res["n"] == 5
    assert res["reject"] == (res["evidence"] <= 0.05)
    assert res["estimate"][0] == pytest.approx(np.mean([0.9, 1.4, 1.1, 0.7, 1.3]))


def test_select_mean_variance(tmp_path, capsys):
    data = write(tmp_path, "x.csv", "0.3\n-0.2\n0.1\n0.05\n-0.1\n")
    code, out, _ = run_main(["select", "--config", str(CONFIGS / "mean_variance.toml"), "--data", data], capsys)
    res = json.loads(out)
    assert code == 0 and len(res["estimate"]) == 2
    if res["selected"] == 0:
        assert res["estimate"][1] == 0.0


@pytest.mark.parametrize("text,code", [
    ("1\nabc\n", 2),  # unparseable
    ("1\n2\n", 3),  # not a Bernoulli outcome
    ("1,0\n", 3),  # two values on a row
])
def test_select_bad_data(tmp_path, capsys, text, code):
    data = write(tmp_path, "bad.csv", text)
    got, _, err = run_main(["select", "--config", str(CONFIGS / "bernoulli.toml"), "--data", data], capsys)
    assert got == code and err.startswith("switchsel: error")


def test_select_missing_file_and_bad_config(tmp_path, capsys):
    assert run_main(["select", "--data", str(tmp_path / "nope.csv")], capsys)[0] == 2
    cfg = write(tmp_path, "c.toml", 'famly = "gaussian"\n')
    data = write(tmp_path, "x.csv", "1\n")
    assert run_main(["select", "--config", cfg, "--data", data], capsys)[0] == 4
    assert run_main(["select", "--data", data, "--criterion", "cv"], capsys)[0] == 4


def test_hq_small_n_exit(tmp_path, capsys):
    data = write(tmp_path, "x.csv", "1\n2\n")
    assert run_main(["select", "--data", data, "--criterion", "hq"], capsys)[0] == 3


def _stream_rejecting_at_seven():
    """A constant Gaussian stream whose switch evidence first drops to 0.04 at n = 7."""
    model = config.load().model()

    def evidences(c):
        s = SwitchState.start(model.prior0, model.prior1, model.switch_prior)
        out = []
        for _ in range(9):
            s = sw_update(s, c)
            out.append(switch_select(s).evidence)
        return out

    c = optimize.brentq(lambda c: math.log(evidences(c)[6]) - math.log(0.04), 0.5, 3.0)
    ev = evidences(c)
    assert all(e > 0.05 for e in ev[:6]) and ev[6] == pytest.approx(0.04)
    return [c] * 6 + [c] + [-c, 0.0], ev


def test_test_stream_rejects_from_line_seven(capsys, monkeypatch):
    xs, ev = _stream_rejecting_at_seven()
    code, out, _ = run_main(["test", "--alpha", "0.05"], capsys, "".join(f"{x!r}\n" for x in xs), monkeypatch)
    assert code == 0
    lines = [line.split("\t") for line in out.splitlines()]
    assert [int(f[0]) for f in lines] == list(range(1, 10))
    assert [f[3] for f in lines] == ["CONTINUE"] * 6 + ["REJECT"] * 3
    assert float(lines[6][2]) == ev[6]
    assert math.exp(float(lines[6][1])) == pytest.approx(float(lines[6][2]))


def test_test_malformed_line(capsys, monkeypatch):
    code, out, err = run_main(["test"], capsys, "0.1\n0.2\nbanana\n0.3\n", monkeypatch)
    assert code == 3
    assert len(out.splitlines()) == 2 and all(line.endswith("CONTINUE") for line in out.splitlines())
    assert "banana" in err


def test_test_refuses_non_robust_criteria(capsys, monkeypatch):
    for crit in ("aic", "bic", "hq"):
        assert run_main(["test", "--criterion", crit], capsys, "1\n", monkeypatch)[0] == 5
    assert run_main(["test", "--config", str(CONFIGS / "mean_variance.toml")], capsys, "1\n", monkeypatch)[0] == 5


def test_test_bayes_stream(capsys, monkeypatch):
    code, out, _ = run_main(["test", "--criterion", "bayes", "--alpha", "0.5"], capsys, "3\n3\n3\n", monkeypatch)
    assert code == 0 and out.splitlines()[-1].endswith("REJECT")


def test_simulate_writes_outputs(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", "reps = 40\nchunk = 20\nhorizon = 100\nhorizons = [10, 100]\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_main(["simulate", "stopping", "--config", cfg, "--out", str(out1)], capsys)[0] == 0
    assert run_main(["simulate", "stopping", "--config", cfg, "--out", str(out2), "--workers", "3"], capsys)[0] == 0

    def body(p):
        return "".join(line for line in p.with_suffix(".csv").open() if not line.startswith("#"))

    assert body(out1) == body(out2)
    manifest = json.loads(out1.with_suffix(".json").read_text())["manifest"]
    assert manifest["kind"] == "stopping" and manifest["config"]["reps"] == 40


def test_simulate_unknown_kind(capsys):
    code, _, err = run_main(["simulate", "bootstrap"], capsys)
    assert code == 4
    for kind in ("risk", "stopping", "power", "lil", "consistency", "decomposition"):
        assert kind in err


def test_diag_default_and_broken(capsys):
    code, out, _ = run_main(["diag"], capsys)
    assert code == 0 and all(line.startswith("PASS") for line in out.splitlines())
    code, out, _ = run_main(["diag", "--config", str(CONFIGS / "broken_prior.toml")], capsys)
    assert code == 1 and any(line.startswith("FAIL quadrature") for line in out.splitlines())


def test_console_script_streams_line_by_line():
    proc = subprocess.Popen([sys.executable, "-m", "switchsel.cli", "test"], stdin=subprocess.PIPE,
                            stdout=subprocess.PIPE, text=True)
    try:
        proc.stdin.write("0.5\n")
        proc.stdin.flush()
        first = proc.stdout.readline()  # arrives before stdin is closed
        assert first.startswith("1\t")
        proc.stdin.write("0.1\n")
        proc.stdin.close()
        assert proc.stdout.readline().startswith("2\t")
    finally:
        proc.stdout.close()
        assert proc.wait(timeout=60) == 0


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "switchsel" in capsys.readouterr().out
