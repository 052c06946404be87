import json
import math
import subprocess
import sys

import pytest

from rarebayes import cli
from rarebayes.errors import ModelEvaluationError, PlateauError

GAUSS = """\
seed = 3
[[model]]
name = "gaussian_conjugate"
[model.params]
data = [1.0]
noise_std = 0.2
"""

SHEAR = """\
[[model]]
name = "shear_identifiable"
[model.params]
eps = 0.5
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(argv):
    return cli.main(argv)


def test_update_writes_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, GAUSS)
    out = tmp_path / "out"
    assert run(["update", "--config", cfg, "--out", str(out)]) == 0
    for name in ("levels.csv", "ccdf.csv", "posterior.csv", "evidence.json"):
        assert (out / name).exists()
    ev = json.loads((out / "evidence.json").read_text())
    assert ev["stopping_level"] >= 1 and ev["a_sequence"][-1] <= 1e-8
    text = capsys.readouterr().out
    assert "b_k" in text and "c_k" in text and "a_k" in text


def test_update_repeatable_and_thread_invariant(tmp_path):
    cfg = write(tmp_path, SHEAR)
    dirs = []
    for i, threads in enumerate(("1", "1", "4")):
        d = tmp_path / f"o{i}"
        assert run(["update", "--config", cfg, "--out", str(d), "--threads", threads]) == 0
        dirs.append(d)
    for name in ("levels.csv", "ccdf.csv", "posterior.csv", "evidence.json"):
        first = (dirs[0] / name).read_bytes()
        assert all((d / name).read_bytes() == first for d in dirs[1:])


def test_seed_override_changes_result(tmp_path):
    cfg = write(tmp_path, GAUSS)
    assert run(["update", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert run(["update", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4"]) == 0
    a = (tmp_path / "a" / "evidence.json").read_text()
    b = (tmp_path / "b" / "evidence.json").read_text()
    assert a != b


def test_threads_env_fallback(tmp_path, monkeypatch):
    cfg = write(tmp_path, GAUSS)
    monkeypatch.setenv("RAREBAYES_THREADS", "3")
    assert run(["update", "--config", cfg, "--out", str(tmp_path / "e")]) == 0
    monkeypatch.setenv("RAREBAYES_THREADS", "many")
    assert run(["update", "--config", cfg, "--out", str(tmp_path / "f")]) == 2


def test_argument_and_config_errors(tmp_path, capsys):
    assert run(["--help"]) == 0
    assert run([]) == 2
    assert run(["update"]) == 2
    assert run(["update", "--config", str(tmp_path / "missing.toml")]) == 2
    assert run(["update", "--config", write(tmp_path, GAUSS), "--seed", "-1"]) == 2
    assert run(["update", "--config", write(tmp_path, GAUSS), "--threads", "0"]) == 2
    bad = write(tmp_path, GAUSS.replace("noise_std = 0.2", "noise_std = 0.2\ncolour = 1"), "bad.toml")
    capsys.readouterr()
    assert run(["update", "--config", bad]) == 2
    assert "line 7" in capsys.readouterr().err


def test_level_cap_exit_and_partial_output(tmp_path):
    text = GAUSS.replace("noise_std = 0.2", "noise_std = 0.001") + "[sus]\nmax_levels = 1\n"
    out = tmp_path / "cap"
    assert run(["update", "--config", write(tmp_path, text), "--out", str(out)]) == 4
    assert (out / "levels.csv").exists() and not (out / "evidence.json").exists()


def test_plateau_and_model_fault_exit_codes(tmp_path, monkeypatch):
    cfg = write(tmp_path, GAUSS)

    def plateau(*a, **k):
        raise PlateauError(2, 0.5, 10, 100)

    monkeypatch.setattr(cli, "run_bus", plateau)
    assert run(["update", "--config", cfg, "--out", str(tmp_path / "p")]) == 3

    def fault(*a, **k):
        raise ModelEvaluationError("solver diverged at sample 7", 7)

    monkeypatch.setattr(cli, "run_bus", fault)
    assert run(["update", "--config", cfg, "--out", str(tmp_path / "q")]) == 5


def _compare_text(first, second):
    return ("seed = 5\n" + first + second)


BLOCK = """
[[model]]
name = "gaussian_conjugate"
label = "{label}"
{seed}
[model.params]
data = [1.0]
noise_std = 0.2
"""


def test_compare_same_seed_ratio_exactly_one(tmp_path):
    text = _compare_text(BLOCK.format(label="a", seed=""), BLOCK.format(label="b", seed=""))
    out = tmp_path / "cmp"
    assert run(["compare", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    report = json.loads((out / "compare.json").read_text())
    assert report["complete"] is True
    (ratio,) = report["ratios"]
    assert ratio["ratio"] == 1.0 and ratio["ln_ratio"] == 0.0
    assert (out / "a" / "evidence.json").exists() and (out / "b" / "evidence.json").exists()


def test_compare_different_seeds_consistent(tmp_path):
    text = _compare_text(BLOCK.format(label="a", seed="seed = 1"), BLOCK.format(label="b", seed="seed = 2"))
    out = tmp_path / "cmp"
    assert run(["compare", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    (ratio,) = json.loads((out / "compare.json").read_text())["ratios"]
    a, b = json.loads((out / "compare.json").read_text())["models"]
    assert ratio["std_ln_ratio"] == pytest.approx(math.hypot(a["cov_proxy"], b["cov_proxy"]))
    assert abs(ratio["ln_ratio"]) <= 3 * ratio["std_ln_ratio"]


def test_compare_partial_report_on_failure(tmp_path):
    failing = BLOCK.format(label="tight", seed="").replace("noise_std = 0.2", "noise_std = 0.001")
    text = _compare_text(BLOCK.format(label="ok", seed=""), failing) + "[sus]\nmax_levels = 1\n"
    out = tmp_path / "cmp"
    code = run(["compare", "--config", write(tmp_path, text), "--out", str(out)])
    report = json.loads((out / "compare.json").read_text())
    assert code == 4 and report["complete"] is False
    assert [m["status"] for m in report["models"]] == ["ok", "failed"]


def test_demo_bias_outputs(tmp_path):
    text = GAUSS + "[demo]\nc_relative = [0.1, 10.0]\nreference_samples = 2000\n"
    out = tmp_path / "demo"
    assert run(["demo-bias", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    report = json.loads((out / "demo_bias.json").read_text())
    low, high = report["runs"]
    assert low["admissible"] and not high["admissible"]
    assert "truncation" in high and "truncation" not in low
    assert high["max_ks_statistic"] > low["max_ks_statistic"]
    for name in ("posterior_c0.csv", "posterior_c1.csv", "reference.csv"):
        assert (out / name).exists()


def test_demo_bias_constant_model(tmp_path):
    text = "[[model]]\nname = \"constant\"\n[[model.prior]]\nkind = \"normal\"\nmean = 0.0\nstd = 1.0\n"
    # c_max = 1 for L = 1; every multiplier up to it recovers the prior
    assert run(["demo-bias", "--config", write(tmp_path, text), "--out", str(tmp_path / "d")]) == 0


def test_validate_gaussian(tmp_path):
    out = tmp_path / "val"
    assert run(["validate", "--config", write(tmp_path, GAUSS), "--out", str(out)]) == 0
    report = json.loads((out / "validate.json").read_text())
    assert report["passed"] is True
    assert abs(report["analytic"]["z"]) <= 3 and abs(report["direct_mc"]["z"]) <= 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rarebayes", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "update" in proc.stdout
