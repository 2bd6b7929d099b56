import io
import subprocess
import sys

import pytest

from confop.cli import main
from confop.fixtures import CORPUS_DIR, FIXTURE_DIR


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def test_canon(tmp_path):
    p = tmp_path / "anti.expr"
    p.write_text("W{i,j,k,l}*W{i,j,k,l} + W{j,i,k,l}*W{i,j,k,l}\n")
    code, text = run("canon", str(p))
    assert code == 0 and text.strip().endswith("0")


def test_canon_parse_error(tmp_path):
    p = tmp_path / "bad.expr"
    p.write_text("W{i,j,k\n")
    assert run("canon", str(p))[0] == 2


def test_missing_file():
    assert run("canon", "/nonexistent/x.expr")[0] == 2


def test_unknown_command():
    assert run("frobnicate")[0] == 2


def test_invariance_conformal_laplacian():
    code, text = run("invariance", str(FIXTURE_DIR / "conformal_laplacian.expr"), "--trials", "3")
    assert code == 0
    assert text.splitlines()[-1] == "result: PASS"


def test_invariance_bare_laplacian(tmp_path):
    p = tmp_path / "lap.expr"
    p.write_text("# bidegree: 1-n/2,-1-n/2\nD{a,a}f\n")
    code, text = run("invariance", str(p), "--trials", "3")
    assert code == 1
    assert "FAIL" in text and "phi" in text


def test_invariance_flipped_sign(tmp_path):
    src = (FIXTURE_DIR / "conformal_laplacian.expr").read_text()
    p = tmp_path / "flip.expr"
    p.write_text(src.replace("D{a,a}f", "-D{a,a}f", 1))
    assert run("invariance", str(p), "--trials", "2", "--n", "5")[0] == 1


def test_harmonic_obstruction_exit():
    code, _ = run("ambient", "harmonic", "--w", "-n/2+1", "--rho-order", "2")
    assert code == 2


def test_harmonic_and_gjms_pass():
    assert run("ambient", "harmonic", "--trials", "2")[0] == 0
    assert run("ambient", "gjms", "--trials", "2")[0] == 0


def test_gamma_reports_printed_sign_failure():
    code, text = run("ambient", "gamma", "--trials", "2", "--machine")
    assert code == 1
    rows = [l for l in text.splitlines() if l.startswith("record")]
    verdicts = {r.split("\t")[1]: r.split("\t")[2] for r in rows}
    assert verdicts["name=gamma_inf"] == "verdict=fail"
    assert verdicts["name=gamma_inf_observed"] == "verdict=info"


def test_corpus_command():
    code, text = run("corpus", "--trials", "10")
    assert code == 0 and "cases: 22" in text


def test_empty_corpus_dir(tmp_path):
    code, text = run("corpus", str(tmp_path))
    assert code == 0 and "cases: 0" in text


def test_machine_output_deterministic():
    args = ("invariance", str(FIXTURE_DIR / "paneitz.expr"), "--trials", "2", "--n", "5", "--machine")
    a = run(*args)
    b = run(*args)
    assert a == b
    lines = a[1].splitlines()
    assert lines[0].startswith("config\t") and lines[-1].startswith("summary\t")


def test_seed_environment(monkeypatch):
    args = ("ambient", "examples", "--trials", "1", "--machine")
    monkeypatch.setenv("CONFOP_SEED", "3")
    a = run(*args)[1]
    assert "seed=3" in a
    monkeypatch.setenv("CONFOP_SEED", "4")
    b = run(*args)[1]
    assert a != b
    assert run(*args, "--seed", "3")[1] == a


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "confop.cli", "canon", str(CORPUS_DIR / "01_first_bianchi.expr")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
