import hashlib
import json

import pytest

from confop import parse
from confop.algebra import is_formally_zero
from confop.fixtures import (
    CORPUS_DIR,
    FAKE_BIANCHI_SHA256,
    FIXTURE_DIR,
    fake_bianchi_checksum,
    fixture_expression,
    gjms_constants,
    load_corpus,
    load_fake_bianchi,
    read_fixture,
    run_case,
)


def test_fake_bianchi_checksum():
    raw = (FIXTURE_DIR / "fake_bianchi.expr").read_bytes()
    assert hashlib.sha256(raw).hexdigest() == FAKE_BIANCHI_SHA256 == fake_bianchi_checksum()


def test_fake_bianchi_sections():
    pairs = load_fake_bianchi()
    assert len(pairs) >= 4
    for lhs, rhs in pairs:
        assert not lhs.is_empty()


def test_operator_headers():
    headers, L = read_fixture(FIXTURE_DIR / "paneitz.expr")
    assert headers["bidegree"] == "2-n/2,-2-n/2"
    assert not L.is_empty()


def test_lsharp_fixtures_differ():
    assert not is_formally_zero(fixture_expression("lsharp_printed") - fixture_expression("lsharp_observed"))


def test_gjms_constants_file():
    data = gjms_constants()
    assert data["c"] == {"1": 1, "2": 1}
    assert json.loads((FIXTURE_DIR / "gjms_constants.json").read_text()) == data


def test_corpus_shape():
    cases = load_corpus()
    assert len(cases) == 22
    assert sum(c.expect == "zero" for c in cases) == 15
    for c in cases:
        assert c.tau + 2 * c.rho <= c.n


@pytest.mark.parametrize("case", load_corpus(), ids=lambda c: c.name)
def test_corpus_case(case):
    res = run_case(case, trials=20)
    assert res.agree and res.as_expected, (case.name, res.max_relative)


def test_corpus_rejects_bad_headers(tmp_path):
    (tmp_path / "bad.expr").write_text("# name: bad\n# n: 4\nLR{i,j,k,l}\n")
    with pytest.raises(ValueError):
        load_corpus(tmp_path)
    (tmp_path / "bad.expr").write_text("# name: big\n# n: 3\n# expect: zero\nLR{i,j,k,l}*LR{a,b,c,d}\n")
    with pytest.raises(ValueError):
        load_corpus(tmp_path)


def test_empty_corpus(tmp_path):
    assert load_corpus(tmp_path) == []
