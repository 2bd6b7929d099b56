"""Reading fixture files.

A fixture file is DSL text preceded by ``# key: value`` header lines.  The
fake-Bianchi file holds several expressions in sections ``[lhs 1]``,
``[rhs 1]`` and so on.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..expr_core import LinearCombination, parse

__all__ = [
    "FIXTURE_DIR",
    "CORPUS_DIR",
    "FAKE_BIANCHI_SHA256",
    "read_fixture",
    "fixture_expression",
    "load_fake_bianchi",
    "fake_bianchi_checksum",
    "gjms_constants",
    "CorpusCase",
    "CorpusResult",
    "load_corpus",
    "numeric_zero_test",
    "run_case",
]

FIXTURE_DIR = Path(__file__).resolve().parent
CORPUS_DIR = FIXTURE_DIR / "corpus"

# sha256 of fake_bianchi.expr as generated by scripts/derive_fixtures.py
FAKE_BIANCHI_SHA256 = "e4fc005f7d73563240468666a2188d457d5e738ed8df51e3f89d087c1868c7a1"


def _headers(text: str) -> Dict[str, str]:
    out = {}
    for line in text.splitlines():
        s = line.strip()
        if not s.startswith("#"):
            continue
        body = s[1:].strip()
        if ":" in body:
            k, v = body.split(":", 1)
            out[k.strip().lower()] = v.strip()
    return out


def read_fixture(path) -> Tuple[Dict[str, str], LinearCombination]:
    p = Path(path)
    if not p.is_absolute() and not p.exists():
        p = FIXTURE_DIR / p
    text = p.read_text()
    return _headers(text), parse(text)


def fixture_expression(name: str) -> LinearCombination:
    """Expression of a shipped fixture, by file stem (``paneitz``, ``conformal_laplacian``...)."""
    return read_fixture(FIXTURE_DIR / f"{name}.expr")[1]


def fake_bianchi_checksum() -> str:
    return hashlib.sha256((FIXTURE_DIR / "fake_bianchi.expr").read_bytes()).hexdigest()


def load_fake_bianchi() -> List[Tuple[LinearCombination, LinearCombination]]:
    text = (FIXTURE_DIR / "fake_bianchi.expr").read_text()
    sections: Dict[str, List[str]] = {}
    cur = None
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            sections[cur] = []
        elif cur is not None:
            sections[cur].append(line)
    out = []
    k = 1
    while f"lhs {k}" in sections:
        lhs = parse("\n".join(sections[f"lhs {k}"]))
        rhs = parse("\n".join(sections.get(f"rhs {k}", [])))
        out.append((lhs, rhs))
        k += 1
    return out


def gjms_constants() -> Dict:
    return json.loads((FIXTURE_DIR / "gjms_constants.json").read_text())


# ---------------------------------------------------------------------------
# formal-vs-substitution corpus


@dataclass
class CorpusCase:
    name: str
    n: int
    expect: str  # "zero" or "nonzero"
    expr: LinearCombination
    path: Optional[Path] = None

    @property
    def tau(self) -> int:
        return _count(self.expr, ("T", "U"))

    @property
    def rho(self) -> int:
        return _count(self.expr, ("LR",))


def _count(L: LinearCombination, heads) -> int:
    best = 0
    for t in L:
        best = max(best, sum(1 for f in t.factors if f.head in heads))
    return best


@dataclass
class CorpusResult:
    case: CorpusCase
    formal_zero: bool
    numeric_zero: bool
    max_relative: float

    @property
    def agree(self) -> bool:
        return self.formal_zero == self.numeric_zero

    @property
    def as_expected(self) -> bool:
        return self.agree and self.formal_zero == (self.case.expect == "zero")


def load_corpus(directory=None) -> List[CorpusCase]:
    d = CORPUS_DIR if directory is None else Path(directory)
    cases = []
    for p in sorted(d.glob("*.expr")):
        h, L = read_fixture(p)
        if "n" not in h or "expect" not in h:
            raise ValueError(f"{p.name}: missing 'n' or 'expect' header")
        if h["expect"] not in ("zero", "nonzero"):
            raise ValueError(f"{p.name}: expect must be zero or nonzero")
        case = CorpusCase(h.get("name", p.stem), int(h["n"]), h["expect"], L, p)
        if case.tau + 2 * case.rho > case.n:
            raise ValueError(f"{p.name}: tau + 2 rho = {case.tau + 2 * case.rho} exceeds n = {case.n}")
        cases.append(case)
    return cases


def numeric_zero_test(L: LinearCombination, n: int, trials: int = 100, seed: int = 0,
                      tol: float = 1e-9) -> Tuple[bool, float]:
    """Evaluate a linearized combination on random admissible values.

    Returns (all trials below tol relative to the term magnitudes, worst ratio).
    """
    from ..jets import evaluate_linearized, needed_orders, sample_linearized
    orders = needed_orders(L)
    worst = 0.0
    for trial in range(trials):
        env = sample_linearized(seed, n, orders, trial)
        total, scale = evaluate_linearized(L, env)
        r = float(np.max(np.abs(total))) / max(scale, 1e-300)
        worst = max(worst, r)
    return worst < tol, worst


def run_case(case: CorpusCase, trials: int = 100, seed: int = 0, tol: float = 1e-9) -> CorpusResult:
    from ..algebra import is_formally_zero
    formal = is_formally_zero(case.expr)
    numeric, worst = numeric_zero_test(case.expr, case.n, trials, seed, tol)
    return CorpusResult(case, formal, numeric, worst)
