"""The ``confop`` command line.

Exit codes: 0 every check passed, 1 a verification failed, 2 usage, input
or obstruction error.  Every report starts with the resolved configuration.
With ``--machine`` the report is one tab-separated record per line::

    config  command=invariance  n=5,6  seed=0 ...
    record  name=formal  verdict=pass  residual=0  seed=0
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

AMBIENT_CHECKS = ("gamma", "components", "harmonic", "gjms", "examples")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: Tuple[str, ...] = ()
    n_value: Optional[int] = None
    w_value: Optional[str] = None
    seed: int = 0
    trials: int = 10
    tol: Optional[float] = None
    rho_order: int = 2
    bidegree: Optional[str] = None
    check: Optional[str] = None
    machine: bool = False
    n_resolved: str = ""

    def items(self) -> List[Tuple[str, str]]:
        out = [("command", self.command)]
        if self.check:
            out.append(("check", self.check))
        out += [
            ("inputs", ",".join(self.inputs) or "-"),
            ("n", self.n_resolved or ("-" if self.n_value is None else str(self.n_value))),
            ("w", self.w_value or "-"),
            ("bidegree", self.bidegree or "-"),
            ("seed", str(self.seed)),
            ("trials", str(self.trials)),
            ("tol", "-" if self.tol is None else repr(self.tol)),
            ("rho_order", str(self.rho_order)),
        ]
        return out


@dataclass
class Record:
    name: str
    verdict: str  # pass | fail | info
    residual: Optional[float] = None
    note: str = ""


@dataclass
class Report:
    config: RunConfig
    records: List[Record] = field(default_factory=list)
    lines: List[str] = field(default_factory=list)

    def add(self, name, ok, residual=None, note="", info=False):
        verdict = "info" if info else ("pass" if ok else "fail")
        self.records.append(Record(name, verdict, residual, note))

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.records)

    def render(self) -> str:
        cfg = self.config
        if cfg.machine:
            rows = ["config\t" + "\t".join(f"{k}={v}" for k, v in cfg.items())]
            for r in self.records:
                row = f"record\tname={r.name}\tverdict={r.verdict}\tresidual={_fmt(r.residual)}\tseed={cfg.seed}"
                if r.note:
                    row += f"\tnote={r.note}"
                rows.append(row)
            rows.append(f"summary\tverdict={'pass' if self.passed else 'fail'}\trecords={len(self.records)}")
            return "\n".join(rows) + "\n"
        rows = ["config: " + " ".join(f"{k}={v}" for k, v in cfg.items())]
        rows += self.lines
        width = max([len(r.name) for r in self.records] + [4])
        for r in self.records:
            row = f"  {r.verdict.upper():4s}  {r.name:<{width}s}"
            if r.residual is not None:
                row += f"  residual {_fmt(r.residual)}"
            if r.note:
                row += f"  {r.note}"
            rows.append(row.rstrip())
        if self.records:
            rows.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(rows) + "\n"


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return "-"
    if x == 0:
        return "0"
    return f"{x:.3e}"


# ---------------------------------------------------------------------------
# inputs


def _read_expr(path: str):
    from .expr_core import DSLSyntaxError
    from .fixtures import read_fixture
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{path}: no such file")
    try:
        return read_fixture(p)
    except DSLSyntaxError as e:
        raise UsageError(f"{path}: {e}") from None


def _w_number(text: str, n: int) -> float:
    """A weight given as a number or as an expression in n such as -n/2+1."""
    from .coefficients import Coefficient
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return float(Coefficient(text).evaluate(n, 0))
    except Exception:
        raise UsageError(f"cannot read weight {text!r}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_canon(cfg: RunConfig, out) -> int:
    from .algebra import canonical_text
    texts = []
    for path in cfg.inputs:
        _, L = _read_expr(path)
        texts.append(canonical_text(L))
    out.write("\n".join(texts) + "\n")
    return EXIT_OK


def cmd_invariance(cfg: RunConfig, out) -> int:
    from .conformal import BiDegree, WeightMismatchError, check_invariance
    headers, L = _read_expr(cfg.inputs[0])
    bd_text = cfg.bidegree or headers.get("bidegree")
    if not bd_text:
        raise UsageError("no bi-degree: pass --bidegree a,b or add a '# bidegree:' header")
    cfg.bidegree = bd_text
    try:
        bd = BiDegree.parse(bd_text)
    except Exception as e:
        raise UsageError(f"bad bi-degree {bd_text!r}: {e}") from None
    dims = (cfg.n_value,) if cfg.n_value is not None else (5, 6)
    tol = 1e-6 if cfg.tol is None else cfg.tol
    cfg.tol = tol
    cfg.n_resolved = ",".join(map(str, dims))
    w_value = None if cfg.w_value is None else _w_number(cfg.w_value, dims[0])
    try:
        rep = check_invariance(L, bd, n_values=dims, trials=cfg.trials, seed=cfg.seed,
                               tol=tol, w_value=w_value)
    except WeightMismatchError as e:
        raise UsageError(str(e)) from None
    report = Report(cfg)
    report.add("formal", rep.formal, note="" if rep.formal else f"witness {rep.witness}")
    report.add("numeric", rep.numeric_pass, rep.max_residual)
    out.write(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


def _ambient_jets(cfg: RunConfig, n: int, order: int):
    from .jets import sample_metric_jet, sample_scalar_jet
    for trial in range(cfg.trials):
        yield (sample_metric_jet(cfg.seed, n, order, trial=trial),
               sample_scalar_jet(cfg.seed, n, order, trial=trial, stream=2))


def _ambient_table(cfg: RunConfig, report: Report, n: int, keys: Sequence[str]) -> None:
    from .ambient import ambient_curvature_check, fg_expand
    tol = cfg.tol = 1e-7 if cfg.tol is None else cfg.tol
    worst = {}
    for mj, _ in _ambient_jets(cfg, n, 2 * cfg.rho_order + 1):
        A = fg_expand(mj, cfg.rho_order)
        for name, (r, _ok) in ambient_curvature_check(A, tol).items():
            if name in keys or name.replace("_observed", "") in keys:
                worst[name] = max(worst.get(name, 0.0), r)
    for name in sorted(worst, key=lambda x: (keys.index(x.replace("_observed", "")), x)):
        observed = name.endswith("_observed")
        report.add(name, worst[name] < tol, worst[name], info=observed,
                   note="sign convention of this package" if observed else "")


def cmd_ambient(cfg: RunConfig, out) -> int:
    from . import ambient as amb
    n = 5 if cfg.n_value is None else cfg.n_value
    cfg.n_value = n
    report = Report(cfg)
    check = cfg.check
    if check == "gamma":
        _ambient_table(cfg, report, n, ["gamma_abc", "gamma_inf", "gamma_0", "drho_g"])
    elif check == "components":
        _ambient_table(cfg, report, n, ["R_ijk0", "R_ijkl", "R_ijkinf", "R_infijinf"])
    elif check == "harmonic":
        w_text = cfg.w_value = cfg.w_value or "0"
        w = _w_number(w_text, n)
        tol = cfg.tol = 1e-9 if cfg.tol is None else cfg.tol
        worst_fg = worst_ric = worst_h = 0.0
        for mj, f in _ambient_jets(cfg, n, 2 * cfg.rho_order + 2):
            A = amb.fg_expand(mj, cfg.rho_order)
            u = amb.harmonic_extend(A, f, w, cfg.rho_order)
            worst_fg = max(worst_fg, amb.fg_residual(A))
            worst_ric = max(worst_ric, max(amb.ambient_ricci_residual(A).values()))
            worst_h = max(worst_h, amb.harmonic_residual(u))
        report.add("fg_residual", worst_fg < tol, worst_fg)
        report.add("ricci_residual", worst_ric < tol, worst_ric)
        report.add("harmonic_residual", worst_h < tol, worst_h)
    elif check == "gjms":
        import numpy as np
        from .fixtures import fixture_expression, gjms_constants
        tol = cfg.tol = 1e-6 if cfg.tol is None else cfg.tol
        known = gjms_constants()["c"]
        for k, name in ((1, "conformal_laplacian"), (2, "paneitz")):
            if n % 2 == 0 and k > n // 2:
                continue
            r = np.array(amb.gjms_ratios(k, n, fixture_expression(name), cfg.trials, cfg.seed))
            spread = float(np.std(r) / abs(np.mean(r)))
            report.add(f"gjms_k{k}_proportional", spread < tol, spread,
                       note=f"constant {float(np.mean(r)):.12g}")
            gap = abs(float(np.mean(r)) - known[str(k)])
            report.add(f"gjms_k{k}_constant", gap < tol, gap, note=f"fixture {known[str(k)]}")
    elif check == "examples":
        tol = cfg.tol = 1e-6 if cfg.tol is None else cfg.tol
        res = amb.worked_examples(n, cfg.trials, cfg.seed, cfg.rho_order)
        report.add("L1", res["L1"] < tol, res["L1"])
        report.add("Lsharp_printed", res["Lsharp_printed"] < tol, res["Lsharp_printed"])
        report.add("Lsharp_observed", res["Lsharp_observed"] < tol, res["Lsharp_observed"], info=True,
                   note="two signs flipped relative to the printed form")
    else:
        raise UsageError(f"unknown ambient check {check!r}; choose from {', '.join(AMBIENT_CHECKS)}")
    out.write(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_corpus(cfg: RunConfig, out) -> int:
    from .fixtures import CORPUS_DIR, load_corpus, run_case
    from .expr_core import DSLSyntaxError
    d = Path(cfg.inputs[0]) if cfg.inputs else CORPUS_DIR
    if not d.is_dir():
        raise UsageError(f"{d}: not a directory")
    try:
        cases = load_corpus(d)
    except (ValueError, DSLSyntaxError) as e:
        raise UsageError(str(e)) from None
    cfg.tol = 1e-9 if cfg.tol is None else cfg.tol
    report = Report(cfg)
    trials = cfg.trials
    for case in cases:
        res = run_case(case, trials=trials, seed=cfg.seed, tol=cfg.tol)
        note = (f"expect={case.expect} formal={'zero' if res.formal_zero else 'nonzero'}"
                f" numeric={'zero' if res.numeric_zero else 'nonzero'}")
        report.add(case.name, res.as_expected, res.max_relative, note=note)
    report.lines.append(f"cases: {len(cases)}")
    out.write(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------


def _default_seed() -> int:
    raw = os.environ.get("CONFOP_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"CONFOP_SEED must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="dimension (default: 5 and 6 for invariance, 5 for ambient)")
    common.add_argument("--w", help="density weight, a number or an expression in n such as -n/2+1")
    common.add_argument("--seed", type=int, help="base seed (default: $CONFOP_SEED or 0)")
    common.add_argument("--trials", type=int, help="random jets per check (default 10; corpus 100)")
    common.add_argument("--tol", type=float, help="relative tolerance (default depends on the check)")
    common.add_argument("--rho-order", type=int, default=2, help="ambient order in rho (default 2)")
    common.add_argument("--machine", action="store_true", help="line-oriented machine output")

    p = argparse.ArgumentParser(prog="confop", description="Conformal operator toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("canon", parents=[common], help="print the canonical form of DSL files")
    s.add_argument("files", nargs="+")
    s = sub.add_parser("invariance", parents=[common], help="formal and numeric invariance check")
    s.add_argument("file")
    s.add_argument("--bidegree", help="a,b (default: the file's '# bidegree:' header)")
    s = sub.add_parser("ambient", parents=[common], help="ambient metric verifications")
    s.add_argument("check", choices=AMBIENT_CHECKS)
    s = sub.add_parser("corpus", parents=[common], help="formal vs substitution corpus")
    s.add_argument("dir", nargs="?")
    return p


def resolve(args) -> RunConfig:
    inputs: Tuple[str, ...] = ()
    if args.command == "canon":
        inputs = tuple(args.files)
    elif args.command == "invariance":
        inputs = (args.file,)
    elif args.command == "corpus" and args.dir:
        inputs = (args.dir,)
    trials = args.trials if args.trials is not None else (100 if args.command == "corpus" else 10)
    if trials < 1:
        raise UsageError("--trials must be positive")
    return RunConfig(
        command=args.command,
        inputs=inputs,
        n_value=args.n,
        w_value=args.w,
        seed=args.seed if args.seed is not None else _default_seed(),
        trials=trials,
        tol=args.tol,
        rho_order=args.rho_order,
        bidegree=getattr(args, "bidegree", None),
        check=getattr(args, "check", None),
        machine=args.machine,
    )


COMMANDS = {
    "canon": cmd_canon,
    "invariance": cmd_invariance,
    "ambient": cmd_ambient,
    "corpus": cmd_corpus,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    from .ambient import AmbientOrderCapError, AmbientValidityError, ObstructionError, SingularOrderError
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg, out)
    except UsageError as e:
        print(f"confop: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ObstructionError, AmbientOrderCapError, SingularOrderError, AmbientValidityError) as e:
        print(f"confop: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
