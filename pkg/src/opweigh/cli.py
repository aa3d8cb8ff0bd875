"""Command line interface for constrained solves, series, and weighing runs.

Subcommands: solve (balance the unperturbed problem), series (response
series coefficients to CSV), weigh (both scale readings, identity
residuals, coefficient recovery), verify (identity battery on a problem
file, or the built-in closed-form suite when no file is given).

Exit codes: 0 on success, 2 for problem-file or argument errors, 3 for
numerical failures; the originating message goes to stderr.  All output
uses shortest round-trip float formatting, so repeated runs on the same
input are byte-identical.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraint import balance, balance_at, prepare
from .errors import NumericsError, SchemaError
from .families import Problem, load_problem
from .series import perturbation_series
from .spectral import fundamental_eigenpair, gauge_output, harmonic_solve
from .weighing import (
    second_kind_via_exchange,
    weighing_integral,
    weighing_report,
    weight_scale,
)

__all__ = ["RunConfig", "main"]


@dataclass
class RunConfig:
    """Parsed command line options for one run."""

    command: str
    problem_path: str | None = None
    bracket: tuple[float, float] | None = None
    eps_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 11))
    order: int = 8
    quad_tol: float = 1e-9
    noise: float = 0.0
    seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path("."))


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (int, np.integer)) else _fmt(c)
                              for c in row))
    path.write_text("\n".join(lines) + "\n")


def _parse_bracket(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise SchemaError("bracket must be 'lo,hi'")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise SchemaError(f"bracket must be numeric: {exc}") from exc
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise SchemaError("bracket must satisfy lo < hi")
    return lo, hi


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise SchemaError("eps grid must be 'start:stop:count'")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise SchemaError(f"eps grid must be numeric: {exc}") from exc
    if n < 1:
        raise SchemaError("eps grid count must be positive")
    return np.linspace(a, b, n)


def _load(cfg: RunConfig) -> Problem:
    prob = load_problem(cfg.problem_path)
    if cfg.bracket is not None:
        prob.bracket = cfg.bracket
    return prob


def cmd_solve(cfg: RunConfig) -> int:
    prob = _load(cfg)
    bp = balance(prob.t2.at_eps(0.0), prob.gauge, prob.bracket)
    v = prob.t2.at_eps(0.0)(bp.z_bal)
    print(f"z_bal={_fmt(bp.z_bal)}")
    print(f"residual={_fmt(bp.residual)}")
    print(f"R={_fmt(bp.pair.gauge)}")
    try:
        sd = fundamental_eigenpair(v.L)
        phit = harmonic_solve(v.L, sd, -v.Q)
        omega = float(v.Qdag @ phit) / bp.pair.gauge
        print(f"sigma={_fmt(sd.sigma)}")
        print(f"gap={_fmt(sd.gap)}")
        print(f"omega={_fmt(omega)}")
    except NumericsError:
        print("sigma=nan")
        print("gap=nan")
        print("omega=nan")
    print("flux=" + ",".join(_fmt(c) for c in bp.pair.flux))
    print("adjoint=" + ",".join(_fmt(c) for c in bp.pair.adjoint))
    return 0


def cmd_series(cfg: RunConfig) -> int:
    prob = _load(cfg)
    prep = prepare(prob.t2, prob.gauge, prob.bracket)
    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, cfg.order)

    dim = bundle.flux.dim
    header = (["n", "z_n"]
              + [f"flux_{i}" for i in range(dim)]
              + [f"adjoint_{i}" for i in range(dim)])
    rows = []
    for n in range(cfg.order + 1):
        z_n = prep.raw_z0 if n == 0 else float(bundle.z.coeffs[n])
        rows.append([n, z_n, *bundle.flux.coeffs[n], *bundle.adjoint.coeffs[n]])
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "series.csv"
    _write_csv(out, header, rows)

    print(f"order={cfg.order}")
    print(f"z_bal={_fmt(prep.raw_z0)}")
    print(f"radius_estimate={_fmt(bundle.radius_estimate())}")
    print(f"adjoint_gap={_fmt(bundle.z_adjoint_gap)}")
    print(f"wrote {out}")
    return 0


def cmd_weigh(cfg: RunConfig) -> int:
    prob = _load(cfg)
    prep = prepare(prob.t2, prob.gauge, prob.bracket)
    rep = weighing_report(prep, cfg.eps_grid, order=cfg.order,
                          quad_tol=cfg.quad_tol, noise=cfg.noise, seed=cfg.seed)

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    report_path = cfg.output_dir / "weighing_report.csv"
    _write_csv(report_path,
               ["eps", "z_bal", "Z1_series", "Z2_integral", "balance_residual"],
               [[e, zb, z1, z2, r] for e, zb, z1, z2, r in
                zip(rep.eps, rep.z_bal, rep.z1, rep.z2, rep.balance_residual)])

    coeff_path = cfg.output_dir / "coefficients.csv"
    n_rec = len(rep.recovered.coeffs)
    _write_csv(coeff_path,
               ["n", "series_value", "recovered_value", "abs_error"],
               [[n, rep.weight.coeffs[n], rep.recovered.coeffs[n],
                 abs(rep.weight.coeffs[n] - rep.recovered.coeffs[n])]
                for n in range(n_rec)])

    print(f"order={cfg.order}")
    print(f"samples={len(rep.eps)}")
    print(f"max_balance_residual={_fmt(np.max(np.abs(rep.balance_residual)))}")
    print(f"recovery_cond={_fmt(rep.recovered.cond)}")
    print(f"recovery_basis={'chebyshev' if rep.recovered.chebyshev else 'monomial'}")
    print(f"noise={_fmt(rep.noise)}")
    print(f"seed={rep.seed}")
    print(f"wrote {report_path}")
    print(f"wrote {coeff_path}")
    return 0


def _run_checks(checks: list[tuple[str, float, float]]) -> int:
    """Print one pass/fail line per check; return count of failures.

    Each check is (name, error, tolerance).
    """
    failures = 0
    for name, err, tol in checks:
        ok = err <= tol
        if not ok:
            failures += 1
        print(f"{'PASS' if ok else 'FAIL'} {name}: error {_fmt(err)} tolerance {_fmt(tol)}")
    return failures


def _verify_problem(cfg: RunConfig) -> int:
    prob = _load(cfg)
    prep = prepare(prob.t2, prob.gauge, prob.bracket)
    checks: list[tuple[str, float, float]] = []

    checks.append(("balance residual", prep.bp0.residual, 1e-10))

    pair = prep.bp0.pair
    v0 = prep.t2.at_eps(0.0)(0.0)
    recip = abs(pair.gauge - float(pair.adjoint @ v0.Q))
    checks.append(("reciprocity", recip / max(abs(pair.gauge), 1.0), 1e-10))

    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, min(cfg.order, 6))
    scale = max(1.0, float(np.max(np.abs(bundle.z.coeffs))))
    checks.append(("adjoint recursion agreement", bundle.z_adjoint_gap / scale, 1e-8))

    ws = weight_scale(prep.t2.base, prep.t2.pert, prep.bp0, cfg.order)
    eps_probe = 0.05
    z2 = weighing_integral(prep, eps_probe, cfg.quad_tol)
    checks.append(("balance identity at eps=0.05",
                   abs(ws.first_kind(eps_probe) + z2), 1e-7))

    try:
        ws_ex = second_kind_via_exchange(prep, cfg.order)
        zb = balance_at(prep, eps_probe).z_bal
        checks.append(("exchange identity at eps=0.05",
                       abs(ws_ex.first_kind(zb) - z2), 1e-7))
    except NumericsError:
        print("SKIP exchange identity: control dependence not degree-1")

    failures = _run_checks(checks)
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return 0 if failures == 0 else 3


def _verify_builtin(cfg: RunConfig) -> int:
    from . import oracles

    checks: list[tuple[str, float, float]] = []

    t2, gauge, bracket = oracles.worked_twoD_problem()
    prep = prepare(t2, gauge, bracket)
    orc = oracles.twoD_oracle(oracles.WORKED_B, oracles.WORKED_C,
                              oracles.WORKED_Q, oracles.WORKED_QDAG)
    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, 8)
    err_flux = max(float(np.max(np.abs(bundle.flux.coeffs[p] - orc.flux_coeff(p))))
                   for p in range(1, 9))
    checks.append(("worked instance flux coefficients", err_flux, 1e-10))
    checks.append(("worked instance balancing slope",
                   abs(float(bundle.z.coeffs[1]) - orc.constants.alpha2), 1e-10))

    ws = weight_scale(prep.t2.base, prep.t2.pert, prep.bp0, 24)
    err_z1 = max(abs(ws.first_kind(e) - math.log1p(-e / 2))
                 for e in np.linspace(0.1, 0.9, 9))
    checks.append(("worked instance first-kind law", err_z1, 1e-7))

    z2 = weighing_integral(prep, 1.0, cfg.quad_tol)
    checks.append(("worked instance second-kind reading",
                   abs(z2 - math.log(2.0)), 1e-7))

    ws_ex = second_kind_via_exchange(prep, 24)
    zb = balance_at(prep, 1.0).z_bal
    checks.append(("worked instance exchange identity",
                   abs(ws_ex.first_kind(zb) - z2), 1e-7))

    t1, g1 = oracles.oneD_problem(2.0, 1.0, 3.0, 1.0)
    prep1 = prepare(t1, g1, (-3.0, -0.6))
    orc1 = oracles.oneD_oracle(2.0, 1.0, 3.0, 1.0, 0.3)
    checks.append(("one-dimensional balancing value",
                   abs(balance_at(prep1, 0.3).z_bal - orc1.z_bal), 1e-12))
    ws1 = weight_scale(prep1.t2.base, prep1.t2.pert, prep1.bp0, 6)
    checks.append(("one-dimensional first-kind reading",
                   abs(ws1.first_kind(0.3) - orc1.Z1), 1e-12))

    failures = _run_checks(checks)
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return 0 if failures == 0 else 3


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.problem_path is None:
        return _verify_builtin(cfg)
    return _verify_problem(cfg)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opweigh",
        description="Constrained solves, response series, and perturbation weighing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, problem_required: bool = True):
        if problem_required:
            p.add_argument("problem", help="problem JSON file")
        else:
            p.add_argument("problem", nargs="?", default=None, help="problem JSON file")
        p.add_argument("--bracket", default=None, metavar="LO,HI",
                       help="override the control bracket")
        p.add_argument("--order", type=int, default=8, metavar="N",
                       help="series truncation order (default 8)")
        p.add_argument("--quad-tol", type=float, default=1e-9, metavar="TOL",
                       help="quadrature doubling tolerance (default 1e-9)")
        p.add_argument("--output-dir", default=".", metavar="DIR",
                       help="directory for CSV outputs (default .)")

    p_solve = sub.add_parser("solve", help="balance the unperturbed problem")
    add_common(p_solve)

    p_series = sub.add_parser("series", help="response series coefficients to CSV")
    add_common(p_series)

    p_weigh = sub.add_parser("weigh", help="scale readings, residuals, recovery")
    add_common(p_weigh)
    p_weigh.add_argument("--eps-grid", default="0:1:11", metavar="A:B:N",
                         help="exciting variable grid (default 0:1:11)")
    p_weigh.add_argument("--noise", type=float, default=0.0, metavar="SIGMA",
                         help="uniform noise half-width on readings (default 0)")
    p_weigh.add_argument("--seed", type=int, default=0, metavar="SEED",
                         help="noise seed (default 0)")

    p_verify = sub.add_parser("verify", help="identity battery (built-in suite "
                                             "when no problem file is given)")
    add_common(p_verify, problem_required=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(
            command=args.command,
            problem_path=args.problem,
            bracket=_parse_bracket(args.bracket) if args.bracket else None,
            order=args.order,
            quad_tol=args.quad_tol,
            output_dir=Path(args.output_dir),
        )
        if args.command == "weigh":
            cfg.eps_grid = _parse_grid(args.eps_grid)
            cfg.noise = args.noise
            cfg.seed = args.seed
        if cfg.order < 0:
            raise SchemaError("order must be nonnegative")

        handler = {"solve": cmd_solve, "series": cmd_series,
                   "weigh": cmd_weigh, "verify": cmd_verify}[cfg.command]
        return handler(cfg)
    except SchemaError as exc:
        print(f"error[schema]: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error[numerics]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
