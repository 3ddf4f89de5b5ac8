"""Command-line interface: ``ksumwalk {simulate,sigma2,oracle,verify}``.

Exit codes: 0 success / all hard checks pass, 1 a hard check failed,
2 invalid parameters, 3 computational budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import secrets
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import __version__, mc, oracle
from .closed_form import sigma2_elephant, sigma2_ksum, sigma2_minimal, sigma2_stationary
from .model import (
    Elephant,
    InvalidParameterError,
    KSum,
    Minimal,
    canonical_params,
    center_of_mass,
    simulate_path,
)
from .rng import PathStream

EXIT_OK, EXIT_FAIL, EXIT_PARAMS, EXIT_BUDGET = 0, 1, 2, 3
SUITES = ("clt", "fclt", "com", "lil", "martingale", "mapping")
MAX_RAW_PATHS = 100


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    params: dict
    canonical: dict
    master_seed: Optional[int]
    version: str = __version__
    wall_clock: Optional[float] = None
    verdicts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["wall_clock"] is None:
            del d["wall_clock"]
        if not d["verdicts"]:
            del d["verdicts"]
        return d


def _model_from_args(args):
    if args.model == "ksum":
        return KSum(args.p, args.theta, args.k)
    if args.model == "mrw":
        if args.r is None or args.q is None:
            raise UsageError("--model mrw requires --r and --q")
        return Minimal(args.r, args.q, args.k)
    if args.alpha is None:
        raise UsageError("--model erw requires --alpha")
    return Elephant(args.alpha, args.k)


def _model_flags(args) -> dict:
    if args.model == "ksum":
        return {"model": "ksum", "p": args.p, "theta": args.theta, "k": args.k}
    if args.model == "mrw":
        return {"model": "mrw", "r": args.r, "q": args.q, "k": args.k}
    return {"model": "erw", "alpha": args.alpha, "k": args.k}


def _manifest(args, extra: Optional[dict] = None, seed=None) -> RunManifest:
    params = _model_flags(args)
    params.update(extra or {})
    cp = canonical_params(_model_from_args(args))
    return RunManifest(args.command, params, {"p": cp.p, "theta": cp.theta, "k": cp.k}, seed)


def _seed(args) -> int:
    return secrets.randbits(64) if args.seed is None else args.seed


def _emit(obj, out) -> None:
    out.write(json.dumps(obj) + "\n")


def cmd_simulate(args, out) -> int:
    model = _model_from_args(args)
    params = canonical_params(model)
    seed = _seed(args)
    manifest = _manifest(args, {"n": args.n, "paths": args.paths}, seed)
    elephant = isinstance(model, Elephant)
    if args.paths <= MAX_RAW_PATHS:
        rows = []
        for j in range(args.paths):
            path = simulate_path(params, args.n, PathStream(seed, j))
            steps = (2 * path.outcomes.astype(int) - 1) if elephant else path.outcomes.astype(int)
            final = int(path.elephant_positions()[-1]) if elephant else int(path.prefix_sums[-1])
            rows.append(
                {
                    "index": j,
                    "outcomes": steps.tolist(),
                    "final": final,
                    "center_of_mass": center_of_mass(path),
                }
            )
        if args.out == "csv":
            writer = csv.writer(out, lineterminator="\r\n")
            writer.writerow(["path", "outcomes", "final", "center_of_mass"])
            for r in rows:
                writer.writerow([r["index"], " ".join(map(str, r["outcomes"])), r["final"], repr(r["center_of_mass"])])
        else:
            _emit({"type": "paths", "manifest": manifest.to_dict(), "paths": rows}, out)
        return EXIT_OK
    config = mc.SimulationConfig(args.paths, args.n, seed, model=model, grid=(1.0,), threads=args.threads)
    stats = mc.run_batch(config)
    columns = {}
    for i, name in enumerate(stats.names):
        columns[name] = {
            "mean": float(stats.mean[i]),
            "variance": float(stats.variance()[i]) if stats.count > 1 else None,
            "skewness": float(stats.skewness()[i]) if stats.count > 1 else None,
            "excess_kurtosis": float(stats.excess_kurtosis()[i]) if stats.count > 1 else None,
        }
    if args.out == "csv":
        writer = csv.writer(out, lineterminator="\r\n")
        writer.writerow(["statistic", "count", "mean", "variance", "skewness", "excess_kurtosis"])
        for name, c in columns.items():
            writer.writerow([name, stats.count] + [repr(c[k]) for k in ("mean", "variance", "skewness", "excess_kurtosis")])
    else:
        _emit(
            {"type": "summary_stats", "manifest": manifest.to_dict(), "count": stats.count, "columns": columns},
            out,
        )
    return EXIT_OK


def cmd_sigma2(args, out) -> int:
    model = _model_from_args(args)
    cp = canonical_params(model)
    record = {"type": "sigma2", "model": args.model}
    if isinstance(model, Elephant):
        res = sigma2_elephant(model.alpha, model.k)
        record.update(
            sigma2=res.sigma2,
            branch=res.branch,
            inputs=res.inputs,
            canonical=res.sigma2,
            printed=res.printed,
            discrepancy=res.discrepancy,
        )
        stationary = 4.0 * sigma2_stationary(cp.p, cp.theta, cp.k)
    else:
        res = sigma2_minimal(model.r, model.q, model.k) if isinstance(model, Minimal) else sigma2_ksum(model.p, model.theta, model.k)
        record.update(sigma2=res.sigma2, branch=res.branch, inputs=res.inputs)
        stationary = sigma2_stationary(cp.p, cp.theta, cp.k)
    record["canonical_params"] = {"p": cp.p, "theta": cp.theta, "k": cp.k}
    record["stationary_sigma2"] = stationary
    _emit(record, out)
    return EXIT_OK


def cmd_oracle(args, out) -> int:
    model = _model_from_args(args)
    params = canonical_params(model)
    if args.trajectory is not None:
        traj = oracle.variance_trajectory(params, args.trajectory)
        _emit({"type": "trajectory", "n_max": args.trajectory, "var_over_n": traj.tolist()}, out)
        return EXIT_OK
    oracle.check_budget(params.k, args.n)
    if isinstance(model, Minimal):
        pmf = oracle.exact_pmf_minimal(model.r, model.q, model.k, args.n)
    else:
        pmf = oracle.exact_pmf(params, args.n)
    if args.moments:
        mean, var = oracle.exact_moments(pmf)
        _emit({"type": "moments", "n": args.n, "mean": mean, "variance": var}, out)
        return EXIT_OK
    writer = csv.writer(out, lineterminator="\r\n")
    writer.writerow(["s", "prob"])
    for s, prob in enumerate(pmf.probs):
        writer.writerow([s, repr(float(prob))])
    return EXIT_OK


def _grid(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"--grid must be a comma-separated list of times, got {text!r}")


def cmd_verify(args, out) -> int:
    t_start = time.perf_counter()
    model = _model_from_args(args)
    seed = _seed(args)
    suites = SUITES if args.suite == "all" else (args.suite,)
    needs_mc = any(s in suites for s in ("clt", "fclt", "com", "lil", "martingale"))
    config = mc.SimulationConfig(
        paths=args.paths,
        n=args.n,
        master_seed=seed,
        model=model,
        grid=_grid(args.grid),
        sigma_level=args.sigma_level,
        ks_crit=args.ks_crit,
        ks_alpha=args.ks_alpha,
        threads=args.threads,
        lil="lil" in suites and args.n >= args.lil_n0,
        lil_n0=args.lil_n0,
    )
    n_exact = min(args.n, args.exact_n)
    samples = mc.simulate_statistics(config) if needs_mc else None
    reports = []
    for suite in suites:
        if suite == "clt":
            reports.append(mc.clt_report(config, samples))
        elif suite == "fclt":
            reports.append(mc.fclt_report(config, samples))
        elif suite == "com":
            reports.append(mc.com_report(config, samples))
        elif suite == "lil":
            if args.n < args.lil_n0:
                if args.suite == "lil":
                    raise UsageError(f"the LIL check needs --n >= {args.lil_n0}")
                continue
            reports.append(mc.lil_report(config, samples))
        elif suite == "martingale":
            reports.append(mc.martingale_report(config, samples, n_exact))
        elif suite == "mapping":
            reports.append(mc.mapping_report(config, n_exact))
    failed = warnings = total = 0
    verdicts = {}
    for report in reports:
        for record in report.records():
            if args.timing:
                record["runtime"] = report.runtime
            _emit(record, out)
        total += len(report.checks)
        failed += sum(1 for c in report.checks if c.hard and c.verdict != "pass")
        warnings += len(report.warnings)
        verdicts[report.suite] = "pass" if report.passed else "fail"
    manifest = _manifest(
        args,
        {
            "suite": args.suite,
            "n": args.n,
            "paths": args.paths,
            "grid": list(config.grid),
            "sigma_level": args.sigma_level,
            "ks_crit": args.ks_crit,
            "ks_alpha": args.ks_alpha,
            "exact_n": n_exact,
            "lil_n0": args.lil_n0,
        },
        seed,
    )
    manifest.verdicts = verdicts
    if args.timing:
        manifest.wall_clock = time.perf_counter() - t_start
    passed = failed == 0
    _emit(
        {
            "type": "summary",
            "passed": passed,
            "checks": total,
            "failed": failed,
            "warnings": warnings,
            "manifest": manifest.to_dict(),
        },
        out,
    )
    return EXIT_OK if passed else EXIT_FAIL


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("ksum", "mrw", "erw"), default="ksum")
    p.add_argument("--p", type=float, default=0.5, help="success probability (ksum)")
    p.add_argument("--theta", type=float, default=0.0, help="memory weight (ksum)")
    p.add_argument("--k", type=int, default=1, help="memory length")
    p.add_argument("--r", type=float, help="repeat probability after a success (mrw)")
    p.add_argument("--q", type=float, help="success probability after a failure (mrw)")
    p.add_argument("--alpha", type=float, help="repeat probability (erw)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksumwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate paths or summary statistics")
    _add_model_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("sigma2", help="closed-form asymptotic variance")
    _add_model_flags(p)

    p = sub.add_parser("oracle", help="exact pmf, moments or variance trajectory")
    _add_model_flags(p)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--moments", action="store_true")
    p.add_argument("--trajectory", type=int, metavar="N_MAX")

    p = sub.add_parser("verify", help="run verification suites (JSON lines)")
    _add_model_flags(p)
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", default=",".join(f"{t:g}" for t in mc.DEFAULT_GRID))
    p.add_argument("--sigma-level", type=float, default=4.0)
    p.add_argument("--ks-crit", type=float)
    p.add_argument("--ks-alpha", type=float, default=0.01)
    p.add_argument("--exact-n", type=int, default=200, help="horizon of the exact-oracle checks")
    p.add_argument("--lil-n0", type=int, default=16)
    p.add_argument("--threads", type=int)
    p.add_argument("--timing", action="store_true", help="include runtimes (breaks byte reproducibility)")
    return parser


COMMANDS = {"simulate": cmd_simulate, "sigma2": cmd_sigma2, "oracle": cmd_oracle, "verify": cmd_verify}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except (oracle.BudgetExceededError, mc.ResourceBudgetError) as exc:
        print(f"ksumwalk: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InvalidParameterError, UsageError, ValueError) as exc:
        print(f"ksumwalk: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS


if __name__ == "__main__":
    sys.exit(main())
