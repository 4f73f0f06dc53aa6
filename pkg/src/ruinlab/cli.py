"""``ruinlab`` command line: analyze, ruin, deficit, simulate, verify.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 internal numeric failure.
Every report embeds a run manifest; equal manifests give byte-identical output.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import claims_moments, total_claim_pmf
from .counting import cluster_total, cluster_variance_as_printed, counts_joint_pmf, counts_moments
from .model import (
    ModelValidationError,
    Pmf,
    load_model,
    model_summary,
    model_to_dict,
    per_event_claim_law,
    per_period_step_law,
)
from .ruin import (
    DEFAULT_EPS,
    NetProfitError,
    adjustment_coefficient,
    beekman_survival,
    deficit_laws,
    geometric_representation,
    representation_as_printed,
)
from .simulate import SimConfig, equivalence_report, estimate_ruin, sample_paths, thinning_mc_check
from .verify import run_checks

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def _manifest(args, params: dict) -> dict:
    digest = hashlib.sha256(Path(args.model).read_bytes()).hexdigest()
    return {
        "tool": "ruinlab",
        "version": __version__,
        "subcommand": args.command,
        "parameters": params,
        "model_digest": f"sha256:{digest}",
        "seed": getattr(args, "seed", None),
    }


def _csv(manifest: dict, header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(_clean(manifest), separators=(",", ":")) + "\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue()


def _emit(text: str, out: str | None, stdout):
    if out:
        Path(out).write_text(text)
    else:
        stdout.write(text)


def _pmf_rows(pmf: Pmf):
    return [(int(k), float(w)) for k, w in zip(pmf.support, pmf.weights)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_analyze(args, stdout) -> int:
    model = load_model(args.model)
    if args.echo:
        _emit(json.dumps(model_to_dict(model), indent=2) + "\n", args.out, stdout)
        return EXIT_OK
    params = {"t": args.t, "claims": args.claims, "format": args.format}
    manifest = _manifest(args, params)
    law = counts_joint_pmf(model, args.t)
    moments = counts_moments(model, args.t)
    cluster = cluster_total(model, args.t)
    summary = model_summary(model)
    report = {
        "manifest": manifest,
        "model": model_to_dict(model),
        "summary": summary.to_dict(),
        "per_event_claim_law": per_event_claim_law(model).to_dict(),
        "per_period_step_law": per_period_step_law(model).to_dict(),
        "counts_moments": moments.to_dict(),
        "cluster_total": {
            "pmf": cluster.pmf.to_dict(),
            "mean": cluster.mean,
            "reconciled": {"var": cluster.var},
            "paper_printed": {"var": cluster_variance_as_printed(model, args.t)},
        },
    }
    counts_csv = _csv(manifest, ["m1", "m2", "prob"], law.rows())
    claims_csv = None
    if args.claims:
        total = total_claim_pmf(model, args.t)
        report["total_claim_pmf"] = total.to_dict()
        report["claims_moments"] = claims_moments(model, args.t).to_dict()
        claims_csv = _csv(manifest, ["s", "prob"], _pmf_rows(total))

    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "counts_joint.csv").write_text(counts_csv)
        (out / "analysis.json").write_text(dumps(report))
        if claims_csv:
            (out / "total_claim_pmf.csv").write_text(claims_csv)
        return EXIT_OK
    if args.format == "csv":
        _emit(counts_csv + ("\n" + claims_csv if claims_csv else ""), args.out, stdout)
    else:
        report["counts_joint"] = [list(r) for r in law.rows()]
        _emit(dumps(report), args.out, stdout)
    return EXIT_OK


def cmd_ruin(args, stdout) -> int:
    model = load_model(args.model)
    if args.eps <= 0:
        raise ValueError("--eps must be > 0")
    curve = beekman_survival(model, args.u_max, args.eps)
    manifest = _manifest(args, {"u_max": args.u_max, "eps": args.eps, "format": args.format})
    rows = list(curve.rows())
    if args.format == "csv":
        header = ["u", "delta", "psi", "lundberg_bound", "tail_bound"]
        _emit(_csv(manifest, header, [[r[h] for h in header] for r in rows]), args.out, stdout)
        return EXIT_OK
    adj = adjustment_coefficient(model)
    reps = {}
    for variant in ("A", "B"):
        try:
            g = geometric_representation(model, variant)
            reps[variant] = {"theta": g.theta, "summand": g.summand.to_dict()}
        except ValueError as exc:
            reps[variant] = {"unavailable": str(exc)}
    report = {
        "manifest": manifest,
        "series_order": curve.order,
        "theta": curve.theta,
        "adjustment_coefficient": None if adj is None else adj.to_dict(),
        "curve": rows,
        "reconciled": {"geometric_representations": reps},
        "paper_printed": representation_as_printed(model),
    }
    _emit(dumps(report), args.out, stdout)
    return EXIT_OK


def cmd_deficit(args, stdout) -> int:
    model = load_model(args.model)
    report = deficit_laws(model, args.r_max)
    out = {"manifest": _manifest(args, {"r_max": args.r_max}), **report.to_dict()}
    _emit(dumps(out), args.out, stdout)
    return EXIT_OK


def cmd_simulate(args, stdout) -> int:
    model = load_model(args.model)
    cfg = SimConfig(seed=args.seed, n_paths=args.paths, horizon=args.horizon, u=args.u)
    params = {"paths": args.paths, "horizon": args.horizon, "u": args.u, "experiment": args.experiment}
    if args.experiment in ("counts", "claims", "paths"):
        summary = sample_paths(model, cfg)
    elif args.experiment == "equivalence":
        summary = equivalence_report(model, args.horizon, cfg)
    elif args.experiment == "ruin":
        summary = estimate_ruin(model, cfg)
    else:
        params.update({"pG": args.pG, "c": args.c})
        xlaw = per_event_claim_law(model)
        summary = thinning_mc_check(xlaw, args.pG, args.c, cfg)
    manifest = _manifest(args, params)
    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, table in summary.tables.items():
            arr = np.asarray(table)
            if arr.ndim == 1:
                rows = [(i, int(v)) for i, v in enumerate(arr)]
                text = _csv(manifest, ["value", "count"], rows)
            else:
                rows = [(i, j, int(arr[i, j])) for i in range(arr.shape[0]) for j in range(arr.shape[1])]
                text = _csv(manifest, ["a", "b", "count"], rows)
            (out / f"{name}.csv").write_text(text)
    _emit(dumps({"manifest": manifest, **summary.to_dict()}), args.out, stdout)
    return EXIT_OK


def cmd_verify(args, stdout) -> int:
    model = load_model(args.model)
    checks = run_checks(model, seed=args.seed, paths=args.paths)
    passed = all(c["passed"] for c in checks)
    report = {
        "manifest": _manifest(args, {"paths": args.paths}),
        "passed": passed,
        "checks": checks,
    }
    _emit(dumps(report), args.out, stdout)
    return EXIT_OK if passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ruinlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ruinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, formats=True):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--out", help="write the report here instead of stdout")
        if formats:
            p.add_argument("--format", choices=["csv", "json"], default="json")

    p = sub.add_parser("analyze", help="counting and aggregate-claim laws")
    common(p)
    p.add_argument("--t", type=int, default=1, help="horizon in periods")
    p.add_argument("--claims", action="store_true", help="include the total-claim law S(t)")
    p.add_argument("--echo", action="store_true", help="print the parsed model and exit")
    p.add_argument("--out-dir", help="write counts_joint.csv, analysis.json (and total_claim_pmf.csv)")

    p = sub.add_parser("ruin", help="survival curve and Lundberg bound")
    common(p)
    p.set_defaults(format="csv")
    p.add_argument("--u-max", type=int, default=20)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)

    p = sub.add_parser("deficit", help="deficit-at-ruin laws at zero capital")
    common(p, formats=False)
    p.add_argument("--r-max", type=int, default=None)

    p = sub.add_parser("simulate", help="seeded Monte Carlo experiments")
    common(p, formats=False)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--u", type=int, default=0)
    p.add_argument(
        "--experiment", choices=["counts", "claims", "equivalence", "ruin", "thinning"], default="counts"
    )
    p.add_argument("--pG", type=float, default=0.5, help="thinning experiment: base continuation")
    p.add_argument("--c", type=float, default=1.5, help="thinning experiment: continuation factor")
    p.add_argument("--csv-dir", help="also write histogram tables as CSV files here")

    p = sub.add_parser("verify", help="run the cross-module consistency suite")
    common(p, formats=False)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--paths", type=int, default=200_000)
    return parser


COMMANDS = {
    "analyze": cmd_analyze,
    "ruin": cmd_ruin,
    "deficit": cmd_deficit,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        stderr.write(f"{exc}\n")
        return EXIT_INPUT
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, stdout)
    except (ModelValidationError, NetProfitError, FileNotFoundError, ValueError) as exc:
        problems = getattr(exc, "problems", None) or [str(exc)]
        for line in problems:
            stderr.write(f"ruinlab: invalid input: {line}\n")
        return EXIT_INPUT
    except (ArithmeticError, RuntimeError) as exc:
        stderr.write(f"ruinlab: numeric failure: {exc}\n")
        return EXIT_NUMERIC


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
