"""Command-line interface.

Every subcommand builds a report with ``meta``, ``rows`` and ``summary``.
CSV output holds the rows only, so two runs with the same arguments and seed
produce byte-identical files. JSON output carries the whole report.

Exit codes: 0 success, 1 input error, 2 inequality violation,
3 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from ._validation import substream
from .abstention import build_model, chain_from_model, repeated_protocol_gamble
from .estimation import gamble_mse_experiment, simulate_mle
from .exceptions import NumericalError, ProbMetroError, ScenarioError
from .gamble import NOT_A_BET, GambleSetup, simulate_gamble
from .postselect import CHAIN_SLACK, theorem_chain
from .scenario import BUILTINS, get_scenario, random_instance, save_scenario

DEFAULT_SEED = 7
EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_NUMERICAL = 0, 1, 2, 3
LEMMA_TOL = 1e-7
RELATION_TOL = 1e-8


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_grid(text):
    """Parse ``a..b``, ``a..b:step`` or a comma list into a list of ints."""
    try:
        if ".." in text:
            lo, rest = text.split("..", 1)
            hi, _, step = rest.partition(":")
            lo, hi, step = int(lo), int(hi), int(step or 1)
            if step < 1 or hi < lo:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use a..b, a..b:step or a,b,c") from None


def workers():
    """Worker count from ``QFI_THREADS`` (default 1)."""
    raw = os.environ.get("QFI_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"QFI_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def ordered_map(fn, items):
    """``map`` over a thread pool; results come back in input order."""
    n = workers()
    if n == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- subcommands ---------------------------------------------------------------

def _chain_row(tc, **extra):
    res = tc.lemma_residuals
    row = dict(extra)
    row.update(
        i_rho=tc.i_rho,
        i_sigma_qa=tc.i_sigma_qa,
        i_sigma_qa_check=tc.i_sigma_qa_check,
        p_check=tc.success_prob,
        weighted_conditioned=tc.weighted_conditioned,
        margin_rho_qa=tc.margins[0],
        margin_qa_check=tc.margins[1],
        margin_check_weighted=tc.margins[2],
        lemma_residual_full=res["full"],
        lemma_residual_lumped=res["lumped"],
        lemma_residual_conditioned=res["conditioned"],
        relation_residual=tc.relation_residual,
        ordered_ok=tc.ordered_ok,
    )
    return row


def _chain_failures(row, args):
    bad = []
    if not row["ordered_ok"]:
        bad.append("chain order")
    lemma = max(row["lemma_residual_full"], row["lemma_residual_lumped"], row["lemma_residual_conditioned"])
    if not lemma <= args.lemma_tol:
        bad.append("lemma equality")
    if not row["relation_residual"] <= args.relation_tol:
        bad.append("lemma relation")
    return bad


def run_verify(args):
    if args.random == bool(args.scenario):
        raise InputError("verify needs exactly one of --random or --scenario")
    if args.random:
        if args.instances < 1 or args.dim < 2 or args.outcomes < 1 or args.kraus < 1:
            raise InputError("need --instances >= 1, --dim >= 2, --outcomes >= 1, --kraus >= 1")

        def one(i):
            sc = random_instance(substream(args.seed, i), args.dim, args.outcomes, args.kraus)
            tc = theorem_chain(sc.family, sc.selection, sc.x, slack=args.slack)
            return _chain_row(tc, instance=i, dim=sc.family.dim,
                              outcomes=sc.selection.num_outcomes,
                              favorable=" ".join(map(str, sc.selection.favorable)), x=sc.x)

        rows = ordered_map(one, range(args.instances))
        meta = {"scenario": "random", "scenario_hash": None}
    else:
        sc = get_scenario(args.scenario)
        x = sc.x if args.x is None else args.x
        tc = theorem_chain(sc.family, sc.selection, x, slack=args.slack)
        rows = [_chain_row(tc, instance=0, dim=sc.family.dim, outcomes=sc.selection.num_outcomes,
                           favorable=" ".join(map(str, sc.selection.favorable)), x=x)]
        meta = {"scenario": sc.name, "scenario_hash": sc.digest()}
    failures = []
    for row in rows:
        bad = _chain_failures(row, args)
        if bad:
            failures.append({"instance": row["instance"], "failed": bad,
                             "margins": [row["margin_rho_qa"], row["margin_qa_check"],
                                         row["margin_check_weighted"]]})
    summary = {
        "instances": len(rows),
        "violations": len(failures),
        "failures": failures,
        "worst_margin": min(min(r["margin_rho_qa"], r["margin_qa_check"], r["margin_check_weighted"])
                            for r in rows),
        "worst_lemma_residual": max(max(r["lemma_residual_full"], r["lemma_residual_lumped"],
                                        r["lemma_residual_conditioned"]) for r in rows),
        "worst_relation_residual": max(r["relation_residual"] for r in rows),
    }
    return meta, rows, summary, EXIT_VIOLATION if failures else EXIT_OK


def run_gamble(args):
    if not 0 < args.p <= 1 or args.irho <= 0 or args.isigma <= 0:
        raise InputError("need 0 < --p <= 1 and positive --irho, --isigma")
    if args.reps < 1:
        raise InputError("--reps must be at least 1")

    # keyed by N, so a row does not depend on the rest of the grid
    def one(n):
        setup = GambleSetup(n, args.p, args.irho, args.isigma)
        rep = simulate_gamble(setup, args.reps, args.seed, strict=args.strict, key=(n,))
        bet = rep.status != NOT_A_BET
        return {
            "N": n,
            "p_check": args.p,
            "i_rho": args.irho,
            "i_sigma": args.isigma,
            "mu": rep.mu,
            "delta": rep.delta,
            "status": rep.status,
            "threshold": rep.threshold,
            "standard_bound": rep.standard_bound,
            "tight_bound": rep.tight_bound,
            "exact": rep.exact,
            "empirical": rep.empirical,
            "ci95_low": rep.ci95_low,
            "ci95_high": rep.ci95_high,
            "margin_standard_tight": rep.standard_bound - rep.tight_bound if bet else math.nan,
            "margin_tight_exact": rep.tight_bound - rep.exact if bet else math.nan,
            "margin_tight_ci_low": rep.tight_bound - rep.ci95_low if bet else math.nan,
            "exact_in_ci": rep.ci95_low <= rep.exact <= rep.ci95_high,
        }

    rows = ordered_map(one, args.n)
    bets = [r for r in rows if r["status"] != NOT_A_BET]
    bad = [r["N"] for r in bets
           if r["margin_standard_tight"] < -1e-12 or r["margin_tight_exact"] < -1e-12]
    summary = {
        "points": len(rows),
        "not_a_bet": len(rows) - len(bets),
        "violations": len(bad),
        "violating_N": bad,
        "exact_in_ci_fraction": sum(r["exact_in_ci"] for r in rows) / len(rows),
    }
    return {}, rows, summary, EXIT_VIOLATION if bad else EXIT_OK


def run_abstain(args):
    model = build_model(args.n_qubits, args.purity, args.threshold)
    rows = []
    for s, f in model.sectors:
        rows.append({
            "record": "sector",
            "j": s.j,
            "multiplicity": s.multiplicity,
            "p_j": s.prob,
            "mean_fidelity": f,
            "favorable": s.two_j > model.two_j_star,
        })
    ch = chain_from_model(model)
    rows.append({
        "record": "chain",
        "f_bar": ch.f_bar,
        "f_check": ch.f_check,
        "f_cross": ch.f_cross,
        "p_check": ch.p_check,
        "p_cross": ch.p_cross,
        "guess_term": ch.guess_term,
        "tail": ch.tail,
        "margin_fbar_guess": ch.margins[0],
        "margin_guess_tail": ch.margins[1],
        "margin_norm_fbar_guess": ch.normalized_margins[0],
        "margin_norm_guess_tail": ch.normalized_margins[1],
        "margin_check_cross": ch.f_check - ch.f_cross if ch.p_cross > 0 else math.nan,
        "decomposition_residual": ch.decomposition_residual,
        "ordered_ok": ch.ordered_ok,
    })
    if args.m_reps is not None:
        rep = repeated_protocol_gamble(args.n_qubits, args.purity, args.threshold, args.m_reps,
                                       args.reps, args.seed)
        rows.append({
            "record": "gamble",
            "M": args.m_reps,
            "mu": rep.mu,
            "delta": rep.delta,
            "status": rep.status,
            "threshold": rep.threshold,
            "standard_bound": rep.standard_bound,
            "tight_bound": rep.tight_bound,
            "exact": rep.exact,
            "empirical": rep.empirical,
            "ci95_low": rep.ci95_low,
            "ci95_high": rep.ci95_high,
        })
    summary = {"ordered_ok": ch.ordered_ok, "worst_margin": min(ch.margins + ch.normalized_margins)}
    return {"threshold": model.threshold}, rows, summary, EXIT_OK if ch.ordered_ok else EXIT_VIOLATION


def _report_row(rep, **extra):
    row = dict(extra)
    row.update(
        x_true=rep.x_true,
        N=rep.n_trials,
        reps=rep.repetitions,
        mse=rep.mse,
        crb=rep.crb,
        ratio=rep.ratio,
        ratio_stderr=rep.ratio_stderr,
        margin_mse_crb=rep.mse - rep.crb,
        boundary_fraction=rep.boundary_fraction,
        abstained=rep.abstained,
        flags=";".join(rep.flags),
    )
    return row


def _scenario_for_estimation(args):
    sc = get_scenario(args.scenario)
    x_true = args.x_true if args.x_true is not None else sc.x_true
    if x_true is None:
        raise InputError(f"scenario {sc.name!r} declares no x_true; pass --x-true")
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    return sc, x_true


def run_mle(args):
    sc, x_true = _scenario_for_estimation(args)
    povm = sc.povm or sc.conditional_povm
    if povm is None:
        raise InputError(f"scenario {sc.name!r} declares no measurement")

    def one(n):
        rep = simulate_mle(sc.family, povm, x_true, n, args.reps, args.seed,
                           sc.interval, args.grid_size)
        return _report_row(rep, scenario=sc.name)

    rows = ordered_map(one, args.n)
    summary = {"points": len(rows), "ratios": [r["ratio"] for r in rows]}
    return {"scenario": sc.name, "scenario_hash": sc.digest()}, rows, summary, EXIT_OK


def run_compare(args):
    sc, x_true = _scenario_for_estimation(args)
    if sc.conditional_povm is None:
        raise InputError(f"scenario {sc.name!r} declares no conditional measurement")

    def one(n):
        cmp = gamble_mse_experiment(sc.family, sc.selection, sc.conditional_povm, x_true, n,
                                    args.reps, args.seed, povm=sc.povm,
                                    interval=sc.interval, grid_size=args.grid_size)
        return [
            _report_row(cmp.deterministic, arm="deterministic", p_check=1.0, mse_ratio=math.nan),
            _report_row(cmp.probabilistic, arm="probabilistic", p_check=cmp.success_prob,
                        mse_ratio=cmp.mse_ratio),
        ]

    rows = [r for pair in ordered_map(one, args.n) for r in pair]
    summary = {"points": len(args.n), "mse_ratios": [r["mse_ratio"] for r in rows[1::2]]}
    return {"scenario": sc.name, "scenario_hash": sc.digest()}, rows, summary, EXIT_OK


def run_scenario_list(args):
    rows = []
    for name, factory in BUILTINS.items():
        sc = factory()
        doc = (factory.__doc__ or "").strip().splitlines()
        rows.append({
            "name": name,
            "dim": sc.family.dim,
            "outcomes": sc.selection.num_outcomes,
            "favorable": " ".join(map(str, sc.selection.favorable)),
            "hash": sc.digest(),
            "description": doc[0] if doc else "",
        })
        if args.export:
            os.makedirs(args.export, exist_ok=True)
            save_scenario(sc, os.path.join(args.export, f"{name}.json"))
    return {}, rows, {"count": len(rows)}, EXIT_OK


COMMANDS = {
    "verify": run_verify,
    "gamble": run_gamble,
    "abstain": run_abstain,
    "mle": run_mle,
    "compare": run_compare,
    "scenario-list": run_scenario_list,
}


# -- output --------------------------------------------------------------------

def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def rows_to_csv(rows):
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([format_value(row.get(k)) for k in fields])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def timestamp():
    """UTC time of the run; ``SOURCE_DATE_EPOCH`` pins it for reproducible JSON."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def render(args, meta, rows, summary):
    if args.format == "csv":
        return rows_to_csv(rows)
    report = {
        "meta": {"tool": "probmetro", "version": __version__, "command": args.command,
                 "seed": getattr(args, "seed", None), "timestamp": timestamp(), **meta},
        "rows": rows,
        "summary": summary,
    }
    return json.dumps(_json_safe(report), indent=2) + "\n"


# -- argument parsing ----------------------------------------------------------

def build_parser():
    parser = _Parser(prog="probmetro", description="Post-selected metrology: checks and experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--output", "-o", help="write here instead of stdout")
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                           help=f"master seed (default {DEFAULT_SEED})")

    p = sub.add_parser("verify", help="Fisher-information chain on random instances or a scenario")
    p.add_argument("--random", action="store_true")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--dim", type=int, default=4, help="largest system dimension")
    p.add_argument("--outcomes", type=int, default=3, help="largest number of outcomes")
    p.add_argument("--kraus", type=int, default=2, help="largest Kraus count per outcome")
    p.add_argument("--scenario", help="built-in name or scenario file")
    p.add_argument("--x", type=float, help="override the scenario's parameter value")
    p.add_argument("--slack", type=float, default=CHAIN_SLACK)
    p.add_argument("--lemma-tol", type=float, default=LEMMA_TOL)
    p.add_argument("--relation-tol", type=float, default=RELATION_TOL)
    common(p)

    p = sub.add_parser("gamble", help="Chernoff bounds, exact and simulated tails over N")
    p.add_argument("--p", type=float, required=True, help="success probability")
    p.add_argument("--irho", type=float, required=True)
    p.add_argument("--isigma", type=float, required=True)
    p.add_argument("--n", type=parse_grid, default=parse_grid("10..200"))
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--strict", action="store_true", help="count only strict wins")
    common(p)

    p = sub.add_parser("abstain", help="sector table and fidelity chain for the abstention protocol")
    p.add_argument("--n-qubits", type=int, required=True)
    p.add_argument("--purity", type=float, required=True)
    p.add_argument("--threshold", type=float, required=True, help="j_*; sectors above it are kept")
    p.add_argument("--m-reps", type=int, help="also simulate M repetitions of the protocol")
    p.add_argument("--reps", type=int, default=100_000)
    common(p)

    for name, default, helptext in (("mle", "binomial_phase", "MLE mean-square error against the bound"),
                                    ("compare", "weak_value_2qubit", "deterministic vs post-selected MSE")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", default=default)
        p.add_argument("--n", type=parse_grid, default=parse_grid("100"))
        p.add_argument("--reps", type=int, default=2000)
        p.add_argument("--x-true", type=float)
        p.add_argument("--grid-size", type=int, default=512)
        common(p)

    p = sub.add_parser("scenario-list", help="list built-in scenarios")
    p.add_argument("--export", metavar="DIR", help="also write each scenario as JSON into DIR")
    common(p, seed=False)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        meta, rows, summary, code = COMMANDS[args.command](args)
        text = render(args, meta, rows, summary)
    except ScenarioError as exc:
        print(f"probmetro: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"probmetro: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ProbMetroError, ValueError, OSError) as exc:
        print(f"probmetro: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if code == EXIT_VIOLATION:
        print(f"probmetro: inequality violation: {json.dumps(_json_safe(summary))}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
