"""Command-line front end.

Machine-readable JSON goes to stdout, a one-line human summary to stderr, so
reports pipe straight into analysis scripts.  Exit codes are a stable
contract: 0 ok, 1 usage or I/O, 2 infeasible budget/caps, 3 code
construction failed, 4 not decodable, 5 property violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .gf import FieldSpec
from .model import (
    CutSetOracle,
    InfeasibleInstance,
    InstanceError,
    PRESETS,
    ProblemInstance,
    generate_instance,
    load_instance,
    preset_instance,
)
from .netcode import (
    ConstructionFailed,
    InfeasibleRates,
    NotDecodable,
    RngSpec,
    construct_code,
    decode,
    load_schedule,
    randomized_alloc,
    save_schedule,
    transmit_values,
    verify_decodable,
)
from .ratealloc import (
    FairCost,
    Infeasible,
    LinearCost,
    TableCost,
    eval_h,
    min_cost,
    min_sum_rate,
    sfm_minimizer,
    subgradient_minimizer,
)
from .validate import (
    run_properties,
    run_reference_examples,
    run_rlnc_stats,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_CONSTRUCTION = 3
EXIT_DECODE = 4
EXIT_PROPERTY = 5


def _emit(report: dict, human: str) -> None:
    json.dump(report, sys.stdout, indent=1, default=str)
    sys.stdout.write("\n")
    print(human, file=sys.stderr)


def _report(command: str, payload: dict, *, digest=None, seed=None, t0=None) -> dict:
    report = {"command": command, "payload": payload}
    if digest is not None:
        report["instance_digest"] = digest
    if seed is not None:
        report["seed"] = seed
    if t0 is not None:
        report["elapsed_s"] = round(time.perf_counter() - t0, 6)
    return report


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load(path: str) -> ProblemInstance:
    try:
        return load_instance(path)
    except OSError as exc:
        raise SystemExit(f"cannot read instance: {exc}")
    except InstanceError as exc:
        raise SystemExit(f"bad instance file: {exc}")


def _cost_from_args(args, m: int):
    if args.cost == "linear":
        if args.weights is None:
            raise SystemExit("--cost linear requires --weights")
        if len(args.weights) != m:
            raise SystemExit(f"--weights must list {m} values")
        return LinearCost(args.weights)
    if args.cost == "fair":
        return FairCost()
    if args.table is None:
        raise SystemExit("--cost table requires --table FILE")
    try:
        with open(args.table, "r", encoding="utf-8") as f:
            tables = json.load(f)
        return TableCost(tables)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"bad table file: {exc}")


def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    try:
        if args.preset:
            inst = preset_instance(args.preset, q=args.q)
        else:
            if args.m is None or args.n is None:
                raise SystemExit("either --preset or both --m and --n are required")
            inst = generate_instance(
                args.kind, args.m, args.n, FieldSpec(args.q), coverage=args.rows, seed=args.seed
            )
    except (InfeasibleInstance, InstanceError, ValueError) as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    doc = inst.to_json_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")
    else:
        json.dump(doc, sys.stdout, indent=1)
        sys.stdout.write("\n")
    print(
        f"instance {inst.digest()}: m={inst.m} N={inst.n_packets} q={inst.field.p} "
        f"({time.perf_counter() - t0:.3f}s)",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    inst = _load(args.instance)
    oracle = CutSetOracle(inst)
    cost = _cost_from_args(args, inst.m)
    caps = args.caps
    if caps is not None and len(caps) != inst.m:
        raise SystemExit(f"--caps must list {inst.m} values")
    if args.backend == "subgradient":
        minimizer = subgradient_minimizer()
    else:
        minimizer = sfm_minimizer

    try:
        if args.backend == "randomized":
            payload = _solve_randomized(oracle, cost, caps, args)
        elif args.beta is not None:
            value, alloc = eval_h(oracle, args.beta, cost, caps, minimizer)
            payload = {
                "feasible": True,
                "beta": args.beta,
                "rates": list(alloc.rates),
                "cost": value,
            }
        else:
            got = min_cost(oracle, cost, caps, minimizer)
            payload = {
                "feasible": True,
                "beta": got.beta,
                "rates": list(got.allocation.rates),
                "cost": got.value,
                "min_sum_rate": min_sum_rate(oracle, caps, minimizer),
            }
    except Infeasible as exc:
        report = _report(
            "solve",
            {
                "feasible": False,
                "error": "infeasible",
                "beta": exc.beta,
                "achieved_sum": exc.achieved_sum,
                "rounds_completed": exc.rounds_completed,
            },
            digest=inst.digest(),
            seed=args.seed,
            t0=t0,
        )
        _emit(report, f"infeasible: {exc}")
        return EXIT_INFEASIBLE

    report = _report("solve", payload, digest=inst.digest(), seed=args.seed, t0=t0)
    _emit(report, f"rates {payload['rates']} cost {payload['cost']} beta {payload['beta']}")
    return EXIT_OK


def _solve_randomized(oracle, cost, caps, args) -> dict:
    """Fixed-budget randomized run, or a budget search with randomized
    evaluations when --beta is omitted.

    A budget counts as feasible when some attempt completes all rounds and
    verifies decodable; small fields can produce spurious infeasibility with
    probability decaying in the attempt budget.
    """
    inst = oracle.instance

    def attempt(beta, stream):
        for k in range(args.max_retries):
            rng = RngSpec(args.seed, stream + k)
            try:
                alloc, schedule = randomized_alloc(oracle, beta, cost, caps, rng)
            except Infeasible:
                continue
            if verify_decodable(inst, schedule).all_ok:
                return alloc, schedule
        return None

    if args.beta is not None:
        got = attempt(args.beta, 0)
        if got is None:
            raise Infeasible(
                f"no decodable run at budget {args.beta} after {args.max_retries} attempts",
                beta=args.beta,
            )
        alloc, schedule = got
    else:
        n = inst.n_packets
        tried: dict[int, tuple] = {}

        def h(beta):
            if beta not in tried:
                tried[beta] = attempt(beta, 1000 * (beta + 1))
            got = tried[beta]
            if got is None:
                return None
            return sum(cost.value(i, r) for i, r in enumerate(got[0].rates))

        if h(0) is not None:
            beta_min = 0
        else:
            lo, hi = 0, n
            if h(hi) is None:
                raise Infeasible(f"no decodable run up to budget {n}", beta=n)
            while hi - lo > 1:
                mid = (lo + hi + 1) // 2
                if h(mid) is not None:
                    hi = mid
                else:
                    lo = mid
            beta_min = hi
        lo, hi = beta_min, n
        while lo < hi:
            mid = (lo + hi) // 2
            nxt = h(mid + 1)
            cur = h(mid)
            if nxt is None or cur is None:  # noise guard; treat as flat
                break
            if nxt >= cur - 1e-12:
                hi = mid
            else:
                lo = mid + 1
        alloc, schedule = tried[lo]

    if args.schedule_out:
        save_schedule(schedule, args.schedule_out)
    return {
        "feasible": True,
        "beta": alloc.beta,
        "rates": list(alloc.rates),
        "cost": sum(cost.value(i, r) for i, r in enumerate(alloc.rates)),
        "schedule": args.schedule_out,
    }


def cmd_code(args) -> int:
    t0 = time.perf_counter()
    inst = _load(args.instance)
    if len(args.rates) != inst.m:
        raise SystemExit(f"--rates must list {inst.m} values")
    try:
        schedule = construct_code(
            inst, args.rates, RngSpec(args.seed, args.stream), max_retries=args.max_retries
        )
    except InfeasibleRates as exc:
        _emit(
            _report("code", {"error": "infeasible-rates", "detail": str(exc)}, digest=inst.digest(), t0=t0),
            f"infeasible rates: {exc}",
        )
        return EXIT_INFEASIBLE
    except ConstructionFailed as exc:
        _emit(
            _report(
                "code",
                {"error": "construction-failed", "attempts": exc.attempts},
                digest=inst.digest(),
                t0=t0,
            ),
            f"construction failed: {exc}",
        )
        return EXIT_CONSTRUCTION
    save_schedule(schedule, args.out)
    payload = {"schedule": args.out, "rates": list(schedule.counts(inst.m))}
    _emit(
        _report("code", payload, digest=inst.digest(), seed=args.seed, t0=t0),
        f"wrote {args.out} ({len(schedule.entries)} transmissions)",
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    inst = _load(args.instance)
    try:
        schedule = load_schedule(args.schedule)
        schedule.validate_against(inst)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"bad schedule: {exc}")
    report = verify_decodable(inst, schedule)
    payload = {
        "per_user": list(report.per_user),
        "all_ok": report.all_ok,
    }
    _emit(
        _report("verify", payload, digest=inst.digest(), t0=t0),
        "all users decodable" if report.all_ok else f"decodability: {list(report.per_user)}",
    )
    return EXIT_OK if report.all_ok else EXIT_DECODE


def cmd_decode(args) -> int:
    t0 = time.perf_counter()
    inst = _load(args.instance)
    try:
        schedule = load_schedule(args.schedule)
        schedule.validate_against(inst)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"bad schedule: {exc}")
    if args.truth:
        try:
            with open(args.truth, "r", encoding="utf-8") as f:
                w = np.asarray(json.load(f), dtype=np.int64)
        except (OSError, ValueError) as exc:
            raise SystemExit(f"bad truth file: {exc}")
        if w.shape != (inst.n_packets,):
            raise SystemExit(f"truth must list {inst.n_packets} packets")
    else:
        # Demo mode: decode a seeded synthetic file and report the round trip.
        w = np.asarray(
            RngSpec(args.seed).generator().integers(0, inst.field.p, size=inst.n_packets)
        )
    observed = inst.observe(args.user, w)
    received = transmit_values(schedule, w)
    try:
        recovered = decode(inst, args.user, schedule, observed, received)
    except NotDecodable as exc:
        _emit(
            _report("decode", {"error": "not-decodable", "user": args.user}, digest=inst.digest(), t0=t0),
            f"user {args.user}: {exc}",
        )
        return EXIT_DECODE
    match = bool(np.array_equal(recovered, w % inst.field.p))
    payload = {
        "user": args.user,
        "packets": [int(v) for v in recovered],
        "matches_truth": match,
    }
    _emit(
        _report("decode", payload, digest=inst.digest(), seed=args.seed, t0=t0),
        f"user {args.user} decoded; match={match}",
    )
    return EXIT_OK if match else EXIT_DECODE


def cmd_validate(args) -> int:
    t0 = time.perf_counter()
    results = []
    if args.suite in ("properties", "all"):
        results += run_properties(args.trials, args.seed, args.max_m, args.max_n)
    if args.suite in ("paper-examples", "all"):
        results += run_reference_examples()
    if args.suite in ("rlnc", "all"):
        threads = int(os.environ.get("DEXCHANGE_THREADS", "1") or 1)
        results.append(run_rlnc_stats(args.q, args.trials if args.suite == "rlnc" else 400, args.seed, threads))
    failures = [r for r in results if not r.ok]
    payload = {
        "checks": len(results),
        "failures": [{"name": r.name, "detail": r.detail} for r in failures],
    }
    report = _report("validate", payload, seed=args.seed, t0=t0)
    _emit(report, f"{len(results) - len(failures)}/{len(results)} checks passed")
    if failures:
        with open(args.artifact, "w", encoding="utf-8") as f:
            json.dump(payload["failures"], f, indent=1, default=str)
        print(f"counterexamples written to {args.artifact}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dexchange",
        description="Cooperative data exchange solver and coded-schedule toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--kind", choices=("raw", "coded"), default="raw")
    g.add_argument("--preset", choices=sorted(PRESETS), help="built-in instance")
    g.add_argument("--m", type=int, help="user count")
    g.add_argument("--n", type=int, help="packet count")
    g.add_argument("--q", type=int, default=257, help="field order (prime)")
    g.add_argument("--rows", type=_parse_ints, help="per-user row counts, comma separated")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o", help="output path (default: stdout)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="optimal rate allocation")
    s.add_argument("instance")
    s.add_argument("--cost", choices=("linear", "fair", "table"), default="linear")
    s.add_argument("--weights", type=_parse_ints, help="linear cost weights")
    s.add_argument("--table", help="JSON file of per-user increment tables")
    s.add_argument("--beta", type=int, help="fixed total budget (default: optimize)")
    s.add_argument("--caps", type=_parse_ints, help="per-user transmission caps")
    s.add_argument("--backend", choices=("sfm", "subgradient", "randomized"), default="sfm")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-retries", type=int, default=8, help="randomized attempts per budget")
    s.add_argument("--schedule-out", help="write the randomized schedule here")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("code", help="construct a decodable schedule for given rates")
    c.add_argument("instance")
    c.add_argument("--rates", type=_parse_ints, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--stream", type=int, default=0)
    c.add_argument("--max-retries", type=int, default=64)
    c.add_argument("--out", "-o", default="schedule.json")
    c.set_defaults(func=cmd_code)

    v = sub.add_parser("verify", help="per-user decodability of a schedule")
    v.add_argument("instance")
    v.add_argument("schedule")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("decode", help="reconstruct the file for one user")
    d.add_argument("instance")
    d.add_argument("schedule")
    d.add_argument("--user", type=int, required=True)
    d.add_argument("--truth", help="JSON list of the true packets")
    d.add_argument("--seed", type=int, default=0, help="seed for the demo packet vector")
    d.set_defaults(func=cmd_decode)

    w = sub.add_parser("validate", help="run the cross-check suites")
    w.add_argument(
        "--suite",
        choices=("properties", "paper-examples", "rlnc", "all"),
        default="all",
    )
    w.add_argument("--max-m", type=int, default=4)
    w.add_argument("--max-n", type=int, default=6)
    w.add_argument("--trials", type=int, default=50, help="suite instances or Monte-Carlo trials")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--q", type=int, default=19, help="field order for the rlnc suite")
    w.add_argument("--artifact", default="validate_failure.json")
    w.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_USAGE
        raise


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
