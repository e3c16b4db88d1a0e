"""Command-line front end: campaign sessions, closed-loop runs, benchmarks.

Exit codes: 0 on success, 2 on validation/state-file errors, 3 on budget or
infeasibility errors. All randomness flows from ``--seed``. Campaign paths are
resolved against $GPBO_CAMPAIGN_DIR when set; mutating verbs take a lock file
next to the state file and fail fast if it is already held.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys

import numpy as np

from . import campaign as camp
from .acquisition import AcquisitionSpec
from .exceptions import (
    BudgetError,
    CampaignLockedError,
    GlobalInfeasibilityError,
    InfeasibleStartError,
    OrderingError,
    SchemaVersionError,
    ValidationError,
)
from .optimise import OptimiserConfig
from .testfuncs import FUNCTIONS

ENV_CAMPAIGN_DIR = "GPBO_CAMPAIGN_DIR"


def resolve_campaign_path(path: str) -> str:
    base = os.environ.get(ENV_CAMPAIGN_DIR)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


@contextlib.contextmanager
def campaign_lock(path: str):
    lock = f"{path}.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CampaignLockedError(
            f"campaign {path!r} is locked by another process ({lock})") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


def _print_best(state: camp.CampaignState) -> None:
    x, y, idx = camp.best(state)
    print("Approximate solution")
    print("--------------------")
    print(f"Evaluation: {idx + 1}")
    print("Inputs: " + " ".join(f"{v:.4f}" for v in x))
    print(f"Output: {y:.4f}")


def _parse_discrete(items) -> dict[int, tuple[float, ...]]:
    """--discrete DIM:V1,V2,... (repeatable) into {dim: values}."""
    out: dict[int, tuple[float, ...]] = {}
    for item in items or []:
        try:
            dim, values = item.split(":", 1)
            out[int(dim)] = tuple(float(v) for v in values.split(","))
        except (TypeError, AttributeError, IndexError) as exc:  # pragma: no cover
            raise ValidationError(f"cannot parse --discrete {item!r}") from exc
        except ValueError as exc:
            raise ValidationError(f"cannot parse --discrete {item!r}: {exc}") from exc
    return out


def _config_from_args(args) -> camp.CampaignConfig:
    method = args.method
    if method == "auto":
        mc_unfixed = args.acquisition in ("mcei", "mcucb") and not args.fix_base_samples
        method = "stochastic" if mc_unfixed else "bounded"
    acquisition = AcquisitionSpec(
        variant=args.acquisition,
        beta=args.beta,
        samples=args.samples,
        fix_base_samples=args.fix_base_samples,
    )
    optimiser = OptimiserConfig(
        method=method,
        lr=args.lr,
        steps=args.steps,
        num_starts=args.num_starts,
        num_samples=args.num_samples,
        batch_size=args.batch_size,
    )
    return camp.CampaignConfig(
        budget=args.budget,
        init_points=args.init_points,
        acquisition=acquisition,
        optimiser=optimiser,
        strategy=args.strategy,
        gp_fit_lr=args.fit_lr,
        gp_fit_steps=args.fit_steps,
    )


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--function", required=True, choices=sorted(FUNCTIONS))
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--init-points", type=int, required=True)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--strategy", choices=camp.STRATEGIES, default="single")
    p.add_argument("--acquisition", choices=("ei", "ucb", "mcei", "mcucb"),
                   default="ei")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--fix-base-samples", action="store_true")
    p.add_argument("--method", choices=("auto", "bounded", "stochastic"),
                   default="auto")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--num-starts", type=int, default=10)
    p.add_argument("--num-samples", type=int, default=100)
    p.add_argument("--fit-lr", type=float, default=0.1)
    p.add_argument("--fit-steps", type=int, default=200)
    p.add_argument("--discrete", action="append", metavar="DIM:V1,V2,...",
                   help="restrict a dimension to listed values (repeatable)")
    p.add_argument("--seed", type=int, default=0)


def cmd_init(args) -> int:
    path = resolve_campaign_path(args.campaign)
    if os.path.exists(path) and not args.force:
        raise ValidationError(f"{path!r} already exists; pass --force to overwrite")
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {args.config!r}: {exc}") from exc
    space = camp.space_from_document(doc["space"])
    config = camp.config_from_document(doc["config"])
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    with campaign_lock(path):
        camp.initialise(space, config, seed, path=path)
    print(f"initialised campaign at {path}")
    return 0


def cmd_ask(args) -> int:
    path = resolve_campaign_path(args.campaign)
    with campaign_lock(path):
        state = camp.load_state(path)
        batch = camp.ask(state, batch_size=args.batch_size)
    for row in batch:
        print(",".join(repr(float(v)) for v in row))
    return 0


def _read_tell_rows(text: str, dims: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            values = [float(c) for c in cells]
        except ValueError:
            if line_no == 1:
                continue  # tolerate a header row
            raise ValidationError(f"line {line_no}: non-numeric cell in {line!r}")
        if len(values) != dims + 1:
            raise ValidationError(
                f"line {line_no}: expected {dims + 1} columns (x_1..x_{dims}, y), "
                f"got {len(values)}")
        xs.append(values[:-1])
        ys.append(values[-1])
    if not xs:
        raise ValidationError("no observation rows found")
    return np.asarray(xs), np.asarray(ys)


def cmd_tell(args) -> int:
    path = resolve_campaign_path(args.campaign)
    if args.infile:
        with open(args.infile, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    with campaign_lock(path):
        state = camp.load_state(path)
        x, y = _read_tell_rows(text, state.space.dims)
        camp.tell(state, x, y, force=args.force)
    print(f"recorded {len(x)} observations ({len(state.pending)} still pending)")
    return 0


def cmd_best(args) -> int:
    state = camp.load_state(resolve_campaign_path(args.campaign))
    _print_best(state)
    return 0


def cmd_run(args) -> int:
    config = _config_from_args(args)
    discrete = _parse_discrete(args.discrete)
    path = resolve_campaign_path(args.campaign) if args.campaign else None
    ctx = campaign_lock(path) if path else contextlib.nullcontext()
    with ctx:
        state = camp.run_test_function(args.function, config, args.seed,
                                       noise_std=args.noise_std,
                                       discrete=discrete, path=path)
    if args.out:
        camp.write_history_csv(state, args.out)
    _print_best(state)
    return 0


def cmd_bench(args) -> int:
    config = _config_from_args(args)
    discrete = _parse_discrete(args.discrete)
    factory, space = camp.benchmark_factory(args.function, noise_std=args.noise_std)
    if discrete:
        space = camp.InputSpace(space.bounds, discrete=discrete)
    result = camp.benchmark_compare(space, config, None, args.n_seeds,
                                    base_seed=args.seed, objective_factory=factory,
                                    n_jobs=args.n_jobs)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("method,seed,eval_index,cumulative_best\n")
            for method, traces in sorted(result.traces.items()):
                for seed, trace in zip(result.seeds, traces):
                    for i, value in enumerate(trace, start=1):
                        fh.write(f"{method},{seed},{i},{float(value)!r}\n")
        print(f"wrote traces to {args.out}")
    print(f"{'method':<8} {'median':>10} {'q1':>10} {'q3':>10}")
    for row in result.summary:
        print(f"{row['method']:<8} {row['median']:>10.4f} "
              f"{row['q1']:>10.4f} {row['q3']:>10.4f}")
    return 0


def cmd_export(args) -> int:
    state = camp.load_state(resolve_campaign_path(args.campaign))
    text = camp.export_history(state)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote history to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpbo",
        description="Bayesian optimisation campaigns over expensive black boxes")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("init", help="create a campaign state file from a config file")
    p.add_argument("campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("ask", help="print the next candidate batch as CSV rows")
    p.add_argument("campaign")
    p.add_argument("--batch-size", type=int, default=None)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("tell", help="ingest a CSV of x_1..x_d,y observation rows")
    p.add_argument("campaign")
    p.add_argument("--in", dest="infile", default=None,
                   help="CSV file (defaults to stdin)")
    p.add_argument("--force", action="store_true",
                   help="accept points that match no pending candidate")
    p.set_defaults(func=cmd_tell)

    p = sub.add_parser("best", help="print the incumbent")
    p.add_argument("campaign")
    p.set_defaults(func=cmd_best)

    p = sub.add_parser("run", help="closed-loop campaign against a test function")
    p.add_argument("campaign", nargs="?", default=None,
                   help="optional state file to persist the campaign to")
    _add_problem_flags(p)
    p.add_argument("--out", default=None, help="write the history CSV here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare against random and LHS baselines")
    _add_problem_flags(p)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--n-jobs", type=int, default=1,
                   help="worker processes for independent seeds")
    p.add_argument("--out", default=None, help="write cumulative-best traces here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="dump the history CSV")
    p.add_argument("campaign")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, SchemaVersionError, OrderingError,
            CampaignLockedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BudgetError, GlobalInfeasibilityError, InfeasibleStartError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
