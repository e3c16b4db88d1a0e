"""The optimisation loop: ask/tell sessions, persistence, and the benchmark harness.

A campaign tracks an input space, told observations, pending candidates and an
append-only history. ``ask`` fits the GP to the current data, maximises the
configured acquisition (conditioning on pending points) and appends the
returned batch to pending; ``tell`` moves evaluated points from pending into
the data. ``run_loop`` drives the closed loop against a callable objective
until the evaluation budget is consumed.

State persists to a single JSON document (schema_version 1) with matrices as
row-major nested arrays at full round-trip float precision; saves are atomic
replace-on-write and save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .acquisition import AcquisitionFunction, AcquisitionSpec
from .design import DesignConfig, gen_inputs
from .exceptions import (
    BudgetError,
    OrderingError,
    SchemaVersionError,
    UnmatchedCandidateError,
    ValidationError,
)
from .optimise import (
    InputSpace,
    OptimiserConfig,
    multi_joint,
    multi_sequential,
    single,
)
from .seeding import child_seed
from .surrogate import Dataset, GPHyperparameters, default_model, fit
from .testfuncs import TestFunction, make as make_test_function

SCHEMA_VERSION = 1
STRATEGIES = ("single", "joint", "sequential")
TELL_MATCH_TOL = 1e-9


@dataclass
class CampaignConfig:
    """Budget, initial design size, acquisition template and optimiser settings."""

    budget: int
    init_points: int
    acquisition: AcquisitionSpec
    optimiser: OptimiserConfig
    strategy: str = "single"
    gp_fit_lr: float = 0.1
    gp_fit_steps: int = 200
    gp_warm_start: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"strategy must be one of {STRATEGIES}")
        if self.init_points < 1:
            raise ValidationError("init_points must be >= 1")
        if self.budget < self.init_points:
            raise ValidationError("budget must cover the initial design")
        if self.strategy == "single" and self.optimiser.batch_size != 1:
            raise ValidationError("the single strategy produces one point per ask; "
                                  "set batch_size=1")
        if self.strategy in ("joint", "sequential") and not self.acquisition.is_mc:
            raise ValidationError("multi-point strategies require a Monte Carlo "
                                  "acquisition variant")
        if self.gp_fit_lr <= 0 or self.gp_fit_steps < 1:
            raise ValidationError("gp_fit_lr must be > 0 and gp_fit_steps >= 1")


@dataclass
class EvaluationRecord:
    """One observed point: history index, inputs, output, and origin (init or bo)."""

    index: int
    x: np.ndarray
    y: float
    source: str


@dataclass(eq=False)
class CampaignState:
    """Mutable session state; one writer at a time, persisted when ``path`` is set."""

    space: InputSpace
    data: Dataset
    pending: np.ndarray
    config: CampaignConfig
    iteration: int
    seed: int
    history: list[EvaluationRecord] = field(default_factory=list)
    pending_source: list[str] = field(default_factory=list)
    ask_count: int = 0
    gp_hyper: GPHyperparameters | None = None
    path: str | None = None


def initialise(space: InputSpace, config: CampaignConfig, seed: int,
               path: str | None = None) -> CampaignState:
    """New campaign whose initial maximin-LHS design is left pending for tell."""
    pts = gen_inputs(DesignConfig(config.init_points, space.dims, space.bounds,
                                  seed=child_seed(seed, seeding.DESIGN)))
    pts = space.snap(pts)
    state = CampaignState(space=space, data=Dataset.empty(space.dims), pending=pts,
                          config=config, iteration=0, seed=int(seed),
                          pending_source=["init"] * len(pts), path=path)
    _persist(state)
    return state


def _fit_model(state: CampaignState):
    model = default_model(state.data)
    if state.config.gp_warm_start and state.gp_hyper is not None:
        model = replace(model, hyper=state.gp_hyper)
    fitted = fit(model, lr=state.config.gp_fit_lr, steps=state.config.gp_fit_steps)
    if state.config.gp_warm_start:
        state.gp_hyper = fitted.hyper
    return fitted


def ask(state: CampaignState, batch_size: int | None = None) -> np.ndarray:
    """Fit the GP, maximise the acquisition, and append the new batch to pending."""
    config = state.config
    if len(state.data) == 0:
        raise OrderingError("tell the initial observations before asking")
    if config.strategy == "single":
        if batch_size not in (None, 1):
            raise ValidationError("the single strategy asks for one point at a time")
        q = 1
    else:
        q = int(batch_size) if batch_size is not None else config.optimiser.batch_size
        if q < 1:
            raise ValidationError("batch_size must be >= 1")
    committed = len(state.data) + len(state.pending)
    if committed + q > config.budget:
        raise BudgetError(
            f"budget {config.budget} cannot cover {q} more candidates "
            f"({committed} already evaluated or pending)")

    template = config.acquisition
    if len(state.pending) and not template.is_mc:
        raise ValidationError("pending points require a Monte Carlo acquisition; "
                              "tell all pending observations first")
    spec = replace(
        template,
        y_best=float(state.data.outputs.max())
        if template.variant in ("ei", "mcei") else template.y_best,
        x_pending=state.pending.copy() if len(state.pending) else None,
        seed=child_seed(state.seed, seeding.ACQUISITION, state.ask_count),
    )
    model = _fit_model(state)
    acq = AcquisitionFunction(model, spec)
    opt_cfg = replace(config.optimiser, batch_size=q,
                      seed=child_seed(state.seed, seeding.OPTIMISER, state.ask_count))

    if config.strategy == "single":
        x, _ = single(acq, state.space, opt_cfg)
        batch = x[None, :]
    elif config.strategy == "joint":
        batch = multi_joint(acq, state.space, opt_cfg)
    else:
        batch = multi_sequential(acq, state.space, opt_cfg)

    state.pending = np.vstack([state.pending, batch]) if len(state.pending) else batch
    state.pending_source.extend(["bo"] * len(batch))
    state.ask_count += 1
    _persist(state)
    return batch.copy()


def tell(state: CampaignState, x, y, force: bool = False) -> CampaignState:
    """Record observations for pending candidates (or arbitrary points with force)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[1] != state.space.dims:
        raise ValidationError(f"told inputs are {x.shape[1]}-dimensional, "
                              f"space expects {state.space.dims}")
    if len(x) != len(y):
        raise ValidationError(f"{len(x)} input rows but {len(y)} outputs")
    if len(x) == 0:
        raise ValidationError("tell requires at least one observation")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("told inputs and outputs must be finite")
    if len(state.data) + len(x) > state.config.budget:
        raise BudgetError(f"telling {len(x)} points would exceed the budget "
                          f"of {state.config.budget}")

    consumed: list[int | None] = []
    taken: set[int] = set()
    for row in x:
        match = None
        for idx in range(len(state.pending)):
            if idx in taken:
                continue
            if np.max(np.abs(state.pending[idx] - row)) <= TELL_MATCH_TOL:
                match = idx
                break
        if match is None and not force:
            raise UnmatchedCandidateError(
                f"told input {row.tolist()} does not match any pending candidate "
                f"within {TELL_MATCH_TOL}; pass force=True to accept it")
        if match is not None:
            taken.add(match)
        consumed.append(match)

    sources = [state.pending_source[i] if i is not None else "bo" for i in consumed]
    keep = [i for i in range(len(state.pending)) if i not in taken]
    state.pending = state.pending[keep]
    state.pending_source = [state.pending_source[i] for i in keep]
    start = len(state.data)
    state.data = state.data.extend(x, y)
    for offset, (row, val, src) in enumerate(zip(x, y, sources)):
        state.history.append(EvaluationRecord(start + offset, row.copy(),
                                              float(val), src))
    state.iteration += 1
    _persist(state)
    return state


def best(state: CampaignState) -> tuple[np.ndarray, float, int]:
    """Incumbent: the highest observed output, earliest index on ties."""
    if len(state.data) == 0:
        raise OrderingError("no observations recorded yet")
    idx = int(np.argmax(state.data.outputs))
    return state.data.inputs[idx].copy(), float(state.data.outputs[idx]), idx


def run_loop(space: InputSpace, config: CampaignConfig, objective, seed: int,
             path: str | None = None) -> CampaignState:
    """Closed loop: initial design, then ask -> evaluate -> tell until the budget is spent."""
    state = initialise(space, config, seed, path=path)
    x0 = state.pending.copy()
    tell(state, x0, np.asarray(objective(x0), dtype=float).reshape(-1))
    while len(state.data) < config.budget:
        remaining = config.budget - len(state.data)
        if config.strategy == "single":
            batch = ask(state)
        else:
            batch = ask(state, batch_size=min(config.optimiser.batch_size, remaining))
        tell(state, batch, np.asarray(objective(batch), dtype=float).reshape(-1))
    return state


def cumulative_best(state: CampaignState) -> np.ndarray:
    """Running maximum of the observed outputs in evaluation order."""
    return np.maximum.accumulate(state.data.outputs)


@dataclass
class BenchmarkResult:
    """Per-evaluation cumulative-best traces and a per-method summary table."""

    traces: dict[str, np.ndarray]   # method -> (n_seeds, budget)
    summary: list[dict]
    seeds: list[int]


def _run_benchmark_seed(space, config, objective, objective_factory, seed):
    """One seed's (bo, random, lhs) cumulative-best traces; module-level so it pickles."""
    try:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(limits=1)  # tiny matrices; avoid oversubscription
    except ImportError:  # pragma: no cover
        limits = None

    def obj_for(method):
        if objective_factory is not None:
            return objective_factory(seed, method)
        return objective

    try:
        n = config.budget
        state = run_loop(space, config, obj_for("bo"), seed)
        bo = cumulative_best(state)

        rng = np.random.default_rng(child_seed(seed, seeding.DESIGN, 1))
        lo, hi = space.bounds
        x_rand = space.snap(lo + rng.random((n, space.dims)) * (hi - lo))
        y_rand = np.asarray(obj_for("random")(x_rand), dtype=float).reshape(-1)

        x_lhs = space.snap(gen_inputs(DesignConfig(
            n, space.dims, space.bounds, seed=child_seed(seed, seeding.DESIGN, 2))))
        y_lhs = np.asarray(obj_for("lhs")(x_lhs), dtype=float).reshape(-1)
    finally:
        if limits is not None:
            limits.unregister()
    return bo, np.maximum.accumulate(y_rand), np.maximum.accumulate(y_lhs)


def benchmark_compare(space: InputSpace, config: CampaignConfig, objective,
                      n_seeds: int, base_seed: int = 0,
                      objective_factory=None, n_jobs: int = 1) -> BenchmarkResult:
    """Compare the campaign against uniform-random and Latin hypercube baselines.

    Every method spends exactly the budget per seed. ``objective_factory``,
    when given, is called as ``factory(seed, method)`` so each run can draw an
    independent noise stream; otherwise the shared ``objective`` is used.
    With ``n_jobs > 1`` seeds run in worker processes, which requires a
    picklable space/config/objective (no constraint callables or closures).
    """
    if objective is None and objective_factory is None:
        raise ValidationError("benchmark_compare needs an objective or a factory")
    seeds = [base_seed + k for k in range(n_seeds)]
    if n_jobs > 1:
        import concurrent.futures
        from functools import partial
        worker = partial(_run_benchmark_seed, space, config, objective,
                         objective_factory)
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_jobs) as ex:
            per_seed = list(ex.map(worker, seeds))
    else:
        per_seed = [_run_benchmark_seed(space, config, objective,
                                        objective_factory, seed)
                    for seed in seeds]
    traces = {"bo": [r[0] for r in per_seed],
              "random": [r[1] for r in per_seed],
              "lhs": [r[2] for r in per_seed]}
    stacked = {m: np.vstack(t) for m, t in traces.items()}
    summary = []
    for method, tr in stacked.items():
        finals = tr[:, -1]
        summary.append({
            "method": method,
            "median": float(np.median(finals)),
            "q1": float(np.percentile(finals, 25)),
            "q3": float(np.percentile(finals, 75)),
        })
    return BenchmarkResult(stacked, summary, seeds)


def make_objective(func: TestFunction, seed: int | None):
    """Objective closure over a test function with a seeded noise stream."""
    rng = np.random.default_rng(child_seed(seed, seeding.OBJECTIVE))

    def objective(x):
        return func(x, rng=rng)

    return objective


def run_test_function(function_name: str, config: CampaignConfig, seed: int, *,
                      noise_std: float = 0.0, discrete=None,
                      path: str | None = None) -> CampaignState:
    """Closed-loop campaign against a named test function (maximisation convention)."""
    func = make_test_function(function_name, noise_std=noise_std, minimise=False)
    space = InputSpace(func.bounds, discrete=dict(discrete or {}))
    return run_loop(space, config, make_objective(func, seed), seed, path=path)


class SeededTestFunctionFactory:
    """Picklable (seed, method) -> objective factory over a named test function.

    Gives every (seed, method) run an independent noise stream so the three
    methods in :func:`benchmark_compare` do not share draws.
    """

    _method_tags = {"bo": 0, "random": 1, "lhs": 2}

    def __init__(self, function_name: str, noise_std: float = 0.0):
        self.function_name = function_name
        self.noise_std = noise_std

    def __call__(self, seed, method):
        func = make_test_function(self.function_name, noise_std=self.noise_std,
                                  minimise=False)
        rng = np.random.default_rng(
            child_seed(seed, seeding.OBJECTIVE, self._method_tags[method]))
        return lambda x: func(x, rng=rng)


def benchmark_factory(function_name: str, noise_std: float = 0.0):
    """(factory, space) pair for benchmarking a named test function."""
    func = make_test_function(function_name, noise_std=noise_std, minimise=False)
    return SeededTestFunctionFactory(function_name, noise_std), InputSpace(func.bounds)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _spec_document(spec: AcquisitionSpec) -> dict:
    return {
        "variant": spec.variant,
        "beta": spec.beta,
        "y_best": None,           # derived per ask
        "samples": spec.samples,
        "fix_base_samples": spec.fix_base_samples,
    }


def _optimiser_document(cfg: OptimiserConfig) -> dict:
    return {
        "method": cfg.method,
        "lr": cfg.lr,
        "steps": cfg.steps,
        "num_starts": cfg.num_starts,
        "num_samples": cfg.num_samples,
        "batch_size": cfg.batch_size,
        "enumeration_cap": cfg.enumeration_cap,
    }


def _hyper_document(hyper: GPHyperparameters | None):
    if hyper is None:
        return None
    return {
        "mean_constant": hyper.mean_constant,
        "signal_variance": hyper.signal_variance,
        "lengthscales": hyper.lengthscales.tolist(),
        "noise_variance": hyper.noise_variance,
        "learn_noise": hyper.learn_noise,
    }


def state_document(state: CampaignState) -> dict:
    """The JSON-serialisable form of a campaign state."""
    if state.space.constraints:
        raise ValidationError("constraint callables are not serialisable; "
                              "run constrained campaigns through the library API")
    return {
        "schema": "campaign-state",
        "schema_version": SCHEMA_VERSION,
        "seed": state.seed,
        "iteration": state.iteration,
        "ask_count": state.ask_count,
        "space": {
            "dims": state.space.dims,
            "bounds": state.space.bounds.tolist(),
            "discrete": {str(k): list(v) for k, v in state.space.discrete.items()},
        },
        "config": {
            "budget": state.config.budget,
            "init_points": state.config.init_points,
            "strategy": state.config.strategy,
            "gp_fit_lr": state.config.gp_fit_lr,
            "gp_fit_steps": state.config.gp_fit_steps,
            "gp_warm_start": state.config.gp_warm_start,
            "acquisition": _spec_document(state.config.acquisition),
            "optimiser": _optimiser_document(state.config.optimiser),
        },
        "data": {
            "inputs": state.data.inputs.tolist(),
            "outputs": state.data.outputs.tolist(),
            "fixed_noise": None if state.data.fixed_noise is None
            else state.data.fixed_noise.tolist(),
        },
        "pending": state.pending.tolist(),
        "pending_source": list(state.pending_source),
        "history": [
            {"index": rec.index, "x": rec.x.tolist(), "y": rec.y, "source": rec.source}
            for rec in state.history
        ],
        "gp_hyper": _hyper_document(state.gp_hyper),
    }


def dumps_state(state: CampaignState) -> str:
    return json.dumps(state_document(state), sort_keys=True, indent=1,
                      allow_nan=False) + "\n"


def save_state(state: CampaignState, path: str) -> None:
    """Atomic replace-on-write persistence."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps_state(state))
    os.replace(tmp, path)


def _persist(state: CampaignState) -> None:
    if state.path is not None:
        save_state(state, state.path)


def space_from_document(doc: dict) -> InputSpace:
    """Build an InputSpace from its document form (used by state and config files)."""
    return InputSpace(
        np.asarray(doc["bounds"], dtype=float),
        discrete={int(k): tuple(v) for k, v in doc.get("discrete", {}).items()},
    )


def config_from_document(doc: dict) -> CampaignConfig:
    """Build a CampaignConfig from its document form; missing keys take the defaults."""
    acq_doc = doc.get("acquisition", {})
    opt_doc = doc.get("optimiser", {})
    acquisition = AcquisitionSpec(
        variant=acq_doc.get("variant", "ei"),
        beta=acq_doc.get("beta"),
        samples=acq_doc.get("samples", 512),
        fix_base_samples=acq_doc.get("fix_base_samples", False),
    )
    optimiser = OptimiserConfig(
        method=opt_doc.get("method", "bounded"),
        lr=opt_doc.get("lr", 0.1),
        steps=opt_doc.get("steps", 100),
        num_starts=opt_doc.get("num_starts", 10),
        num_samples=opt_doc.get("num_samples", 100),
        batch_size=opt_doc.get("batch_size", 1),
        enumeration_cap=opt_doc.get("enumeration_cap", 10_000),
    )
    return CampaignConfig(
        budget=doc["budget"],
        init_points=doc["init_points"],
        acquisition=acquisition,
        optimiser=optimiser,
        strategy=doc.get("strategy", "single"),
        gp_fit_lr=doc.get("gp_fit_lr", 0.1),
        gp_fit_steps=doc.get("gp_fit_steps", 200),
        gp_warm_start=doc.get("gp_warm_start", False),
    )


def load_state(path: str) -> CampaignState:
    """Load a campaign state file, validating the schema version."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaVersionError(
            f"cannot read campaign state {path!r} (expected schema_version "
            f"{SCHEMA_VERSION}): {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"campaign state {path!r} has schema_version "
            f"{doc.get('schema_version') if isinstance(doc, dict) else None}; "
            f"expected {SCHEMA_VERSION}")
    try:
        space = space_from_document(doc["space"])
        config = config_from_document(doc["config"])
        data_doc = doc["data"]
        data = Dataset(
            np.asarray(data_doc["inputs"], dtype=float).reshape(-1, space.dims),
            np.asarray(data_doc["outputs"], dtype=float),
            None if data_doc["fixed_noise"] is None
            else np.asarray(data_doc["fixed_noise"], dtype=float),
        )
        pending = np.asarray(doc["pending"], dtype=float).reshape(-1, space.dims)
        history = [EvaluationRecord(rec["index"], np.asarray(rec["x"], dtype=float),
                                    float(rec["y"]), rec["source"])
                   for rec in doc["history"]]
        hyper_doc = doc.get("gp_hyper")
        hyper = None
        if hyper_doc is not None:
            hyper = GPHyperparameters(
                mean_constant=hyper_doc["mean_constant"],
                signal_variance=hyper_doc["signal_variance"],
                lengthscales=np.asarray(hyper_doc["lengthscales"], dtype=float),
                noise_variance=hyper_doc["noise_variance"],
                learn_noise=hyper_doc["learn_noise"],
            )
        state = CampaignState(space=space, data=data, pending=pending, config=config,
                              iteration=int(doc["iteration"]), seed=int(doc["seed"]),
                              history=history,
                              pending_source=list(doc["pending_source"]),
                              ask_count=int(doc["ask_count"]), gp_hyper=hyper,
                              path=path)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaVersionError(
            f"campaign state {path!r} is corrupt (expected schema_version "
            f"{SCHEMA_VERSION}): {exc}") from exc
    return state


def export_history(state: CampaignState) -> str:
    """History as CSV: eval_index, x_1..x_d, y, source, cumulative_best."""
    d = state.space.dims
    out = io.StringIO()
    cols = ["eval_index"] + [f"x_{j + 1}" for j in range(d)] + \
           ["y", "source", "cumulative_best"]
    out.write(",".join(cols) + "\n")
    running = -np.inf
    for rec in state.history:
        running = max(running, rec.y)
        row = [str(rec.index + 1)]
        row += [repr(float(v)) for v in rec.x]
        row += [repr(float(rec.y)), rec.source, repr(float(running))]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def write_history_csv(state: CampaignState, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(export_history(state))
