"""Inner maximisers and candidate-selection strategies.

Local maximisation comes in three flavours sharing one callable contract,
``f(x) -> (value, gradient)`` over flat vectors:

* ``stochastic_maximise``: hand-rolled Adam ascent (moment decays 0.9/0.999,
  eps 1e-8, bias correction), iterates clamped to bounds, best-seen iterate
  returned since stochastic objectives are not monotone.
* ``bounded_maximise``: L-BFGS-B via scipy behind the quasi-Newton
  bound-constrained contract (projected-gradient tolerance 1e-8, 200 iters).
* ``constrained_maximise``: SLSQP via scipy for equality/inequality
  constraints; with no constraints it reduces to ``bounded_maximise``.

Candidate selection (`single`, `multi_joint`, `multi_sequential`) runs the
local maximiser from the best points of a maximin Latin hypercube, enumerates
discrete dimensions through ``optimise_mixed``, and expands constraints
row-wise for joint batches. Monte Carlo acquisitions may only be paired with
deterministic optimisers when their base samples are fixed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .design import DesignConfig, as_bounds, gen_inputs
from .exceptions import (
    CombinatorialExplosionError,
    GlobalInfeasibilityError,
    InfeasibleStartError,
    OptimisationError,
    ValidationError,
)
from .seeding import child_seed

METHODS = ("bounded", "constrained", "stochastic")
DEFAULT_ENUMERATION_CAP = 10_000
CONSTRAINT_TOL = 1e-6


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

@dataclass
class ConstraintRecord:
    """Constraint on one candidate point: fn(x) = 0 ("eq") or fn(x) >= 0 ("ineq")."""

    kind: str
    fn: Callable[[np.ndarray], float]

    def __post_init__(self):
        if self.kind not in ("eq", "ineq"):
            raise ValidationError('constraint kind must be "eq" or "ineq"')


@dataclass(eq=False)
class InputSpace:
    """Bounds hyper-rectangle with optional discrete value sets and constraints."""

    bounds: np.ndarray
    discrete: dict[int, tuple[float, ...]] = field(default_factory=dict)
    constraints: tuple[ConstraintRecord, ...] = ()
    dims: int | None = None

    def __post_init__(self):
        self.bounds = as_bounds(self.bounds)
        d = self.bounds.shape[1]
        if self.dims is None:
            self.dims = d
        elif self.dims != d:
            raise ValidationError(f"dims={self.dims} but bounds are {d}-dimensional")
        cleaned = {}
        for dim, values in self.discrete.items():
            dim = int(dim)
            if not 0 <= dim < d:
                raise ValidationError(f"discrete dimension {dim} out of range for d={d}")
            vals = tuple(sorted(float(v) for v in values))
            if not vals:
                raise ValidationError(f"discrete dimension {dim} has no values")
            if vals[0] < self.bounds[0, dim] or vals[-1] > self.bounds[1, dim]:
                raise ValidationError(
                    f"discrete values for dimension {dim} fall outside its bounds")
            cleaned[dim] = vals
        self.discrete = cleaned
        self.constraints = tuple(self.constraints)

    def snap(self, x) -> np.ndarray:
        """Snap discrete dimensions to the nearest allowed value (ties to the smaller)."""
        x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
        for dim, values in self.discrete.items():
            vals = np.asarray(values)
            col = x[:, dim]
            idx = np.clip(np.searchsorted(vals, col), 0, len(vals) - 1)
            lo = vals[np.maximum(idx - 1, 0)]
            hi = vals[idx]
            x[:, dim] = np.where((hi - col) < (col - lo), hi, lo)
        return x

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.bounds[0], self.bounds[1])

    def constraint_violation(self, x) -> float:
        """Worst violation of the constraints at a single point (0 when feasible)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        worst = 0.0
        for c in self.constraints:
            v = float(c.fn(x))
            worst = max(worst, abs(v) if c.kind == "eq" else max(-v, 0.0))
        return worst


@dataclass
class OptimiserConfig:
    """Settings for acquisition maximisation."""

    method: str = "bounded"
    lr: float = 0.1
    steps: int = 100
    num_starts: int = 10
    num_samples: int = 100
    batch_size: int = 1
    seed: int | None = None
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        if self.num_starts < 1 or self.num_samples < 1:
            raise ValidationError("num_starts and num_samples must be >= 1")
        if self.num_starts > self.num_samples:
            raise ValidationError("num_starts must not exceed num_samples")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.lr < 0:
            raise ValidationError("lr must be >= 0")


# ---------------------------------------------------------------------------
# local maximisers; f(x) -> (value, gradient) over flat vectors
# ---------------------------------------------------------------------------

def _check_finite(value, grad, x) -> tuple[float, np.ndarray]:
    grad = np.asarray(grad, dtype=float).reshape(-1)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise OptimisationError(
            f"non-finite objective value or gradient at iterate {x.tolist()}",
            iterate=np.array(x))
    return float(value), grad


def maximiser_bounds(bounds) -> tuple[np.ndarray, np.ndarray]:
    if bounds is None:
        return None, None
    b = as_bounds(bounds)
    return b[0], b[1]


def stochastic_maximise(f, x0, bounds=None, lr: float = 0.1, steps: int = 100,
                        beta1: float = 0.9, beta2: float = 0.999,
                        eps: float = 1e-8) -> tuple[np.ndarray, float]:
    """Adam ascent on ``f``, iterates clamped to bounds, best-seen iterate returned."""
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    lo, hi = maximiser_bounds(bounds)
    if lo is not None:
        x = np.clip(x, lo, hi)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    best_x, best_v = x.copy(), -math.inf
    for t in range(1, steps + 1):
        value, grad = _check_finite(*f(x), x)
        if value > best_v:
            best_v, best_x = value, x.copy()
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        x = x + lr * mhat / (np.sqrt(vhat) + eps)
        if lo is not None:
            x = np.clip(x, lo, hi)
    value, _ = _check_finite(*f(x), x)
    if value > best_v:
        best_v, best_x = value, x.copy()
    return best_x, best_v


def bounded_maximise(f, x0, bounds) -> tuple[np.ndarray, float]:
    """Bound-constrained quasi-Newton (L-BFGS-B) local maximisation of ``f``."""
    lo, hi = maximiser_bounds(bounds)
    x0 = np.clip(np.asarray(x0, dtype=float).reshape(-1), lo, hi)

    def negated(x):
        value, grad = _check_finite(*f(x), x)
        return -value, -grad

    res = minimize(negated, x0, method="L-BFGS-B", jac=True,
                   bounds=list(zip(lo, hi)),
                   options={"maxiter": 200, "gtol": 1e-8, "ftol": 0.0})
    x = np.clip(res.x, lo, hi)
    return x, float(-res.fun)


def constrained_maximise(f, x0, bounds, constraints) -> tuple[np.ndarray, float]:
    """SLSQP local maximisation subject to equality/inequality constraints.

    Raises :class:`InfeasibleStartError` when the returned point violates any
    constraint beyond 1e-6; with no constraints this is ``bounded_maximise``.
    """
    constraints = tuple(constraints)
    if not constraints:
        return bounded_maximise(f, x0, bounds)
    lo, hi = maximiser_bounds(bounds)
    x0 = np.clip(np.asarray(x0, dtype=float).reshape(-1), lo, hi)

    def negated(x):
        value, grad = _check_finite(*f(x), x)
        return -value, -grad

    cons = [{"type": c.kind, "fun": c.fn} for c in constraints]
    res = minimize(negated, x0, method="SLSQP", jac=True,
                   bounds=list(zip(lo, hi)), constraints=cons,
                   options={"maxiter": 200, "ftol": 1e-12})
    x = np.clip(res.x, lo, hi)
    worst = 0.0
    for c in constraints:
        v = float(c.fn(x))
        worst = max(worst, abs(v) if c.kind == "eq" else max(-v, 0.0))
    if not np.isfinite(res.fun) or worst > CONSTRAINT_TOL:
        raise InfeasibleStartError(
            f"SLSQP failed to reach feasibility from this start "
            f"(worst violation {worst:.2e})")
    value, _ = f(x)
    return x, float(value)


# ---------------------------------------------------------------------------
# multistart and strategies
# ---------------------------------------------------------------------------

def multistart_candidates(f, space: InputSpace, num_samples: int, num_starts: int,
                          seed: int | None = None) -> np.ndarray:
    """Top ``num_starts`` of ``num_samples`` maximin-LHS points ranked by ``f``, descending."""
    batches = _multistart_batches(lambda b: float(f(b[0])), space, 1,
                                  num_samples, num_starts, seed)
    return batches[:, 0, :]


def _multistart_batches(value_fn, space: InputSpace, q: int, num_samples: int,
                        num_starts: int, seed: int | None) -> np.ndarray:
    """(num_starts, q, d) start batches drawn from one maximin LHS of num_samples * q points."""
    if num_starts > num_samples:
        raise ValidationError("num_starts must not exceed num_samples")
    pts = gen_inputs(DesignConfig(num_samples * q, space.dims, space.bounds, seed=seed))
    pts = space.snap(pts).reshape(num_samples, q, space.dims)
    values = np.array([value_fn(batch) for batch in pts])
    order = np.argsort(-values, kind="stable")[:num_starts]
    return pts[order]


def _expanded_constraints(space: InputSpace, q: int, d: int) -> tuple[ConstraintRecord, ...]:
    """Per-point constraints lifted to the flattened (q * d,) batch vector."""
    if not space.constraints or q == 0:
        return ()
    out = []
    for row in range(q):
        for c in space.constraints:
            def lifted(xf, _fn=c.fn, _row=row):
                return _fn(np.asarray(xf).reshape(q, d)[_row])
            out.append(ConstraintRecord(c.kind, lifted))
    return tuple(out)


def _batch_feasible(space: InputSpace, batch: np.ndarray) -> bool:
    return all(space.constraint_violation(row) <= CONSTRAINT_TOL for row in batch)


def _select_method(space: InputSpace, config: OptimiserConfig) -> str:
    if space.constraints:
        if config.method == "stochastic":
            raise ValidationError(
                "constraints require a deterministic optimiser; the stochastic "
                "method cannot enforce them")
        return "constrained"
    return config.method


def _check_acquisition(acq, space: InputSpace, config: OptimiserConfig) -> None:
    method = _select_method(space, config)
    if getattr(acq, "is_mc", False) and not getattr(acq, "deterministic", True):
        if method != "stochastic":
            raise ValidationError(
                "deterministic optimisers over Monte Carlo acquisitions require "
                "fix_base_samples=true")


def _local_max_batch(acq, x0: np.ndarray, space: InputSpace, config: OptimiserConfig,
                     frozen_dims: frozenset[int]) -> tuple[np.ndarray, float]:
    """Maximise the acquisition over the free coordinates of a (q, d) batch."""
    q, d = x0.shape
    free = np.array([dim not in frozen_dims for dim in range(d)] * q)
    template = x0.reshape(-1).copy()

    if not free.any():
        if not _batch_feasible(space, x0):
            raise InfeasibleStartError("fully discrete start violates the constraints")
        return x0, acq.value(x0)

    def embed(xf):
        full = template.copy()
        full[free] = xf
        return full

    def objective(xf):
        full = embed(xf)
        value, grad = acq.value_and_grad(full.reshape(q, d))
        return value, np.asarray(grad).reshape(-1)[free]

    lo = np.tile(space.bounds[0], q)[free]
    hi = np.tile(space.bounds[1], q)[free]
    bounds = np.vstack([lo, hi])
    x0f = template[free]

    method = _select_method(space, config)
    if method == "stochastic":
        xf, value = stochastic_maximise(objective, x0f, bounds,
                                        lr=config.lr, steps=config.steps)
    elif method == "constrained":
        lifted = _expanded_constraints(space, q, d)
        wrapped = tuple(ConstraintRecord(c.kind, lambda xf, _fn=c.fn: _fn(embed(xf)))
                        for c in lifted)
        xf, value = constrained_maximise(objective, x0f, bounds, wrapped)
    else:
        xf, value = bounded_maximise(objective, x0f, bounds)
    batch = embed(xf).reshape(q, d)
    return batch, float(value)


def _best_over_starts(acq, starts: np.ndarray, space: InputSpace,
                      config: OptimiserConfig,
                      assignment: dict[tuple[int, int], float]) -> tuple[np.ndarray, float]:
    frozen_dims = frozenset(space.discrete)
    best = None
    for start in starts:
        x0 = start.copy()
        for (row, dim), value in assignment.items():
            x0[row, dim] = value
        try:
            batch, value = _local_max_batch(acq, x0, space, config, frozen_dims)
        except InfeasibleStartError:
            continue
        if best is None or value > best[1]:
            best = (batch, value)
    if best is None:
        raise InfeasibleStartError("every start was infeasible for this assignment")
    return best


def optimise_mixed(acq, space: InputSpace, config: OptimiserConfig,
                   continuous_optimiser) -> tuple[np.ndarray, float]:
    """Enumerate discrete-value combinations and maximise the rest continuously.

    ``continuous_optimiser`` maps an assignment {(row, dim): value} to a
    ``(batch, value)`` pair and may raise :class:`InfeasibleStartError` to have
    the combination skipped. The best combination overall is returned; the
    enumeration is capped to guard against combinatorial explosion.
    """
    q = config.batch_size
    if not space.discrete:
        try:
            return continuous_optimiser({})
        except InfeasibleStartError as exc:
            raise GlobalInfeasibilityError(str(exc)) from exc

    slots = [(row, dim, values) for row in range(q)
             for dim, values in sorted(space.discrete.items())]
    total = math.prod(len(values) for _, _, values in slots)
    if total > config.enumeration_cap:
        raise CombinatorialExplosionError(
            f"{total} discrete combinations exceed the enumeration cap "
            f"of {config.enumeration_cap}")

    best = None
    for combo in itertools.product(*[values for _, _, values in slots]):
        assignment = {(row, dim): val
                      for (row, dim, _), val in zip(slots, combo)}
        try:
            batch, value = continuous_optimiser(assignment)
        except InfeasibleStartError:
            continue
        if best is None or value > best[1]:
            best = (batch, value)
    if best is None:
        raise GlobalInfeasibilityError(
            "no feasible candidate found across any discrete combination or start")
    return best


def single(acq, space: InputSpace, config: OptimiserConfig) -> tuple[np.ndarray, float]:
    """Best single point from multistart local maximisation of the acquisition."""
    _check_acquisition(acq, space, config)
    starts = _multistart_batches(lambda b: acq.value(b), space, 1,
                                 config.num_samples, config.num_starts, config.seed)
    cfg = replace(config, batch_size=1)

    def continuous(assignment):
        return _best_over_starts(acq, starts, space, cfg, assignment)

    batch, value = optimise_mixed(acq, space, cfg, continuous)
    return batch[0], value


def multi_joint(acq, space: InputSpace, config: OptimiserConfig) -> np.ndarray:
    """Batch of ``config.batch_size`` points optimised jointly through an MC acquisition."""
    if not getattr(acq, "is_mc", False):
        raise ValidationError("multi_joint requires a Monte Carlo acquisition")
    _check_acquisition(acq, space, config)
    starts = _multistart_batches(lambda b: acq.value(b), space, config.batch_size,
                                 config.num_samples, config.num_starts, config.seed)

    def continuous(assignment):
        return _best_over_starts(acq, starts, space, config, assignment)

    batch, _ = optimise_mixed(acq, space, config, continuous)
    return batch


def multi_sequential(acq, space: InputSpace, config: OptimiserConfig) -> np.ndarray:
    """Greedy batch: points selected one at a time, earlier picks held as pending."""
    if not getattr(acq, "is_mc", False):
        raise ValidationError("multi_sequential requires a Monte Carlo acquisition")
    _check_acquisition(acq, space, config)
    chosen = np.empty((0, space.dims))
    current = acq
    for step in range(config.batch_size):
        # step 0 keeps the caller's seed so a one-point batch matches `single`
        seed = config.seed if step == 0 else child_seed(config.seed, step)
        cfg = replace(config, batch_size=1, seed=seed)
        x, _ = single(current, space, cfg)
        chosen = np.vstack([chosen, x[None, :]])
        if step < config.batch_size - 1:
            current = current.add_pending(x[None, :])
    return chosen
