"""Acquisition criteria over a fitted GP: analytic EI/UCB and Monte Carlo variants.

Analytic expected improvement and upper confidence bound use the single-point
posterior:

    EI(x)  = (mu - y_best) Phi(z) + sigma phi(z),  z = (mu - y_best) / sigma
    UCB(x) = mu + sqrt(beta) sigma

The Monte Carlo variants form the joint posterior over [x_pending; x_batch],
map base samples z ~ N(0, I) through mu + L z with L the posterior Cholesky
factor, and average the per-sample maximum over the joint points:

    MC-EI  = mean_s max_j relu(mu_j + (L z_s)_j - y_best)
    MC-UCB = mean_s max_j (mu_j + sqrt(beta pi / 2) |(L z_s)_j|)

Fixing the base samples makes both deterministic functions of the batch, which
permits deterministic optimisers. Gradients are pathwise: the sample maximum
and relu/abs kinks use subgradient 0, and the Cholesky factor is differentiated
through dL = L Phi(L^-1 dSigma L^-T) with Phi taking the lower triangle and
halving the diagonal. Pending points join the per-sample maximum but receive
no gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .exceptions import BaseSampleError, ValidationError
from .surrogate import GPModel, GPPredictor, chol_with_jitter

VARIANTS = ("ei", "ucb", "mcei", "mcucb")
SIGMA_FLOOR = 1e-10  # below this the closed-form sigma -> 0 limit is used

_TRIL_CACHE: dict[int, np.ndarray] = {}


def _tril_mask(m: int) -> np.ndarray:
    out = _TRIL_CACHE.get(m)
    if out is None:
        out = _TRIL_CACHE[m] = np.tril(np.ones((m, m)))
    return out


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def ei_value(mu: float, sigma: float, y_best: float) -> float:
    """Expected improvement from posterior moments; sigma -> 0 falls back to relu(mu - y_best)."""
    if sigma < SIGMA_FLOOR:
        return max(mu - y_best, 0.0)
    z = (mu - y_best) / sigma
    return float((mu - y_best) * ndtr(z) + sigma * _phi(z))


def ucb_value(mu: float, sigma: float, beta: float) -> float:
    """Upper confidence bound mu + sqrt(beta) sigma from posterior moments."""
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    return float(mu + math.sqrt(beta) * sigma)


def mc_ei_from_samples(mu: np.ndarray, chol: np.ndarray, z: np.ndarray,
                       y_best: float) -> float:
    """Sample average of max_j relu(mu_j + (L z)_j - y_best) over the rows of ``z``."""
    paths = mu[None, :] + z @ chol.T
    return float(np.maximum(paths - y_best, 0.0).max(axis=1).mean())


def mc_ucb_from_samples(mu: np.ndarray, chol: np.ndarray, z: np.ndarray,
                        beta: float) -> float:
    """Sample average of max_j (mu_j + sqrt(beta pi / 2) |(L z)_j|) over the rows of ``z``."""
    scores = mu[None, :] + math.sqrt(beta * math.pi / 2.0) * np.abs(z @ chol.T)
    return float(scores.max(axis=1).mean())


@dataclass(eq=False)
class AcquisitionSpec:
    """Configuration of an acquisition criterion.

    ``samples``, ``fix_base_samples``, ``base_samples`` and ``x_pending``
    apply to the Monte Carlo variants only; ``seed`` makes sampling
    reproducible across evaluator instances.
    """

    variant: str
    beta: float | None = None
    y_best: float | None = None
    samples: int = 512
    fix_base_samples: bool = False
    base_samples: np.ndarray | None = None
    x_pending: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")
        if self.samples < 1:
            raise ValidationError("samples must be >= 1")
        if self.beta is not None:
            self.beta = float(self.beta)
            if not np.isfinite(self.beta) or self.beta < 0:
                raise ValidationError("beta must be finite and >= 0")
        if self.y_best is not None:
            self.y_best = float(self.y_best)
            if not np.isfinite(self.y_best):
                raise ValidationError("y_best must be finite")
        if self.x_pending is not None:
            self.x_pending = np.atleast_2d(np.asarray(self.x_pending, dtype=float))
            if self.x_pending.size == 0:
                self.x_pending = None
            elif not np.all(np.isfinite(self.x_pending)):
                raise ValidationError("pending points must be finite")
        if self.base_samples is not None:
            self.base_samples = np.asarray(self.base_samples, dtype=float)
            if self.base_samples.ndim != 2 or self.base_samples.shape[0] != self.samples:
                raise BaseSampleError(
                    f"base_samples must have shape ({self.samples}, q + p)")

    @property
    def is_mc(self) -> bool:
        return self.variant in ("mcei", "mcucb")


def with_pending(spec: AcquisitionSpec, x_pending) -> AcquisitionSpec:
    """Spec copy conditioning on ``x_pending`` in addition to any existing pending points."""
    x_pending = np.atleast_2d(np.asarray(x_pending, dtype=float))
    if x_pending.size == 0:
        return replace(spec)
    if not np.all(np.isfinite(x_pending)):
        raise ValidationError("pending points must be finite")
    if spec.x_pending is not None:
        if x_pending.shape[1] != spec.x_pending.shape[1]:
            raise ValidationError("pending points have inconsistent dimension")
        x_pending = np.vstack([spec.x_pending, x_pending])
    return replace(spec, x_pending=x_pending)


class _BaseSampleCache:
    """Column store of standard-normal base samples.

    Shared between an acquisition and everything derived from it via
    ``add_pending`` so that existing sample columns are preserved and new
    columns appended when the joint size grows. Fixed samples materialise on
    the first evaluation; evaluate once before fanning out to threads.
    """

    def __init__(self, spec: AcquisitionSpec):
        self.samples = spec.samples
        self.fixed = spec.fix_base_samples
        self.explicit = spec.base_samples
        self.rng = np.random.default_rng(spec.seed)
        self.cols: np.ndarray | None = None

    def take(self, m: int) -> np.ndarray:
        if self.explicit is not None:
            if self.explicit.shape[1] != m:
                raise BaseSampleError(
                    f"stored base samples have {self.explicit.shape[1]} columns "
                    f"but the joint batch has {m} points")
            return self.explicit
        if not self.fixed:
            return self.rng.standard_normal((self.samples, m))
        if self.cols is None:
            self.cols = self.rng.standard_normal((self.samples, m))
        elif self.cols.shape[1] < m:
            extra = self.rng.standard_normal((self.samples, m - self.cols.shape[1]))
            self.cols = np.hstack([self.cols, extra])
        return self.cols[:, :m]


class AcquisitionFunction:
    """Evaluates an :class:`AcquisitionSpec` against a fitted model, with gradients.

    Caches the training factorisation (and the base samples when fixed), so
    repeated evaluations during optimisation are cheap. Instances are treated
    as immutable; ``add_pending`` returns a derived instance sharing both
    caches.
    """

    def __init__(self, model: GPModel, spec: AcquisitionSpec,
                 predictor: GPPredictor | None = None,
                 base_cache: _BaseSampleCache | None = None):
        self.model = model
        self.spec = spec
        self.predictor = predictor if predictor is not None else GPPredictor(model)
        if spec.variant in ("ei", "mcei") and spec.y_best is None:
            raise ValidationError(f"{spec.variant} requires y_best")
        if spec.variant in ("ucb", "mcucb") and spec.beta is None:
            raise ValidationError(f"{spec.variant} requires beta")
        if spec.x_pending is not None:
            if not spec.is_mc:
                raise ValidationError("pending points require a Monte Carlo variant")
            if spec.x_pending.shape[1] != model.data.dims:
                raise ValidationError("pending points do not match the model dimension")
        self._base = base_cache if base_cache is not None else _BaseSampleCache(spec)

    @property
    def is_mc(self) -> bool:
        return self.spec.is_mc

    @property
    def deterministic(self) -> bool:
        """True when repeated evaluation at the same batch returns the same value."""
        return (not self.is_mc) or self.spec.fix_base_samples \
            or self.spec.base_samples is not None

    def add_pending(self, x_pending) -> "AcquisitionFunction":
        return AcquisitionFunction(self.model, with_pending(self.spec, x_pending),
                                   predictor=self.predictor, base_cache=self._base)

    # -- evaluation ---------------------------------------------------------

    def _batch(self, x_batch) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_batch, dtype=float))
        if x.shape[1] != self.model.data.dims:
            raise ValidationError(
                f"batch points are {x.shape[1]}-dimensional, model expects "
                f"{self.model.data.dims}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("batch points must be finite")
        if len(x) < 1:
            raise ValidationError("the batch must contain at least one point")
        return x

    def value(self, x_batch) -> float:
        x = self._batch(x_batch)
        if self.is_mc:
            return self._mc(x, need_grad=False)[0]
        return self._analytic(x, need_grad=False)[0]

    def value_and_grad(self, x_batch) -> tuple[float, np.ndarray]:
        """Acquisition value and its gradient with respect to the batch (q, d)."""
        x = self._batch(x_batch)
        if self.is_mc:
            return self._mc(x, need_grad=True)
        return self._analytic(x, need_grad=True)

    def _analytic(self, x: np.ndarray, need_grad: bool):
        if len(x) != 1:
            raise ValidationError("analytic acquisitions are single-point (q = 1)")
        spec = self.spec
        if need_grad:
            mu, var, dmu, dvar = self.predictor.mean_var_grad(x[0])
        else:
            mu, var = self.predictor.mean_var(x[0])
            dmu = dvar = None
        sigma = math.sqrt(var)
        if spec.variant == "ei":
            value = ei_value(mu, sigma, spec.y_best)
            if not need_grad:
                return value, None
            if sigma < SIGMA_FLOOR:
                grad = dmu if mu > spec.y_best else np.zeros_like(dmu)
            else:
                z = (mu - spec.y_best) / sigma
                grad = ndtr(z) * dmu + _phi(z) * dvar / (2.0 * sigma)
            return value, grad[None, :]
        value = ucb_value(mu, sigma, spec.beta)
        if not need_grad:
            return value, None
        dsigma = dvar / (2.0 * max(sigma, SIGMA_FLOOR))
        grad = dmu + math.sqrt(spec.beta) * dsigma
        return value, grad[None, :]

    def _mc(self, x_batch: np.ndarray, need_grad: bool):
        spec = self.spec
        pend = spec.x_pending
        p = 0 if pend is None else len(pend)
        joint = x_batch if pend is None else np.vstack([pend, x_batch])
        q, d = x_batch.shape
        m = p + q

        mu, cov, dmu, g_vecs = self.predictor.mc_parts(joint, q, need_grad)
        chol, _ = chol_with_jitter(cov)
        z = self._base.take(m)                      # (S, m)
        if not need_grad:
            if spec.variant == "mcei":
                return mc_ei_from_samples(mu, chol, z, spec.y_best), None
            return mc_ucb_from_samples(mu, chol, z, spec.beta), None

        dev = z @ chol.T                            # (S, m)
        if spec.variant == "mcei":
            scores = np.maximum(mu[None, :] + dev - spec.y_best, 0.0)
        else:
            c = math.sqrt(spec.beta * math.pi / 2.0)
            scores = mu[None, :] + c * np.abs(dev)
        jstar = np.argmax(scores, axis=1)           # (S,)
        s_idx = np.arange(len(z))
        best = scores[s_idx, jstar]
        value = float(best.mean())

        # dSigma for batch coordinate (i, a) is e_r g^T + g e_r^T with r = p + i;
        # dL = L Phi(u_r h^T + h u_r^T) per coordinate, Phi = tril with half diagonal
        rhs = np.empty((m, q + q * d))
        rhs[:, :q] = 0.0
        rhs[np.arange(p, m), np.arange(q)] = 1.0
        rhs[:, q:] = g_vecs.reshape(q * d, m).T
        sol = solve_triangular(chol, rhs, lower=True, check_finite=False)
        u = sol[:, :q]                                                           # (m, q)
        h = sol[:, q:].T.reshape(q, d, m)
        ub = u.T[:, None, :]                                                     # (q, 1, m)
        pmat = ub[..., :, None] * h[..., None, :] + h[..., :, None] * ub[..., None, :]
        pmat *= _tril_mask(m)
        diag = np.arange(m)
        pmat[..., diag, diag] *= 0.5
        dchol = np.einsum("jk,qdkl->qdjl", chol, pmat)                           # (q, d, m, m)

        # derivative of the selected sample path per (coordinate, sample)
        dl_sel = dchol[:, :, jstar, :]                                           # (q, d, S, m)
        ddev = np.einsum("qdsm,sm->qds", dl_sel, z)                              # (q, d, S)

        if spec.variant == "mcei":
            active = best > 0.0
            grad = (ddev * active[None, None, :]).mean(axis=2)
            for i in range(q):
                weight = float(np.mean(active & (jstar == p + i)))
                grad[i] += weight * dmu[i]
        else:
            c = math.sqrt(spec.beta * math.pi / 2.0)
            sign = np.sign(dev[s_idx, jstar])
            grad = c * (ddev * sign[None, None, :]).mean(axis=2)
            for i in range(q):
                weight = float(np.mean(jstar == p + i))
                grad[i] += weight * dmu[i]
        return value, grad


# ---------------------------------------------------------------------------
# functional forms
# ---------------------------------------------------------------------------

def ei(model: GPModel, x, y_best: float) -> float:
    """Expected improvement over ``y_best`` at a single point."""
    acq = AcquisitionFunction(model, AcquisitionSpec("ei", y_best=y_best))
    return acq.value(np.atleast_2d(np.asarray(x, dtype=float)))


def ucb(model: GPModel, x, beta: float) -> float:
    """Upper confidence bound mu + sqrt(beta) sigma at a single point."""
    acq = AcquisitionFunction(model, AcquisitionSpec("ucb", beta=beta))
    return acq.value(np.atleast_2d(np.asarray(x, dtype=float)))


def mc_ei(model: GPModel, x_batch, spec: AcquisitionSpec) -> float:
    """Monte Carlo expected improvement of a batch under ``spec``."""
    if spec.y_best is None:
        raise ValidationError("mc_ei requires spec.y_best")
    acq = AcquisitionFunction(model, replace(spec, variant="mcei"))
    return acq.value(x_batch)


def mc_ucb(model: GPModel, x_batch, spec: AcquisitionSpec) -> float:
    """Monte Carlo upper confidence bound of a batch under ``spec``."""
    if spec.beta is None:
        raise ValidationError("mc_ucb requires spec.beta")
    acq = AcquisitionFunction(model, replace(spec, variant="mcucb"))
    return acq.value(x_batch)
