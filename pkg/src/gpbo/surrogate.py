"""Gaussian-process regression: kernels, exact posteriors, likelihood, fitting.

The surrogate is a GP with a zero or constant prior mean and an RBF or
Matern-5/2 kernel over the lengthscale-normalised distance

    r^2 = sum_d ((x_d - x'_d) / l_d)^2,

with one lengthscale per input dimension (ARD) or a single tied value.
Posterior prediction conditions on the training data through the Cholesky
factor of K(X, X) + noise:

    mu(X*)  = m(X*) + K(X*, X) [K(X, X) + noise]^-1 (y - m(X))
    cov(X*) = K(X*, X*) - K(X*, X) [K(X, X) + noise]^-1 K(X, X*)

where noise is sigma2_y * I, or diag(fixed_noise) (plus sigma2_y * I when the
additional noise is learned). Factorisations apply an escalating diagonal
jitter relative to the mean diagonal for conditioning.

Hyperparameters are fitted by maximising the log-marginal likelihood

    log p(y | X) = -1/2 (y - m)^T A^-1 (y - m) - 1/2 log|A| - n/2 log 2pi

with A = K + noise, using Adam ascent over log-reparameterised parameters
(positivity without explicit bounds) and analytic gradients from the trace
identity d(log p)/d theta = 1/2 tr((alpha alpha^T - A^-1) dA/d theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve

from .exceptions import (
    FitInitialisationError,
    IllConditionedKernelError,
    InvalidHyperparameterError,
    ValidationError,
)

MEAN_KINDS = ("zero", "constant")
KERNEL_KINDS = ("rbf", "matern52")

# jitter escalates x10 from 1e-8 to 1e-4, relative to mean(diag)
_JITTER_FACTORS = tuple(1e-8 * 10.0 ** k for k in range(5))
_LOG_NOISE_EPS = 1e-8  # smooth positive reparameterisation log(sigma2_y + eps)
_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Dataset:
    """Training inputs (n x d), observations (n,), optional per-point noise variances."""

    inputs: np.ndarray
    outputs: np.ndarray
    fixed_noise: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim != 2:
            raise ValidationError("inputs must be a 2-d array of shape (n, d)")
        self.outputs = np.asarray(self.outputs, dtype=float).reshape(-1)
        if len(self.outputs) != len(self.inputs):
            raise ValidationError(
                f"{len(self.inputs)} input rows but {len(self.outputs)} outputs")
        if self.inputs.size and not np.all(np.isfinite(self.inputs)):
            raise ValidationError("inputs must be finite")
        if self.outputs.size and not np.all(np.isfinite(self.outputs)):
            raise ValidationError("outputs must be finite")
        if self.fixed_noise is not None:
            self.fixed_noise = np.asarray(self.fixed_noise, dtype=float).reshape(-1)
            if len(self.fixed_noise) != len(self.inputs):
                raise ValidationError("fixed_noise length must match the number of points")
            if self.fixed_noise.size and (not np.all(np.isfinite(self.fixed_noise))
                                          or np.any(self.fixed_noise < 0)):
                raise ValidationError("fixed_noise entries must be finite and >= 0")

    @classmethod
    def empty(cls, dims: int) -> "Dataset":
        return cls(np.empty((0, dims)), np.empty(0))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dims(self) -> int:
        return self.inputs.shape[1]

    def extend(self, x, y, fixed_noise=None) -> "Dataset":
        """New dataset with extra rows appended."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if (self.fixed_noise is None) != (fixed_noise is None):
            raise ValidationError("fixed_noise must be provided for all points or none")
        noise = None
        if self.fixed_noise is not None:
            noise = np.concatenate([self.fixed_noise,
                                    np.asarray(fixed_noise, dtype=float).reshape(-1)])
        return Dataset(np.vstack([self.inputs, x]),
                       np.concatenate([self.outputs, y]), noise)


@dataclass(eq=False)
class GPHyperparameters:
    """Mean, kernel and likelihood parameters; positivity validated on construction."""

    mean_constant: float = 0.0
    signal_variance: float = 1.0
    lengthscales: np.ndarray = 1.0
    noise_variance: float = 0.0
    learn_noise: bool = True

    def __post_init__(self):
        self.mean_constant = float(self.mean_constant)
        self.signal_variance = float(self.signal_variance)
        self.noise_variance = float(self.noise_variance)
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if not np.isfinite(self.mean_constant):
            raise InvalidHyperparameterError("mean_constant must be finite")
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise InvalidHyperparameterError("signal_variance must be finite and > 0")
        if not (np.all(np.isfinite(self.lengthscales)) and np.all(self.lengthscales > 0)):
            raise InvalidHyperparameterError("every lengthscale must be finite and > 0")
        if not (np.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise InvalidHyperparameterError("noise_variance must be finite and >= 0")


@dataclass(eq=False)
class GPModel:
    """A mean/kernel choice and hyperparameters bound to a dataset."""

    mean_kind: str
    kernel_kind: str
    ard: bool
    hyper: GPHyperparameters
    data: Dataset

    def __post_init__(self):
        if self.mean_kind not in MEAN_KINDS:
            raise ValidationError(f"mean_kind must be one of {MEAN_KINDS}")
        if self.kernel_kind not in KERNEL_KINDS:
            raise ValidationError(f"kernel_kind must be one of {KERNEL_KINDS}")
        d = self.data.dims
        ls = self.hyper.lengthscales
        if ls.size == 1 and d > 1:
            self.hyper = replace(self.hyper, lengthscales=np.full(d, float(ls[0])))
        elif ls.size != d:
            raise InvalidHyperparameterError(
                f"{ls.size} lengthscales for {d}-dimensional data")
        if not self.ard and not np.all(self.hyper.lengthscales
                                       == self.hyper.lengthscales[0]):
            raise InvalidHyperparameterError(
                "ard=False requires all lengthscales tied to a single value")


def initial_hyperparameters(data: Dataset, learn_noise: bool = True) -> GPHyperparameters:
    """Data-driven starting point: c = mean(y), sigma2_f = var(y), l = 1, sigma2_y = var(y)/100."""
    y = data.outputs
    var = float(np.var(y)) if len(y) else 1.0
    var = max(var, 1e-6)
    return GPHyperparameters(
        mean_constant=float(np.mean(y)) if len(y) else 0.0,
        signal_variance=var,
        lengthscales=np.ones(max(data.dims, 1)),
        noise_variance=1e-2 * var,
        learn_noise=learn_noise,
    )


def default_model(data: Dataset, *, mean_kind: str = "constant",
                  kernel_kind: str = "matern52", ard: bool = True,
                  learn_noise: bool = True) -> GPModel:
    """Constant-mean Matern-5/2 ARD model with data-driven starting hyperparameters."""
    return GPModel(mean_kind, kernel_kind, ard,
                   initial_hyperparameters(data, learn_noise=learn_noise), data)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _scaled_sqdist(x: np.ndarray, x2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = x / lengthscales
    b = x2 / lengthscales
    d2 = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def kernel_matrix(kernel_kind: str, hyper: GPHyperparameters,
                  x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix between the rows of ``x`` and ``x2``."""
    d2 = _scaled_sqdist(x, x2, hyper.lengthscales)
    s2 = hyper.signal_variance
    if kernel_kind == "rbf":
        return s2 * np.exp(-0.5 * d2)
    r = np.sqrt(d2)
    return s2 * (1.0 + _SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-_SQRT5 * r)


def kernel_eval(kernel_kind: str, hyper: GPHyperparameters, x, x2) -> float:
    """Covariance between two points under the lengthscale-normalised distance."""
    if kernel_kind not in KERNEL_KINDS:
        raise ValidationError(f"kernel_kind must be one of {KERNEL_KINDS}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise ValidationError("kernel inputs must be finite")
    if x.shape != x2.shape:
        raise ValidationError("x and x2 must have the same length")
    ls = hyper.lengthscales
    if not np.all(ls > 0):
        raise InvalidHyperparameterError("every lengthscale must be > 0")
    if ls.size not in (1, x.size):
        raise ValidationError(f"{ls.size} lengthscales for {x.size}-dimensional points")
    h = hyper if ls.size == x.size else replace(hyper, lengthscales=np.full(x.size, ls[0]))
    return float(kernel_matrix(kernel_kind, h, x[None, :], x2[None, :])[0, 0])


def kernel_grad_x(kernel_kind: str, hyper: GPHyperparameters,
                  x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Gradient d k(x, x2_j) / d x as an (m, d) array over the rows of ``x2``."""
    ls = hyper.lengthscales
    s2 = hyper.signal_variance
    diff = (x[None, :] - x2) / (ls * ls)
    d2 = _scaled_sqdist(x[None, :], x2, ls)[0]
    if kernel_kind == "rbf":
        k = s2 * np.exp(-0.5 * d2)
        return -k[:, None] * diff
    r = np.sqrt(d2)
    coef = -(5.0 / 3.0) * s2 * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
    return coef[:, None] * diff


# ---------------------------------------------------------------------------
# factorisation and posterior
# ---------------------------------------------------------------------------

_EYE_CACHE: dict[int, np.ndarray] = {}


def _eye(n: int) -> np.ndarray:
    out = _EYE_CACHE.get(n)
    if out is None:
        out = _EYE_CACHE[n] = np.eye(n)
    return out


def chol_with_jitter(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a + jitter * I`` with escalating relative jitter.

    The jitter scale is mean(diag(a)), falling back to 1.0 for degenerate
    (near-zero) matrices so that PSD-but-singular covariances still factorise.
    """
    scale = float(np.mean(np.diag(a))) if a.size else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    eye = _eye(a.shape[0])
    jitter = 0.0
    for factor in _JITTER_FACTORS:
        jitter = factor * scale
        try:
            return np.linalg.cholesky(a + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedKernelError(
        f"Cholesky failed at the maximum jitter {jitter:.3e}", jitter=jitter)


def _noise_diagonal(model: GPModel) -> np.ndarray:
    data, hyper = model.data, model.hyper
    if data.fixed_noise is not None:
        diag = data.fixed_noise.copy()
        if hyper.learn_noise:
            diag += hyper.noise_variance
        return diag
    return np.full(len(data), hyper.noise_variance)


def _mean_vector(model: GPModel, x: np.ndarray) -> np.ndarray:
    if model.mean_kind == "constant":
        return np.full(len(x), model.hyper.mean_constant)
    return np.zeros(len(x))


@dataclass(eq=False)
class PosteriorDistribution:
    """Joint Gaussian posterior at a set of test points.

    ``chol_factor`` is the lower factor of ``covariance + jitter * I``;
    ``covariance`` itself is stored without the jitter.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol_factor: np.ndarray
    jitter: float

    @property
    def variance(self) -> np.ndarray:
        return np.maximum(np.diag(self.covariance), 0.0)

    @property
    def stddev(self) -> np.ndarray:
        return np.sqrt(self.variance)


class GPPredictor:
    """Cached training factorisation for repeated posterior queries.

    Builds (K + noise)^-1 once via Cholesky; posterior means, covariances and
    their spatial gradients then cost O(n^2 m) per query.
    """

    def __init__(self, model: GPModel):
        if len(model.data) < 1:
            raise ValidationError("the posterior requires at least one training point")
        self.model = model
        X = model.data.inputs
        K = kernel_matrix(model.kernel_kind, model.hyper, X, X)
        A = K + np.diag(_noise_diagonal(model))
        self.chol, self.train_jitter = chol_with_jitter(A)
        n = len(X)
        self.a_inv = cho_solve((self.chol, True), np.eye(n), check_finite=False)
        resid = model.data.outputs - _mean_vector(model, X)
        self.alpha = cho_solve((self.chol, True), resid, check_finite=False)
        # cached lengthscale-normalised training inputs for fast repeated queries
        ls = model.hyper.lengthscales
        self._inv_sq_ls = 1.0 / (ls * ls)
        self._x_scaled = X / ls
        self._x_scaled_sq = (self._x_scaled * self._x_scaled).sum(axis=1)

    def _validated(self, x_test) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_test, dtype=float))
        if x.shape[1] != self.model.data.dims:
            raise ValidationError(
                f"test points are {x.shape[1]}-dimensional, model expects "
                f"{self.model.data.dims}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("test points must be finite")
        return x

    def joint_parts(self, x_test) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(mean, covariance, K(X, X*), A^-1 K(X, X*)) at the test points."""
        x = self._validated(x_test)
        model = self.model
        k_cross = kernel_matrix(model.kernel_kind, model.hyper, model.data.inputs, x)
        mu = _mean_vector(model, x) + k_cross.T @ self.alpha
        w = self.a_inv @ k_cross
        cov = kernel_matrix(model.kernel_kind, model.hyper, x, x) - k_cross.T @ w
        cov = 0.5 * (cov + cov.T)
        return mu, cov, k_cross, w

    def mc_parts(self, joint: np.ndarray, q: int, need_grad: bool):
        """Fused posterior pieces at ``joint`` for the Monte Carlo hot path.

        Returns (mu, cov, dmu, g) where the gradients cover the last ``q``
        joint rows (the batch): dmu[i] is the mean gradient of batch row i and
        g[i, a, j] = d k(x_r, joint_j) / d x_ra - (d k(x_r, X) / d x_ra)^T W_:j
        with r = m - q + i, the row/column perturbation of the covariance.
        Distances and kernel exponentials are shared between values and
        gradients; inputs are assumed validated by the caller.
        """
        model = self.model
        h = model.hyper
        s2 = h.signal_variance
        kind = model.kernel_kind
        p = len(joint) - q
        b = joint / h.lengthscales
        b_sq = (b * b).sum(axis=1)
        d2_cross = (self._x_scaled_sq[:, None] + b_sq[None, :]
                    - 2.0 * (self._x_scaled @ b.T))
        np.maximum(d2_cross, 0.0, out=d2_cross)
        d2_tt = b_sq[:, None] + b_sq[None, :] - 2.0 * (b @ b.T)
        np.maximum(d2_tt, 0.0, out=d2_tt)
        if kind == "rbf":
            k_cross = s2 * np.exp(-0.5 * d2_cross)
            k_tt = s2 * np.exp(-0.5 * d2_tt)
        else:
            r_cross = np.sqrt(d2_cross)
            e_cross = np.exp(-_SQRT5 * r_cross)
            k_cross = s2 * (1.0 + _SQRT5 * r_cross + (5.0 / 3.0) * d2_cross) * e_cross
            r_tt = np.sqrt(d2_tt)
            e_tt = np.exp(-_SQRT5 * r_tt)
            k_tt = s2 * (1.0 + _SQRT5 * r_tt + (5.0 / 3.0) * d2_tt) * e_tt
        mu = _mean_vector(model, joint) + k_cross.T @ self.alpha
        w = self.a_inv @ k_cross
        cov = k_tt - k_cross.T @ w
        cov = 0.5 * (cov + cov.T)
        if not need_grad:
            return mu, cov, None, None

        batch = joint[p:]
        diffs_train = ((batch[:, None, :] - model.data.inputs[None, :, :])
                       * self._inv_sq_ls)                       # (q, n, d)
        diffs_joint = (batch[:, None, :] - joint[None, :, :]) * self._inv_sq_ls
        if kind == "rbf":
            coef_train = -k_cross[:, p:].T                      # (q, n)
            coef_joint = -k_tt[:, p:].T                         # (q, m)
        else:
            c = -(5.0 / 3.0) * s2
            coef_train = c * ((1.0 + _SQRT5 * r_cross[:, p:]) * e_cross[:, p:]).T
            coef_joint = c * ((1.0 + _SQRT5 * r_tt[:, p:]) * e_tt[:, p:]).T
        jk = coef_train[:, :, None] * diffs_train               # (q, n, d)
        jj = coef_joint[:, :, None] * diffs_joint               # (q, m, d)
        dmu = jk.transpose(0, 2, 1) @ self.alpha                # (q, d)
        g = jj.transpose(0, 2, 1) - np.einsum("qnd,nm->qdm", jk, w)
        return mu, cov, dmu, g

    def mean_cov(self, x_test) -> tuple[np.ndarray, np.ndarray]:
        mu, cov, _, _ = self.joint_parts(x_test)
        return mu, cov

    def posterior(self, x_test) -> PosteriorDistribution:
        mu, cov = self.mean_cov(x_test)
        chol, jitter = chol_with_jitter(cov)
        return PosteriorDistribution(mu, cov, chol, jitter)

    def mean_var(self, x) -> tuple[float, float]:
        """Posterior mean and (non-negative) variance at a single point."""
        x = self._validated(x)[0]
        model = self.model
        k_vec = kernel_matrix(model.kernel_kind, model.hyper,
                              model.data.inputs, x[None, :])[:, 0]
        mu = float(_mean_vector(model, x[None, :])[0] + k_vec @ self.alpha)
        var = float(model.hyper.signal_variance - k_vec @ (self.a_inv @ k_vec))
        return mu, max(var, 0.0)

    def mean_var_grad(self, x) -> tuple[float, float, np.ndarray, np.ndarray]:
        """Single-point mean/variance plus their gradients with respect to ``x``."""
        x = self._validated(x)[0]
        model = self.model
        X = model.data.inputs
        k_vec = kernel_matrix(model.kernel_kind, model.hyper, X, x[None, :])[:, 0]
        jac = kernel_grad_x(model.kernel_kind, model.hyper, x, X)  # (n, d)
        mu = float(_mean_vector(model, x[None, :])[0] + k_vec @ self.alpha)
        dmu = jac.T @ self.alpha
        w = self.a_inv @ k_vec
        var = float(model.hyper.signal_variance - k_vec @ w)
        dvar = -2.0 * (jac.T @ w)
        return mu, max(var, 0.0), dmu, dvar


def posterior(model: GPModel, x_test) -> PosteriorDistribution:
    """Exact GP posterior at the rows of ``x_test``."""
    return GPPredictor(model).posterior(x_test)


# ---------------------------------------------------------------------------
# log-marginal likelihood and fitting
# ---------------------------------------------------------------------------

def log_marginal_likelihood(model: GPModel) -> float:
    """Exact log-marginal likelihood of the model's data."""
    if len(model.data) < 1:
        raise ValidationError("the log-marginal likelihood requires training data")
    X = model.data.inputs
    K = kernel_matrix(model.kernel_kind, model.hyper, X, X)
    A = K + np.diag(_noise_diagonal(model))
    chol, _ = chol_with_jitter(A)
    resid = model.data.outputs - _mean_vector(model, X)
    alpha = cho_solve((chol, True), resid, check_finite=False)
    n = len(X)
    return float(-0.5 * resid @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * _LOG_2PI)


def free_parameter_names(model: GPModel) -> list[str]:
    """Order of the unconstrained parameters used by the fit."""
    names = []
    if model.mean_kind == "constant":
        names.append("mean_constant")
    names.append("log_signal_variance")
    if model.ard:
        names.extend(f"log_lengthscale_{i}" for i in range(model.data.dims))
    else:
        names.append("log_lengthscale")
    if model.hyper.learn_noise:
        names.append("log_noise_variance")
    return names


def _pack(model: GPModel) -> np.ndarray:
    h = model.hyper
    parts = []
    if model.mean_kind == "constant":
        parts.append(h.mean_constant)
    parts.append(math.log(h.signal_variance))
    if model.ard:
        parts.extend(np.log(h.lengthscales))
    else:
        parts.append(math.log(h.lengthscales[0]))
    if h.learn_noise:
        parts.append(math.log(h.noise_variance + _LOG_NOISE_EPS))
    return np.asarray(parts, dtype=float)


def _unpack(model: GPModel, u: np.ndarray) -> GPHyperparameters:
    h = model.hyper
    d = model.data.dims
    i = 0
    mean_constant = h.mean_constant
    if model.mean_kind == "constant":
        mean_constant = float(u[i])
        i += 1
    signal_variance = math.exp(u[i])
    i += 1
    if model.ard:
        lengthscales = np.exp(u[i:i + d])
        i += d
    else:
        lengthscales = np.full(d, math.exp(u[i]))
        i += 1
    noise_variance = h.noise_variance
    if h.learn_noise:
        noise_variance = max(math.exp(u[i]) - _LOG_NOISE_EPS, 0.0)
        i += 1
    return GPHyperparameters(mean_constant, signal_variance, lengthscales,
                             noise_variance, h.learn_noise)


def lml_and_grad(model: GPModel) -> tuple[float, np.ndarray]:
    """Log-marginal likelihood and its gradient over the free parameters.

    Gradient entries follow :func:`free_parameter_names`; kernel terms use the
    trace identity with B = alpha alpha^T - A^-1.
    """
    if len(model.data) < 1:
        raise ValidationError("the log-marginal likelihood requires training data")
    X = model.data.inputs
    h = model.hyper
    n, d = X.shape
    K = kernel_matrix(model.kernel_kind, h, X, X)
    A = K + np.diag(_noise_diagonal(model))
    chol, _ = chol_with_jitter(A)
    resid = model.data.outputs - _mean_vector(model, X)
    alpha = cho_solve((chol, True), resid, check_finite=False)
    a_inv = cho_solve((chol, True), np.eye(n), check_finite=False)
    value = float(-0.5 * resid @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * _LOG_2PI)

    B = np.outer(alpha, alpha) - a_inv
    grads = []
    if model.mean_kind == "constant":
        grads.append(float(alpha.sum()))
    grads.append(0.5 * float((B * K).sum()))  # d/d log sigma2_f

    d2 = _scaled_sqdist(X, X, h.lengthscales)
    if model.kernel_kind == "rbf":
        base = K
    else:
        r = np.sqrt(d2)
        base = (5.0 / 3.0) * h.signal_variance * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
    if model.ard:
        for j in range(d):
            dcol = X[:, j][:, None] - X[:, j][None, :]
            dk = base * (dcol * dcol) / (h.lengthscales[j] ** 2)
            grads.append(0.5 * float((B * dk).sum()))
    else:
        grads.append(0.5 * float((B * (base * d2)).sum()))
    if h.learn_noise:
        grads.append(0.5 * float(np.trace(B)) * (h.noise_variance + _LOG_NOISE_EPS))
    return value, np.asarray(grads)


def fit(model: GPModel, lr: float = 0.1, steps: int = 200, restarts: int = 1,
        seed: int | None = None) -> GPModel:
    """Maximise the log-marginal likelihood over reparameterised hyperparameters.

    Runs Adam ascent in log space, returning the model at the best likelihood
    seen (the trajectory is not monotone). ``restarts > 1`` adds seeded
    perturbations of the starting point and keeps the best run. Fixed noise
    entries and a frozen ``noise_variance`` (learn_noise=False) are untouched.
    """
    from .optimise import stochastic_maximise

    if lr <= 0:
        raise ValidationError("fit requires lr > 0")
    if steps < 1:
        raise ValidationError("fit requires steps >= 1")
    if restarts < 1:
        raise ValidationError("fit requires restarts >= 1")

    def objective(u):
        return lml_and_grad(replace(model, hyper=_unpack(model, u)))

    u0 = _pack(model)
    v0, g0 = objective(u0)
    if not (np.isfinite(v0) and np.all(np.isfinite(g0))):
        raise FitInitialisationError(
            "log-marginal likelihood is non-finite at the starting hyperparameters; "
            "consider standardising the outputs")

    best_u, best_v = stochastic_maximise(objective, u0, bounds=None, lr=lr, steps=steps)
    rng = np.random.default_rng(seed)
    for _ in range(restarts - 1):
        u_r = u0 + rng.normal(0.0, 0.5, size=u0.shape)
        if model.mean_kind == "constant":
            u_r[0] = u0[0]  # perturb only the log-scale parameters
        cand_u, cand_v = stochastic_maximise(objective, u_r, bounds=None, lr=lr, steps=steps)
        if cand_v > best_v:
            best_u, best_v = cand_u, cand_v
    if best_v < v0:
        best_u = u0
    return replace(model, hyper=_unpack(model, best_u))
