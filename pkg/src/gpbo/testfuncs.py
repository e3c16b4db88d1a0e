"""Synthetic benchmark objectives standing in for expensive black boxes.

Closed forms follow the Surjanovic & Bingham virtual library. Every function
exposes ``dims``, ``bounds``, ``optimum_value`` and ``optimum_input`` and
evaluates whole input matrices at once, optionally adding Gaussian noise.
Optima are stored in the instance's own convention: with ``minimise=False``
values and the optimum are negated so the problem reads as maximisation.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


class TestFunction:
    """Base class: subclasses provide ``_raw`` (minimisation convention) and optima."""

    name = "base"

    def __init__(self, dims: int, noise_std: float = 0.0, minimise: bool = True,
                 bounds=None):
        if dims < 1:
            raise ValidationError("dims must be >= 1")
        if noise_std < 0:
            raise ValidationError("noise_std must be >= 0")
        self.dims = int(dims)
        self.noise_std = float(noise_std)
        self.minimise = bool(minimise)
        self.bounds = np.asarray(self._default_bounds() if bounds is None else bounds,
                                 dtype=float)
        if self.bounds.shape != (2, self.dims):
            raise ValidationError(f"bounds must have shape (2, {self.dims})")

    def _default_bounds(self) -> np.ndarray:
        raise NotImplementedError

    def _raw(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def optimum_value(self) -> float:
        return self._min_value if self.minimise else -self._min_value

    @property
    def optimum_input(self) -> np.ndarray:
        return np.asarray(self._min_input, dtype=float)

    def evaluate(self, x, seed: int | None = None,
                 rng: np.random.Generator | None = None) -> np.ndarray:
        """Values at the rows of ``x`` (n x dims), with noise and sign convention applied."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dims:
            raise ValidationError(f"{self.name} expects {self.dims}-dimensional inputs, "
                                  f"got {x.shape[1]}")
        vals = self._raw(x)
        if self.noise_std > 0.0:
            if rng is None:
                rng = np.random.default_rng(seed)
            vals = vals + rng.normal(0.0, self.noise_std, size=vals.shape)
        if not self.minimise:
            vals = -vals
        return vals

    def __call__(self, x, seed: int | None = None,
                 rng: np.random.Generator | None = None) -> np.ndarray:
        return self.evaluate(x, seed=seed, rng=rng)


class Ackley(TestFunction):
    """Highly multi-modal bowl; minimum 0 at the origin, any dimension."""

    name = "ackley"
    _min_value = 0.0

    def __init__(self, dims: int = 2, noise_std: float = 0.0, minimise: bool = True):
        super().__init__(dims, noise_std, minimise)
        self._min_input = np.zeros(self.dims)

    def _default_bounds(self):
        return np.vstack([np.full(self.dims, -32.768), np.full(self.dims, 32.768)])

    def _raw(self, x):
        # written as a(1 - e^..) + (e - e^..) so the origin evaluates to exactly 0
        a, b, c = 20.0, 0.2, 2.0 * np.pi
        term1 = a * (1.0 - np.exp(-b * np.sqrt(np.mean(x * x, axis=1))))
        term2 = np.e - np.exp(np.mean(np.cos(c * x), axis=1))
        return term1 + term2


_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])

_H3_A = np.array([
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
])
_H3_P = 1e-4 * np.array([
    [3689.0, 1170.0, 2673.0],
    [4699.0, 4387.0, 7470.0],
    [1091.0, 8732.0, 5547.0],
    [381.0, 5743.0, 8828.0],
])

_H6_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
_H6_P = 1e-4 * np.array([
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
])


def _hartmann(x: np.ndarray, a: np.ndarray, p: np.ndarray) -> np.ndarray:
    inner = np.einsum("kj,nkj->nk", a, (x[:, None, :] - p[None, :, :]) ** 2)
    return -(np.exp(-inner) @ _HARTMANN_ALPHA)


class Hartmann3D(TestFunction):
    """Three-dimensional Hartmann function on the unit cube (4 local minima)."""

    name = "hartmann3"
    # refined from the literature starting point; gradient ~1e-8 at the optimum
    _min_value = -3.862779787332663
    _min_input = (0.11458887133078371, 0.5556488955562107, 0.852546983879289)

    def __init__(self, noise_std: float = 0.0, minimise: bool = True):
        super().__init__(3, noise_std, minimise)

    def _default_bounds(self):
        return np.vstack([np.zeros(3), np.ones(3)])

    def _raw(self, x):
        return _hartmann(x, _H3_A, _H3_P)


class Hartmann6D(TestFunction):
    """Six-dimensional Hartmann function on the unit cube (6 local minima)."""

    name = "hartmann6"
    _min_value = -3.3223680114155156
    _min_input = (0.20168951035025645, 0.15001069428146627, 0.47687397629494105,
                  0.2753324280657051, 0.311651616078294, 0.6573005325018642)

    def __init__(self, noise_std: float = 0.0, minimise: bool = True):
        super().__init__(6, noise_std, minimise)

    def _default_bounds(self):
        return np.vstack([np.zeros(6), np.ones(6)])

    def _raw(self, x):
        return _hartmann(x, _H6_A, _H6_P)


FUNCTIONS = {
    "ackley": Ackley,
    "hartmann3": Hartmann3D,
    "hartmann6": Hartmann6D,
}


def make(name: str, **kwargs) -> TestFunction:
    """Instantiate a benchmark function by registry name."""
    try:
        cls = FUNCTIONS[name]
    except KeyError:
        raise ValidationError(f"unknown test function {name!r}; "
                              f"choose from {sorted(FUNCTIONS)}") from None
    return cls(**kwargs)


def evaluate(spec: TestFunction, x, seed: int | None = None) -> np.ndarray:
    """Functional form of :meth:`TestFunction.evaluate`."""
    return spec.evaluate(x, seed=seed)
