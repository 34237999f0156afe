"""Gaussian-process regression of interval max/min load on interval average load.

The model works on standardized data (zero prior mean on the standardized
targets) with a squared-exponential kernel plus a small noise term. Kernel
hyperparameters are always expressed in original units (kW).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, InputError

LAMBDA_FACTORS = (0.1, 0.3, 1.0, 3.0, 10.0)
SIGMA_F_FACTORS = (0.5, 1.0, 2.0)
SIGMA_N_FACTORS = (0.01, 0.05, 0.2)
MAX_JITTER_RETRIES = 3


@dataclass(frozen=True)
class KernelParams:
    sigma_f: float
    length_scale: float
    sigma_n: float

    def __post_init__(self):
        if not (self.sigma_f > 0 and self.length_scale > 0 and self.sigma_n > 0):
            raise ConfigurationError(f"kernel parameters must be positive: {self}")

    def to_dict(self):
        return {"sigma_f": self.sigma_f, "length_scale": self.length_scale, "sigma_n": self.sigma_n}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["sigma_f"]), float(d["length_scale"]), float(d["sigma_n"]))


def kernel(x, xp, params: KernelParams):
    """Squared-exponential covariance, broadcasting elementwise over x and xp."""
    d = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    return params.sigma_f**2 * np.exp(-(d * d) / (2.0 * params.length_scale**2))


def kernel_matrix(xa, xb, params: KernelParams) -> np.ndarray:
    xa = np.asarray(xa, dtype=float).reshape(-1)
    xb = np.asarray(xb, dtype=float).reshape(-1)
    return kernel(xa[:, None], xb[None, :], params)


def _scale(arr):
    s = float(np.std(arr))
    return s if s > 0 else 1.0


@dataclass(frozen=True)
class GprModel:
    x_train: np.ndarray
    y_train: np.ndarray
    params: KernelParams
    target_kind: str
    x_mean: float
    x_std: float
    y_mean: float
    y_std: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    @property
    def std_params(self) -> KernelParams:
        """The kernel parameters in standardized units."""
        return KernelParams(
            self.params.sigma_f / self.y_std,
            self.params.length_scale / self.x_std,
            self.params.sigma_n / self.y_std,
        )

    def to_dict(self) -> dict:
        return {
            "target_kind": self.target_kind,
            "params": self.params.to_dict(),
            "x_train": self.x_train.tolist(),
            "y_train": self.y_train.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GprModel":
        # exact float round trip through JSON + deterministic factorization
        # reproduces the fitted model bit for bit
        return fit(d["x_train"], d["y_train"], KernelParams.from_dict(d["params"]), d["target_kind"])


def fit(x, y, params: KernelParams, target_kind: str = "max") -> GprModel:
    """Condition a GP on training pairs (average load -> bound).

    If the covariance is not numerically positive definite, sigma_n is
    raised tenfold, up to three times.
    """
    x = np.array(x, dtype=float).reshape(-1)
    y = np.array(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise InputError(f"x and y lengths differ ({x.size} vs {y.size})")
    if x.size < 2:
        raise InputError(f"GPR needs at least 2 training pairs, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("non-finite training data")
    if target_kind not in ("max", "min"):
        raise ConfigurationError(f"target_kind must be 'max' or 'min', got {target_kind!r}")
    x_mean, x_std = float(np.mean(x)), _scale(x)
    y_mean, y_std = float(np.mean(y)), _scale(y)
    xs = (x - x_mean) / x_std
    ys = (y - y_mean) / y_std

    current = params
    for attempt in range(MAX_JITTER_RETRIES + 1):
        sp = KernelParams(current.sigma_f / y_std, current.length_scale / x_std, current.sigma_n / y_std)
        k = kernel_matrix(xs, xs, sp)
        k[np.diag_indices_from(k)] += sp.sigma_n**2
        try:
            chol = linalg.cholesky(k, lower=True, check_finite=False)
            break
        except linalg.LinAlgError:
            if attempt == MAX_JITTER_RETRIES:
                raise InputError(
                    f"covariance not positive definite even with sigma_n={current.sigma_n:g}"
                ) from None
            current = KernelParams(current.sigma_f, current.length_scale, current.sigma_n * 10.0)
    alpha = linalg.cho_solve((chol, True), ys, check_finite=False)
    for arr in (x, y, chol, alpha):
        arr.setflags(write=False)
    return GprModel(x, y, current, target_kind, x_mean, x_std, y_mean, y_std, chol, alpha)


def predict(model: GprModel, p_a):
    """Posterior mean and variance of the latent bound at average load ``p_a``.

    Scalars in, scalars out; arrays in, arrays out.
    """
    scalar = np.ndim(p_a) == 0
    xq = (np.atleast_1d(np.asarray(p_a, dtype=float)) - model.x_mean) / model.x_std
    xs = (model.x_train - model.x_mean) / model.x_std
    sp = model.std_params
    k_star = kernel_matrix(xs, xq, sp)
    mean = model.y_mean + model.y_std * (k_star.T @ model.alpha)
    v = linalg.solve_triangular(model.chol, k_star, lower=True, check_finite=False)
    var = sp.sigma_f**2 - np.einsum("ij,ij->j", v, v)
    var = np.maximum(var, 0.0) * model.y_std**2
    if scalar:
        return float(mean[0]), float(var[0])
    return mean, var


def default_grid(
    x,
    y,
    lambda_factors=LAMBDA_FACTORS,
    sigma_f_factors=SIGMA_F_FACTORS,
    sigma_n_factors=SIGMA_N_FACTORS,
) -> list[KernelParams]:
    """Hyperparameter grid scaled to the data spread (length scale outermost)."""
    sx, sy = _scale(x), _scale(y)
    return [
        KernelParams(fs * sy, ls * sx, ns * sy)
        for ls, fs, ns in itertools.product(lambda_factors, sigma_f_factors, sigma_n_factors)
    ]


def select_hyperparams(x, y, grid=None, k_folds: int = 5, seed: int = 0) -> KernelParams:
    """Pick the grid point with the lowest mean k-fold validation RMSE.

    Pairs are put in canonical order before the seeded fold shuffle, so the
    result does not depend on input order. Ties go to the earliest grid point.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if k_folds < 2:
        raise ConfigurationError("k_folds must be >= 2")
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    if grid is None:
        grid = default_grid(x, y)
    grid = list(grid)
    if not grid:
        raise ConfigurationError("hyperparameter grid is empty")
    if len(grid) == 1:
        return grid[0]
    if x.size < k_folds:
        raise InputError(f"{x.size} pairs is too few for {k_folds}-fold cross-validation")
    perm = np.random.default_rng(seed).permutation(x.size)
    folds = np.array_split(perm, k_folds)

    scores = np.full(len(grid), np.inf)
    for gi, params in enumerate(grid):
        errs = []
        for fold in folds:
            mask = np.ones(x.size, dtype=bool)
            mask[fold] = False
            if np.ptp(x[mask]) == 0 or fold.size == 0:
                continue
            try:
                model = fit(x[mask], y[mask], params)
            except InputError:
                continue
            mu, _ = predict(model, x[fold])
            errs.append(np.sqrt(np.mean((mu - y[fold]) ** 2)))
        if errs:
            scores[gi] = np.mean(errs)
    if not np.any(np.isfinite(scores)):
        return grid[0]
    return grid[int(np.argmin(scores))]


def train_bound_model(x, y, target_kind: str, grid=None, k_folds: int = 5, seed: int = 0) -> GprModel:
    """Cross-validate hyperparameters and fit the final model on all pairs."""
    params = select_hyperparams(x, y, grid, k_folds, seed)
    return fit(x, y, params, target_kind)
