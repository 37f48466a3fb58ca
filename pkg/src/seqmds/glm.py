"""Logistic and linear (ridge) regression heads and evaluation metrics.

The logistic solver is damped Newton with step halving; the linear solver
uses the ridge normal equations. In both, the intercept is excluded from
the l2 penalty. Out-of-sample R^2 is the squared sample correlation between
predictions and truths (0 when either side is constant).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from ._util import atomic_open
from .errors import DataError, FitWarning, SingularDesignError

_MAX_ITER = 100
_GRAD_TOL = 1e-8


@dataclass(frozen=True)
class DesignMatrix:
    """Covariate matrix with named columns; first column is the intercept."""

    X: np.ndarray
    columns: tuple[str, ...]
    recipe: str = ""

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise DataError("column names must match matrix width")
        if not np.isfinite(self.X).all():
            raise DataError("design matrix contains non-finite entries")
        if self.X.shape[1] == 0 or not (self.X[:, 0] == 1.0).all():
            raise DataError("first design column must be the intercept (all ones)")

    @property
    def n(self) -> int:
        return self.X.shape[0]


def make_design(named_columns, recipe: str = "") -> DesignMatrix:
    """Assemble a design matrix from (name, values) pairs, prepending the intercept."""
    names = ["intercept"]
    cols = []
    n = None
    for name, values in named_columns:
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1:
            raise DataError(f"column {name!r} must be 1-dimensional")
        if n is None:
            n = v.shape[0]
        elif v.shape[0] != n:
            raise DataError(f"column {name!r} has {v.shape[0]} rows, expected {n}")
        names.append(name)
        cols.append(v)
    if n is None:
        raise DataError("design needs at least one row source")
    X = np.column_stack([np.ones(n), *cols]) if cols else np.ones((n, 1))
    return DesignMatrix(X=X, columns=tuple(names), recipe=recipe)


@dataclass(frozen=True)
class GlmModel:
    kind: str
    beta: np.ndarray
    columns: tuple[str, ...]
    l2: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class Metrics:
    accuracy: float | None = None
    osr2: float | None = None


def _penalty_mask(p: int) -> np.ndarray:
    mask = np.ones(p)
    mask[0] = 0.0
    return mask


def logistic_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray, l2: float) -> float:
    """Penalized Bernoulli log-likelihood (intercept unpenalized)."""
    eta = X @ beta
    ll = float(y @ eta - np.logaddexp(0.0, eta).sum())
    pen = 0.5 * l2 * float((beta[1:] ** 2).sum())
    return ll - pen


def logistic_gradient(X: np.ndarray, y: np.ndarray, beta: np.ndarray, l2: float) -> np.ndarray:
    eta = X @ beta
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(-eta))
    return X.T @ (y - p) - l2 * _penalty_mask(beta.shape[0]) * beta


def _validate_fit_inputs(design: DesignMatrix, target: np.ndarray, l2: float) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (design.n,):
        raise DataError("target length must match design rows")
    if not np.isfinite(target).all():
        raise DataError("target contains non-finite values")
    if l2 < 0:
        raise DataError("l2 penalty must be nonnegative")
    zero_cols = ~np.any(design.X != 0.0, axis=0)
    if zero_cols.any():
        bad = design.columns[int(np.flatnonzero(zero_cols)[0])]
        raise DataError(f"design column {bad!r} is all zeros")
    return target


def fit_logistic(design: DesignMatrix, y, l2: float = 0.0) -> GlmModel:
    """Maximize the penalized log-likelihood by damped Newton.

    Stops at gradient norm < 1e-8 or after 100 iterations. Under perfect
    separation with l2=0 the cap is hit; the model is returned with
    converged=False and a FitWarning.
    """
    y = _validate_fit_inputs(design, y, l2)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("logistic targets must be 0/1")
    X = design.X
    p_dim = X.shape[1]
    mask = _penalty_mask(p_dim)
    beta = np.zeros(p_dim)
    ll = logistic_loglik(X, y, beta, l2)
    iterations = 0
    converged = False
    for _ in range(_MAX_ITER):
        grad = logistic_gradient(X, y, beta, l2)
        if float(np.linalg.norm(grad)) < _GRAD_TOL:
            converged = True
            break
        eta = X @ beta
        with np.errstate(over="ignore"):
            prob = 1.0 / (1.0 + np.exp(-eta))
        w = prob * (1.0 - prob)
        hess = X.T @ (X * w[:, None]) + l2 * np.diag(mask)
        try:
            delta = np.linalg.solve(hess, grad)
            if not np.isfinite(delta).all():
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(hess, grad, rcond=None)[0]
        step = 1.0
        improved = False
        while step >= 2.0**-30:
            cand = beta + step * delta
            cand_ll = logistic_loglik(X, y, cand, l2)
            if np.isfinite(cand_ll) and cand_ll > ll:
                beta, ll = cand, cand_ll
                improved = True
                break
            step *= 0.5
        iterations += 1
        if not improved:
            break
    if not converged:
        converged = float(np.linalg.norm(logistic_gradient(X, y, beta, l2))) < _GRAD_TOL
    if not converged:
        warnings.warn(
            "logistic fit did not reach gradient tolerance "
            "(possible separation; consider l2 > 0)",
            FitWarning,
            stacklevel=2,
        )
    return GlmModel(
        kind="logistic",
        beta=beta,
        columns=design.columns,
        l2=float(l2),
        iterations=iterations,
        converged=converged,
    )


def fit_linear(design: DesignMatrix, z, l2: float = 0.0) -> GlmModel:
    """Solve the ridge normal equations (intercept unpenalized)."""
    z = _validate_fit_inputs(design, z, l2)
    X = design.X
    p_dim = X.shape[1]
    A = X.T @ X + l2 * np.diag(_penalty_mask(p_dim))
    if np.linalg.cond(A) > 1e12:
        raise SingularDesignError(
            f"normal equations are singular at l2={l2:g}; use a positive l2 penalty"
        )
    beta = np.linalg.solve(A, X.T @ z)
    return GlmModel(
        kind="linear",
        beta=beta,
        columns=design.columns,
        l2=float(l2),
        iterations=1,
        converged=True,
    )


def _check_kind(model: GlmModel, kind: str) -> None:
    if model.kind != kind:
        raise DataError(f"expected a {kind} model, got {model.kind}")


def _check_width(model: GlmModel, design: DesignMatrix) -> None:
    if design.X.shape[1] != model.beta.shape[0]:
        raise DataError("design width does not match model coefficients")


def predict_response(model: GlmModel, design: DesignMatrix) -> np.ndarray:
    """Fitted probabilities (logistic) or fitted values (linear)."""
    _check_width(model, design)
    eta = design.X @ model.beta
    if model.kind == "linear":
        return eta
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-eta))


def predict_class(model: GlmModel, design: DesignMatrix) -> np.ndarray:
    """Classify as 1 iff the fitted probability strictly exceeds 0.5."""
    _check_kind(model, "logistic")
    _check_width(model, design)
    return (design.X @ model.beta > 0.0).astype(np.int64)


def evaluate(predictions, truths, kind: str) -> Metrics:
    """Compute accuracy ('accuracy') or out-of-sample R^2 ('osr2')."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape:
        raise DataError("predictions and truths must have equal length")
    if kind == "accuracy":
        return Metrics(accuracy=float((predictions == truths).mean()))
    if kind == "osr2":
        if predictions.std() == 0.0 or truths.std() == 0.0:
            return Metrics(osr2=0.0)
        r = float(np.corrcoef(predictions, truths)[0, 1])
        return Metrics(osr2=min(r * r, 1.0))
    raise DataError(f"unknown metric kind {kind!r}")


def default_l2_grid(n_train: int):
    """Penalty candidates for validated fits: {0, 1e-3, ..., 10} x n_train."""
    return tuple(lam * n_train for lam in (0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0))


def select_l2(
    kind: str,
    train: DesignMatrix,
    y_train,
    val: DesignMatrix,
    y_val,
    grid,
) -> tuple[GlmModel, float]:
    """Fit on train for each penalty; keep the best validation score.

    Logistic models are scored by validation accuracy, linear models by
    validation OSR^2. Ties go to the smaller penalty. Grid points whose
    system is singular are skipped.
    """
    best: GlmModel | None = None
    best_score = -np.inf
    for lam in sorted(float(g) for g in grid):
        try:
            if kind == "logistic":
                model = fit_logistic(train, y_train, l2=lam)
                score = evaluate(predict_class(model, val), y_val, "accuracy").accuracy
            elif kind == "linear":
                model = fit_linear(train, y_train, l2=lam)
                score = evaluate(predict_response(model, val), y_val, "osr2").osr2
            else:
                raise DataError(f"unknown model kind {kind!r}")
        except SingularDesignError:
            continue
        if score > best_score:
            best = model
            best_score = score
    if best is None:
        raise SingularDesignError("no penalty in the grid produced a solvable system")
    return best, best_score


def save_model(model: GlmModel, path) -> None:
    with atomic_open(path, "w") as fh:
        json.dump(
            {
                "kind": model.kind,
                "columns": list(model.columns),
                "beta": model.beta.tolist(),
                "l2": model.l2,
                "iterations": model.iterations,
                "converged": model.converged,
            },
            fh,
        )
        fh.write("\n")


def load_model(path) -> GlmModel:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return GlmModel(
        kind=obj["kind"],
        beta=np.array(obj["beta"], dtype=np.float64),
        columns=tuple(obj["columns"]),
        l2=float(obj["l2"]),
        iterations=int(obj["iterations"]),
        converged=bool(obj["converged"]),
    )


def save_metrics(metrics: Metrics, path) -> None:
    payload = {}
    if metrics.accuracy is not None:
        payload["accuracy"] = metrics.accuracy
    if metrics.osr2 is not None:
        payload["osr2"] = metrics.osr2
    with atomic_open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
