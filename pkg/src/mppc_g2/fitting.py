"""Weighted Levenberg-Marquardt fits of g2 versus mean counts per pulse.

Two curve models:

``hyperbola``      g = A + B / mu
``crosstalk_ref``  g = (1+2P)/(1+P)^2 + 2P / ((1+P) mu), the crosstalk
                   law for a reference source with true g2 = 1; P is the
                   only parameter.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError

MAX_ITER = 200
CHI2_RTOL = 1e-10
STEP_ATOL = 1e-12
LAMBDA0 = 1e-3


class Model(str, enum.Enum):
    HYPERBOLA = "hyperbola"
    CROSSTALK_REF = "crosstalk_ref"


N_PARAMS = {Model.HYPERBOLA: 2, Model.CROSSTALK_REF: 1}


@dataclass(frozen=True)
class CurvePoint:
    mu: float
    g: float
    sigma: float
    corrected: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")


@dataclass
class FitResult:
    model: str
    params: list[float]
    std_errors: list[float]
    covariance: list[list[float]]
    cod_r2: float
    iterations: int
    converged: bool
    chi2: float = field(default=0.0)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "std_errors": self.std_errors,
            "covariance": self.covariance,
            "cod_r2": self.cod_r2,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def evaluate_model(model, params: Sequence[float], mu):
    model = Model(model)
    mu = np.asarray(mu, dtype=float)
    if model is Model.HYPERBOLA:
        a, b = params
        out = a + b / mu
    else:
        (p,) = params
        out = (1 + 2 * p) / (1 + p) ** 2 + 2 * p / ((1 + p) * mu)
    return out if out.ndim else float(out)


def _jacobian(model: Model, params: np.ndarray, mu: np.ndarray) -> np.ndarray:
    if model is Model.HYPERBOLA:
        return np.column_stack([np.ones_like(mu), 1 / mu])
    (p,) = params
    return (-2 * p / (1 + p) ** 3 + 2 / ((1 + p) ** 2 * mu))[:, None]


def initial_guess(model, points: Sequence[CurvePoint]) -> list[float]:
    """Two-point solve on the extreme-mu points (hyperbola) or P = 0.1."""
    model = Model(model)
    if model is Model.CROSSTALK_REF:
        return [0.1]
    lo = min(points, key=lambda pt: pt.mu)
    hi = max(points, key=lambda pt: pt.mu)
    if lo.mu == hi.mu:
        return [hi.g, 0.0]
    b = (lo.g - hi.g) / (1 / lo.mu - 1 / hi.mu)
    return [hi.g - b / hi.mu, b]


def lm_fit(model, points: Sequence[CurvePoint], initial: Sequence[float] | None = None) -> FitResult:
    """Minimize sum(((g - f(mu)) / sigma)^2) by Levenberg-Marquardt.

    The covariance is the inverse weighted normal matrix at the optimum,
    without rescaling by the reduced chi-square: sigmas are taken as
    absolute errors.
    """
    model = Model(model)
    n_par = N_PARAMS[model]
    if len(points) < n_par + 1:
        raise ValueError(f"{model.value} fit needs at least {n_par + 1} points, got {len(points)}")
    mu = np.array([pt.mu for pt in points], dtype=float)
    g = np.array([pt.g for pt in points], dtype=float)
    w = 1 / np.array([pt.sigma for pt in points], dtype=float)
    params = np.array(initial if initial is not None else initial_guess(model, points), float)
    if params.size != n_par:
        raise ValueError(f"{model.value} takes {n_par} parameters")

    def residuals(par):
        return w * (g - evaluate_model(model, par, mu))

    r = residuals(params)
    chi2 = float(r @ r)
    lam = LAMBDA0
    converged = chi2 == 0.0
    iterations = 0
    while not converged and iterations < MAX_ITER:
        iterations += 1
        jac = w[:, None] * _jacobian(model, params, mu)
        normal = jac.T @ jac
        grad = jac.T @ r
        damping = np.diag(np.where(np.diag(normal) > 0, np.diag(normal), 1.0))
        try:
            step = np.linalg.solve(normal + lam * damping, grad)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        trial = params + step
        r_trial = residuals(trial)
        chi2_trial = float(r_trial @ r_trial)
        step_norm = float(np.linalg.norm(step))
        if chi2_trial < chi2:
            decrease = (chi2 - chi2_trial) / chi2
            params, r, chi2 = trial, r_trial, chi2_trial
            lam /= 10
            converged = decrease < CHI2_RTOL or step_norm < STEP_ATOL or chi2 == 0.0
        else:
            lam *= 10
            converged = step_norm < STEP_ATOL

    jac = w[:, None] * _jacobian(model, params, mu)
    normal = jac.T @ jac
    if np.linalg.matrix_rank(normal) < n_par:
        raise DegenerateFitError(f"singular normal matrix for {model.value} fit")
    cov = np.linalg.inv(normal)
    cov = (cov + cov.T) / 2
    g_bar = float(np.sum(w**2 * g) / np.sum(w**2))
    chi2_mean = float(np.sum((w * (g - g_bar)) ** 2))
    cod = 1.0 - chi2 / chi2_mean if chi2_mean > 0 else (1.0 if chi2 == 0 else float("-inf"))
    return FitResult(
        model=model.value,
        params=params.tolist(),
        std_errors=np.sqrt(np.diag(cov)).tolist(),
        covariance=cov.tolist(),
        cod_r2=cod,
        iterations=iterations,
        converged=bool(converged),
        chi2=chi2,
    )
