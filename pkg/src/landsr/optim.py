"""Batch optimizers: scaled conjugate gradient and plain SGD.

The SCG implementation follows Moller's published algorithm: conjugate
directions with curvature obtained by finite-differencing the gradient
along the search direction, safeguarded by a Levenberg-Marquardt scale
parameter that grows on failed or poorly modelled steps. It needs no
line search and, on a positive-definite quadratic, reduces to exact CG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class SgdConfig:
    learning_rate: float
    batch_size: int
    epochs: int
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def _checked_eval(objective, params: np.ndarray):
    loss, grad = objective(params)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(loss):
        raise ValueError(f"objective returned non-finite loss {loss!r}")
    if not np.isfinite(grad).all():
        raise ValueError("objective returned non-finite gradient")
    return float(loss), grad


def scg_minimize(objective, init: np.ndarray, max_iter: int = 500,
                 grad_tol: float = 1e-6, sigma0: float = 1e-4,
                 lambda_init: float = 1e-6, restart_every: int | None = None):
    """Minimize a deterministic objective with scaled conjugate gradient.

    ``objective(params) -> (loss, gradient)``. Terminates when the
    gradient's max-norm drops to ``grad_tol`` or after ``max_iter``
    iterations. Returns (params, trace) where trace holds the initial
    loss followed by the loss of every accepted step, a non-increasing
    sequence.
    """
    w = np.array(init, dtype=np.float64)
    if not np.isfinite(w).all():
        raise ValueError("initial parameters are non-finite")
    n = max(w.size, 1)
    restart = restart_every or n

    f, g = _checked_eval(objective, w)
    trace = [f]
    r = -g
    p = r.copy()
    lam = float(lambda_init)
    lam_bar = 0.0
    success = True
    delta_raw = 0.0
    p2 = 0.0
    k = 0

    while k < max_iter and np.max(np.abs(r), initial=0.0) > grad_tol:
        k += 1

        if success:
            p2 = float(p @ p)
            if p2 == 0.0:
                break
            sigma = sigma0 / math.sqrt(p2)
            _, g_sigma = _checked_eval(objective, w + sigma * p)
            delta_raw = float(p @ ((g_sigma - g) / sigma))

        # Levenberg-Marquardt scaling; force positive curvature.
        delta = delta_raw + (lam - lam_bar) * p2
        if delta <= 0.0:
            lam_bar = 2.0 * (lam - delta / p2)
            delta = -delta + lam * p2
            lam = lam_bar

        mu = float(p @ r)
        if mu <= 0.0:
            # Conjugacy degenerated into a non-descent direction; restart
            # from steepest descent (r is nonzero here by the loop guard).
            p = r.copy()
            p2 = float(p @ p)
            sigma = sigma0 / math.sqrt(p2)
            _, g_sigma = _checked_eval(objective, w + sigma * p)
            delta_raw = float(p @ ((g_sigma - g) / sigma))
            lam_bar = 0.0
            delta = delta_raw + lam * p2
            if delta <= 0.0:
                lam_bar = 2.0 * (lam - delta / p2)
                delta = -delta + lam * p2
                lam = lam_bar
            mu = p2

        alpha = mu / delta
        w_try = w + alpha * p
        if not np.isfinite(w_try).all():
            # Never hand non-finite parameters to the objective; shrink the
            # implied trust region hard and retry.
            lam = 4.0 * (lam + delta / p2)
            lam_bar = lam
            success = False
            continue

        f_try, g_try = _checked_eval(objective, w_try)
        comparison = 2.0 * delta * (f - f_try) / (mu * mu)

        if comparison >= 0.0:
            w = w_try
            f = f_try
            r_new = -g_try
            g = g_try
            lam_bar = 0.0
            success = True
            if k % restart == 0:
                p = r_new.copy()
            else:
                beta = float((r_new @ r_new - r_new @ r) / mu)
                p = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                lam = 0.25 * lam
            trace.append(f)
        else:
            lam_bar = lam
            success = False

        if comparison < 0.25:
            lam = lam + delta * (1.0 - comparison) / p2

    return w, trace


def sgd_train(objective_on_batch, init: np.ndarray, config: SgdConfig,
              dataset_size: int):
    """Mini-batch gradient descent with a seeded shuffle per epoch.

    ``objective_on_batch(params, indices) -> (loss, gradient)`` evaluates
    the mean loss over the given sample indices. Returns the final
    parameters and the per-epoch mean loss trace.
    """
    if dataset_size < 1:
        raise ValueError("dataset_size must be >= 1")
    rng = np.random.default_rng(config.seed)
    w = np.array(init, dtype=np.float64)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(dataset_size)
        losses = []
        for start in range(0, dataset_size, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grad = objective_on_batch(w, idx)
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            w = w - config.learning_rate * np.asarray(grad, dtype=np.float64)
            losses.append(float(loss))
        trace.append(float(np.mean(losses)))
    return w, trace


def write_loss_trace(path, trace) -> None:
    """Emit a loss trace as two-column CSV (iteration, loss)."""
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")
        for i, loss in enumerate(trace):
            fh.write(f"{i},{loss!r}\n")
