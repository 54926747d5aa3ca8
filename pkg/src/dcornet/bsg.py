"""
Block stochastic gradient training of two networks coupled through a loss
on their feature maps.

Every step updates the X block first, then evaluates the Y block's gradient
at the already-updated X parameters. Each proximal step has the closed form
of a plain gradient step, so with the constraint penalty disabled and a
constant step size a run is exactly alternating SGD.
"""
from __future__ import annotations

import logging
from typing import Iterator, Tuple

import numpy as np

from dcornet.diffgrad import dcor2_value_grad, dcov2_value_grad, dvar2_value_grad
from dcornet.models import BSGConfig, BSGTrace, MLPParams, as_batch
from dcornet.nn import backward, forward_cache, grad_norm, sgd_step
from dcornet.utils import DegenerateError, InvalidInputError, same_n

logger = logging.getLogger(__name__)


def constraint_subgrad(features, m: float) -> np.ndarray:
    """Subgradient of max(0, <A,A> - m) with respect to the features."""
    features = as_batch(features, "features")
    energy = dvar2_value_grad(features)
    if energy.value <= m:
        return np.zeros_like(features)
    return energy.grad


class DcorCoupling:
    """Distance-correlation coupling between two feature batches.

    objective="ratio" is dCor², "inner" is the unnormalised <A,B>.
    """

    def __init__(self, objective: str = "ratio"):
        if objective not in ("ratio", "inner"):
            raise InvalidInputError(f"unknown objective {objective!r}")
        self.objective = objective
        self._fn = dcor2_value_grad if objective == "ratio" else dcov2_value_grad

    def value_grad(self, X, Y) -> Tuple[float, np.ndarray, np.ndarray]:
        gx = self._fn(X, Y, wrt="X")
        gy = self._fn(X, Y, wrt="Y")
        return gx.value, gx.grad, gy.grad


class QuadraticCoupling:
    """(1/2m) Σ ||X_i - Y_i||² + mu (||X_i||² + ||Y_i||²); strongly convex for mu > 0."""

    def __init__(self, mu: float = 1.0):
        if mu < 0:
            raise InvalidInputError("mu must be >= 0")
        self.mu = mu

    def value_grad(self, X, Y) -> Tuple[float, np.ndarray, np.ndarray]:
        X = as_batch(X, "X")
        Y = as_batch(Y, "Y")
        m = same_n(X, Y)
        if X.shape != Y.shape:
            raise InvalidInputError(f"quadratic coupling needs equal shapes, got {X.shape} and {Y.shape}")
        diff = X - Y
        value = (np.vdot(diff, diff) + self.mu * (np.vdot(X, X) + np.vdot(Y, Y))) / (2.0 * m)
        return float(value), (diff + self.mu * X) / m, (self.mu * Y - diff) / m


def minibatch_stream(x, y, m: int, rng: np.random.Generator) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Endless aligned minibatches of exactly m rows, reshuffled every epoch."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise InvalidInputError(f"stream inputs disagree on n: {n} vs {y.shape[0]}")
    if m > n:
        raise InvalidInputError(f"batch size {m} exceeds the {n} available samples")
    while True:
        order = rng.permutation(n)
        for start in range(0, n - m + 1, m):
            idx = order[start:start + m]
            yield x[idx], y[idx]


def _accumulate(avg: MLPParams, current: MLPParams, t: int) -> None:
    # running mean: avg <- avg + (theta_t - avg) / t
    for (wa, ba), (w, b) in zip(avg.layers, current.layers):
        wa += (w - wa) / t
        ba += (b - ba) / t


def _block_step(model: MLPParams, cache, grad_features: np.ndarray, features: np.ndarray,
                cfg: BSGConfig, eta: float) -> Tuple[MLPParams, float]:
    if cfg.constraint_mode == "penalty" and cfg.penalty_weight > 0:
        grad_features = grad_features + cfg.penalty_weight * constraint_subgrad(features, cfg.m)
    grads, _ = backward(model, cache, None, grad_features)
    return sgd_step(model, grads, eta, 0.0), grad_norm(grads)


def bsg_train(fx: MLPParams, fy: MLPParams, stream, cfg: BSGConfig,
              coupling=None) -> Tuple[MLPParams, MLPParams, BSGTrace]:
    """Run T block steps; return the averaged parameters of both models and a trace.

    `stream` yields aligned (x_t, y_t) batches of cfg.m rows. The averages
    cover the iterates Θ^1..Θ^T, the parameters each step starts from.
    A degenerate batch is recorded in the trace and neither block is updated.
    """
    coupling = coupling if coupling is not None else DcorCoupling(cfg.objective)
    eta = cfg.step_size
    stream = iter(stream)
    avg_x, avg_y = fx.copy(), fy.copy()
    trace = BSGTrace(iterates=[] if cfg.keep_iterates else None)
    logger.info("bsg: T=%d m=%d step=%.4g constraint=%s", cfg.T, cfg.m, eta, cfg.constraint_mode)

    for t in range(1, cfg.T + 1):
        if t > 1:
            _accumulate(avg_x, fx, t)
            _accumulate(avg_y, fy, t)
        if trace.iterates is not None:
            trace.iterates.append((fx.copy(), fy.copy()))
        xb, yb = next(stream)
        if xb.shape[0] != cfg.m or yb.shape[0] != cfg.m:
            raise InvalidInputError(f"stream batch of {xb.shape[0]} rows, expected m={cfg.m}")
        record = {"step": t, "objective": None, "grad_norm_x": None, "grad_norm_y": None,
                  "skipped": False}

        try:
            _, feat_x, cache_x = forward_cache(fx, xb)
            _, feat_y, cache_y = forward_cache(fy, yb)
            value, g_x, _ = coupling.value_grad(feat_x, feat_y)
            record["objective"] = value
            new_x, record["grad_norm_x"] = _block_step(fx, cache_x, g_x, feat_x, cfg, eta)

            # Y's gradient sees the updated X block
            _, feat_x, _ = forward_cache(new_x, xb)
            _, _, g_y = coupling.value_grad(feat_x, feat_y)
            new_y, record["grad_norm_y"] = _block_step(fy, cache_y, g_y, feat_y, cfg, eta)
            fx, fy = new_x, new_y
        except DegenerateError as exc:
            logger.warning("bsg step %d skipped: %s", t, exc.message)
            record["skipped"] = True
            trace.skipped_steps += 1

        if t % cfg.trace_every == 0 or t == cfg.T:
            trace.records.append(record)

    trace.final_x, trace.final_y = fx, fy
    return avg_x, avg_y, trace
