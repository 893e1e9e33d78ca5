"""Classical optimizers: Adam for gradient training, a COBYLA-style
linear-model trust-region method for derivative-free minimization, and a
deterministic training loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "AdamState",
    "adam_init",
    "adam_step",
    "DfoResult",
    "dfo_minimize",
    "EpochRecord",
    "train_loop",
    "save_history",
]


@dataclass(frozen=True)
class AdamState:
    t: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("step count must be >= 0")
        if self.m.shape != self.v.shape:
            raise ValueError("moment vectors must have matching shapes")
        if np.any(self.v < 0):
            raise ValueError("second moments must be non-negative")


def adam_init(n_params: int, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(0, np.zeros(n_params), np.zeros(n_params), lr, beta1, beta2, eps)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> tuple:
    """One bias-corrected Adam update; returns (new state, new params)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise ValueError("gradient has non-finite entries")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads**2
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, t=t, m=m, v=v), new_params


@dataclass(frozen=True)
class DfoResult:
    x: np.ndarray
    fun: float
    evaluations: int
    budget_exhausted: bool


class _Budget:
    def __init__(self, objective, budget: int):
        self.objective = objective
        self.budget = budget
        self.used = 0
        self.best_x = None
        self.best_f = math.inf

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def __call__(self, x: np.ndarray) -> float:
        if self.used >= self.budget:
            raise _BudgetExhausted
        self.used += 1
        f = float(self.objective(np.array(x, dtype=float)))
        if f < self.best_f:
            self.best_f = f
            self.best_x = np.array(x, dtype=float)
        return f


class _BudgetExhausted(Exception):
    pass


def dfo_minimize(objective, x0, rho_begin: float = 0.5, rho_end: float = 1e-6,
                 budget: int = 500) -> DfoResult:
    """Derivative-free trust-region descent on a linear interpolation model.

    Maintains n+1 interpolation points, fits a linear model, steps the
    incumbent by the trust radius along the model's descent direction, and
    halves the radius from rho_begin toward rho_end on failed steps.  Counts
    every objective call against ``budget`` exactly and always returns the
    best point seen, so the result is never worse than x0.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.shape[0]
    if not 0 < rho_end <= rho_begin:
        raise ValueError("need 0 < rho_end <= rho_begin")
    if budget < n + 2:
        raise ValueError(f"budget {budget} too small: need at least {n + 2} evaluations")

    call = _Budget(objective, budget)
    exhausted = False
    try:
        call(x0)
        rho = rho_begin
        # Interpolation set: incumbent at index 0 plus n displaced points.
        pts = [np.array(x0, dtype=float)]
        fvals = [call.best_f]
        for i in range(n):
            step = np.zeros(n)
            step[i] = rho
            pts.append(x0 + step)
            fvals.append(call(x0 + step))

        def promote_best():
            b = int(np.argmin(fvals))
            if b != 0:
                pts[0], pts[b] = pts[b], pts[0]
                fvals[0], fvals[b] = fvals[b], fvals[0]

        promote_best()
        streak = 0
        while True:
            diffs = np.array([p - pts[0] for p in pts[1:]])
            dists = np.linalg.norm(diffs, axis=1)
            u, s, vt = np.linalg.svd(diffs, full_matrices=False)
            degenerate = s[-1] < 0.05 * rho
            spread_out = float(np.max(dists)) > 2.5 * rho
            if degenerate or spread_out:
                # Geometry repair: move the farthest point onto the direction
                # the set covers worst, at the current radius.
                direction = vt[-1]
                candidate = pts[0] + rho * direction
                worst = int(np.argmax(dists)) + 1
                fvals[worst] = call(candidate)
                pts[worst] = candidate
                promote_best()
                continue
            grad = np.linalg.lstsq(diffs, np.array(fvals[1:]) - fvals[0], rcond=None)[0]
            gnorm = float(np.linalg.norm(grad))
            accepted = False
            if np.isfinite(gnorm) and gnorm > 1e-14:
                direction = grad / gnorm
                candidate = pts[0] - rho * direction
                f_cand = call(candidate)
                if f_cand < fvals[0] - 1e-14:
                    accepted = True
                    worst = int(np.argmax(fvals))
                    pts[worst] = candidate
                    fvals[worst] = f_cand
                    promote_best()
                    # probe a doubled step along the same descent direction
                    extended = pts[0] - 2.0 * rho * direction
                    f_ext = call(extended)
                    if f_ext < fvals[0] - 1e-14:
                        worst = int(np.argmax(fvals))
                        pts[worst] = extended
                        fvals[worst] = f_ext
                        promote_best()
                    streak += 1
                    if streak >= 2:
                        # a run of successes suggests the radius is too timid;
                        # never grow past the starting radius
                        rho = min(rho * 1.5, rho_begin)
            if not accepted:
                streak = 0
                if rho <= rho_end:
                    break
                rho = max(rho / 2.0, rho_end)
    except _BudgetExhausted:
        exhausted = True
    return DfoResult(call.best_x, call.best_f, call.used, exhausted)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    metric: float
    wall_ms: float


def train_loop(step, params0: np.ndarray, state: AdamState, epochs: int) -> tuple:
    """Run ``epochs`` optimizer steps of ``step(params) -> (loss, grads, metric)``.

    Returns (history, final params, final state).  The history is append-only
    and serializable; with a deterministic ``step`` the loss/metric stream is
    a pure function of the inputs.  A non-finite loss aborts immediately with
    the offending epoch named.
    """
    params = np.array(params0, dtype=float)
    history: list = []
    for epoch in range(epochs):
        tic = time.perf_counter()
        loss, grads, metric = step(params)
        if not math.isfinite(loss):
            raise ValueError(f"non-finite loss {loss} at epoch {epoch}")
        state, params = adam_step(state, params, grads)
        wall_ms = (time.perf_counter() - tic) * 1000.0
        history.append(EpochRecord(epoch, float(loss), float(metric), wall_ms))
    return history, params, state


def save_history(history, path, include_timing: bool = False) -> None:
    """Write history as CSV (epoch, loss, metric, wall_ms).

    Timing is only serialized on request: reruns of a seeded experiment must
    produce byte-identical artifacts, and wall time is not a function of the
    seed.  The in-memory records always carry the measured value.
    """
    lines = ["epoch,loss,metric,wall_ms"]
    for rec in history:
        wall = repr(rec.wall_ms) if include_timing else "0"
        lines.append(f"{rec.epoch},{rec.loss!r},{rec.metric!r},{wall}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
