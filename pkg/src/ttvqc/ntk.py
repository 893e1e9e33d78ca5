"""Empirical neural tangent kernels for circuit models.

The Gram matrix of per-input trainable gradients determines linearized
training dynamics (through its smallest eigenvalue) and enters generalization
bounds (through its trace).  This module assembles the kernel, diagonalizes
it with a self-contained Jacobi solver, and compares the TT-generated and
directly parameterized conditioning."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NTKMatrix",
    "ConditioningReport",
    "TraceReport",
    "ntk_matrix",
    "jacobi_eigenvalues",
    "min_eigenvalue",
    "trace_identity_check",
    "compare_conditioning",
]


def _inputs_fingerprint(inputs) -> str:
    h = hashlib.sha256()
    for x in inputs:
        h.update(np.ascontiguousarray(np.asarray(x, dtype=float)).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class NTKMatrix:
    """Gram matrix gram[n, m] = <grad f(x_n), grad f(x_m)> over trainables."""

    gram: np.ndarray
    model: str
    inputs_fingerprint: str

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise ValueError("gram must be square")
        asym = float(np.max(np.abs(gram - gram.T))) if gram.size else 0.0
        if asym > 1e-10 * max(1.0, float(np.max(np.abs(gram)))):
            raise ValueError(f"gram asymmetry {asym} exceeds tolerance")
        object.__setattr__(self, "gram", gram)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.gram))


def ntk_matrix(model, inputs, tag: str | None = None) -> tuple:
    """Assemble the kernel for a model over a list of inputs.

    Returns (NTKMatrix, per-input gradient matrix of shape (N, n_trainables)).
    The model only needs ``value_and_grad(x)``.
    """
    if len(inputs) < 1:
        raise ValueError("need at least one input")
    grads = []
    width = None
    for x in inputs:
        _, g = model.value_and_grad(x)
        g = np.asarray(g, dtype=float).ravel()
        if width is None:
            width = g.shape[0]
        elif g.shape[0] != width:
            raise ValueError("inconsistent gradient dimensions across inputs")
        grads.append(g)
    grad_mat = np.vstack(grads)
    gram = grad_mat @ grad_mat.T
    gram = 0.5 * (gram + gram.T)
    if tag is None:
        tag = type(model).__name__
    return NTKMatrix(gram, tag, _inputs_fingerprint(inputs)), grad_mat


def jacobi_eigenvalues(matrix, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below tol relative to
    the matrix scale.  Independent of LAPACK so tests can use numpy's
    eigensolver as a genuinely separate oracle.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-8 * max(1.0, float(np.max(np.abs(a))) if a.size else 1.0):
        raise ValueError(f"matrix asymmetry {asym} exceeds 1e-8 tolerance")
    a = 0.5 * (a + a.T)
    if n == 1:
        return a.ravel().copy()
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float(np.sum(np.square(a)) - np.sum(np.square(np.diag(a))))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * scale / (n * n):
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
    return np.sort(np.diag(a))


def min_eigenvalue(matrix, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a real symmetric matrix (cyclic Jacobi)."""
    return float(jacobi_eigenvalues(matrix, tol=tol)[0])


@dataclass(frozen=True)
class TraceReport:
    trace: float
    grad_norm_sum: float
    c_emp: float
    rank_product: int
    bound: float            # N * c_emp * rank_product, holds by construction

    @property
    def bound_holds(self) -> bool:
        return self.trace <= self.bound + 1e-9 * max(1.0, abs(self.bound))


def trace_identity_check(ntk: NTKMatrix, per_input_grad_norms_sq, rank_product: int = 1) -> TraceReport:
    """Verify Tr(gram) = sum of squared gradient norms and report the tight
    trace-bound constant c_emp = max_n ||grad f(x_n)||^2 / rank_product."""
    norms = np.asarray(per_input_grad_norms_sq, dtype=float).ravel()
    if norms.shape[0] != ntk.n:
        raise ValueError(f"expected {ntk.n} gradient norms, got {norms.shape[0]}")
    total = float(np.sum(norms))
    trace = ntk.trace
    if abs(trace - total) > 1e-10 * max(1.0, abs(trace)):
        raise AssertionError(
            f"trace identity violated: Tr(gram)={trace} vs sum of norms {total}"
        )
    c_emp = float(np.max(norms)) / rank_product if ntk.n else 0.0
    bound = ntk.n * c_emp * rank_product
    return TraceReport(trace, total, c_emp, int(rank_product), bound)


@dataclass(frozen=True)
class ConditioningReport:
    seed: int
    lambda_min_tt: float
    lambda_min_direct: float
    trace_tt: float
    trace_direct: float
    rank_product: int

    @property
    def tt_at_least_direct(self) -> bool:
        return self.lambda_min_tt >= self.lambda_min_direct - 1e-12

    def row(self) -> dict:
        return {
            "seed": self.seed,
            "lambda_min_tt": self.lambda_min_tt,
            "lambda_min_direct": self.lambda_min_direct,
            "trace_tt": self.trace_tt,
            "trace_direct": self.trace_direct,
            "rank_product": self.rank_product,
        }


def fit_exponential_decay(values) -> tuple:
    """Fit values[t] ~ c0 * exp(-rate * t) by least squares on the log.

    Diagnostic only: linearized convergence theory predicts the training
    error shrinking at the kernel's smallest eigenvalue rate, with an
    unspecified constant, so the fit is reported rather than asserted.
    Requires positive values; returns (c0, rate).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need at least two values to fit a decay curve")
    if np.any(values <= 0):
        raise ValueError("decay fit requires positive values")
    t = np.arange(values.size)
    slope, intercept = np.polyfit(t, np.log(values), 1)
    return float(np.exp(intercept)), float(-slope)


def compare_conditioning(tt_model_builder, direct_model_builder, inputs, seeds) -> list:
    """Per seed, both kernels, both smallest eigenvalues, both traces.

    Builders map a seed to a freshly initialized model sharing the same
    circuit and readout.  The smallest-eigenvalue comparison is reported, not
    asserted: callers summarize the fraction of seeds where the TT kernel is
    at least as well conditioned.
    """
    reports = []
    for seed in seeds:
        tt_model = tt_model_builder(seed)
        direct_model = direct_model_builder(seed)
        ntk_tt, _ = ntk_matrix(tt_model, inputs, tag="tt")
        ntk_direct, _ = ntk_matrix(direct_model, inputs, tag="direct-vqc")
        reports.append(ConditioningReport(
            seed=int(seed),
            lambda_min_tt=min_eigenvalue(ntk_tt.gram),
            lambda_min_direct=min_eigenvalue(ntk_direct.gram),
            trace_tt=ntk_tt.trace,
            trace_direct=ntk_direct.trace,
            rank_product=getattr(tt_model, "rank_product", 1),
        ))
    return reports
