"""First-order solver for smooth convex programs with simple constraints.

Minimizes ``f(x)`` subject to ``x`` lying in a product of convex sets with
cheap exact projections and to affine equalities ``A x = b``.  Projections
are handled exactly by projected gradient steps (Barzilai-Borwein initial
step, Armijo backtracking); equalities by an augmented-Lagrangian penalty
whose weight grows whenever the residual stops shrinking.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .scenario import SolverParams

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]
Projection = Callable[[np.ndarray], np.ndarray]

ARMIJO_SIGMA = 1e-4
BACKTRACK = 0.5
MIN_STEP = 1e-30
MAX_STEP = 1e30
MAX_ROUNDS = 200
ROUND_SHARE = 10


class SolverError(RuntimeError):
    def __init__(self, message: str, point: np.ndarray):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class AffineEquality:
    """Residual ``r(x) = A x - b`` given through callbacks for ``r`` and ``A^T y``."""

    residual: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, A, b) -> "AffineEquality":
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(lambda x: A @ x - b, lambda y: A.T @ y)


@dataclass
class ConvexProblem:
    objective: Objective
    dim: int
    projections: Sequence[Projection] = ()
    equalities: Sequence[AffineEquality] = ()

    def project(self, x: np.ndarray) -> np.ndarray:
        # the sets act on disjoint coordinate blocks, so composing the
        # individual projections is the projection onto their product
        for proj in self.projections:
            x = proj(x)
        return x


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    grad_norm: float
    eq_residual: float
    iterations: int
    converged: bool
    penalty: float
    history: list = field(default_factory=list)


def ball_projection(sl: slice, radius: float, block: int = 2) -> Projection:
    """Project consecutive ``block``-sized chunks of ``x[sl]`` onto norm balls."""

    def project(x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float)
        seg = x[sl].reshape(-1, block)
        norms = np.linalg.norm(seg, axis=1)
        scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
        x[sl] = (seg * scale[:, None]).ravel()
        return x

    return project


def _check_finite(value: float, grad: np.ndarray, x: np.ndarray) -> None:
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise SolverError("non-finite objective or gradient", x.copy())


def solve(problem: ConvexProblem, start, params: SolverParams, trace: bool = False) -> SolveReport:
    """Minimize ``problem`` from ``start``; see module docstring for the method."""
    x = problem.project(np.array(start, dtype=float))
    if x.shape != (problem.dim,):
        raise ValueError(f"start has shape {x.shape}, expected ({problem.dim},)")
    eqs = list(problem.equalities)
    lams = [np.zeros_like(eq.residual(x)) for eq in eqs]
    mu = float(params.penalty_init)
    tol = params.inner_grad_tol
    feas_tol = params.feas_tol_equality
    history: list = []

    def augmented(z: np.ndarray) -> tuple[float, np.ndarray, float]:
        f, g = problem.objective(z)
        f = float(f)
        g = np.array(g, dtype=float)
        _check_finite(f, g, z)
        res_max = 0.0
        for eq, lam in zip(eqs, lams):
            r = eq.residual(z)
            f += float(lam @ r) + 0.5 * mu * float(r @ r)
            g = g + eq.adjoint(lam + mu * r)
            res_max = max(res_max, float(np.max(np.abs(r), initial=0.0)))
        return f, g, res_max

    def pg_norm(z: np.ndarray, g: np.ndarray, f: float) -> float:
        return float(np.linalg.norm(z - problem.project(z - g))) / (1.0 + abs(f))

    iters = 0
    F, G, res = augmented(x)
    step = 1.0 / max(float(np.linalg.norm(G)), 1e-12)
    pg = pg_norm(x, G, F)
    res_prev = math.inf
    # with equalities, cap each round so the multipliers get updated
    round_cap = max(1, params.inner_max_iters // ROUND_SHARE) if eqs else params.inner_max_iters
    for _round in range(MAX_ROUNDS):
        # inner projected-gradient loop at fixed multipliers and penalty
        round_end = min(params.inner_max_iters, iters + round_cap)
        while iters < round_end and pg > tol:
            t = step
            while True:
                xn = problem.project(x - t * G)
                Fn, Gn, res_n = augmented(xn)
                if Fn <= F + ARMIJO_SIGMA * float(G @ (xn - x)):
                    break
                t *= BACKTRACK
                if t < MIN_STEP:
                    break
            iters += 1
            if t < MIN_STEP:
                break
            s = xn - x
            y = Gn - G
            sy = float(s @ y)
            step = float(s @ s) / sy if sy > 0 else 2.0 * t
            step = min(max(step, MIN_STEP * 1e6), MAX_STEP)
            stalled = float(s @ s) == 0.0
            x, F, G, res = xn, Fn, Gn, res_n
            pg = pg_norm(x, G, F)
            if trace:
                history.append((iters, F, pg, mu, res))
            if stalled:
                break
        if not eqs or iters >= params.inner_max_iters:
            break
        if res <= feas_tol and pg <= tol:
            break
        # multiplier update; grow the penalty when the residual stalls
        for i, eq in enumerate(eqs):
            lams[i] = lams[i] + mu * eq.residual(x)
        if res > feas_tol and res > 0.25 * res_prev:
            mu *= params.penalty_growth
        res_prev = res
        F, G, res = augmented(x)
        pg = pg_norm(x, G, F)
        if res <= feas_tol and pg <= tol:
            break
        step = 1.0 / max(float(np.linalg.norm(G)), 1e-12)
        if iters >= params.inner_max_iters:
            break

    f_final, _ = problem.objective(x)
    converged = pg <= tol and res <= feas_tol
    return SolveReport(x=x, objective=float(f_final), grad_norm=pg, eq_residual=res,
                       iterations=iters, converged=converged, penalty=mu, history=history)


def trace_csv(report: SolveReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "objective", "grad_norm", "penalty", "residual"])
    for row in report.history:
        writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()
