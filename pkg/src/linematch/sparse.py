"""Nonnegative L1-regularized least squares for small dense problems.

Both solvers minimize

    lam * sum(w) + 0.5 * ||A w - b||^2    subject to  w >= 0

:func:`solve_homotopy` follows the exact piecewise-linear solution path from
``lam_max = max(A.T @ b)`` down to the requested ``lam``.
:func:`solve_ista` is a plain projected proximal-gradient loop kept as an
independent check of the homotopy solver.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

log = logging.getLogger(__name__)

_COND_LIMIT = 1e12


class NonConvergence(RuntimeError):
    """Raised when a solver exhausts its iteration budget."""


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.1
    max_iters: Optional[int] = None  # None -> 4 * n + 16
    tolerance: float = 1e-9
    row_weights: Optional[Sequence[float]] = None  # None -> all ones

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.row_weights is not None:
            w = np.asarray(self.row_weights, dtype=float)
            if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("row_weights must be finite and nonnegative")

    def iteration_budget(self, n: int) -> int:
        return self.max_iters if self.max_iters is not None else 4 * n + 16


def objective(A, b, w, lam) -> float:
    r = np.asarray(A) @ w - b
    return float(lam * np.sum(np.abs(w)) + 0.5 * r @ r)


def kkt_violation(A, b, w, lam) -> float:
    """Largest violation of the nonnegative-lasso optimality conditions.

    With ``c = A.T @ (b - A w)`` a minimizer has ``c_j == lam`` wherever
    ``w_j > 0`` and ``c_j <= lam`` elsewhere, and no negative entries.
    """
    return float(_kkt(np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(b, dtype=float),
                      np.ascontiguousarray(w, dtype=float), float(lam)))


@numba.njit(cache=True)
def _kkt(A, b, w, lam):
    c = A.T @ (b - A @ w)
    viol = 0.0
    for j in range(w.shape[0]):
        if w[j] > 0.0:
            viol = max(viol, abs(c[j] - lam))
        else:
            viol = max(viol, c[j] - lam, -w[j])
    return viol


def solve_homotopy(A, b, cfg: SolverConfig | None = None) -> np.ndarray:
    """Nonnegative lasso by homotopy continuation on the penalty weight.

    Breakpoints where two columns would enter at once are resolved by
    admitting the lower column index first. Raises :class:`NonConvergence`
    when the breakpoint budget ``cfg.max_iters`` is exceeded.
    """
    cfg = cfg or SolverConfig()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    if cfg.row_weights is not None:
        rw = np.asarray(cfg.row_weights, dtype=float)
        A = rw[:, None] * A
        b = rw * b
    return _solve_homotopy_unchecked(np.ascontiguousarray(A), np.ascontiguousarray(b), cfg)


def _solve_homotopy_unchecked(A, b, cfg):
    n = A.shape[1]
    if n == 0:
        return np.zeros(0)
    budget = cfg.iteration_budget(n)
    w, status = _fit(A, b, float(cfg.lam), budget, float(cfg.tolerance))
    if status == 1:
        raise NonConvergence(f"homotopy exceeded {budget} breakpoints (n={n})")
    if status == 2:
        log.debug("homotopy path degenerate; polishing with coordinate descent")
        w = _coordinate_descent(A, b, cfg.lam, w, cfg.tolerance)
        if _kkt(A, b, w, cfg.lam) > cfg.tolerance:
            raise NonConvergence("homotopy could not certify optimality")
    return w


@numba.njit(cache=True)
def _gather(A, cols, k):
    out = np.empty((A.shape[0], k))
    for i in range(k):
        out[:, i] = A[:, cols[i]]
    return out


@numba.njit(cache=True)
def _homotopy_path(A, b, lam, budget):
    n = A.shape[1]
    w = np.zeros(n)
    c = A.T @ b
    t = c.max()
    if t <= lam:
        return w, 0
    eps = 1e-13 * max(1.0, np.abs(c).max())

    active = np.empty(n, dtype=np.int64)
    is_active = np.zeros(n, dtype=np.bool_)
    blocked = np.zeros(n, dtype=np.bool_)
    k = 0
    for j in range(n):
        if c[j] >= t - eps:
            active[0] = j
            is_active[j] = True
            k = 1
            break
    just_left = -1

    for _ in range(budget):
        A_act = _gather(A, active, k)
        u = np.linalg.solve(A_act.T @ A_act, np.ones(k))
        a = A.T @ (A_act @ u)  # rate at which correlations fall as t decreases

        gamma = t - lam
        event = 0
        who = -1
        for j in range(n):
            if is_active[j] or blocked[j] or j == just_left or a[j] >= 1.0 - 1e-12:
                continue
            g = max((t - c[j]) / (1.0 - a[j]), 0.0)
            if g < gamma:  # strict: ties keep the lowest index
                gamma, event, who = g, 1, j
        for i in range(k):
            if u[i] < 0.0:
                g = -w[active[i]] / u[i]
                if g < gamma:
                    gamma, event, who = g, 2, i

        for i in range(k):
            w[active[i]] += gamma * u[i]
        c -= gamma * a
        t -= gamma
        just_left = -1

        if event == 0:
            return w, 0
        if event == 1:
            active[k] = who
            trial = _gather(A, active, k + 1)
            if np.linalg.cond(trial.T @ trial) > _COND_LIMIT:
                blocked[who] = True
                continue
            is_active[who] = True
            k += 1
        else:
            j = active[who]
            for i in range(who, k - 1):
                active[i] = active[i + 1]
            k -= 1
            is_active[j] = False
            w[j] = 0.0
            just_left = j
            blocked[:] = False
            if k == 0:
                # path emptied: restart from the most correlated column
                top = np.argmax(c)
                if c[top] <= lam:
                    return w, 0
                t = c[top]
                active[0] = top
                is_active[top] = True
                k = 1
    return w, 1


@numba.njit(cache=True)
def _refine_active(A, b, w, lam):
    # re-solve the active-set equations to wipe accumulated step error
    act = np.flatnonzero(w > 0.0)
    if act.size == 0:
        return w
    A_act = _gather(A, act, act.size)
    gram = A_act.T @ A_act
    if np.linalg.cond(gram) > _COND_LIMIT:
        return w
    sol = np.linalg.solve(gram, A_act.T @ b - lam)
    if np.any(sol <= 0.0):
        return w
    out = np.zeros_like(w)
    out[act] = sol
    return out


@numba.njit(cache=True)
def _fit(A, b, lam, budget, tol):
    """Homotopy fit; status 0 ok, 1 budget exhausted, 2 optimality not certified."""
    w, status = _homotopy_path(A, b, lam, budget)
    if status != 0:
        return w, 1
    w = _refine_active(A, b, w, lam)
    if _kkt(A, b, w, lam) > tol:
        return w, 2
    return w, 0


def _coordinate_descent(A, b, lam, w0, tol, max_sweeps=100_000):
    w = np.maximum(np.array(w0, dtype=float), 0.0)
    col_sq = np.einsum("ij,ij->j", A, A)
    r = b - A @ w
    for _ in range(max_sweeps):
        delta = 0.0
        for j in np.flatnonzero(col_sq > 0):
            new = max(w[j] + (A[:, j] @ r - lam) / col_sq[j], 0.0)
            if new != w[j]:
                r -= A[:, j] * (new - w[j])
                delta = max(delta, abs(new - w[j]))
                w[j] = new
        if delta < 1e-15 or _kkt(A, b, w, lam) <= tol:
            break
    return _refine_active(A, b, w, lam)


def solve_ista(A, b, lam: float, tol: float = 1e-14, max_iters: int = 5_000_000,
               accelerated: bool = True) -> np.ndarray:
    """Projected proximal gradient with fixed step ``1 / ||A.T A||_2``.

    Each iteration takes a gradient step, soft-thresholds by ``lam / L`` and
    clamps at zero, stopping once the largest coordinate change drops below
    ``tol``. With ``accelerated`` the extrapolated (FISTA) sequence is used,
    restarting the momentum whenever it points uphill; the plain iteration
    needs on the order of 1e8 steps when near-duplicate columns are active.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    n = A.shape[1]
    L = float(np.linalg.norm(A, 2)) ** 2 if A.size else 0.0
    if L == 0.0:
        return np.zeros(n)
    w, iters = _prox_grad_loop(A, b, float(lam), 1.0 / L, float(tol), int(max_iters), bool(accelerated))
    if iters < 0:
        raise NonConvergence(f"ISTA did not reach tol={tol} in {max_iters} iterations")
    return w


@numba.njit(cache=True)
def _prox_grad_loop(A, b, lam, step, tol, max_iters, accelerated):
    n = A.shape[1]
    w = np.zeros(n)
    y = np.zeros(n)
    tk = 1.0
    for it in range(max_iters):
        grad = A.T @ (A @ y - b)
        w_new = np.maximum(y - step * (grad + lam), 0.0)
        change = np.max(np.abs(w_new - w))
        if accelerated:
            if np.dot(y - w_new, w_new - w) > 0.0:
                tk = 1.0
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = w_new + ((tk - 1.0) / t_new) * (w_new - w)
            tk = t_new
        else:
            y = w_new
        w = w_new
        if change < tol:
            return w, it + 1
    return w, -1


def normalize_weights(w) -> tuple[np.ndarray, bool]:
    """Scale ``w`` to unit sum.

    Returns ``(weights, has_candidate)``; an all-zero vector comes back
    unchanged with ``has_candidate`` False.
    """
    w = np.asarray(w, dtype=float)
    total = float(w.sum())
    if total > 0:
        return w / total, True
    return w.copy(), False
