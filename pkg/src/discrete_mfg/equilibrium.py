"""Best responses, Nash-minimizing transition matrices and the one-step
operators ``G`` (backward, values) and ``K`` (forward, distributions)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .core import SolverError, project_simplex, push_forward
from .costs import CostModel, EntropyCost

ROW_TOL = 1e-10
ROW_MAX_ITER = 10_000
SWEEP_TOL = 1e-9
MAX_SWEEPS = 500
TIE_TOL = 1e-12


@dataclass
class NashResult:
    P: np.ndarray
    method: str
    sweeps_used: int = 0
    residual: float = 0.0
    # (row, tied columns) for linear models where the argmin is not unique
    ties: List[Tuple[int, Tuple[int, ...]]] = field(default_factory=list)


def eval_e(pi, P, V, model: CostModel) -> np.ndarray:
    """Expected cost per state ``e_i(pi, P, V)``."""
    return model.expected(np.asarray(pi, dtype=float), np.asarray(P, dtype=float),
                          np.asarray(V, dtype=float))


def _fw_gap(g, q) -> float:
    # Frank-Wolfe gap: an upper bound on f(q) - min f for convex f on the simplex.
    return float(g @ q - g.min())


def _finite_slope(g):
    # -inf slopes (e.g. eps ln q at q_j = 0) become a finite but dominant pull
    g = np.asarray(g, dtype=float)
    bad = ~np.isfinite(g)
    if not bad.any():
        return g
    if np.any(np.isnan(g) | np.isposinf(g)):
        raise SolverError("row gradient is undefined", history=[])
    fin = g[~bad]
    lo = fin.min() if fin.size else 0.0
    spread = (fin.max() - lo) if fin.size else 0.0
    return np.where(bad, lo - 1.0 - spread, g)


def _projected_gradient(obj, grad, q0, tol=ROW_TOL, max_iter=ROW_MAX_ITER):
    raw_grad = grad
    grad = lambda q: _finite_slope(raw_grad(q))  # noqa: E731
    q = project_simplex(q0)
    f = obj(q)
    g = grad(q)
    step = 1.0
    for it in range(max_iter):
        gap = _fw_gap(g, q)
        if gap <= tol:
            return q, gap, it
        while True:
            q_new = project_simplex(q - step * g)
            dq = q_new - q
            f_new = obj(q_new)
            if f_new <= f + g @ dq + (dq @ dq) / (2 * step) + 1e-15 * abs(f):
                break
            step *= 0.5
            if step < 1e-20:
                raise SolverError("row line search collapsed", best=q, history=[gap])
        g_new = grad(q_new)
        # Barzilai-Borwein proposal for the next trial step
        s, y = dq, g_new - g
        sy = s @ y
        step = float(np.clip((s @ s) / sy, 1e-10, 1e10)) if sy > 0 else step * 2.0
        q, f, g = q_new, f_new, g_new
    gap = _fw_gap(g, q)
    if gap <= tol:
        return q, gap, max_iter
    raise SolverError(f"row solver stopped with gap {gap:.3e} after {max_iter} iterations",
                      best=q, history=[gap])


def _vertex_row(costs):
    m = costs.min()
    tied = np.flatnonzero(costs <= m + TIE_TOL * max(1.0, abs(m)))
    q = np.zeros(costs.size)
    q[tied[0]] = 1.0
    return q, tuple(int(t) for t in tied)


def best_response_row(i, pi, P, V, model: CostModel, tol=ROW_TOL, max_iter=ROW_MAX_ITER):
    """Minimizer of ``q -> e_i(pi, P(P, q, i), V)`` over the simplex."""
    pi = np.asarray(pi, dtype=float)
    V = np.asarray(V, dtype=float)
    if isinstance(model, EntropyCost):
        return model.policy(pi, V)[i]
    if model.pi_only:
        return _vertex_row(model.cost_matrix(pi, P)[i] + V)[0]
    P = np.asarray(P, dtype=float)
    q, _, _ = _projected_gradient(
        lambda q: model.row_objective(pi, P, i, q, V),
        lambda q: model.row_gradient(pi, P, i, q, V),
        P[i], tol, max_iter)
    return q


def nash_minimizer(pi, V, model: CostModel, tol=SWEEP_TOL, max_sweeps=MAX_SWEEPS,
                   P0=None) -> NashResult:
    """Transition matrix from which no single row can lower its own expected cost."""
    pi = np.asarray(pi, dtype=float)
    V = np.asarray(V, dtype=float)
    d = model.d
    if isinstance(model, EntropyCost):
        return NashResult(model.policy(pi, V), "closed_form_entropy")
    if model.pi_only:
        C = model.cost_matrix(pi, None) + V[None, :]
        P = np.zeros((d, d))
        ties = []
        for i in range(d):
            P[i], tied = _vertex_row(C[i])
            if len(tied) > 1:
                ties.append((i, tied))
        return NashResult(P, "vertex_linear", ties=ties)

    P = np.full((d, d), 1.0 / d) if P0 is None else np.array(P0, dtype=float)
    inner_tol = min(ROW_TOL, 0.1 * tol)
    if model.separable:
        gaps = []
        for i in range(d):
            q, gap, _ = _projected_gradient(
                lambda q: model.row_objective(pi, P, i, q, V),
                lambda q: model.row_gradient(pi, P, i, q, V),
                P[i], inner_tol)
            P[i] = q
            gaps.append(gap)
        return NashResult(P, "rowwise_convex", 0, float(max(gaps)))

    history = []
    for sweep in range(1, max_sweeps + 1):
        for i in range(d):
            q, _, _ = _projected_gradient(
                lambda q: model.row_objective(pi, P, i, q, V),
                lambda q: model.row_gradient(pi, P, i, q, V),
                P[i], inner_tol)
            P[i] = q
        res = max(_fw_gap(model.row_gradient(pi, P, i, P[i], V), P[i]) for i in range(d))
        history.append(res)
        if res <= tol:
            return NashResult(P, "best_response_sweeps", sweep, res)
    raise SolverError(f"best-response sweeps did not settle (residual {history[-1]:.3e})",
                      best=P, history=history)


def nash_residual(pi, P, V, model: CostModel, n_random=0, rng=None) -> float:
    """Largest gain any row can obtain by deviating.

    Checks the exact best response of each row and, optionally, ``n_random``
    random rows per state.
    """
    pi = np.asarray(pi, dtype=float)
    P = np.asarray(P, dtype=float)
    e = eval_e(pi, P, V, model)
    worst = 0.0
    rng = np.random.default_rng(rng)
    for i in range(model.d):
        cands = [best_response_row(i, pi, P, V, model)]
        cands += list(rng.dirichlet(np.ones(model.d), size=n_random))
        for q in cands:
            worst = max(worst, e[i] - model.row_objective(pi, P, i, q, V))
    return worst


def nash_step(pi, V, model: CostModel, **kw):
    """``(G_pi(V), K_V(pi), P)`` sharing one Nash minimizer."""
    pi = np.asarray(pi, dtype=float)
    V = np.asarray(V, dtype=float)
    if isinstance(model, EntropyCost):
        P = model.policy(pi, V)
        G = model.value(pi, V)
    else:
        P = nash_minimizer(pi, V, model, **kw).P
        G = eval_e(pi, P, V, model)
    return G, push_forward(pi, P), P


def entropy_P(pi, V, model: EntropyCost) -> np.ndarray:
    return model.policy(np.asarray(pi, dtype=float), np.asarray(V, dtype=float))


def apply_G(pi, V, model: CostModel, **kw) -> np.ndarray:
    """Backward operator ``G_pi(V) = e(pi, P_bar, V)``."""
    if isinstance(model, EntropyCost):
        return model.value(np.asarray(pi, dtype=float), np.asarray(V, dtype=float))
    return nash_step(pi, V, model, **kw)[0]


def apply_K(V, pi, model: CostModel, **kw) -> np.ndarray:
    """Forward operator ``K_V(pi) = pi P_bar``."""
    return nash_step(pi, V, model, **kw)[1]
