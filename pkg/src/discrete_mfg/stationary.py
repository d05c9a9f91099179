"""Stationary solutions ``(pi, V, lambda, P)`` with ``G_pi(V) = V + lambda`` and
``K_V(pi) = pi``.

Three routes are provided: the Perron-Frobenius construction for entropy
models, a damped fixed-point iteration of the mean-normalized pair
``(G_hat, K_hat)`` for any model, and the convex program over stationary
edge measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .core import (EdgeMeasure, InvalidInput, SolverError, as_dist, canon, norm,
                   sharp_norm)
from .costs import CostModel, EntropyCost, VariationalObjective, monotone_w
from .equilibrium import nash_step

OMEGA = 0.5
# plain power steps before switching to a squared matrix
SQUARE_EVERY = 200
OMEGA_FLOOR = 1e-3
TOL = 1e-10


@dataclass
class StationarySolution:
    pi_bar: np.ndarray
    V_bar: np.ndarray
    lambda_bar: float
    P_bar: np.ndarray
    residual_value: float
    residual_dist: float
    info: Dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "pi_bar": [float(x) for x in self.pi_bar],
            "V_bar": [float(x) for x in self.V_bar],
            "lambda_bar": float(self.lambda_bar),
            "P_bar": [[float(x) for x in row] for row in self.P_bar],
            "residual_value": float(self.residual_value),
            "residual_dist": float(self.residual_dist),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, rec: dict) -> "StationarySolution":
        return cls(np.array(rec["pi_bar"]), np.array(rec["V_bar"]), float(rec["lambda_bar"]),
                   np.array(rec["P_bar"]), float(rec["residual_value"]),
                   float(rec["residual_dist"]))


def stationary_residuals(pi, V, model: CostModel, value_norm="sup", dist_norm="euclid"):
    """``(residual_value, residual_dist, lambda, P)`` for a candidate pair."""
    G, K, P = nash_step(pi, V, model)
    lam = float(np.mean(G - V))
    return sharp_norm(G - V - lam, value_norm), norm(K - pi, dist_norm), lam, P


def _solution(pi, V, model, **info) -> StationarySolution:
    V = canon(V)
    rv, rd, lam, P = stationary_residuals(pi, V, model)
    return StationarySolution(pi, V, lam, P, rv, rd, info)


# Perron-Frobenius route

@dataclass
class PerronResult:
    eigenvalue: float
    psi: np.ndarray
    V_pi: np.ndarray
    lambda_pi: float
    iterations: int


def perron_eigen(pi, model: EntropyCost, tol=1e-12, max_iter=100_000, psi0=None) -> PerronResult:
    """Principal eigenpair of ``L_pi psi = sum_k exp(-c_ik(pi)/eps) psi_k`` by power iteration.

    Stops when one more step changes every entry of ``psi`` by at most
    ``tol`` relative to itself (which implies the same absolute bound).

    The matrix is shifted by its smallest cost before exponentiating, so
    ``lambda_pi`` stays accurate for small ``eps`` even when ``eigenvalue``
    itself under- or overflows.
    """
    eps = model.epsilon
    c = model.base(pi)
    cmin = c.min()
    A = np.exp(-(c - cmin) / eps)
    d = A.shape[0]
    psi = np.full(d, 1.0 / d) if psi0 is None else np.asarray(psi0, dtype=float) / np.sum(psi0)
    B = A
    delta = np.inf
    it = 0
    while it < max_iter:
        for _ in range(SQUARE_EVERY):
            y = B @ psi
            y /= y.sum()
            psi = y
            it += 1
            # judged on A itself, relative per entry so that -eps ln psi is accurate
            z = A @ psi
            z /= z.sum()
            delta = (np.abs(z - psi) / np.maximum(psi, 1e-300)).max()
            if delta <= tol or it >= max_iter:
                break
        if delta <= tol:
            break
        # nearly reducible matrices: iterate on A^(2^k) instead
        B = B @ B
        B /= B.max()
    if delta > tol:
        raise SolverError(f"power iteration did not converge in {max_iter} steps",
                          best=psi, history=[delta])
    mu = float((A @ psi).sum())
    lam = cmin - eps * np.log(mu)
    with np.errstate(over="ignore", under="ignore"):
        eig = mu * np.exp(-cmin / eps)
    return PerronResult(float(eig), psi, canon(-eps * np.log(psi)), float(lam), it)


def stationary_entropy(model: EntropyCost, pi0=None, omega=OMEGA, tol=TOL,
                       max_iter=20_000) -> StationarySolution:
    """Fixed point of ``pi -> pi P(pi, V^pi)`` where ``V^pi`` is the Perron value."""
    d = model.d
    pi = np.full(d, 1.0 / d) if pi0 is None else as_dist(pi0)
    psi = None
    history = []
    for it in range(max_iter):
        pe = perron_eigen(pi, model, psi0=psi)
        psi = pe.psi
        K = pi @ model.policy(pi, pe.V_pi)
        res = float(np.linalg.norm(K - pi))
        if history and res > history[-1]:
            omega = max(0.5 * omega, OMEGA_FLOOR)
        history.append(res)
        if res <= tol:
            break
        pi = (1 - omega) * pi + omega * K
        pi /= pi.sum()
    else:
        raise SolverError(f"stationary_entropy stalled at residual {history[-1]:.3e}",
                          best=pi, history=history)
    pe = perron_eigen(pi, model, psi0=psi)
    sol = _solution(pi, pe.V_pi, model, method="perron", iterations=it, history=history)
    sol.info["lambda_perron"] = pe.lambda_pi
    return sol


# generic damped iteration

def stationary_generic(model: CostModel, pi0=None, V0=None, omega=OMEGA, tol=TOL,
                       max_iter=20_000, adaptive=True) -> StationarySolution:
    """Damped iteration of ``(V, pi) -> (G_hat_pi(V), K_hat_V(pi))`` on ``R^d/R x S``.

    ``G_hat`` subtracts the mean of ``G``; ``K_hat`` spreads any mass defect
    evenly.  The critical value is ``mean(G_pi(V) - V)`` at the fixed point.
    """
    d = model.d
    pi = np.full(d, 1.0 / d) if pi0 is None else as_dist(pi0)
    V = np.zeros(d) if V0 is None else canon(np.asarray(V0, dtype=float))
    history = []
    for it in range(max_iter):
        G, K, _ = nash_step(pi, V, model)
        res = max(sharp_norm(G - V), float(np.linalg.norm(K - pi)))
        if adaptive and history and res > history[-1]:
            omega = max(0.5 * omega, OMEGA_FLOOR)
        history.append(res)
        if res <= tol:
            break
        K_hat = K - (K.sum() - 1.0) / d
        V = (1 - omega) * V + omega * canon(G)
        pi = (1 - omega) * pi + omega * K_hat
    else:
        raise SolverError(f"stationary_generic stalled at residual {history[-1]:.3e}",
                          best=(pi, V), history=history)
    return _solution(pi, V, model, method="damped_fixed_point", iterations=it,
                     history=history, omega=omega)


def critical_value(pi_bar, P_bar, model: CostModel, V_bar=None, tol=1e-8) -> float:
    """Population-average transition cost ``sum_ij pi_i c_ij(pi, P) P_ij``."""
    pi = np.asarray(pi_bar, dtype=float)
    P = np.asarray(P_bar, dtype=float)
    drift = float(np.linalg.norm(pi @ P - pi))
    if drift > tol:
        raise InvalidInput(f"pi is not stationary under P (residual {drift:.3e})")
    return float(pi @ model.expected(pi, P, np.zeros(model.d)))


# contraction probe

@dataclass
class ContractionReport:
    epsilon: float
    # keys GV, Gpi, KV, Kpi; derivatives of the mean-normalized map
    jacobian_blocks: Dict[str, np.ndarray]
    raw_blocks: Dict[str, np.ndarray]
    norm_T: float
    norm_T2: float
    contracting: bool


def _hat_map(model: EntropyCost, V, pi):
    d = model.d
    G = model.value(pi, V)
    K = pi @ model.policy(pi, V)
    return G, K, canon(G), K - (K.sum() - 1.0) / d


def _jacobian(model, V, pi, h):
    d = model.d
    raw = np.empty((2 * d, 2 * d))
    hat = np.empty((2 * d, 2 * d))
    x = np.concatenate([V, pi])
    for k in range(2 * d):
        e = np.zeros(2 * d)
        e[k] = h
        xp, xm = x + e, x - e
        Gp, Kp, Ghp, Khp = _hat_map(model, xp[:d], xp[d:])
        Gm, Km, Ghm, Khm = _hat_map(model, xm[:d], xm[d:])
        raw[:, k] = np.concatenate([Gp - Gm, Kp - Km]) / (2 * h)
        hat[:, k] = np.concatenate([Ghp - Ghm, Khp - Khm]) / (2 * h)
    # restrict inputs to the mean-zero (V) and tangent (pi) directions
    Pi = np.eye(d) - 1.0 / d
    proj = np.block([[Pi, np.zeros((d, d))], [np.zeros((d, d)), Pi]])
    return raw, hat @ proj


def _op_norm(M, iters=500, tol=1e-14):
    """Largest singular value via power iteration on ``M M^T``."""
    S = M @ M.T
    x = np.ones(S.shape[0]) / np.sqrt(S.shape[0])
    sigma2 = 0.0
    for _ in range(iters):
        y = S @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(ny - sigma2) <= tol * max(ny, 1e-300):
            sigma2 = ny
            break
        sigma2 = ny
    return float(np.sqrt(sigma2))


def contraction_probe(model: EntropyCost, at=None, h=1e-6) -> ContractionReport:
    """Finite-difference derivative of ``T = (G_hat, K_hat)`` and of ``T o T`` at a point."""
    d = model.d
    if at is None:
        pi, V = np.full(d, 1.0 / d), np.zeros(d)
    else:
        pi, V = as_dist(at[0]), canon(np.asarray(at[1], dtype=float))
    raw, J1 = _jacobian(model, V, pi, h)
    _, _, Gh, Kh = _hat_map(model, V, pi)
    _, J2 = _jacobian(model, Gh, Kh, h)
    D2 = J2 @ J1
    blocks = {"GV": J1[:d, :d], "Gpi": J1[:d, d:], "KV": J1[d:, :d], "Kpi": J1[d:, d:]}
    raw_blocks = {"GV": raw[:d, :d], "Gpi": raw[:d, d:], "KV": raw[d:, :d], "Kpi": raw[d:, d:]}
    n2 = _op_norm(D2)
    return ContractionReport(model.epsilon, blocks, raw_blocks, _op_norm(J1), n2, n2 < 1.0)


# variational route

def _holonomy_system(d):
    """Rows: ``sum_j eta_ij - sum_j eta_ji = 0`` for i < d-1, and total mass 1."""
    rows = []
    for i in range(d - 1):
        M = np.zeros((d, d))
        M[i, :] += 1.0
        M[:, i] -= 1.0
        rows.append(M.ravel())
    rows.append(np.ones(d * d))
    B = np.array(rows)
    b = np.zeros(d)
    b[-1] = 1.0
    return B, b


class _FeasibleSet:
    def __init__(self, d, rounds=100):
        self.B, self.b = _holonomy_system(d)
        self.BBt_inv = np.linalg.inv(self.B @ self.B.T)
        self.rounds = rounds

    def affine(self, x):
        return x - self.B.T @ (self.BBt_inv @ (self.B @ x - self.b))

    def tangent(self, g):
        return g - self.B.T @ (self.BBt_inv @ (self.B @ g))

    def project(self, x):
        """Dykstra alternation between the affine set and the orthant."""
        y = self.affine(x)
        if y.min() >= 0:
            return y
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        z = x.copy()
        for _ in range(self.rounds):
            y = self.affine(z + p)
            p = z + p - y
            z_new = np.maximum(y + q, 0.0)
            q = y + q - z_new
            if np.abs(z_new - z).max() <= 1e-15:
                z = z_new
                break
            z = z_new
        return self.affine(z) if self.affine(z).min() >= 0 else z


def variational_objective(eta, tilde_c: CostModel, obj: VariationalObjective) -> float:
    """``sum_i pi_i e_i(P^eta) + f(pi^eta)`` for an edge measure ``eta`` (d x d)."""
    d = tilde_c.d
    pi = eta.sum(axis=1)
    live = pi > 0
    P = np.full((d, d), 1.0 / d)
    P[live] = eta[live] / pi[live, None]
    e = tilde_c.expected(np.full(d, 1.0 / d), P, np.zeros(d))
    return float(pi @ e + obj.f(pi))


def _variational_gradient(eta, tilde_c, obj):
    d = tilde_c.d
    pi = eta.sum(axis=1)
    fgrad = np.asarray(obj.grad_f(pi), dtype=float)
    if isinstance(tilde_c, EntropyCost):
        base = tilde_c.base(np.full(d, 1.0 / d))
        ratio = np.maximum(eta, 1e-300) / np.maximum(pi, 1e-300)[:, None]
        return base + tilde_c.epsilon * np.log(ratio) + fgrad[:, None]
    h = 1e-7
    g = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d))
            e[i, j] = h
            g[i, j] = (variational_objective(eta + e, tilde_c, obj)
                       - variational_objective(eta - e, tilde_c, obj)) / (2 * h)
    return g


def variational_solve(obj: VariationalObjective, tilde_c: CostModel, tol=1e-12,
                      max_iter=50_000):
    """Minimize the population cost plus ``f(pi)`` over stationary edge measures.

    ``tilde_c`` must not depend on ``pi`` (it is evaluated at the uniform
    distribution).  Returns ``(EdgeMeasure, StationarySolution)``; the value
    vector comes from solving the stationary value equation at ``pi^eta`` for
    the model with costs ``df/dpi_i + tilde_c_ij``.
    """
    d = tilde_c.d
    model = _matching_model(obj, tilde_c)
    feas = _FeasibleSet(d)
    eta = np.full(d * d, 1.0 / (d * d))
    F = lambda x: variational_objective(x.reshape(d, d), tilde_c, obj)
    grad = lambda x: _variational_gradient(x.reshape(d, d), tilde_c, obj).ravel()
    f = F(eta)
    g = grad(eta)
    step = 1.0
    history = []
    for it in range(max_iter):
        while True:
            new = feas.project(eta - step * g)
            dx = new - eta
            f_new = F(new)
            if f_new <= f + g @ dx + (dx @ dx) / (2 * step) + 1e-15 * abs(f):
                break
            step *= 0.5
            if step < 1e-18:
                raise SolverError("variational line search collapsed", best=eta, history=history)
        g_new = grad(new)
        move = float(np.abs(dx).max())
        history.append(move)
        s, y = dx, g_new - g
        sy = s @ y
        step = float(np.clip((s @ s) / sy, 1e-10, 1e6)) if sy > 0 else 2.0 * step
        eta, f, g = new, f_new, g_new
        if move <= tol:
            break
    else:
        raise SolverError(f"variational solver stalled (last move {history[-1]:.3e})",
                          best=eta, history=history)

    edge = EdgeMeasure.from_mass(np.maximum(eta.reshape(d, d), 0.0))
    pi = edge.pi
    P, empty = edge.policy()
    V = _stationary_value(pi, model)
    sol = _solution(pi, V, model, method="variational", iterations=it, objective=f,
                    empty_rows=[int(i) for i in empty], P_eta=P)
    return edge, sol


def _matching_model(obj, tilde_c):
    d = tilde_c.d
    if isinstance(tilde_c, EntropyCost):
        return monotone_w(tilde_c.base(np.full(d, 1.0 / d)), epsilon=tilde_c.epsilon,
                          objective=obj)
    raise TypeError("variational_solve supports entropy row costs")


def _stationary_value(pi, model, tol=1e-13, max_iter=100_000):
    """Solve ``G_pi(V) = V + lambda`` with ``pi`` frozen."""
    if isinstance(model, EntropyCost):
        return perron_eigen(pi, model, tol=1e-14).V_pi
    V = np.zeros(model.d)
    for _ in range(max_iter):
        G, _, _ = nash_step(pi, V, model)
        V_new = canon(G)
        if np.abs(V_new - V).max() <= tol:
            return V_new
        V = V_new
    raise SolverError("relative value iteration did not converge", best=V)
