"""Transition-cost models ``c_ij(pi, P)``.

A model is a :class:`CostModel` subclass.  Its capability flags drive the
solvers in :mod:`discrete_mfg.equilibrium`:

``separable``
    ``c_ij`` depends on ``P`` only through row ``i`` (rows of the Nash
    minimizer can be solved independently).
``pi_only``
    ``c_ij`` does not depend on ``P`` at all, so each row objective is linear
    and best responses are vertices.
``differentiable_in_pi``
    an analytic ``d c_ij / d pi`` is available.

The ``pi``-dependence of the built-in models is described by a
:class:`PiTable`, a callable returning the full ``d x d`` table together with
its Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .core import InvalidInput, as_dist

FD_STEP = 1e-6


@dataclass(frozen=True)
class PiTable:
    """``pi -> table[i, j]`` with optional Jacobian ``jac(pi)[i, j, k] = d table_ij / d pi_k``."""

    d: int
    fn: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "table"

    def __call__(self, pi) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(pi, dtype=float)), dtype=float)

    def gradient(self, pi) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        if self.jac is not None:
            return np.asarray(self.jac(pi), dtype=float)
        out = np.empty((self.d, self.d, self.d))
        for k in range(self.d):
            e = np.zeros(self.d)
            e[k] = FD_STEP
            out[:, :, k] = (self(pi + e) - self(pi - e)) / (2 * FD_STEP)
        return out


def constant_table(a, name="constant") -> PiTable:
    a = np.array(a, dtype=float)
    d = a.shape[0]
    return PiTable(d, lambda pi: a, lambda pi: np.zeros((d, d, d)), name)


def congestion_table(a, b, at: str = "destination") -> PiTable:
    """Crowding costs on a base table ``a``.

    ``at="destination"``: ``c_ij(pi) = a_ij + b_j pi_j`` (moving into a crowded
    state is expensive).  ``at="origin"``: ``c_ij(pi) = a_ij + b_i pi_i``
    (being in a crowded state is expensive); only this variant has the
    ``W_i(pi) + tilde_c_ij`` structure that makes ``G`` monotone in ``pi``.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d) or b.shape != (d,):
        raise InvalidInput("congestion table needs a (d, d) and b (d,)")
    if np.any(b < 0):
        raise InvalidInput("congestion weights b must be nonnegative")
    if at == "destination":
        def fn(pi):
            return a + (b * pi)[None, :]

        def jac(pi):
            g = np.zeros((d, d, d))
            for j in range(d):
                g[:, j, j] = b[j]
            return g
    elif at == "origin":
        def fn(pi):
            return a + (b * pi)[:, None]

        def jac(pi):
            g = np.zeros((d, d, d))
            for i in range(d):
                g[i, :, i] = b[i]
            return g
    else:
        raise InvalidInput(f"congestion 'at' must be 'destination' or 'origin', got {at!r}")
    return PiTable(d, fn, jac, "congestion" if at == "destination" else "congestion_origin")


def origin_table(tilde_c, W, W_jac=None) -> PiTable:
    """``c_ij(pi) = W_i(pi) + tilde_c_ij``; the cost of leaving state ``i``."""
    tilde_c = np.array(tilde_c, dtype=float)
    d = tilde_c.shape[0]
    jac = None
    if W_jac is not None:
        def jac(pi):
            J = np.asarray(W_jac(pi), dtype=float)
            return np.broadcast_to(J[:, None, :], (d, d, d)).copy()

    return PiTable(d, lambda pi: np.asarray(W(pi))[:, None] + tilde_c, jac, "monotone_w")


def theta_table() -> PiTable:
    """Two-state example: switching costs 100, staying costs ``pi_1``."""

    def fn(pi):
        return np.array([[pi[0], 100.0], [100.0, pi[0]]])

    def jac(pi):
        g = np.zeros((2, 2, 2))
        g[0, 0, 0] = g[1, 1, 0] = 1.0
        return g

    return PiTable(2, fn, jac, "theta_example")


@dataclass(frozen=True)
class VariationalObjective:
    """A C^1 convex potential ``f`` on distributions and its gradient."""

    f: Callable[[np.ndarray], float]
    grad_f: Callable[[np.ndarray], np.ndarray]
    hess_f: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def quadratic(cls, alpha: float = 1.0) -> "VariationalObjective":
        """``f(pi) = alpha/2 ||pi||^2``, so ``grad f = alpha pi`` is ``alpha``-monotone."""
        return cls(
            lambda pi: 0.5 * alpha * float(np.dot(pi, pi)),
            lambda pi: alpha * np.asarray(pi, dtype=float),
            lambda pi: alpha * np.eye(len(pi)),
        )


class CostModel:
    """Base class.  Subclasses implement :meth:`cost_matrix`."""

    separable = True
    pi_only = False
    differentiable_in_pi = False
    #: entropy weight when the model carries an ``eps * ln P_ij`` term
    epsilon: float = 0.0

    def __init__(self, d: int, name: str = "custom"):
        if d < 2:
            raise InvalidInput(f"d must be >= 2, got {d}")
        self.d = d
        self.name = name

    def cost_matrix(self, pi, P) -> np.ndarray:
        raise NotImplementedError

    def cost(self, pi, P, i, j) -> float:
        return float(self.cost_matrix(pi, P)[i, j])

    def expected(self, pi, P, V) -> np.ndarray:
        """``e_i = sum_j P_ij (c_ij + V_j)``; terms with ``P_ij = 0`` vanish."""
        P = np.asarray(P, dtype=float)
        C = self.cost_matrix(pi, P) + np.asarray(V, dtype=float)[None, :]
        with np.errstate(invalid="ignore"):
            terms = np.where(P > 0, P * C, 0.0)
        return terms.sum(axis=1)

    def row_costs(self, pi, q, i) -> np.ndarray:
        """``c_i.(pi, q)`` for a separable model."""
        if not self.separable:
            raise TypeError("row_costs needs a separable model")
        P = np.tile(np.asarray(q, dtype=float), (self.d, 1))
        return self.cost_matrix(pi, P)[i]

    def row_objective(self, pi, P, i, q, V) -> float:
        """``q -> e_i(pi, P(P, q, i), V)``."""
        Q = np.array(P, dtype=float, copy=True)
        Q[i] = q
        return float(self.expected(pi, Q, V)[i])

    def row_gradient(self, pi, P, i, q, V) -> np.ndarray:
        """Gradient of :meth:`row_objective` in ``q`` (central differences by default)."""
        q = np.asarray(q, dtype=float)
        g = np.empty(self.d)
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = FD_STEP
            g[j] = (self.row_objective(pi, P, i, q + e, V)
                    - self.row_objective(pi, P, i, q - e, V)) / (2 * FD_STEP)
        return g

    def grad_pi(self, pi, P, i, j) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        g = np.empty(self.d)
        for k in range(self.d):
            e = np.zeros(self.d)
            e[k] = FD_STEP
            g[k] = (self.cost(pi + e, P, i, j) - self.cost(pi - e, P, i, j)) / (2 * FD_STEP)
        return g

    def pi_part(self, pi) -> Optional[np.ndarray]:
        """The ``P``-independent table when the model has one, else ``None``."""
        return None

    def scale(self) -> float:
        """Rough magnitude of the costs, used to size random value vectors."""
        pts = [np.full(self.d, 1.0 / self.d)] + list(np.eye(self.d))
        P = np.full((self.d, self.d), 1.0 / self.d)
        vals = []
        for pi in pts:
            base = self.pi_part(pi)
            C = base if base is not None else self.cost_matrix(pi, P)
            vals.append(np.abs(C[np.isfinite(C)]).max(initial=0.0))
        return float(max(max(vals), self.epsilon, 1.0))

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, d={self.d})"


class PiOnlyCost(CostModel):
    """Costs independent of ``P``; every row objective is linear."""

    pi_only = True

    def __init__(self, table: PiTable, name: Optional[str] = None):
        super().__init__(table.d, name or table.name)
        self.table = table
        self.differentiable_in_pi = table.jac is not None

    def cost_matrix(self, pi, P) -> np.ndarray:
        return self.table(pi)

    def pi_part(self, pi):
        return self.table(pi)

    def row_costs(self, pi, q, i):
        return self.table(pi)[i]

    def row_gradient(self, pi, P, i, q, V):
        return self.table(pi)[i] + np.asarray(V, dtype=float)

    def grad_pi(self, pi, P, i, j):
        return self.table.gradient(pi)[i, j]


class EntropyCost(CostModel):
    """``c_ij(pi, P_i.) = base_ij(pi) + eps ln P_ij``.

    ``eps ln 0`` is ``-inf`` for the bare cost; the expected cost uses the
    continuous extension ``0 ln 0 = 0``.
    """

    def __init__(self, table: PiTable, epsilon: float, name: Optional[str] = None):
        if not epsilon > 0:
            raise InvalidInput(f"epsilon must be positive, got {epsilon}")
        super().__init__(table.d, name or f"entropy_{table.name}")
        self.table = table
        self.epsilon = float(epsilon)
        self.differentiable_in_pi = table.jac is not None

    def base(self, pi) -> np.ndarray:
        return self.table(pi)

    def pi_part(self, pi):
        return self.table(pi)

    def cost_matrix(self, pi, P) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.table(pi) + self.epsilon * np.log(np.asarray(P, dtype=float))

    def expected(self, pi, P, V) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        lin = P * (self.table(pi) + np.asarray(V, dtype=float)[None, :])
        return lin.sum(axis=1) + self.epsilon * xlogy(P, P).sum(axis=1)

    def row_gradient(self, pi, P, i, q, V):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return self.table(pi)[i] + np.asarray(V) + self.epsilon * (np.log(q) + 1.0)

    def grad_pi(self, pi, P, i, j):
        return self.table.gradient(pi)[i, j]

    # closed forms

    def policy(self, pi, V) -> np.ndarray:
        """Softmax Nash minimizer ``P_ij ~ exp(-(c_ij + V_j) / eps)``."""
        z = -(self.table(pi) + np.asarray(V, dtype=float)[None, :]) / self.epsilon
        P = softmax(z, axis=1)
        return P / P.sum(axis=1, keepdims=True)

    def value(self, pi, V) -> np.ndarray:
        """``G_i = -eps ln sum_k exp(-(c_ik + V_k) / eps)``."""
        z = -(self.table(pi) + np.asarray(V, dtype=float)[None, :]) / self.epsilon
        return -self.epsilon * logsumexp(z, axis=1)


class QuadraticRowCost(CostModel):
    """``c_ij(pi, P_i.) = base_ij(pi) + beta P_ij``.

    Separable and strictly convex in the row but not of entropy type, so it
    exercises the generic row solver.  The exact best response is
    ``project_simplex(-(base_i + V) / (2 beta))``.
    """

    def __init__(self, table: PiTable, beta: float, name: Optional[str] = None):
        if not beta > 0:
            raise InvalidInput(f"beta must be positive, got {beta}")
        super().__init__(table.d, name or f"quadratic_{table.name}")
        self.table = table
        self.beta = float(beta)
        self.differentiable_in_pi = table.jac is not None

    def pi_part(self, pi):
        return self.table(pi)

    def cost_matrix(self, pi, P):
        return self.table(pi) + self.beta * np.asarray(P, dtype=float)

    def row_gradient(self, pi, P, i, q, V):
        return self.table(pi)[i] + np.asarray(V) + 2.0 * self.beta * np.asarray(q)

    def grad_pi(self, pi, P, i, j):
        return self.table.gradient(pi)[i, j]


class FlowCongestionCost(CostModel):
    """Non-separable example: ``c_ij(pi, P) = a_ij + beta * (pi P)_j``.

    The cost of moving into ``j`` grows with the total flow into ``j``,
    which depends on every row of ``P``.
    """

    separable = False

    def __init__(self, a, beta: float, name: str = "flow_congestion"):
        a = np.array(a, dtype=float)
        super().__init__(a.shape[0], name)
        self.a = a
        self.beta = float(beta)
        self.differentiable_in_pi = True

    def pi_part(self, pi):
        return self.a

    def cost_matrix(self, pi, P):
        flow = np.asarray(pi, dtype=float) @ np.asarray(P, dtype=float)
        return self.a + self.beta * flow[None, :]

    def row_gradient(self, pi, P, i, q, V):
        pi = np.asarray(pi, dtype=float)
        Q = np.array(P, dtype=float, copy=True)
        Q[i] = q
        flow = pi @ Q
        return self.a[i] + np.asarray(V) + self.beta * flow + self.beta * pi[i] * np.asarray(q)

    def grad_pi(self, pi, P, i, j):
        return self.beta * np.asarray(P, dtype=float)[:, j]


# factories for the built-in models

def entropy_model(base, epsilon: float) -> EntropyCost:
    """Entropy-penalized model; ``base`` is a ``(d, d)`` array or a :class:`PiTable`."""
    table = base if isinstance(base, PiTable) else constant_table(base)
    return EntropyCost(table, epsilon)


def theta_example() -> PiOnlyCost:
    return PiOnlyCost(theta_table(), "theta_example")


def congestion(a, b, epsilon: Optional[float] = None, at: str = "destination") -> CostModel:
    table = congestion_table(a, b, at)
    if epsilon is None:
        return PiOnlyCost(table, table.name)
    return EntropyCost(table, epsilon, table.name)


def monotone_w(tilde_c, alpha: float = 1.0, epsilon: Optional[float] = None,
               objective: Optional[VariationalObjective] = None) -> CostModel:
    """``c_ij = W_i(pi) + tilde_c_ij (+ eps ln P_ij)`` with ``W = grad f``.

    Default ``f`` is the quadratic ``alpha/2 ||pi||^2``; the returned model
    carries ``gamma_w`` (the monotonicity modulus, exact for the default)
    and ``objective``.
    """
    if objective is None:
        if not alpha > 0:
            raise InvalidInput(f"alpha must be positive, got {alpha}")
        objective = VariationalObjective.quadratic(alpha)
    table = origin_table(tilde_c, objective.grad_f, objective.hess_f)
    if epsilon is None:
        model: CostModel = PiOnlyCost(table, "monotone_w")
    else:
        model = EntropyCost(table, epsilon, "monotone_w")
    model.objective = objective
    model.gamma_w = float(alpha)
    return model


def switching_costs(d: int, kappa: float) -> np.ndarray:
    """Table with ``kappa`` off the diagonal and zero on it."""
    return kappa * (1.0 - np.eye(d))


def eval_cost(model: CostModel, pi, P, i, j) -> float:
    return model.cost(as_dist(pi), np.asarray(P, dtype=float), i, j)


def cost_grad_pi(model: CostModel, pi, P, i, j) -> np.ndarray:
    """Gradient of ``c_ij`` in ``pi``: analytic when flagged, finite differences otherwise."""
    return model.grad_pi(np.asarray(pi, dtype=float), np.asarray(P, dtype=float), i, j)
