"""Basic numeric objects: probability vectors, value vectors modulo constants,
row-stochastic matrices and edge measures.

Everything is a plain ``numpy`` array; the helpers here validate, normalize
and measure them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-12
# Accepted drift of the total mass before renormalization.
MASS_TOL = 1e-9

NORM_KINDS = ("sup", "euclid")


class InvalidInput(ValueError):
    """Raised when an input vector or matrix violates its invariants."""


class SolverError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    ``best`` holds the last (or best) iterate and ``history`` the residual
    trace, so callers can inspect what went wrong.
    """

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = list(history) if history is not None else []


def _finite(x, what="input"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInput(f"{what} contains non-finite entries")
    return x


def as_dist(x, what="distribution") -> np.ndarray:
    """Validate ``x`` as a point of the probability simplex and renormalize it.

    Entries in ``[-1e-12, 0)`` are clamped to zero; anything more negative,
    or a total mass off by more than ``MASS_TOL``, is rejected.
    """
    x = _finite(x, what)
    if x.ndim != 1:
        raise InvalidInput(f"{what} must be one-dimensional, got shape {x.shape}")
    if x.size < 2:
        raise InvalidInput(f"{what} needs at least 2 states, got {x.size}")
    if x.min() < -SIMPLEX_TOL:
        raise InvalidInput(f"{what} has negative entry {x.min():.3e}")
    x = np.where(x < 0, 0.0, x)
    s = x.sum()
    if abs(s - 1.0) > MASS_TOL:
        raise InvalidInput(f"{what} sums to {s!r}, not 1")
    return x / s


def as_stochastic(P, what="transition matrix") -> np.ndarray:
    """Validate a square row-stochastic matrix; each row goes through ``as_dist``."""
    P = _finite(P, what)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInput(f"{what} must be square, got shape {P.shape}")
    return np.vstack([as_dist(row, f"{what} row {i}") for i, row in enumerate(P)])


def as_values(v, what="value vector") -> np.ndarray:
    v = _finite(v, what)
    if v.ndim != 1:
        raise InvalidInput(f"{what} must be one-dimensional, got shape {v.shape}")
    return v


def canon(v) -> np.ndarray:
    """Mean-zero representative of the class of ``v`` in R^d / R."""
    v = np.asarray(v, dtype=float)
    return v - v.mean()


def sharp_norm(v, kind: str = "sup") -> float:
    """Quotient norm ``inf_lam ||v + lam * 1||``.

    For ``sup`` this is half the oscillation ``(max - min) / 2``; for
    ``euclid`` the infimum sits at ``lam = -mean(v)``.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidInput("sharp_norm of a non-finite vector")
    if kind == "sup":
        return float(0.5 * (v.max() - v.min()))
    if kind == "euclid":
        return float(np.linalg.norm(v - v.mean()))
    raise InvalidInput(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def norm(v, kind: str = "euclid") -> float:
    v = np.asarray(v, dtype=float)
    if kind == "sup":
        return float(np.abs(v).max())
    if kind == "euclid":
        return float(np.linalg.norm(v))
    raise InvalidInput(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def push_forward(pi, P) -> np.ndarray:
    """Distribution after one step: ``(pi P)_j = sum_i pi_i P_ij``."""
    pi = np.asarray(pi, dtype=float)
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape != (pi.size, pi.size):
        raise InvalidInput(f"dimension mismatch: pi has {pi.size} states, P is {P.shape}")
    out = pi @ P
    out = np.where(out < 0, 0.0, out)
    return out / out.sum()


def project_simplex(x) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    x = _finite(x, "projection input")
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, x.size + 1)
    rho = np.count_nonzero(u - css / k > 0)
    tau = css[rho - 1] / rho
    out = np.maximum(x - tau, 0.0)
    # cancellation in x - tau loses mass for large |x|
    return out / out.sum()


def replace_row(P, q, i) -> np.ndarray:
    """Copy of ``P`` with row ``i`` replaced by ``q``."""
    Q = np.array(P, dtype=float, copy=True)
    Q[i] = q
    return Q


def copy_row(P, i, i_to) -> np.ndarray:
    """Copy of ``P`` whose row ``i_to`` is overwritten by row ``i``."""
    Q = np.array(P, dtype=float, copy=True)
    Q[i_to] = Q[i]
    return Q


def simplex_grid(d: int, step: float) -> np.ndarray:
    """All points of the simplex whose coordinates are multiples of ``step``.

    Used by the brute-force oracles in the test suite; only sensible for
    d <= 3 at fine steps.
    """
    n = int(round(1.0 / step))
    if d == 2:
        t = np.arange(n + 1) / n
        return np.column_stack([t, 1.0 - t])
    if d == 3:
        a, b = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        mask = a + b <= n
        a, b = a[mask], b[mask]
        return np.column_stack([a, b, n - a - b]) / n
    raise ValueError("simplex_grid supports d in {2, 3}")


@dataclass(frozen=True)
class EdgeMeasure:
    """Joint mass ``mass[i, j]`` on state pairs.

    Stationary when row sums equal column sums; ``holonomy_residual`` is the
    largest discrepancy between the two marginals.
    """

    mass: np.ndarray
    holonomy_residual: float

    @classmethod
    def from_mass(cls, mass) -> "EdgeMeasure":
        m = _finite(mass, "edge measure")
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInput(f"edge measure must be square, got shape {m.shape}")
        if m.min() < -SIMPLEX_TOL:
            raise InvalidInput("edge measure has negative mass")
        m = np.where(m < 0, 0.0, m)
        total = m.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise InvalidInput(f"edge measure has total mass {total!r}")
        m = m / total
        res = float(np.abs(m.sum(axis=1) - m.sum(axis=0)).max())
        return cls(m, res)

    @classmethod
    def from_policy(cls, pi, P) -> "EdgeMeasure":
        """``mass_ij = pi_i P_ij``."""
        return cls.from_mass(np.asarray(pi, dtype=float)[:, None] * np.asarray(P, dtype=float))

    @property
    def pi(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def policy(self, floor: float = 0.0):
        """Return ``(P, empty_rows)``; rows with no mass get the uniform row."""
        pi = self.pi
        d = pi.size
        empty = np.flatnonzero(pi <= floor)
        P = np.full((d, d), 1.0 / d)
        live = pi > floor
        P[live] = self.mass[live] / pi[live, None]
        return P, empty

    def is_stationary(self, tol: float = 1e-10) -> bool:
        return self.holonomy_residual <= tol
