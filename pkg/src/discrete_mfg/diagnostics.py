"""Sampled checks of the structural hypotheses and estimates of their constants.

Every estimator draws from ``numpy.random.default_rng(seed)`` in a fixed
order, so the first ``n`` samples do not depend on ``n_samples``: more
samples can only lower a gamma estimate or raise a C/K estimate.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from .core import InvalidInput, canon, copy_row, sharp_norm
from .costs import CostModel, EntropyCost
from .equilibrium import eval_e, nash_step

SLACK = 1e-10
FD_STEP = 1e-6


@dataclass
class Estimate:
    value: float
    ok: bool
    samples: int
    worst: Dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _v_box(model: CostModel, v_scale=None) -> float:
    return 3.0 * model.scale() if v_scale is None else float(v_scale)


def _dirichlet(rng, d):
    return rng.dirichlet(np.ones(d))


def _vertex_pairs(d):
    E = np.eye(d)
    return [(E[i], E[j]) for i in range(d) for j in range(d) if i != j]


def _listify(**kw):
    return {k: np.asarray(v).tolist() for k, v in kw.items()}


def estimate_gamma_hp8(model: CostModel, n_samples=500, seed=0, v_scale=None) -> Estimate:
    """Sampled infimum of
    ``[pi~.(G_pi~(V) - G_pi(V)) + pi.(G_pi(V~) - G_pi~(V~))] / ||pi - pi~||^2``."""
    rng = np.random.default_rng(seed)
    d, B = model.d, _v_box(model, v_scale)
    best, worst = np.inf, {}
    for _ in range(n_samples):
        p, pt = _dirichlet(rng, d), _dirichlet(rng, d)
        V, Vt = rng.uniform(-B, B, d), rng.uniform(-B, B, d)
        dist2 = float(np.sum((p - pt) ** 2))
        if dist2 < 1e-16:
            continue
        lhs = (pt @ (nash_step(pt, V, model)[0] - nash_step(p, V, model)[0])
               + p @ (nash_step(p, Vt, model)[0] - nash_step(pt, Vt, model)[0]))
        ratio = lhs / dist2
        if ratio < best:
            best, worst = ratio, _listify(pi=p, pi_tilde=pt, V=V, V_tilde=Vt, ratio=ratio)
    # no usable pair means no evidence either way
    ok = bool(np.isfinite(best) and best > 1e-8 * model.scale())
    return Estimate(float(best) if ok else 0.0, ok, n_samples, worst)


def estimate_gamma_hp10(model: CostModel, n_samples=500, seed=0, v_scale=None,
                        value_norm="sup") -> Estimate:
    """Sampled infimum of ``-[pi.(G(V2) - G(V1)) + K_V1(pi).(V1 - V2)] / ||V1 - V2||_#^2``."""
    rng = np.random.default_rng(seed)
    d, B = model.d, _v_box(model, v_scale)
    best, worst, violated = np.inf, {}, False
    for _ in range(n_samples):
        p = _dirichlet(rng, d)
        V1, V2 = canon(rng.uniform(-B, B, d)), canon(rng.uniform(-B, B, d))
        s = sharp_norm(V1 - V2, value_norm)
        if s < 1e-8:
            continue
        G1, K1, _ = nash_step(p, V1, model)
        G2 = nash_step(p, V2, model)[0]
        lhs = p @ (G2 - G1) + K1 @ (V1 - V2)
        if lhs > SLACK * max(1.0, B):
            violated = True
        ratio = -lhs / s ** 2
        if ratio < best:
            best, worst = ratio, _listify(pi=p, V1=V1, V2=V2, ratio=ratio)
    ok = bool(not violated and np.isfinite(best) and best > 1e-8 * model.scale())
    return Estimate(float(best) if ok else 0.0, ok, n_samples, worst)


def check_hp9(model: CostModel, n_samples=500, seed=0, v_scale=None) -> bool:
    """At argmax (argmin) of ``V1 - V2``: ``G(V1)_i - V1_i <= (>=) G(V2)_i - V2_i``."""
    rng = np.random.default_rng(seed)
    d, B = model.d, _v_box(model, v_scale)
    for k in range(n_samples):
        p = _dirichlet(rng, d)
        V1 = rng.uniform(-B, B, d)
        V2 = V1 + rng.uniform(-B, B) if k % 10 == 0 else rng.uniform(-B, B, d)
        if not hp9_holds(p, V1, V2, model):
            return False
    return True


def hp9_holds(p, V1, V2, model, slack=SLACK) -> bool:
    G1 = nash_step(p, V1, model)[0] - V1
    G2 = nash_step(p, V2, model)[0] - V2
    diff = V1 - V2
    tie = 1e-12 * max(1.0, np.abs(diff).max())
    tol = slack * max(1.0, np.abs(V1).max(), np.abs(V2).max())
    for i in np.flatnonzero(diff >= diff.max() - tie):
        if G1[i] > G2[i] + tol:
            return False
    for i in np.flatnonzero(diff <= diff.min() + tie):
        if G1[i] < G2[i] - tol:
            return False
    return True


def _g_partials(model, pi, P, V):
    """``g_ij = d e_i / d P_ij`` with every other entry frozen."""
    d = model.d
    g = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = FD_STEP
            g[i, j] = (eval_e(pi, P + E, V, model)[i] - eval_e(pi, P - E, V, model)[i]) / (2 * FD_STEP)
    return g


def check_hp3(model: CostModel, n_samples=200, seed=0, v_scale=None) -> bool:
    """Diagonal convexity ``sum (P1 - P2)_ij (g(P1) - g(P2))_ij > 0`` on interior pairs."""
    rng = np.random.default_rng(seed)
    d, B = model.d, _v_box(model, v_scale)
    for _ in range(n_samples):
        p = _dirichlet(rng, d)
        V = rng.uniform(-B, B, d)
        # keep away from the boundary so the central differences stay inside
        P1 = 0.9 * rng.dirichlet(np.ones(d), size=d) + 0.1 / d
        P2 = 0.9 * rng.dirichlet(np.ones(d), size=d) + 0.1 / d
        if np.abs(P1 - P2).max() < 1e-8:
            continue
        s = np.sum((P1 - P2) * (_g_partials(model, p, P1, V) - _g_partials(model, p, P2, V)))
        if not s > 1e-12:
            return False
    return True


def check_kav(model: CostModel, n_samples=500, seed=0, v_scale=None) -> Dict[str, bool]:
    """Concavity of ``G`` in ``V``: row-wise (kav2), aggregated (kav3), order preservation."""
    rng = np.random.default_rng(seed)
    d, B = model.d, _v_box(model, v_scale)
    ok = {"kav2": True, "kav3": True, "order": True}
    for _ in range(n_samples):
        p = _dirichlet(rng, d)
        V1, V2 = rng.uniform(-B, B, d), rng.uniform(-B, B, d)
        tol = SLACK * max(1.0, B)
        G1, K1, P1 = nash_step(p, V1, model)
        G2 = nash_step(p, V2, model)[0]
        if np.any(G2 > G1 + P1 @ (V2 - V1) + tol):
            ok["kav2"] = False
        if p @ (G2 - G1) - (V2 - V1) @ K1 > tol:
            ok["kav3"] = False
        V3 = V1 + rng.uniform(0, B, d)
        G3 = nash_step(p, V3, model)[0]
        dG = G3 - G1
        if np.any(dG < -tol) or np.any(dG > P1 @ (V3 - V1) + tol):
            ok["order"] = False
    return ok


def hp6_sum(model: CostModel, pi, P, i, i2) -> float:
    """``sum_j |c_ij(pi, P) - c_i'j(pi, rho_{i,i'}(P))| P_ij``."""
    P = np.asarray(P, dtype=float)
    C = model.cost_matrix(pi, P)
    C2 = model.cost_matrix(pi, copy_row(P, i, i2))
    mask = P[i] > 0
    return float(np.sum(np.abs(C[i, mask] - C2[i2, mask]) * P[i, mask]))


def estimate_spread_C(model: CostModel, n_samples=500, seed=0, v_scale=None) -> Estimate:
    """Largest ``|G_pi(V)_i - G_pi(V)_i'|``; ``worst['hp6']`` is the sampled
    row-replacement constant evaluated at the same Nash matrices plus random
    ones."""
    rng = np.random.default_rng(seed)
    d, B = model.d, _v_box(model, v_scale)
    spread, hp6, worst = 0.0, 0.0, {}
    for _ in range(n_samples):
        p = _dirichlet(rng, d)
        V = rng.uniform(-B, B, d)
        R = rng.dirichlet(np.ones(d), size=d)
        G, _, P = nash_step(p, V, model)
        s = float(G.max() - G.min())
        if s > spread:
            spread, worst = s, _listify(pi=p, V=V)
        for Q in (P, R):
            for i in range(d):
                for i2 in range(d):
                    if i != i2:
                        hp6 = max(hp6, hp6_sum(model, p, Q, i, i2))
    worst["hp6"] = hp6
    return Estimate(spread, spread <= hp6 + SLACK * max(1.0, B), n_samples, worst)


def estimate_K_hp11(model: CostModel, n_samples=500, seed=0) -> Estimate:
    """Largest sampled ``|c_ij(pi, P) - c_ij(pi~, P)|`` (vertex pairs included)."""
    rng = np.random.default_rng(seed)
    d = model.d
    pairs = _vertex_pairs(d) + [(_dirichlet(rng, d), _dirichlet(rng, d)) for _ in range(n_samples)]
    K, worst = 0.0, {}
    Pr = rng.dirichlet(np.ones(d), size=d)
    for p, pt in pairs:
        A, At = model.pi_part(p), model.pi_part(pt)
        if A is None:
            A, At = model.cost_matrix(p, Pr), model.cost_matrix(pt, Pr)
        diff = np.abs(A - At)
        m = float(diff[np.isfinite(diff)].max(initial=0.0))
        if m > K:
            K, worst = m, _listify(pi=p, pi_tilde=pt)
    return Estimate(K, True, len(pairs), worst)


def simpleev_matrix(p, epsilon) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return (np.outer(p, p) - np.diag(p)) / epsilon


def check_jacobian_simpleev(p, epsilon: float, zero_tol=1e-12, fd_tol=1e-5,
                            return_details=False):
    """Zero is a simple eigenvalue of ``J = (p p^T - diag p) / eps``, and ``J`` is the
    Hessian in ``V`` of the entropy value ``-eps ln sum_k exp(-(c_k + V_k)/eps)``."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or abs(p.sum() - 1) > 1e-9 or p.min() <= 1e-10 or p.max() >= 1 - 1e-10:
        raise InvalidInput("p must lie strictly inside the simplex")
    J = simpleev_matrix(p, epsilon)
    ev = np.linalg.eigvalsh(J)
    small = np.abs(ev) <= zero_tol
    gap = float(np.sort(np.abs(ev))[1])
    simple = bool(small.sum() == 1)

    # G(V) = -eps logsumexp(-V/eps) with V = -eps ln p reproduces p as the softmax
    V0 = -epsilon * np.log(p)
    G = lambda V: -epsilon * np.log(np.sum(np.exp(-(V - V0.min()) / epsilon))) + V0.min()
    h = 1e-4 * max(1.0, epsilon)
    d = p.size
    H = np.empty((d, d))
    for k in range(d):
        for l in range(d):
            ek, el = np.eye(d)[k] * h, np.eye(d)[l] * h
            H[k, l] = (G(V0 + ek + el) - G(V0 + ek - el) - G(V0 - ek + el)
                       + G(V0 - ek - el)) / (4 * h * h)
    fd_err = float(np.abs(H - J).max())
    ok = simple and fd_err <= fd_tol
    if return_details:
        return ok, {"eigenvalues": ev, "gap": gap, "fd_error": fd_err}
    return ok


@dataclass
class AssumptionReport:
    model_id: str
    samples: int
    seed: int
    v_box: float
    v_box_hp10: float
    value_norm: str
    dist_norm: str
    gamma_hp8: float
    gamma_hp8_ok: bool
    gamma_hp10: float
    gamma_hp10_ok: bool
    C_spread: float
    C_hp6: float
    K_hp11: float
    hp3_ok: bool
    hp9_ok: bool
    kav_ok: bool
    worst_cases: Dict[str, Dict] = field(default_factory=dict)

    @property
    def C_est(self) -> float:
        """``1/gamma`` with the smaller of the two gamma estimates."""
        g = min(self.gamma_hp8, self.gamma_hp10)
        return 1.0 / g if g > 0 else float("inf")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["C_est"] = self.C_est if np.isfinite(self.C_est) else None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [
            ("hp8 gamma", f"{self.gamma_hp8:.6g}", "ok" if self.gamma_hp8_ok else "FAIL"),
            ("hp10 gamma", f"{self.gamma_hp10:.6g}", "ok" if self.gamma_hp10_ok else "FAIL"),
            ("spread C", f"{self.C_spread:.6g}", f"hp6 C = {self.C_hp6:.6g}"),
            ("hp11 K", f"{self.K_hp11:.6g}", ""),
            ("hp3 diag. convex", "", "ok" if self.hp3_ok else "FAIL"),
            ("hp9 monotone", "", "ok" if self.hp9_ok else "FAIL"),
            ("kav2/kav3/order", "", "ok" if self.kav_ok else "FAIL"),
            ("C_est = 1/gamma", f"{self.C_est:.6g}", ""),
        ]
        head = (f"model {self.model_id}: {self.samples} samples, seed {self.seed}, "
                f"|V| <= {self.v_box:g} (hp10: {self.v_box_hp10:g})")
        return "\n".join([head] + [f"  {a:<18} {b:>14}  {c}" for a, b, c in rows])


def assess(model: CostModel, n_samples=500, seed=0, v_scale=None, hp3_samples=None) -> AssumptionReport:
    B = _v_box(model, v_scale)
    g8 = estimate_gamma_hp8(model, n_samples, seed, B)
    spread = estimate_spread_C(model, n_samples, seed + 2, B)
    # concavity in V is only uniform on bounded value spreads; use the a-priori bound
    B10 = max(spread.value, 1e-3) if v_scale is None else B
    g10 = estimate_gamma_hp10(model, n_samples, seed + 1, B10)
    K = estimate_K_hp11(model, n_samples, seed + 3)
    kav = check_kav(model, n_samples, seed + 4, B)
    hp9 = check_hp9(model, n_samples, seed + 5, B) if model.separable else False
    hp3 = check_hp3(model, hp3_samples or max(1, n_samples // 5), seed + 6, B)
    return AssumptionReport(
        model.name, n_samples, seed, B, B10, "sup", "euclid",
        g8.value, g8.ok, g10.value, g10.ok, spread.value, spread.worst["hp6"], K.value,
        hp3, hp9, all(kav.values()),
        {"hp8": g8.worst, "hp10": g10.worst, "spread": {k: v for k, v in spread.worst.items() if k != "hp6"},
         "hp11": K.worst},
    )
