"""Initial-terminal value problem and the long-horizon (turnpike) experiment.

A trajectory stores ``pi^0..pi^N``, ``V^0..V^N`` and ``P^0..P^{N-1}``.  For
the symmetric convention with data at ``-N`` and ``N`` the horizon is ``2N``
and storage index ``k`` stands for time ``k - N``; ``start`` records the
time of index 0.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import InvalidInput, SolverError, as_dist, as_values, norm, sharp_norm
from .costs import CostModel
from .equilibrium import nash_step
from .stationary import OMEGA, OMEGA_FLOOR, StationarySolution


@dataclass
class Trajectory:
    N: int
    pis: np.ndarray        # (N+1, d)
    Vs: np.ndarray         # (N+1, d)
    Ps: np.ndarray         # (N, d, d)
    residual: float
    start: int = 0
    iterations: int = 0
    history: List[float] = field(default_factory=list, repr=False)

    @property
    def d(self) -> int:
        return self.pis.shape[1]

    def at(self, n: int):
        """``(pi^n, V^n)`` by time label."""
        k = n - self.start
        return self.pis[k], self.Vs[k]

    def to_csv(self) -> str:
        d = self.d
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "state", "pi", "V"] + [f"P_{j}" for j in range(d)])
        for k in range(self.N + 1):
            for i in range(d):
                row = self.Ps[k, i] if k < self.N else np.full(d, np.nan)
                w.writerow([k + self.start, i, _fmt(self.pis[k, i]), _fmt(self.Vs[k, i])]
                           + [_fmt(x) for x in row])
        return buf.getvalue()


def _fmt(x) -> str:
    return "" if not np.isfinite(x) else format(float(x), ".17g")


def _backward(pis, VN, model):
    N = pis.shape[0] - 1
    d = pis.shape[1]
    Vs = np.empty((N + 1, d))
    Ps = np.empty((N, d, d))
    Vs[N] = VN
    for n in range(N - 1, -1, -1):
        G, _, P = nash_step(pis[n], Vs[n + 1], model)
        Vs[n] = G
        Ps[n] = P
    return Vs, Ps


def _forward(pi0, Vs, model):
    N = Vs.shape[0] - 1
    d = Vs.shape[1]
    pis = np.empty((N + 1, d))
    Ps = np.empty((N, d, d))
    pis[0] = pi0
    for n in range(N):
        _, K, P = nash_step(pis[n], Vs[n + 1], model)
        pis[n + 1] = K
        Ps[n] = P
    return pis, Ps


def solve_initial_terminal(pi0, VN, N: int, model: CostModel, omega=OMEGA, tol=1e-10,
                           max_iter=10_000, init="constant", stationary=None,
                           start: int = 0, adaptive=True) -> Trajectory:
    """Solve ``V^n = G_{pi^n}(V^{n+1})``, ``pi^{n+1} = K_{V^{n+1}}(pi^n)`` with
    ``pi^0`` and ``V^N`` prescribed.

    Picard iteration on the distribution path: a backward value pass for the
    current path, a forward pass from ``pi0``, then relaxation.  ``init`` is
    ``"constant"`` (path frozen at ``pi0``), ``"stationary"`` (linear
    interpolation from ``pi0`` to ``stationary.pi_bar``) or an explicit
    ``(N+1, d)`` array.
    """
    if N < 1:
        raise InvalidInput(f"horizon N must be >= 1, got {N}")
    pi0 = as_dist(pi0, "initial distribution")
    VN = as_values(VN, "terminal value")
    d = pi0.size
    if isinstance(init, str) and init == "constant":
        path = np.tile(pi0, (N + 1, 1))
    elif isinstance(init, str) and init == "stationary":
        if stationary is None:
            raise InvalidInput("init='stationary' needs a stationary solution")
        t = np.linspace(0.0, 1.0, N + 1)[:, None]
        path = (1 - t) * pi0 + t * np.asarray(stationary.pi_bar)
    else:
        path = np.array(init, dtype=float)
        if path.shape != (N + 1, d):
            raise InvalidInput(f"initial path must have shape {(N + 1, d)}")
        path[0] = pi0

    history = []
    for it in range(1, max_iter + 1):
        Vs, _ = _backward(path, VN, model)
        new, _ = _forward(pi0, Vs, model)
        # only pi^0..pi^{N-1} feed the backward pass
        res = float(np.abs(new[:N] - path[:N]).max())
        if adaptive and history and res > history[-1]:
            omega = max(0.5 * omega, OMEGA_FLOOR)
        history.append(res)
        if res <= tol:
            # the rebuilt path must itself meet tol; the Picard gap can understate it
            Vs, _ = _backward(new, VN, model)
            pis, Ps = _forward(pi0, Vs, model)
            traj = Trajectory(N, pis, Vs, Ps, 0.0, start, it, history)
            traj.residual = trajectory_residual(traj, model)
            if traj.residual <= tol:
                return traj
        path = (1 - omega) * path + omega * new
        path /= path.sum(axis=1, keepdims=True)
    raise SolverError(f"initial-terminal iteration stalled at {history[-1]:.3e}",
                      best=path, history=history)


def trajectory_residual(t: Trajectory, model: CostModel, value_norm="sup",
                        dist_norm="euclid") -> float:
    worst = 0.0
    for n in range(t.N):
        G, K, _ = nash_step(t.pis[n], t.Vs[n + 1], model)
        worst = max(worst, sharp_norm(t.Vs[n] - G, value_norm),
                    norm(t.pis[n + 1] - K, dist_norm))
    return worst


def stationary_trajectory(stat: StationarySolution, N: int, start: int = 0) -> Trajectory:
    """The constant path ``(pi_bar, V_bar + (N - n) lambda_bar)``."""
    d = stat.pi_bar.size
    pis = np.tile(stat.pi_bar, (N + 1, 1))
    Vs = stat.V_bar[None, :] + (N - np.arange(N + 1))[:, None] * stat.lambda_bar
    Ps = np.tile(stat.P_bar, (N, 1, 1))
    return Trajectory(N, pis, Vs, Ps, max(stat.residual_value, stat.residual_dist), start)


def f_sequence(t1: Trajectory, t2: Trajectory, centered_at_zero=True, dist_norm="euclid",
               value_norm="sup") -> np.ndarray:
    """Squared distances between two trajectories.

    Centered: horizons of length ``2N`` with index ``N`` as time 0; ``f_0``
    uses the middle only and ``f_n`` (``n >= 1``) adds the terms at
    ``+n`` and ``-n``.  Uncentered: ``f_n`` is the single-time term.
    """
    if t1.N != t2.N or t1.d != t2.d:
        raise InvalidInput("trajectories have different horizons")

    def term(k):
        return (norm(t1.pis[k] - t2.pis[k], dist_norm) ** 2
                + sharp_norm(t1.Vs[k] - t2.Vs[k], value_norm) ** 2)

    if not centered_at_zero:
        return np.array([term(k) for k in range(t1.N + 1)])
    if t1.N % 2:
        raise InvalidInput("centered f-sequence needs an even horizon 2N")
    mid = t1.N // 2
    return np.array([term(mid)] + [term(mid + n) + term(mid - n) for n in range(1, mid + 1)])


def numeros_premise(f, C: float) -> bool:
    """``sum_{n<N} f_n <= C f_N`` with ``N = len(f) - 1``."""
    f = np.asarray(f, dtype=float)
    return bool(f[:-1].sum() <= C * f[-1] * (1 + 1e-9) + 1e-300)


def empirical_C(f) -> float:
    """Smallest ``C`` with ``sum_{n<m} f_n <= C f_m`` for every ``m >= 1``."""
    f = np.asarray(f, dtype=float)
    if f.size < 2:
        raise InvalidInput("f-sequence needs at least two entries")
    heads = np.cumsum(f)[:-1]
    tail = f[1:]
    if np.any((tail <= 0) & (heads > 0)):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(tail > 0, heads / tail, 0.0)
    return float(r.max())


def check_numeros(f, C: float) -> bool:
    """Geometric bound ``f_0 <= C (C/(C+1))^(N-1) f_N``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise InvalidInput("f-sequence has negative entries")
    N = f.size - 1
    if N < 1:
        raise InvalidInput("f-sequence needs at least two entries")
    if not np.isfinite(C):
        return True
    bound = C * (C / (C + 1.0)) ** (N - 1) * f[-1]
    return bool(f[0] <= bound * (1 + 1e-9) or f[0] == 0.0)


def check_value_bound(t1: Trajectory, t2: Trajectory, K_est: float) -> bool:
    """``||V~^{start} - V^{start}|| <= ||V~^{end} - V^{end}|| + (#steps) K`` in sup norm."""
    if t1.N != t2.N:
        raise InvalidInput("trajectories have different horizons")
    lhs = norm(t1.Vs[0] - t2.Vs[0], "sup")
    rhs = norm(t1.Vs[-1] - t2.Vs[-1], "sup") + t1.N * K_est
    return bool(lhs <= rhs + 1e-9 * max(1.0, abs(rhs)))


# turnpike experiment

@dataclass
class TurnpikeReport:
    Ns: List[int]
    dist_pi: List[float]
    dist_V: List[float]
    f_seq: List[float]
    fitted_rate: Optional[float]
    r_squared: Optional[float]
    C_est: float
    numeros_ok: bool
    premise_ok: bool
    C_empirical: Optional[float] = None
    failures: List[int] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "Ns": list(self.Ns),
            "dist_pi": [float(x) for x in self.dist_pi],
            "dist_V": [float(x) for x in self.dist_V],
            "f_seq": [float(x) for x in self.f_seq],
            "fitted_rate": self.fitted_rate,
            "r_squared": self.r_squared,
            "C_est": self.C_est if np.isfinite(self.C_est) else None,
            "numeros_ok": self.numeros_ok,
            "premise_ok": self.premise_ok,
            "C_empirical": self.C_empirical,
            "failures": list(self.failures),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def distance_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "dist_pi", "dist_V"])
        for N, a, b in zip(self.Ns, self.dist_pi, self.dist_V):
            w.writerow([N, _fmt(a), _fmt(b)])
        return buf.getvalue()


def fit_log_rate(Ns, dists, floor=1e-12):
    """Least-squares slope of ``log(dist)`` against ``N``; ``(slope, R^2)``.

    Points at or below ``floor`` are dropped; fewer than 3 usable points
    give ``(None, None)``.
    """
    Ns = np.asarray(Ns, dtype=float)
    dists = np.asarray(dists, dtype=float)
    keep = np.isfinite(dists) & (dists > floor)
    if keep.sum() < 3:
        return None, None
    x, y = Ns[keep], np.log(dists[keep])
    slope, icept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + icept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def turnpike_sweep(model: CostModel, pi_init, V_term, Ns, stat: StationarySolution,
                   C_est: float = np.inf, workers: int = 1, **solve_kw) -> TurnpikeReport:
    """Solve the ``[-N, N]`` problem for each ``N`` and measure ``(pi^0, V^0)``
    against the stationary solution."""
    Ns = [int(n) for n in Ns]

    def run(N):
        try:
            return solve_initial_terminal(pi_init, V_term, 2 * N, model, start=-N, **solve_kw)
        except SolverError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            trajs = list(ex.map(run, Ns))
    else:
        trajs = [run(N) for N in Ns]

    dist_pi, dist_V, failures = [], [], []
    for N, t in zip(Ns, trajs):
        if t is None:
            failures.append(N)
            dist_pi.append(float("nan"))
            dist_V.append(float("nan"))
            continue
        pi0, V0 = t.at(0)
        dist_pi.append(norm(pi0 - stat.pi_bar, "euclid"))
        dist_V.append(sharp_norm(V0 - stat.V_bar, "sup"))

    notes = []
    rate, r2 = fit_log_rate(Ns, dist_pi)
    if rate is None:
        notes.append("fit skipped: fewer than 3 horizons above the floating-point floor")

    f_seq: List[float] = []
    C_emp = None
    numeros_ok = premise_ok = True
    ok = [(N, t) for N, t in zip(Ns, trajs) if t is not None]
    if ok:
        N, t = max(ok, key=lambda p: p[0])
        ref = stationary_trajectory(stat, 2 * N, start=-N)
        f = f_sequence(t, ref)
        f_seq = [float(x) for x in f]
        C_emp = empirical_C(f)
        C_emp = C_emp if np.isfinite(C_emp) else None
        numeros_ok = check_numeros(f, C_est)
        premise_ok = numeros_premise(f, C_est) if np.isfinite(C_est) else True
        if not np.isfinite(C_est):
            notes.append("no finite C estimate; numeros check is vacuous")
    return TurnpikeReport(Ns, dist_pi, dist_V, f_seq, rate, r2, float(C_est), numeros_ok,
                          premise_ok, C_emp, failures, notes)
