"""Command-line front end: ``dmfg {stationary,evolve,turnpike,check,variational}``.

Each run reads one JSON config, writes its outputs plus ``manifest.json`` into
``--out`` and exits with 0 (ok), 1 (config/usage error), 2 (solver did not
converge) or 3 (internal error).  On failure every written file carries a
``.partial`` suffix.  Output bytes depend only on (config, seed) unless
``--wall-time`` is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .core import InvalidInput, SolverError, as_dist, as_values
from .costs import (CostModel, PiOnlyCost, QuadraticRowCost, EntropyCost, congestion,
                    constant_table, entropy_model, monotone_w, switching_costs, theta_example)
from .diagnostics import assess
from .horizon import solve_initial_terminal, turnpike_sweep
from .stationary import stationary_entropy, stationary_generic, variational_solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "DMFG_THREADS"

MODEL_KEYS = {
    "entropy": {"type", "base"},
    "monotone_w": {"type", "tilde_c", "kappa", "alpha"},
    "theta_example": {"type"},
    "congestion": {"type", "a", "kappa", "b", "at"},
    "custom": {"type", "table", "beta"},
}
SOLVER_KEYS = {"tol", "max_iter", "omega", "value_norm", "dist_norm", "init"}


class ConfigError(InvalidInput):
    pass


@dataclass
class RunConfig:
    model: Dict[str, Any]
    d: int
    epsilon: Optional[float] = None
    N: Optional[int] = None
    Ns: Optional[List[int]] = None
    pi0: Optional[List[float]] = None
    V0: Optional[List[float]] = None
    VN: Optional[List[float]] = None
    solver: Dict[str, Any] = field(default_factory=dict)
    samples: int = 500
    seed: int = 0
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(raw) - known)
        if extra:
            raise ConfigError(f"config: unknown key(s) {extra}")
        for key in ("model", "d"):
            if key not in raw:
                raise ConfigError(f"config: missing required key '{key}'")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
        return cls.from_dict(raw)

    def validate(self):
        if isinstance(self.d, bool) or not isinstance(self.d, int) or self.d < 2:
            raise ConfigError(f"config field 'd' must be an integer >= 2, got {self.d!r}")
        if self.epsilon is not None and not (_is_num(self.epsilon) and self.epsilon > 0):
            raise ConfigError(f"config field 'epsilon' must be > 0, got {self.epsilon!r}")
        if self.N is not None and not (_is_int(self.N) and self.N >= 1):
            raise ConfigError(f"config field 'N' must be an integer >= 1, got {self.N!r}")
        if self.Ns is not None:
            if not isinstance(self.Ns, list) or not self.Ns or not all(_is_int(n) and n >= 1 for n in self.Ns):
                raise ConfigError("config field 'Ns' must be a non-empty list of integers >= 1")
        if not (_is_int(self.samples) and self.samples >= 1):
            raise ConfigError(f"config field 'samples' must be an integer >= 1, got {self.samples!r}")
        if not (_is_int(self.seed) and 0 <= self.seed < 2 ** 64):
            raise ConfigError(f"config field 'seed' must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.out is not None and not isinstance(self.out, str):
            raise ConfigError("config field 'out' must be a string")
        for name in ("pi0", "V0", "VN"):
            v = getattr(self, name)
            if v is None:
                continue
            if not isinstance(v, list) or len(v) != self.d or not all(_is_num(x) for x in v):
                raise ConfigError(f"config field '{name}' must be a list of {self.d} numbers")
            try:
                as_dist(v, name) if name == "pi0" else as_values(v, name)
            except InvalidInput as exc:
                raise ConfigError(f"config field '{name}': {exc}") from None
        self._validate_solver()
        self._validate_model()

    def _validate_solver(self):
        if not isinstance(self.solver, dict):
            raise ConfigError("config field 'solver' must be an object")
        extra = sorted(set(self.solver) - SOLVER_KEYS)
        if extra:
            raise ConfigError(f"config field 'solver': unknown key(s) {extra}")
        s = self.solver
        if "tol" in s and not (_is_num(s["tol"]) and s["tol"] > 0):
            raise ConfigError(f"config field 'solver.tol' must be > 0, got {s['tol']!r}")
        if "max_iter" in s and not (_is_int(s["max_iter"]) and s["max_iter"] >= 1):
            raise ConfigError("config field 'solver.max_iter' must be an integer >= 1")
        if "omega" in s and not (_is_num(s["omega"]) and 0 < s["omega"] <= 1):
            raise ConfigError("config field 'solver.omega' must lie in (0, 1]")
        for k in ("value_norm", "dist_norm"):
            if k in s and s[k] not in ("sup", "euclid"):
                raise ConfigError(f"config field 'solver.{k}' must be 'sup' or 'euclid'")
        if "init" in s and s["init"] not in ("constant", "stationary"):
            raise ConfigError("config field 'solver.init' must be 'constant' or 'stationary'")

    def _validate_model(self):
        m = self.model
        if not isinstance(m, dict) or "type" not in m:
            raise ConfigError("config field 'model' must be an object with a 'type'")
        kind = m["type"]
        if kind not in MODEL_KEYS:
            raise ConfigError(f"config field 'model.type' must be one of {sorted(MODEL_KEYS)}, got {kind!r}")
        extra = sorted(set(m) - MODEL_KEYS[kind])
        if extra:
            raise ConfigError(f"config field 'model': unknown key(s) {extra} for type {kind!r}")
        if kind == "entropy" and self.epsilon is None:
            raise ConfigError("config field 'epsilon' is required for the entropy model")
        if kind == "theta_example" and self.d != 2:
            raise ConfigError("config field 'd' must be 2 for theta_example")
        if kind == "custom" and "table" not in m:
            raise ConfigError("config field 'model.table' is required for custom models")
        for k in ("base", "tilde_c", "a", "table"):
            if k in m:
                _matrix(m[k], self.d, f"model.{k}")
        if "b" in m:
            b = m["b"]
            if not isinstance(b, list) or len(b) != self.d or not all(_is_num(x) and x >= 0 for x in b):
                raise ConfigError(f"config field 'model.b' must be a list of {self.d} numbers >= 0")
        for k in ("kappa", "alpha", "beta"):
            if k in m and not (_is_num(m[k]) and (m[k] > 0 if k != "kappa" else m[k] >= 0)):
                raise ConfigError(f"config field 'model.{k}' has an invalid value {m[k]!r}")
        if "at" in m and m["at"] not in ("destination", "origin"):
            raise ConfigError("config field 'model.at' must be 'destination' or 'origin'")

    def to_dict(self) -> dict:
        return asdict(self)

    def tilde_c(self) -> np.ndarray:
        """P-independent part of a ``monotone_w`` model (switching costs by default)."""
        tc = self.model.get("tilde_c")
        if tc is None:
            return switching_costs(self.d, self.model.get("kappa", 1.0))
        return np.array(tc, dtype=float)

    def build_model(self) -> CostModel:
        m, d, eps = self.model, self.d, self.epsilon
        kind = m["type"]
        if kind == "entropy":
            return entropy_model(np.array(m.get("base", np.zeros((d, d))), dtype=float), eps)
        if kind == "theta_example":
            return theta_example()
        if kind == "monotone_w":
            return monotone_w(self.tilde_c(), m.get("alpha", 1.0), eps)
        if kind == "congestion":
            a = m.get("a")
            a = switching_costs(d, m.get("kappa", 1.0)) if a is None else np.array(a, dtype=float)
            return congestion(a, np.array(m.get("b", np.ones(d)), dtype=float), eps,
                              at=m.get("at", "destination"))
        table = constant_table(np.array(m["table"], dtype=float))
        if "beta" in m:
            return QuadraticRowCost(table, m["beta"])
        if eps is not None:
            return EntropyCost(table, eps)
        return PiOnlyCost(table)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _matrix(x, d, name):
    ok = (isinstance(x, list) and len(x) == d
          and all(isinstance(r, list) and len(r) == d and all(_is_num(v) for v in r) for r in x))
    if not ok:
        raise ConfigError(f"config field '{name}' must be a {d}x{d} list of numbers")


# output handling

class Outputs:
    """Collects files and writes them in one go, suffixing ``.partial`` on failure."""

    def __init__(self, out_dir: str):
        self.dir = out_dir
        self.files: Dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def flush(self, ok: bool) -> List[str]:
        os.makedirs(self.dir, exist_ok=True)
        written = []
        for name, text in self.files.items():
            path = os.path.join(self.dir, name if ok else name + ".partial")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(path)
        return written


def _dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _stationary(cfg: RunConfig, model: CostModel):
    s = cfg.solver
    kw = {k: s[k] for k in ("tol", "max_iter", "omega") if k in s}
    if isinstance(model, EntropyCost):
        return stationary_entropy(model, cfg.pi0, **kw)
    return stationary_generic(model, cfg.pi0, cfg.V0, **kw)


def _horizon_kw(cfg: RunConfig) -> dict:
    s = cfg.solver
    return {k: s[k] for k in ("tol", "max_iter", "omega") if k in s}


# subcommands; each returns (exit code, residuals dict, summary line)

def cmd_stationary(cfg: RunConfig, model: CostModel, out: Outputs):
    try:
        sol = _stationary(cfg, model)
    except SolverError as exc:
        pi, V = exc.best if isinstance(exc.best, tuple) else (exc.best, None)
        out.add("stationary.json", _dumps({"pi_bar": pi, "V_bar": V, "error": str(exc)}))
        res = {"stationary": exc.history[-1] if exc.history else None}
        return EXIT_SOLVER, res, f"stationary: not converged ({exc})"
    out.add("stationary.json", sol.to_json() + "\n")
    res = {"residual_value": sol.residual_value, "residual_dist": sol.residual_dist}
    line = (f"lambda_bar = {sol.lambda_bar:.12g}  residual_value = {sol.residual_value:.3e}  "
            f"residual_dist = {sol.residual_dist:.3e}")
    return EXIT_OK, res, line


def cmd_evolve(cfg: RunConfig, model: CostModel, out: Outputs):
    if cfg.N is None:
        raise ConfigError("config field 'N' is required for evolve")
    pi0 = cfg.pi0 if cfg.pi0 is not None else np.full(cfg.d, 1.0 / cfg.d)
    VN = cfg.VN if cfg.VN is not None else np.zeros(cfg.d)
    init = cfg.solver.get("init", "constant")
    stat = _stationary(cfg, model) if init == "stationary" else None
    try:
        t = solve_initial_terminal(pi0, VN, cfg.N, model, init=init, stationary=stat,
                                   **_horizon_kw(cfg))
    except SolverError as exc:
        path = np.asarray(exc.best)
        lines = ["n,state,pi"] + [f"{n},{i},{path[n, i]!r}" for n in range(path.shape[0])
                                   for i in range(path.shape[1])]
        out.add("trajectory.csv", "\n".join(lines) + "\n")
        return EXIT_SOLVER, {"horizon": exc.history[-1]}, f"evolve: not converged ({exc})"
    out.add("trajectory.csv", t.to_csv())
    res = {"trajectory": t.residual, "iterations": t.iterations}
    return EXIT_OK, res, f"N = {cfg.N}  residual = {t.residual:.3e}  iterations = {t.iterations}"


def cmd_turnpike(cfg: RunConfig, model: CostModel, out: Outputs):
    if cfg.Ns is None:
        raise ConfigError("config field 'Ns' is required for turnpike")
    try:
        stat = _stationary(cfg, model)
    except SolverError as exc:
        out.add("turnpike.json", _dumps({"error": str(exc)}))
        return EXIT_SOLVER, {"stationary": exc.history[-1]}, f"turnpike: stationary stage failed ({exc})"
    C_est = assess(model, cfg.samples, cfg.seed).C_est
    pi_init = cfg.pi0 if cfg.pi0 is not None else np.full(cfg.d, 1.0 / cfg.d)
    V_term = cfg.VN if cfg.VN is not None else np.zeros(cfg.d)
    rep = turnpike_sweep(model, pi_init, V_term, cfg.Ns, stat, C_est=C_est,
                         workers=_threads(), **_horizon_kw(cfg))
    out.add("turnpike.json", rep.to_json() + "\n")
    out.add("distances.csv", rep.distance_csv())
    res = {"stationary": max(stat.residual_value, stat.residual_dist), "failures": rep.failures}
    rate = "n/a" if rep.fitted_rate is None else f"{rep.fitted_rate:.6g}"
    code = EXIT_SOLVER if rep.failures else EXIT_OK
    return code, res, f"fitted_rate = {rate}  numeros_ok = {rep.numeros_ok}  failures = {rep.failures}"


def cmd_check(cfg: RunConfig, model: CostModel, out: Outputs):
    rep = assess(model, cfg.samples, cfg.seed)
    out.add("assumptions.json", rep.to_json() + "\n")
    return EXIT_OK, {}, rep.table()


def cmd_variational(cfg: RunConfig, model: CostModel, out: Outputs):
    if cfg.model["type"] != "monotone_w" or cfg.epsilon is None:
        raise ConfigError("variational needs model.type 'monotone_w' with 'epsilon' set")
    tilde = entropy_model(cfg.tilde_c(), cfg.epsilon)
    try:
        edge, sol = variational_solve(model.objective, tilde, tol=cfg.solver.get("tol", 1e-12))
    except SolverError as exc:
        out.add("variational.json", _dumps({"eta": exc.best, "error": str(exc)}))
        return EXIT_SOLVER, {"variational": exc.history[-1] if exc.history else None}, \
            f"variational: not converged ({exc})"
    rec = {"eta": edge.mass, "holonomy_residual": edge.holonomy_residual,
           "objective": sol.info["objective"], "stationary": sol.to_dict()}
    out.add("variational.json", _dumps(rec))
    res = {"residual_value": sol.residual_value, "residual_dist": sol.residual_dist,
           "holonomy": edge.holonomy_residual}
    return EXIT_OK, res, f"objective = {sol.info['objective']:.12g}  lambda_bar = {sol.lambda_bar:.12g}"


COMMANDS = {
    "stationary": cmd_stationary,
    "evolve": cmd_evolve,
    "turnpike": cmd_turnpike,
    "check": cmd_check,
    "variational": cmd_variational,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dmfg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help="output directory (default: config 'out' or '.')")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--wall-time", action="store_true",
                       help="record wall time in the manifest (breaks byte reproducibility)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
        model = cfg.build_model()
    except (InvalidInput, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Outputs(args.out or cfg.out or ".")
    try:
        code, residuals, line = COMMANDS[args.command](cfg, model, out)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code, residuals, line = EXIT_INTERNAL, {}, ""

    manifest = {"command": args.command, "config": cfg.to_dict(), "version": __version__,
                "residuals": residuals, "exit_status": code}
    if args.wall_time:
        manifest["wall_time"] = time.perf_counter() - t0
    out.add("manifest.json", _dumps(manifest))
    out.flush(code == EXIT_OK)
    if line and not args.quiet:
        print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
