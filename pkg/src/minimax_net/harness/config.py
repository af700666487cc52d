"""Experiment configuration: TOML file -> validated ``ExperimentConfig`` -> runnable objects.

Recognized keys (all optional except where noted)::

    algorithm = "dgta"          # dgta | dsgta | gda | sgda | gtda
    T = 1000
    seed = 0
    record_every = 10
    out = "runs/example"

    [problem]
    family = "quadratic"        # quadratic | logistic_wrm
    # quadratic, random data: n d dy seed mu curvature heterogeneity coupling radius offset center_scale homogeneous
    # quadratic, file data:   A b C centers radii (paths) and mu
    # logistic_wrm: n m p seed gamma radius x_cap flip shift, or data = ["agent0.csv", ...]
    phi_star = 0.0              # lower bound on Phi; computed for quadratic when omitted

    [topology]
    kind = "ring"               # complete | ring | path | star | grid | custom
    n = 4                       # defaults to problem.n
    scheme = "metropolis"       # metropolis | uniform_average
    rows = 2                    # grid only
    cols = 2
    edges_file = "graph.txt"    # custom only

    [stepsize]
    regime = "corollary1"       # corollary1 | corollary2_b1 | corollary3 | manual
    eta_x = 0.001               # manual only
    eta_y = 0.01
    epsilon = 0.1               # corollary3 only
    delta_phi = 1.0             # upper bound used by corollary2_b1 when no phi_star is available

    [noise]
    sigma = 0.0
    b = 1

    [init]
    x0 = [1.0, 1.0]             # explicit start, or a seeded Gaussian of scale x0_scale
    x0_scale = 1.0
    x0_seed = 0
    identical = true            # every agent starts from the same x0
    y0 = "center"               # center | best_response

    [gtda]
    K_inner = 3

Relative data paths are resolved against the config file's directory.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..algorithms import ALGORITHMS
from ..problems import ProblemError, QuadraticSaddle, RobustLogisticWRM, StochasticOracle
from ..stepsize import (
    REGIMES,
    RateConstants,
    StepsizePlan,
    manual_plan,
    plan_corollary1,
    plan_corollary2_b1,
    plan_corollary3_large_b,
)
from ..topology import SCHEMES, TOPOLOGIES, TopologyError, build_graph, build_mixing_matrix, load_edge_list

FAMILIES = ("quadratic", "logistic_wrm")
SWEEP_AXES = ("eta_x", "eta_y", "b", "sigma", "T", "topology", "seed")

_QUAD_RANDOM = {"n", "d", "dy", "seed", "mu", "curvature", "heterogeneity", "coupling", "radius", "offset", "center_scale", "homogeneous"}
_QUAD_FILES = {"A", "b", "C", "centers", "radii", "mu"}
_LOGISTIC = {"n", "m", "p", "seed", "gamma", "radius", "x_cap", "flip", "shift", "data"}


class ConfigError(ValueError):
    """A config field is missing, malformed or violates a precondition."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    algorithm: str = "dgta"
    T: int = 1000
    seed: int = 0
    record_every: int = 10
    out: str | None = None
    problem: dict = field(default_factory=lambda: {"family": "quadratic"})
    topology: dict = field(default_factory=lambda: {"kind": "ring", "scheme": "metropolis"})
    stepsize: dict = field(default_factory=lambda: {"regime": "corollary1"})
    noise: dict = field(default_factory=lambda: {"sigma": 0.0, "b": 1})
    init: dict = field(default_factory=dict)
    gtda: dict = field(default_factory=lambda: {"K_inner": 3})
    base_dir: str = "."

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "T": self.T,
            "seed": self.seed,
            "record_every": self.record_every,
            "out": self.out,
            "problem": copy.deepcopy(self.problem),
            "topology": copy.deepcopy(self.topology),
            "stepsize": copy.deepcopy(self.stepsize),
            "noise": copy.deepcopy(self.noise),
            "init": copy.deepcopy(self.init),
            "gtda": copy.deepcopy(self.gtda),
        }

    def with_updates(self, **top) -> "ExperimentConfig":
        new = copy.deepcopy(self)
        for k, v in top.items():
            setattr(new, k, v)
        return new

    @property
    def sigma(self) -> float:
        return float(self.noise.get("sigma", 0.0))

    @property
    def b(self) -> int:
        return int(self.noise.get("b", 1))


_TOP_KEYS = {"algorithm", "T", "seed", "record_every", "out"}
_SECTIONS = {"problem", "topology", "stepsize", "noise", "init", "gtda"}


def _require(cond: bool, name: str, msg: str):
    if not cond:
        raise ConfigError(name, msg)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    unknown = set(raw) - _TOP_KEYS - _SECTIONS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    for sec in _SECTIONS:
        if sec in raw and not isinstance(raw[sec], dict):
            raise ConfigError(sec, "must be a table")
    cfg = ExperimentConfig(base_dir=str(base_dir))
    for k in _TOP_KEYS:
        if k in raw:
            setattr(cfg, k, raw[k])
    for sec in _SECTIONS:
        if sec in raw:
            merged = dict(getattr(cfg, sec))
            merged.update(raw[sec])
            setattr(cfg, sec, merged)
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent)


def validate(cfg: ExperimentConfig) -> None:
    """Check every field before anything runs; raises ``ConfigError`` naming the field."""
    _require(cfg.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}, got {cfg.algorithm!r}")
    _require(_is_int(cfg.T) and cfg.T >= 1, "T", f"must be a positive integer, got {cfg.T!r}")
    _require(_is_int(cfg.seed) and cfg.seed >= 0, "seed", f"must be a nonnegative integer, got {cfg.seed!r}")
    _require(_is_int(cfg.record_every) and cfg.record_every >= 1, "record_every", "must be a positive integer")

    prob = cfg.problem
    fam = prob.get("family")
    _require(fam in FAMILIES, "problem.family", f"must be one of {FAMILIES}, got {fam!r}")
    keys = set(prob) - {"family", "phi_star"}
    if fam == "quadratic":
        if "A" in prob:
            extra = keys - _QUAD_FILES
            _require(not extra, f"problem.{sorted(extra)[0] if extra else ''}", "not valid with file-based quadratic data")
            missing = _QUAD_FILES - keys
            _require(not missing, f"problem.{sorted(missing)[0] if missing else ''}", "required for file-based quadratic data")
        else:
            extra = keys - _QUAD_RANDOM
            _require(not extra, f"problem.{sorted(extra)[0] if extra else ''}", "unknown quadratic parameter")
        if "mu" in prob:
            _require(_is_num(prob["mu"]) and prob["mu"] > 0, "problem.mu", "must be positive")
    else:
        extra = keys - _LOGISTIC
        _require(not extra, f"problem.{sorted(extra)[0] if extra else ''}", "unknown logistic_wrm parameter")
        if "gamma" in prob:
            _require(_is_num(prob["gamma"]) and prob["gamma"] > 0, "problem.gamma", "must be positive")
        if "data" in prob:
            _require(isinstance(prob["data"], list) and prob["data"], "problem.data", "must be a non-empty list of CSV paths")
    if "phi_star" in prob:
        _require(_is_num(prob["phi_star"]), "problem.phi_star", "must be a number")
    for k in ("n", "d", "dy", "m", "p"):
        if k in prob:
            _require(_is_int(prob[k]) and prob[k] >= 1, f"problem.{k}", "must be a positive integer")

    topo = cfg.topology
    kind = topo.get("kind", "ring")
    _require(kind in TOPOLOGIES, "topology.kind", f"must be one of {TOPOLOGIES}, got {kind!r}")
    _require(topo.get("scheme", "metropolis") in SCHEMES, "topology.scheme", f"must be one of {SCHEMES}")
    if kind == "grid":
        for k in ("rows", "cols"):
            _require(_is_int(topo.get(k)) and topo[k] >= 1, f"topology.{k}", "grid needs a positive integer")
    if kind == "custom":
        _require("edges_file" in topo or "edges" in topo, "topology.edges_file", "custom topology needs an edge list")

    st = cfg.stepsize
    regime = st.get("regime", "corollary1")
    _require(regime in REGIMES, "stepsize.regime", f"must be one of {REGIMES}, got {regime!r}")
    if regime == "manual":
        for k in ("eta_x", "eta_y"):
            _require(_is_num(st.get(k)) and st[k] > 0, f"stepsize.{k}", "manual regime needs a positive value")
    if regime == "corollary3":
        _require(_is_num(st.get("epsilon")) and st["epsilon"] > 0, "stepsize.epsilon", "corollary3 needs epsilon > 0")
    if "delta_phi" in st:
        _require(_is_num(st["delta_phi"]) and st["delta_phi"] > 0, "stepsize.delta_phi", "must be positive")

    sigma, b = cfg.noise.get("sigma", 0.0), cfg.noise.get("b", 1)
    _require(_is_num(sigma) and sigma >= 0, "noise.sigma", "must be a nonnegative number")
    _require(_is_int(b) and b >= 1, "noise.b", "must be a positive integer")
    if regime == "corollary2_b1":
        _require(sigma > 0, "noise.sigma", "corollary2_b1 needs sigma > 0")
    if cfg.algorithm in ("dgta", "gda", "gtda"):
        _require(sigma == 0, "noise.sigma", f"{cfg.algorithm} uses exact gradients; set sigma = 0 or pick dsgta/sgda")

    K = cfg.gtda.get("K_inner", 3)
    _require(_is_int(K) and K >= 1, "gtda.K_inner", "must be a positive integer")
    y0 = cfg.init.get("y0", "center")
    _require(y0 in ("center", "best_response"), "init.y0", "must be 'center' or 'best_response'")
    if "x0" in cfg.init:
        _require(isinstance(cfg.init["x0"], list) and all(_is_num(v) for v in cfg.init["x0"]), "init.x0", "must be a list of numbers")


# -- construction ---------------------------------------------------------------


def _path(cfg: ExperimentConfig, p: str) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(cfg.base_dir) / p


def build_problem(cfg: ExperimentConfig):
    prob = dict(cfg.problem)
    fam = prob.pop("family")
    phi_star = prob.pop("phi_star", None)
    try:
        if fam == "quadratic":
            if "A" in prob:
                problem = QuadraticSaddle.from_text_files(
                    _path(cfg, prob["A"]), _path(cfg, prob["b"]), _path(cfg, prob["C"]),
                    _path(cfg, prob["centers"]), _path(cfg, prob["radii"]), prob["mu"],
                )
            else:
                problem = QuadraticSaddle.random(**prob)
            if phi_star is None:
                problem.compute_phi_star()
            else:
                problem.phi_star = float(phi_star)
        else:
            if "data" in prob:
                paths = [_path(cfg, p) for p in prob.pop("data")]
                kw = {k: prob[k] for k in ("gamma", "radius", "x_cap") if k in prob}
                problem = RobustLogisticWRM.from_csv(paths, **kw)
            else:
                problem = RobustLogisticWRM.random(**prob)
            if phi_star is not None:
                problem.phi_star = float(phi_star)
    except (ProblemError, OSError, ValueError) as exc:
        raise ConfigError("problem", str(exc)) from exc
    return problem


def build_mixing(cfg: ExperimentConfig, n: int):
    topo = cfg.topology
    kind = topo.get("kind", "ring")
    scheme = topo.get("scheme", "metropolis")
    n_topo = topo.get("n", n)
    if n_topo != n:
        raise ConfigError("topology.n", f"graph has {n_topo} agents but the problem has {n}")
    try:
        if kind == "custom":
            if "edges_file" in topo:
                g = load_edge_list(_path(cfg, topo["edges_file"]), n)
            else:
                g = build_graph("custom", n, edges=topo["edges"])
        elif kind == "grid":
            g = build_graph("grid", n, rows=topo["rows"], cols=topo["cols"])
        else:
            g = build_graph(kind, n)
        return build_mixing_matrix(g, scheme)
    except TopologyError as exc:
        raise ConfigError("topology", str(exc)) from exc


def initial_point(cfg: ExperimentConfig, problem):
    init = cfg.init
    if "x0" in init:
        x0 = np.asarray(init["x0"], dtype=float)
        if x0.shape != (problem.d,):
            raise ConfigError("init.x0", f"needs {problem.d} entries, got {x0.size}")
    else:
        rng = np.random.default_rng(int(init.get("x0_seed", 0)))
        scale = float(init.get("x0_scale", 1.0))
        if init.get("identical", True):
            x0 = scale * rng.standard_normal(problem.d)
        else:
            x0 = scale * rng.standard_normal((problem.n, problem.d))
    if init.get("y0", "center") == "best_response":
        xbar = x0 if x0.ndim == 1 else x0.mean(axis=0)
        y0 = problem.best_response_stack(xbar)
    else:
        y0 = np.empty(problem.dim_y)
        for i, s in enumerate(problem.slices):
            part = y0[s]
            for sub, center, _ in problem.ball_blocks(i):
                part[sub] = center
    return x0, y0


def resolve_plan(cfg: ExperimentConfig, problem, W, x0) -> tuple[StepsizePlan, RateConstants, list[str]]:
    """Stepsizes for the configured regime, the constants used and any warnings."""
    st = cfg.stepsize
    regime = st.get("regime", "corollary1")
    warnings: list[str] = []
    xbar = x0 if np.ndim(x0) == 1 else np.mean(x0, axis=0)
    if "delta_phi" in st:
        delta_phi = float(st["delta_phi"])
    elif problem.phi_star is not None:
        delta_phi = max(problem.phi(xbar) - problem.phi_star, 0.0)
    else:
        delta_phi = 1.0
        if regime == "corollary2_b1":
            warnings.append("no lower bound on Phi; corollary2_b1 uses delta_phi = 1.0 as a stand-in")
    try:
        c = RateConstants(
            L=problem.L, mu=problem.mu, lam=W.lam, n=problem.n, sigma=cfg.sigma,
            D=problem.D, delta_phi=delta_phi, T=cfg.T, b=cfg.b,
        )
    except ValueError as exc:
        raise ConfigError("stepsize", str(exc)) from exc
    try:
        if regime == "corollary1":
            base = plan_corollary1(c)
            plan = StepsizePlan(base.eta_x, base.eta_y, cfg.b, "corollary1", base.slack)
        elif regime == "corollary2_b1":
            plan = plan_corollary2_b1(c)
            if cfg.b != 1:
                warnings.append(f"corollary2_b1 forces b = 1 (config had b = {cfg.b})")
        elif regime == "corollary3":
            plan = plan_corollary3_large_b(c, float(st["epsilon"]))
        else:
            plan = manual_plan(float(st["eta_x"]), float(st["eta_y"]), cfg.b, c)
    except ValueError as exc:
        raise ConfigError("stepsize", str(exc)) from exc
    for con in plan.slack:
        if not con.satisfied:
            warnings.append(f"stepsize constraint {con.name} violated (value {con.value:.6g} > bound {con.bound:.6g})")
    return plan, c, warnings


@dataclass
class Experiment:
    config: ExperimentConfig
    problem: Any
    W: Any
    plan: StepsizePlan
    constants: RateConstants
    x0: np.ndarray
    y0: np.ndarray
    warnings: list[str]

    @property
    def target(self):
        if self.config.algorithm in ("dsgta", "sgda"):
            return StochasticOracle(self.problem, sigma=self.config.sigma, b=self.plan.b, seed=self.config.seed)
        return self.problem


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    validate(cfg)
    problem = build_problem(cfg)
    W = build_mixing(cfg, problem.n)
    x0, y0 = initial_point(cfg, problem)
    plan, c, warnings = resolve_plan(cfg, problem, W, x0)
    return Experiment(cfg, problem, W, plan, c, x0, y0, warnings)


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with one sweep axis set to ``value``."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got {axis!r}")
    new = copy.deepcopy(cfg)
    if axis in ("eta_x", "eta_y"):
        if new.stepsize.get("regime", "corollary1") != "manual":
            exp = build_experiment(cfg)
            new.stepsize = {"regime": "manual", "eta_x": exp.plan.eta_x, "eta_y": exp.plan.eta_y}
        new.stepsize[axis] = float(value)
    elif axis == "b":
        new.noise["b"] = int(value)
    elif axis == "sigma":
        new.noise["sigma"] = float(value)
    elif axis == "T":
        new.T = int(value)
    elif axis == "seed":
        new.seed = int(value)
    else:
        new.topology = {k: v for k, v in new.topology.items() if k not in ("rows", "cols", "edges_file", "edges")}
        new.topology["kind"] = str(value)
    validate(new)
    return new


def parse_axis_value(axis: str, text: str):
    text = text.strip()
    if axis in ("b", "T", "seed"):
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError("values", f"{axis} needs integers, got {text!r}") from exc
    if axis == "topology":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError("values", f"{axis} needs numbers, got {text!r}") from exc
