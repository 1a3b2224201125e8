"""Run configuration files (JSON).

Layout::

    {
      "problem":    {"catalog": {"name": "...", "params": {...}}}   or an expression block,
      "solver":     {"scheme": "nlgs", "max_iters": 100, "seed": 0, ...},
      "quadrature": {"base_order": 5, "rel_tol": 1e-10, "max_depth": 30},
      "init":       {"uniform": 16}   or   {"network": {"interval": [...], "alpha": ..., "c": [...], "b": [...]}},
      "outputs":    {"trace_csv": "trace.csv", "final_json": "final.json", "certify": false}
    }

Relative output paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import Network, uniform_network
from .problems import Problem, problem_from_config
from .quadrature import QuadratureSpec
from .solver import SolverConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

_SECTIONS = {"problem", "solver", "quadrature", "init", "outputs"}


class ConfigError(ValueError):
    """Invalid run configuration; ``position`` is ``(line, column)`` when known."""

    def __init__(self, message: str, position=None):
        where = f" at line {position[0]}, column {position[1]}" if position else ""
        super().__init__(message + where)
        self.position = position


@dataclass
class RunConfig:
    problem: Problem
    solver: SolverConfig
    quadrature: QuadratureSpec
    init_uniform: int | None = None
    init_network: Network | None = None
    trace_csv: Path | None = None
    final_json: Path | None = None
    certify: bool = False
    raw: dict = field(default_factory=dict)

    def initial_network(self) -> Network:
        """The configured starting point; uniform inits still have ``c = 0``."""
        if self.init_network is not None:
            return self.init_network
        return uniform_network(self.problem.interval, self.init_uniform, self.problem.alpha)


def _dataclass_kwargs(cls, block: dict, section: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(block) - known)
    if extra:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(extra)}")
    return dict(block)


def parse_config(data: dict, base_dir: Path | str = ".") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = sorted(set(data) - _SECTIONS)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(extra)}")
    base_dir = Path(base_dir)
    try:
        problem = problem_from_config(data.get("problem") or {})
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"problem: {exc}") from None
    try:
        solver = SolverConfig(**_dataclass_kwargs(SolverConfig, data.get("solver", {}), "solver"))
        quad = QuadratureSpec(**_dataclass_kwargs(QuadratureSpec, data.get("quadrature", {}), "quadrature"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None

    init = data.get("init")
    if not isinstance(init, dict) or len(set(init) & {"uniform", "network"}) != 1 or len(init) != 1:
        raise ConfigError("init must contain exactly one of 'uniform' or 'network'")
    cfg = RunConfig(problem, solver, quad, raw=data)
    if "uniform" in init:
        n = init["uniform"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise ConfigError("init.uniform must be a non-negative integer")
        cfg.init_uniform = n
    else:
        try:
            net = Network.from_dict(init["network"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"init.network: {exc}") from None
        if net.interval != problem.interval:
            raise ConfigError("init.network interval differs from the problem interval")
        cfg.init_network = net

    out = data.get("outputs", {})
    if not isinstance(out, dict):
        raise ConfigError("section 'outputs' must be an object")
    extra = sorted(set(out) - {"trace_csv", "final_json", "certify"})
    if extra:
        raise ConfigError(f"unknown key(s) in 'outputs': {', '.join(extra)}")
    if out.get("trace_csv"):
        cfg.trace_csv = base_dir / out["trace_csv"]
    if out.get("final_json"):
        cfg.final_json = base_dir / out["final_json"]
    cfg.certify = bool(out.get("certify", False))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", (exc.lineno, exc.colno)) from None
    return parse_config(data, path.parent)
