"""Problem configuration: JSON text with model / sde / lattice / driver / run blocks.

Driver entries are arithmetic expressions in ``t`` and ``x`` (numpy
functions allowed by name), parsed through a whitelist of syntax nodes.
"""
from __future__ import annotations

import ast
import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import model as models
from .errors import ConfigError, ObliqueSwitchError
from .lattice import SDEParams, build_lattice
from .solver import Driver

__all__ = ["ProblemConfig", "parse_config", "load_config", "emit_config", "compile_expression"]

BUILTINS = ("example1", "example2", "example3", "classical", "symmetric", "dim3",
            "controlled-costs-counterexample", "dim4-counterexample")

DEFAULTS = {
    "sde": {"b0": 0.0, "b1": 0.0, "s0": 1.0, "s1": 0.0, "x0": 0.0},
    "lattice": {"T": 1.0, "steps": 20, "mode": "trinomial", "spacing": None, "half_width": None,
                "coverage": 5.0},
    "run": {"seed": 0, "paths": 10_000, "baselines": 20, "sample_count": 1000, "resolution": 360,
            "exhaustive": False, "switch_cap": 80},
}

_FUNCS = {name: getattr(np, name) for name in
          ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh",
           "minimum", "maximum", "where", "clip", "sign", "floor", "ceil")}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
            ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def compile_expression(text, where="expression"):
    """Compile an expression in ``t`` and ``x`` to a vectorised callable ``(t, x) -> array``."""
    if isinstance(text, (int, float)):
        val = float(text)
        return lambda t, x: np.full(np.shape(x), val)
    if not isinstance(text, str):
        raise ConfigError(f"{where}: expected a number or an expression string")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} ({exc.msg})") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigError(f"{where}: {type(node).__name__} not allowed in {text!r}")
        if isinstance(node, ast.Name) and node.id not in ("t", "x", *_FUNCS, *_CONSTS):
            raise ConfigError(f"{where}: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"{where}: only numpy functions {sorted(_FUNCS)} may be called")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"{where}: only numeric constants allowed")
    code = compile(tree, where, "eval")

    def fn(t, x):
        env = {"__builtins__": {}, "t": t, "x": x, **_FUNCS, **_CONSTS}
        return np.broadcast_to(np.asarray(eval(code, env), dtype=float), np.shape(x)).copy()

    return fn


@dataclass(frozen=True)
class ProblemConfig:
    model: dict
    sde: dict
    lattice: dict
    driver: dict | None
    run: dict

    def as_dict(self):
        out = {"model": self.model, "sde": self.sde, "lattice": self.lattice, "run": self.run}
        if self.driver is not None:
            out["driver"] = self.driver
        return copy.deepcopy(out)

    @property
    def sha256(self):
        return hashlib.sha256(emit_config(self).encode()).hexdigest()

    # ---- builders

    def build_model(self):
        m = self.model
        try:
            name = m.get("builtin")
            if name is None:
                for key in ("P", "cbar"):
                    if key not in m:
                        raise ConfigError(f"model: missing {key!r} (or give 'builtin')")
                return models.ControlledTransitionModel(
                    P=np.asarray(m["P"], float), cbar=np.asarray(m["cbar"], float),
                    controls=tuple(m["controls"]) if m.get("controls") is not None else None,
                    name=m.get("name", "custom"))
            if name == "example1":
                return models.example1()
            if name == "example2":
                return models.example2(m.get("cost", 1.0))
            if name == "example3":
                return models.example3(grid=int(m.get("grid", 101)), closed_form=bool(m.get("closed_form", True)))
            if name == "classical":
                return models.classical_embedding(np.asarray(m["c"], float))
            if name == "symmetric":
                return models.symmetric_model(int(m["d"]), m.get("cost", 1.0))
            if name == "dim3":
                return models.dim3_model(m["p"], m["q"], m["r"], m.get("c", [1.0, 1.0, 1.0]))
            if name == "controlled-costs-counterexample":
                return models.controlled_costs_counterexample()
            if name == "dim4-counterexample":
                return models.uncontrolled(models.dim4_counterexample_matrix(), m.get("c", [1.0] * 4),
                                           name="dim4-counterexample")
        except KeyError as exc:
            raise ConfigError(f"model: builtin {m.get('builtin')!r} needs key {exc.args[0]!r}") from None
        except ConfigError:
            raise
        except ObliqueSwitchError as exc:
            raise ConfigError(f"model: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from None
        raise ConfigError(f"model.builtin: unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")

    def build_sde(self):
        return SDEParams(**{k: float(v) for k, v in self.sde.items()})

    def build_lattice(self):
        lat = self.lattice
        try:
            return build_lattice(self.build_sde(), float(lat["T"]), int(lat["steps"]), mode=lat["mode"],
                                 spacing=lat["spacing"], half_width=lat["half_width"],
                                 coverage=float(lat["coverage"]))
        except ObliqueSwitchError as exc:
            raise ConfigError(f"lattice: {exc}") from None

    def build_driver(self, d):
        if self.driver is None:
            raise ConfigError("driver: block missing")
        drv = self.driver
        term = drv.get("terminal")
        if term is None:
            raise ConfigError("driver.terminal: missing")
        if not isinstance(term, list) or len(term) != d:
            raise ConfigError(f"driver.terminal: need a list of {d} expressions")
        g_fns = [compile_expression(e, f"driver.terminal[{i}]") for i, e in enumerate(term)]
        run = drv.get("running")
        if run is not None and (not isinstance(run, list) or len(run) != d):
            raise ConfigError(f"driver.running: need a list of {d} expressions")
        f_fns = None if run is None else [compile_expression(e, f"driver.running[{i}]") for i, e in enumerate(run)]
        ky = drv.get("ky")
        kz = drv.get("kz")
        for key, v in (("ky", ky), ("kz", kz)):
            if v is not None and len(v) != d:
                raise ConfigError(f"driver.{key}: need {d} numbers")

        def terminal(x):
            return np.stack([fn(1.0, x) for fn in g_fns], axis=1)

        running = None if f_fns is None else (lambda t, x: np.stack([fn(t, x) for fn in f_fns], axis=1))
        return Driver(terminal=terminal, running=running,
                      ky=None if ky is None else np.asarray(ky, float),
                      kz=None if kz is None else np.asarray(kz, float))


def _merge(block, defaults, name):
    if block is None:
        return dict(defaults)
    if not isinstance(block, dict):
        raise ConfigError(f"{name}: must be an object")
    unknown = set(block) - set(defaults)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    out = dict(defaults)
    out.update(block)
    return out


def parse_config(text) -> ProblemConfig:
    """Parse JSON text (or an already-decoded dict) and fill defaults."""
    if isinstance(text, dict):
        raw = copy.deepcopy(text)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    unknown = set(raw) - {"model", "sde", "lattice", "driver", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level blocks {sorted(unknown)}")
    if "model" not in raw or not isinstance(raw["model"], dict):
        raise ConfigError("model: block missing")
    model = raw["model"]
    if "builtin" in model and model["builtin"] not in BUILTINS:
        raise ConfigError(f"model.builtin: unknown builtin {model['builtin']!r}; choose from {', '.join(BUILTINS)}")
    driver = raw.get("driver")
    if driver is not None:
        if not isinstance(driver, dict):
            raise ConfigError("driver: must be an object")
        unknown = set(driver) - {"running", "terminal", "ky", "kz"}
        if unknown:
            raise ConfigError(f"driver: unknown keys {sorted(unknown)}")
    return ProblemConfig(model=model, sde=_merge(raw.get("sde"), DEFAULTS["sde"], "sde"),
                         lattice=_merge(raw.get("lattice"), DEFAULTS["lattice"], "lattice"),
                         driver=driver, run=_merge(raw.get("run"), DEFAULTS["run"], "run"))


def load_config(path) -> ProblemConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def emit_config(cfg: ProblemConfig) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(cfg.as_dict(), sort_keys=True, indent=2) + "\n"
