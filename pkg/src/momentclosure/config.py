"""Experiment configuration: YAML config files with strict key checking, and
parsing of collision-frequency expressions like "2+z".
"""

from __future__ import annotations

import ast
import hashlib
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError

_SIGMA_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Name,
    ast.Call,
    ast.Load,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def parse_sigma(text):
    """Parse a collision-frequency spec: a float, or an expression in z.

    Returns (value, description) where value is a float for constant sigma and
    a vectorized callable otherwise. Only arithmetic and a small set of
    functions are allowed.
    """
    text = str(text).strip()
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse sigma expression {text!r}: {exc}") from None
    names = set()
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigurationError(
                f"sigma expression {text!r}: {type(node).__name__} not allowed"
            )
        if isinstance(node, ast.Name):
            names.add(node.id)
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _SIGMA_FUNCS:
                raise ConfigurationError(f"sigma expression {text!r}: unknown function")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigurationError(f"sigma expression {text!r}: non-numeric constant")
    unknown = names - {"z"} - set(_SIGMA_FUNCS)
    if unknown:
        raise ConfigurationError(f"sigma expression {text!r}: unknown names {sorted(unknown)}")
    code = compile(tree, "<sigma>", "eval")
    env = {"__builtins__": {}} | _SIGMA_FUNCS
    if "z" not in names:
        value = float(eval(code, env))
        return value, text
    return (lambda z: np.asarray(eval(code, env | {"z": np.asarray(z, dtype=float)}))), text


# ---------------------------------------------------------------------------
# config files

DEFAULTS = {
    "grid": {"Nx": 100, "x_min": 0.0, "x_max": 1.0, "Nv": 8},
    "kinetic": {"sigma": "2", "init": "det-sine", "a0": 0.9, "t_final": 0.5,
                "snapshot_every": 100},
    "closure": {"kind": "pn", "N": 3, "epsilon": 1e-6, "alpha_lf": 5.0},
    "training": {"lr0": 1e-3, "epochs": 1000, "lr_decay_factor": 0.35,
                 "lr_decay_every": 100, "batch_size": 1024, "val_fraction": 0.10,
                 "seed": 0, "hidden_layers": 5, "hidden_width": 256},
    "sg": {"enabled": False, "basis": "legendre-uniform", "K": 4, "M": 16},
    "experiment": {"n_runs": 10, "t_max": 0.4, "data_seed": 0, "data_snapshot_every": 1,
                   "include_t0": True, "jobs": 1},
}


def load_config(path) -> dict:
    """Parse a YAML config with sections; unknown sections/keys are rejected."""
    raw_text = Path(path).read_text()
    try:
        raw = yaml.safe_load(raw_text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"bad YAML in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a mapping of sections")
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec, vals in raw.items():
        if sec not in DEFAULTS:
            raise ConfigurationError(f"unknown config section {sec!r}")
        if vals is None:
            continue
        if not isinstance(vals, dict):
            raise ConfigurationError(f"config section {sec!r} must be a mapping")
        for key, value in vals.items():
            if key not in DEFAULTS[sec]:
                raise ConfigurationError(f"unknown config key {sec}.{key}")
            cfg[sec][key] = value
    cfg["_raw_text"] = raw_text
    cfg["_hash"] = config_hash(raw_text)
    return cfg


def default_config() -> dict:
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    cfg["_raw_text"] = ""
    cfg["_hash"] = config_hash("")
    return cfg


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]
