"""Strict TOML run configuration.

Every section and key is declared in ``SCHEMA``; unknown names are rejected
with a suggestion, missing optional keys take their defaults, and the
normalised form can be written back out (``dump_config``) to reproduce a run.
"""

from __future__ import annotations

import difflib
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .errors import ConfigError
from .hydro import PressureLaw, SolverConfig
from .initial_data import KINDS as DATA_KINDS
from .initial_data import InitialData
from .kernels import KINDS as KERNEL_KINDS
from .kernels import KernelFamily
from .spectral import GridSpec


def _positive(x):
    """positive"""
    return x > 0


def _nonnegative(x):
    """nonnegative"""
    return x >= 0


def _one_of(*options):
    def check(x):
        return x in options

    check.__doc__ = f"one of {options}"
    return check


def _power_of_two(x):
    """a power of two >= 16"""
    return x >= 16 and (x & (x - 1)) == 0


def _unit_interval(x):
    """in (0, 1]"""
    return 0 < x <= 1


def _at_least_two(x):
    """at least 2"""
    return x >= 2


# key -> (type, default, validator); a default of None means "derived"
Field = Tuple[type, Any, Optional[Callable[[Any], bool]]]

SCHEMA: Dict[str, Dict[str, Field]] = {
    "grid": {
        "dimension": (int, 1, _one_of(1, 2)),
        "points": (int, 256, _power_of_two),
        "length": (float, 2 * math.pi, _positive),
    },
    "kernel": {
        "kind": (str, "bessel", _one_of(*KERNEL_KINDS)),
        "epsilon": (float, 0.1, _positive),
        "m": (float, None, _nonnegative),
        "nu0": (float, 0.05, _positive),
        "kappa": (float, None, _unit_interval),
    },
    "solver": {
        "friction": (float, 1.0, _nonnegative),
        "dt": (float, 0.01, _positive),
        "t_end": (float, 1.0, _nonnegative),
        "integrator": (str, "etdrk4", _one_of("etdrk4", "ifrk4")),
        "pressure": (str, "plain", _one_of("plain", "general")),
        "gamma": (float, 2.0, _positive),
        "adaptive": (bool, False, None),
    },
    "initial_data": {
        "kind": (str, "gaussian", _one_of(*DATA_KINDS)),
        "amplitude": (float, 1e-2, _nonnegative),
        "width": (float, 1.0, _positive),
        "modes": (list, [[1]], None),
        "kmax": (int, 8, _positive),
        "exponent": (float, 0.0, _nonnegative),
        "velocity_amplitude": (float, 0.0, _nonnegative),
        "velocity_kind": (str, "gradient", _one_of("gradient", "shear", "same")),
        "seed": (int, 0, _nonnegative),
    },
    "diagnostics": {
        "sigma": (list, [], None),
        "snapshot_stride": (int, 10, _positive),
        "lyapunov": (bool, True, None),
        "write_snapshots": (bool, True, None),
    },
    "study": {
        "eps_list": (list, [0.2, 0.1, 0.05, 0.025], None),
        "lambda_list": (list, [8.0, 16.0, 32.0, 64.0], None),
        "eps_fixed": (float, 0.1, _positive),
        "pairs": (list, [[8.0, 0.2], [16.0, 0.1], [32.0, 0.05]], None),
        "snapshots": (int, 40, _positive),
    },
    "particles": {
        "count": (int, 1000, _at_least_two),
        "epsilon": (float, 0.5, _positive),
        "friction": (float, 1.0, _nonnegative),
        "dt": (float, 0.01, _positive),
        "t_final": (float, 1.0, _nonnegative),
        "protocol": (str, "plain", _one_of("plain", "density_weighted")),
        "bandwidth": (float, 0.2, _positive),
        "counts": (list, [1000, 10000, 100000], None),
        "snapshot_stride": (int, 10, _positive),
        "sample": (int, 64, _positive),
        "seed": (int, 0, _nonnegative),
    },
    "modes": {
        "xi_min": (float, 1e-2, _positive),
        "xi_max": (float, 1e3, _positive),
        "samples": (int, 400, _at_least_two),
    },
}

REQUIRED_SECTIONS = ("grid",)


@dataclass
class RunConfig:
    grid: GridSpec
    kernel: KernelFamily
    solver: SolverConfig
    initial_data: InitialData
    diagnostics: Dict[str, Any]
    study: Dict[str, Any]
    particles: Dict[str, Any]
    modes: Dict[str, Any]
    normalized: Dict[str, Dict[str, Any]]

    @property
    def seed(self) -> int:
        return self.initial_data.seed


def _suggest(name: str, options) -> str:
    close = difflib.get_close_matches(name, list(options), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def _coerce(where: str, kind: type, value):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is bool and not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")
    return value


def _normalise(raw: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    for name in raw:
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]{_suggest(name, SCHEMA)}")
        if not isinstance(raw[name], dict):
            raise ConfigError(f"[{name}] must be a table")
    for name in REQUIRED_SECTIONS:
        if name not in raw:
            raise ConfigError(f"missing section [{name}]")
    out: Dict[str, Dict[str, Any]] = {}
    for sec, fields in SCHEMA.items():
        given = raw.get(sec, {})
        for key in given:
            if key not in fields:
                raise ConfigError(f"[{sec}].{key}: unknown key{_suggest(key, fields)}")
        vals = {}
        for key, (kind, default, check) in fields.items():
            where = f"[{sec}].{key}"
            if key in given:
                v = _coerce(where, kind, given[key])
                if check is not None and not check(v):
                    raise ConfigError(f"{where} = {v!r} is out of range (must be {check.__doc__})")
            else:
                v = list(default) if isinstance(default, list) else default
            vals[key] = v
        out[sec] = vals
    if out["kernel"]["m"] is None:
        out["kernel"]["m"] = float(out["grid"]["dimension"] + 1)
    _check_lists(out)
    return out


def _numbers(where: str, xs, positive=True) -> List[float]:
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in xs):
        raise ConfigError(f"{where}: expected a list of numbers")
    if positive and any(x <= 0 for x in xs):
        raise ConfigError(f"{where}: entries must be positive")
    return [float(x) for x in xs]


def _check_lists(cfg):
    d = cfg["diagnostics"]
    d["sigma"] = _numbers("[diagnostics].sigma", d["sigma"], positive=False)
    st = cfg["study"]
    st["eps_list"] = _numbers("[study].eps_list", st["eps_list"])
    st["lambda_list"] = _numbers("[study].lambda_list", st["lambda_list"])
    pairs = []
    for p in st["pairs"]:
        if not isinstance(p, list) or len(p) != 2:
            raise ConfigError("[study].pairs: expected a list of [friction, epsilon] pairs")
        pairs.append(_numbers("[study].pairs", p))
    st["pairs"] = pairs
    pc = cfg["particles"]
    pc["counts"] = [int(x) for x in _numbers("[particles].counts", pc["counts"])]
    modes = cfg["initial_data"]["modes"]
    if not all(isinstance(k, list) and all(isinstance(c, int) for c in k) for k in modes):
        raise ConfigError("[initial_data].modes: expected a list of integer wave vectors")
    if cfg["modes"]["xi_max"] <= cfg["modes"]["xi_min"]:
        raise ConfigError("[modes].xi_max must exceed [modes].xi_min")


def build(norm: Dict[str, Dict[str, Any]]) -> RunConfig:
    try:
        g = norm["grid"]
        grid = GridSpec(g["dimension"], g["points"], g["length"])
        k = norm["kernel"]
        kernel = KernelFamily(epsilon=k["epsilon"], m=k["m"], nu0=k["nu0"], kappa=k["kappa"], kind=k["kind"])
        s = norm["solver"]
        solver = SolverConfig(
            friction=s["friction"],
            dt=s["dt"],
            t_end=s["t_end"],
            kernel=kernel,
            pressure=PressureLaw(s["pressure"], s["gamma"]),
            integrator=s["integrator"],
            snapshot_stride=norm["diagnostics"]["snapshot_stride"],
            adaptive=s["adaptive"],
        )
        data = InitialData(**norm["initial_data"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        grid, kernel, solver, data, norm["diagnostics"], norm["study"], norm["particles"], norm["modes"], norm
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text; every failure is a ConfigError naming its location."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return build(_normalise(raw))


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def default_config(dimension: int = 1) -> RunConfig:
    return build(_normalise({"grid": {"dimension": dimension}}))


def with_overrides(cfg: RunConfig, section: str, **values) -> RunConfig:
    """A copy of ``cfg`` with some keys of one section replaced (validated again)."""
    norm = {s: dict(v) for s, v in cfg.normalized.items()}
    norm[section].update(values)
    raw = {s: {k: v for k, v in vals.items() if v is not None} for s, vals in norm.items()}
    return build(_normalise(raw))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {v!r}")


def dump_config(cfg: RunConfig) -> str:
    """Normalised TOML text; parsing it back yields an identical configuration."""
    lines = []
    for sec, vals in cfg.normalized.items():
        lines.append(f"[{sec}]")
        for k, v in vals.items():
            if v is not None:
                lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


__all__ = [
    "RunConfig",
    "SCHEMA",
    "parse_config",
    "load_config",
    "default_config",
    "dump_config",
    "with_overrides",
]
