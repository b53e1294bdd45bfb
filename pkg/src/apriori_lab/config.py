"""
Sectioned ``key = value`` experiment configuration.

Parsing never stops at the first problem: every unknown key, missing key,
malformed value and cross-section inconsistency is collected with its line
number and raised together in one ConfigError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .estimates import THEOREMS, EstimateParams, GammaBelowThreshold, system as theorem_system, threshold_formula
from .norms import CALIBRATION_KINDS
from .quadrature import METHODS
from .solvers import SimConfig, lp_column
from .transforms import FAMILIES, TransformParams


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass
class CheckConfig:
    theorems: tuple[str, ...]
    c0: float | str  # number or "calibrated"
    k: int = 3
    p: float = 2.0
    gamma: float | None = None
    gamma_factor: float = 2.0
    rtol: float = 5e-2
    gammas: tuple[float, ...] = ()
    gamma_factors: tuple[float, ...] = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
    sweep_theorem: str | None = None
    quadrature: str = "spline"
    series: str | None = None
    riesz: float = 1.0


@dataclass
class CalibrationConfig:
    kinds: tuple[str, ...] = CALIBRATION_KINDS
    trials: int = 50
    seed: int = 0
    n: int | None = None  # default: 32 in 2D, 24 in 3D


@dataclass
class TransformConfig:
    family: str
    gamma: float
    signs: tuple[str, ...] = ("+", "-")
    k: int = 3
    p: float = 2.0
    lam: float = 0.0
    tol: float = 1e-6

    def params(self) -> list[TransformParams]:
        return [TransformParams(self.family, s, self.gamma, self.k, self.p, self.lam) for s in self.signs]


@dataclass
class OutputConfig:
    dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")
    plots: bool = True


@dataclass
class ExperimentConfig:
    path: Path
    simulation: SimConfig | None = None
    transform: TransformConfig | None = None
    check: CheckConfig | None = None
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


# --- value converters ------------------------------------------------------


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _float(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def _list(conv):
    def parse(text: str):
        return tuple(conv(x.strip()) for x in text.split(",") if x.strip())

    return parse


def _norm_pair(text: str) -> tuple[int, float]:
    k, sep, p = text.partition(":")
    if not sep:
        raise ValueError(f"norm menu entries look like k:p, got {text!r}")
    return int(k), _float(p)


def _optional_float(text: str) -> float | None:
    return None if text.lower() == "none" else _float(text)


def _c0(text: str) -> float | str:
    return "calibrated" if text.lower() == "calibrated" else float(text)


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _choices(options):
    return _list(_choice(options))


SCHEMA = {
    "simulation": {
        "system": (_choice(("qg", "ns")), True),
        "n": (int, True),
        "t_end": (_float, True),
        "dt": (_float, False),
        "dt_policy": (_choice(("fixed", "cfl")), False),
        "cfl": (_float, False),
        "max_courant": (_float, False),
        "nu": (_float, False),
        "kappa": (_float, False),
        "alpha": (_float, False),
        "stride": (int, False),
        "preset": (str, False),
        "amplitude": (_float, False),
        "seed": (int, False),
        "slope": (_float, False),
        "cutoff": (int, False),
        "norms": (_list(_norm_pair), False),
        "besov": (_bool, False),
        "vorticity": (_bool, False),
        "tail_tol": (_float, False),
    },
    "transform": {
        "family": (_choice(FAMILIES), True),
        "gamma": (_float, True),
        "signs": (_choices(("+", "-")), False),
        "k": (int, False),
        "p": (_float, False),
        "lambda": (_float, False),
        "tol": (_float, False),
    },
    "check": {
        "theorems": (_choices(THEOREMS), True),
        "c0": (_c0, True),
        "k": (int, False),
        "p": (_float, False),
        "gamma": (_optional_float, False),
        "gamma_factor": (_float, False),
        "rtol": (_float, False),
        "gammas": (_list(_float), False),
        "gamma_factors": (_list(_float), False),
        "sweep_theorem": (_choice(THEOREMS), False),
        "quadrature": (_choice(METHODS), False),
        "series": (str, False),
        "riesz": (_float, False),
    },
    "calibration": {
        "kinds": (_choices(CALIBRATION_KINDS), False),
        "trials": (int, False),
        "seed": (int, False),
        "n": (int, False),
    },
    "output": {
        "dir": (str, False),
        "formats": (_choices(("csv", "json")), False),
        "plots": (_bool, False),
    },
}

_RENAME = {"lambda": "lam"}


def _read(path: Path, errors: list[str]) -> tuple[dict, dict]:
    """Raw sections {name: {key: (value_text, line)}} and section header lines."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    headers: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{current}]")
            elif current in sections:
                errors.append(f"line {lineno}: section [{current}] repeated (first at line {headers[current]})")
            headers.setdefault(current, lineno)
            sections.setdefault(current, {})
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key {key!r} appears before any [section]")
            continue
        if current not in SCHEMA:
            continue
        if key not in SCHEMA[current]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{current}]")
            continue
        if key in sections[current]:
            errors.append(f"line {lineno}: key {key!r} repeated in [{current}] (first at line {sections[current][key][1]})")
            continue
        sections[current][key] = (value.strip(), lineno)
    return sections, headers


def _convert(name: str, raw: dict, header_line: int, errors: list[str]) -> dict | None:
    out = {}
    good = True
    for key, (conv, required) in SCHEMA[name].items():
        if key not in raw:
            if required:
                errors.append(f"line {header_line}: missing required key {key!r} in [{name}]")
                good = False
            continue
        text, lineno = raw[key]
        try:
            out[_RENAME.get(key, key)] = conv(text)
        except (ValueError, TypeError) as exc:
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")
            good = False
    return out if good else None


def _line(raw: dict, name: str, key: str, headers: dict) -> int:
    return raw.get(name, {}).get(key, (None, headers.get(name, 0)))[1]


def _build_simulation(vals: dict, raw: dict, headers: dict, errors: list[str]) -> SimConfig | None:
    policy = vals.pop("dt_policy", "fixed")
    cfl = vals.pop("cfl", None)
    if policy == "cfl":
        vals["cfl"] = 0.5 if cfl is None else cfl
    elif cfl is not None:
        errors.append(f"line {_line(raw, 'simulation', 'cfl', headers)}: 'cfl' needs dt_policy = cfl")
        return None
    if "preset" not in vals:
        vals["preset"] = "taylor_green" if vals["system"] == "ns" else "qg_orthogonal"
    line = headers.get("simulation", 0)
    try:
        sim = SimConfig(**vals)
    except ValueError as exc:
        errors.extend(f"line {line}: [simulation] {msg}" for msg in str(exc).split("; "))
        return None
    if sim.cfl is not None and not 0 < sim.cfl <= sim.max_courant:
        errors.append(f"line {line}: [simulation] cfl safety factor must lie in (0, max_courant], got {sim.cfl}")
        return None
    return sim


def _initial_series(sim: SimConfig):
    """One-sample norm series of the configured initial state."""
    from .norms import BesovPartition
    from .solvers import NormSeries, initial_field, sample_norms

    f = initial_field(sim)
    vals = sample_norms(f, sim, BesovPartition(sim.grid) if sim.besov else None)
    names = sim.column_names[1:]
    return NormSeries([0.0], {k: [vals[k]] for k in names}, {"system": sim.system, "nu": sim.nu, "kappa": sim.kappa})


def parse_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment file; raise ConfigError listing every problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: config file not found"])
    errors: list[str] = []
    raw, headers = _read(path, errors)
    cfg = ExperimentConfig(path)
    conv = {name: _convert(name, raw[name], headers[name], errors) for name in raw if name in SCHEMA}

    if conv.get("simulation") is not None:
        cfg.simulation = _build_simulation(dict(conv["simulation"]), raw, headers, errors)
    if conv.get("transform") is not None:
        v = conv["transform"]
        try:
            cfg.transform = TransformConfig(**v)
            cfg.transform.params()
        except ValueError as exc:
            errors.append(f"line {headers['transform']}: [transform] {exc}")
            cfg.transform = None
    if conv.get("check") is not None:
        v = conv["check"]
        cfg.check = CheckConfig(**v)
        ck = cfg.check
        if ck.sweep_theorem is None and ck.theorems:
            ck.sweep_theorem = ck.theorems[0]
        for th in ck.theorems:
            try:
                EstimateParams(th, 1.0, ck.c0 if isinstance(ck.c0, float) else 1.0, ck.k, ck.p, ck.rtol)
            except ValueError as exc:
                errors.append(f"line {_line(raw, 'check', 'theorems', headers)}: [check] {exc}")
        if ck.c0 == "calibrated" and "1.2" in ck.theorems:
            errors.append(f"line {_line(raw, 'check', 'c0', headers)}: Theorem 1.2 has no calibrated C0; give a number")
    if conv.get("calibration") is not None:
        cfg.calibration = CalibrationConfig(**conv["calibration"])
        if cfg.calibration.trials < 1:
            errors.append(f"line {_line(raw, 'calibration', 'trials', headers)}: trials must be >= 1")
    if conv.get("output") is not None:
        cfg.output = OutputConfig(**conv["output"])

    _cross_check(cfg, raw, headers, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _cross_check(cfg: ExperimentConfig, raw: dict, headers: dict, errors: list[str]) -> None:
    sim, ck, tr = cfg.simulation, cfg.check, cfg.transform
    if sim is None:
        return
    columns = set(sim.column_names)
    if tr is not None:
        for prm in tr.params():
            need = prm.driving_column
            if need == lp_column(2.0):
                need = "l2"
            if need not in columns:
                errors.append(
                    f"line {headers['transform']}: [transform] needs column {need!r}, which the simulation norm menu does not record"
                )
                break
    if ck is None:
        return
    ck_line = _line(raw, "check", "theorems", headers)
    for th in ck.theorems:
        if theorem_system(th) != sim.system:
            errors.append(f"line {ck_line}: Theorem {th} concerns the {theorem_system(th)} system but the simulation is {sim.system}")
            continue
        try:
            params = EstimateParams(th, 1.0, 1.0, ck.k, ck.p, ck.rtol)
        except ValueError:
            continue
        missing = [c for c in params.required_columns() if c not in columns]
        if missing:
            errors.append(
                f"line {ck_line}: Theorem {th} with (k, p) = ({ck.k}, {ck.p:g}) needs {', '.join(missing)}; "
                "add it to the simulation norm menu"
            )
            continue
        if ck.gamma is not None and isinstance(ck.c0, float):
            params = EstimateParams(th, ck.gamma, ck.c0, ck.k, ck.p, ck.rtol)
            threshold = params.threshold(_initial_series(sim))
            if ck.gamma < threshold * (1 - 1e-12):
                exc = GammaBelowThreshold(ck.gamma, threshold, threshold_formula(th, ck.k, ck.p))
                errors.append(f"line {_line(raw, 'check', 'gamma', headers)}: {exc}")
    if ck.gammas and isinstance(ck.c0, float) and ck.sweep_theorem and theorem_system(ck.sweep_theorem) == sim.system:
        params = EstimateParams(ck.sweep_theorem, 1.0, ck.c0, ck.k, ck.p)
        threshold = params.threshold(_initial_series(sim))
        if max(ck.gammas) < threshold * (1 - 1e-12):
            errors.append(
                f"line {_line(raw, 'check', 'gammas', headers)}: every sweep gamma is below the threshold "
                f"{threshold_formula(ck.sweep_theorem, ck.k, ck.p)} = {threshold:.6g}"
            )
