"""Scenario files: JSON in, validated ``ScenarioConfig`` out.

Every validation error names the line of the offending key so a long
config can be fixed without hunting.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .distribution import Metric, Scheme, build_grid, from_pdf
from .dynamics import Interp
from .endogenous import EndoParams
from .errors import CapflowError, ConfigError
from .functions import from_json as function_from_json

MODES = ("simulate", "classify", "steady", "compare", "endogenous", "example")
EXAMPLES = ("A", "B", "C", "D", "E")

_FAMILIES = {
    "normal": (("loc", "scale"), lambda p: stats.norm(p["loc"], p["scale"])),
    "exponential": (("rate",), lambda p: stats.expon(scale=1.0 / p["rate"])),
    "pareto": (("lo", "nu"), lambda p: stats.pareto(b=p["nu"], scale=p["lo"])),
    "uniform": (("lo", "hi"), lambda p: stats.uniform(p["lo"], p["hi"] - p["lo"])),
    "lognormal": (("mu", "sigma"), lambda p: stats.lognorm(s=p["sigma"], scale=math.exp(p["mu"]))),
    "gamma": (("shape", "scale"), lambda p: stats.gamma(p["shape"], scale=p["scale"])),
}


class _Source:
    """Maps config keys to line numbers in the original text."""

    def __init__(self, text: str, name: str):
        self.lines = text.splitlines()
        self.name = name

    def line_of(self, key: str | None) -> int | None:
        if key is None:
            return None
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for i, line in enumerate(self.lines, 1):
            if pat.search(line):
                return i
        return None

    def error(self, msg: str, key: str | None = None) -> ConfigError:
        line = self.line_of(key)
        where = f"{self.name}:{line}" if line else self.name
        return ConfigError(f"{where}: {msg}")


def frozen_law(spec: dict):
    """A scipy frozen distribution from ``{"family", "params"}``."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("a distribution needs a 'family' key")
    key = str(spec["family"]).strip().lower()
    if key not in _FAMILIES:
        raise ConfigError(f"unknown distribution family {spec['family']!r}; expected one of {sorted(_FAMILIES)}")
    names, make = _FAMILIES[key]
    params = spec.get("params", {})
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"{spec['family']} needs parameters {missing}")
    try:
        return make({k: float(params[k]) for k in names})
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{spec['family']}: {exc}") from None


def initial_pdf(spec: dict):
    """Density callable from a single family or ``{"mixture": [...]}``."""
    if "mixture" in spec:
        parts = spec["mixture"]
        if not isinstance(parts, list) or not parts:
            raise ConfigError("mixture must be a nonempty list")
        laws = [(float(p.get("weight", 1.0)), frozen_law(p)) for p in parts]
        if any(w <= 0 for w, _ in laws):
            raise ConfigError("mixture weights must be positive")
        return lambda x: sum(w * law.pdf(x) for w, law in laws)
    return frozen_law(spec).pdf


@dataclass
class ScenarioConfig:
    mode: str
    space: dict = field(default_factory=dict)
    fertility: dict | None = None
    transmission: dict | None = None
    initial: dict | None = None
    run: dict = field(default_factory=dict)
    compare: dict | None = None
    endogenous: dict | None = None
    example: dict | None = None

    def to_json(self) -> dict:
        out = {"mode": self.mode, "space": self.space, "run": self.run}
        for key in ("fertility", "transmission", "initial", "compare", "endogenous", "example"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return copy.deepcopy(out)

    # -- builders used by the runners --

    @property
    def max_generations(self) -> int:
        return int(self.run.get("max_generations", 200))

    @property
    def tol(self) -> float:
        return float(self.run.get("tol", 1e-8))

    @property
    def metric(self) -> Metric:
        return Metric.parse(self.run.get("metric", "Kolmogorov"))

    @property
    def interp(self) -> Interp:
        return Interp(self.run.get("interp", "linear"))

    @property
    def snapshot(self):
        every = self.run.get("snapshot_every")
        return None if every is None else int(every)

    def fertility_fn(self):
        return function_from_json(self.fertility)

    def transmission_fn(self):
        return function_from_json(self.transmission)

    def grid(self, breakpoints=()):
        sp = self.space
        ref = frozen_law(sp["reference"]) if "reference" in sp else None
        bps = tuple(float(b) for b in sp.get("breakpoints", ())) + tuple(breakpoints)
        lo, hi = float(sp["lo"]), float(sp["hi"])
        bps = tuple(sorted({b for b in bps if lo <= b <= hi}))
        return build_grid((lo, hi), int(sp.get("grid_points", 1024)), sp.get("scheme", "Uniform"),
                          float(sp.get("tail_mass_tol", 1e-6)), ref, float(sp.get("default_span", 20.0)), bps)

    def initial_on(self, grid, spec=None):
        return from_pdf(grid, initial_pdf(self.initial if spec is None else spec))

    def endo_params(self) -> EndoParams:
        keys = ("alpha", "beta", "gamma", "phi", "theta", "varrho")
        return EndoParams.from_json({k: self.endogenous[k] for k in keys if k in self.endogenous})


def _bound(v):
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    return None


def _validate(raw: dict, src: _Source, mode: str | None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise src.error("the top level must be a JSON object")
    cfg_mode = raw.get("mode")
    if mode is None:
        mode = cfg_mode
    elif cfg_mode is not None and cfg_mode != mode:
        raise src.error(f"config is for mode {cfg_mode!r} but {mode!r} was requested", "mode")
    if mode not in MODES:
        raise src.error(f"mode must be one of {list(MODES)}, got {mode!r}", "mode")
    unknown = set(raw) - {"mode", "space", "fertility", "transmission", "initial", "run", "compare",
                          "endogenous", "example", "description"}
    if unknown:
        key = sorted(unknown)[0]
        raise src.error(f"unknown key {key!r}", key)
    extra_modes = [k for k in ("compare", "endogenous", "example") if k in raw and k != mode]
    if extra_modes:
        raise src.error(f"block {extra_modes[0]!r} does not belong to mode {mode!r}", extra_modes[0])

    cfg = ScenarioConfig(mode, dict(raw.get("space", {})), raw.get("fertility"), raw.get("transmission"),
                         raw.get("initial"), dict(raw.get("run", {})), raw.get("compare"),
                         raw.get("endogenous"), raw.get("example"))
    _check_run(cfg, src)
    if mode == "example":
        _check_example(cfg, src)
        return cfg
    if mode == "endogenous":
        _check_endogenous(cfg, src)
        return cfg

    for key in ("fertility", "transmission"):
        if getattr(cfg, key) is None:
            raise src.error(f"missing required key {key!r}")
        try:
            function_from_json(getattr(cfg, key))
        except CapflowError as exc:
            raise src.error(str(exc), key) from None
    _check_space(cfg, src)
    if mode in ("simulate", "compare"):
        if cfg.initial is None:
            raise src.error("missing required key 'initial'")
        _check_initial(cfg.initial, src, "initial")
    if mode == "compare":
        blk = cfg.compare
        if not isinstance(blk, dict) or len(set(blk) & {"fertility_b", "initial_b"}) != 1:
            raise src.error("compare needs exactly one of 'fertility_b' or 'initial_b'", "compare")
        if "fertility_b" in blk:
            try:
                function_from_json(blk["fertility_b"])
            except CapflowError as exc:
                raise src.error(str(exc), "fertility_b") from None
        else:
            _check_initial(blk["initial_b"], src, "initial_b")
    return cfg


def _check_space(cfg, src):
    sp = cfg.space
    if not sp:
        raise src.error("missing required key 'space'")
    for key in ("lo", "hi"):
        if key not in sp:
            raise src.error(f"space needs {key!r}", "space")
    lo, hi = _bound(sp["lo"]), _bound(sp["hi"])
    if lo is None or hi is None or not lo < hi:
        raise src.error(f"space bounds must satisfy lo < hi, got {sp['lo']!r}, {sp['hi']!r}", "lo")
    n = sp.get("grid_points", 1024)
    if not isinstance(n, int) or isinstance(n, bool) or n < 16:
        raise src.error(f"grid_points must be an integer >= 16, got {n!r}", "grid_points")
    try:
        Scheme.parse(sp.get("scheme", "Uniform"))
    except (ValueError, ConfigError) as exc:
        raise src.error(str(exc), "scheme") from None
    tmt = sp.get("tail_mass_tol", 1e-6)
    if not isinstance(tmt, (int, float)) or not 0 < tmt <= 0.01:
        raise src.error(f"tail_mass_tol must lie in (0, 0.01], got {tmt!r}", "tail_mass_tol")
    if "reference" in sp:
        try:
            frozen_law(sp["reference"])
        except ConfigError as exc:
            raise src.error(str(exc), "reference") from None


def _check_initial(spec, src, key):
    try:
        pdf = initial_pdf(spec)
        pdf(np.array([0.5, 1.5]))
    except ConfigError as exc:
        raise src.error(str(exc), key) from None
    except (TypeError, AttributeError):
        raise src.error("initial distribution must be an object", key) from None


def _check_run(cfg, src):
    r = cfg.run
    T = r.get("max_generations", 200)
    if not isinstance(T, int) or isinstance(T, bool) or T < 0:
        raise src.error(f"max_generations must be a nonnegative integer, got {T!r}", "max_generations")
    tol = r.get("tol", 1e-8)
    if not isinstance(tol, (int, float)) or tol < 0:
        raise src.error(f"tol must be a nonnegative number, got {tol!r}", "tol")
    try:
        Metric.parse(r.get("metric", "Kolmogorov"))
    except (ValueError, ConfigError) as exc:
        raise src.error(str(exc), "metric") from None
    try:
        Interp(r.get("interp", "linear"))
    except ValueError:
        raise src.error(f"interp must be one of {[i.value for i in Interp]}", "interp") from None
    every = r.get("snapshot_every")
    if every is not None and (not isinstance(every, int) or every < 1):
        raise src.error(f"snapshot_every must be a positive integer, got {every!r}", "snapshot_every")


def _check_example(cfg, src):
    ex = cfg.example
    if not isinstance(ex, dict) or "name" not in ex:
        raise src.error("example needs a 'name'", "example")
    name = str(ex["name"]).upper()
    if name not in EXAMPLES:
        raise src.error(f"example name must be one of {list(EXAMPLES)}, got {ex['name']!r}", "name")
    if name == "B" and str(ex.get("case", "a")).lower() not in ("a", "b", "c"):
        raise src.error("example B needs case 'a', 'b' or 'c'", "case")
    params = ex.get("params", {})
    if not isinstance(params, dict) or not all(isinstance(v, (int, float)) for v in params.values()):
        raise src.error("example params must map names to numbers", "params")


def _check_endogenous(cfg, src):
    blk = cfg.endogenous
    if not isinstance(blk, dict):
        raise src.error("missing required key 'endogenous'")
    missing = [k for k in ("alpha", "beta", "gamma", "phi", "theta") if k not in blk]
    if missing:
        raise src.error(f"endogenous needs {missing}", "endogenous")
    try:
        cfg.endo_params()
    except CapflowError as exc:
        bad = next((k for k in ("alpha", "beta", "gamma", "phi", "theta", "varrho") if k in str(exc)), None)
        raise src.error(str(exc), bad) from None
    if cfg.initial is not None:
        _check_initial(cfg.initial, src, "initial")
    if cfg.space:
        _check_space(cfg, src)
        if float(cfg.space["lo"]) < 1:
            raise src.error("relative capital starts at 1", "lo")


def parse_config(text: str, mode: str | None = None, name: str = "<config>") -> ScenarioConfig:
    src = _Source(text, name)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}:{exc.lineno}: malformed JSON: {exc.msg} (column {exc.colno})") from None
    return _validate(raw, src, mode)


def load_config(path, mode: str | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, mode, str(path))


def apply_overrides(cfg: ScenarioConfig, grid_points: int | None = None, max_gen: int | None = None):
    """Command-line overrides; returns a new config."""
    out = copy.deepcopy(cfg)
    if grid_points is not None:
        if grid_points < 16:
            raise ConfigError(f"--grid-points must be at least 16, got {grid_points}")
        out.space["grid_points"] = grid_points
    if max_gen is not None:
        if max_gen < 0:
            raise ConfigError(f"--max-gen must be nonnegative, got {max_gen}")
        out.run["max_generations"] = max_gen
    return out
