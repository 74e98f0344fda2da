"""Experiment configuration: an INI document read and written with ``configparser``.

Grammar (sections and keys; ``#`` starts a comment line)::

    [system]
    name = lorenz                 # any name registered in flowemu.dynsys.SYSTEMS
    [system.params]
    a = -2.6666666666666665       # keyword arguments of the system factory
    [initial]
    x0 = 1, 1, 1                  # comma-separated state
    [box]
    mode = estimate               # or: explicit
    lower = ...                   # explicit only
    upper = ...                   # explicit only
    probe = 0.1, 0.1, 0.1         # estimate only
    probe_horizon = 100
    margin = 0.05
    [emulator]
    n = 36
    dt = 0.01
    kernel = se                   # se | matern32 | exponential
    restarts = 5
    [integrator]
    atol = 1e-10
    rtol = 1e-8
    [rollout]
    steps = 2000
    mode = correlated             # plugin | uncorrelated | correlated
    n_mc = 1000
    antithetic = false
    [seeds]
    design = 0
    fit = 0
    rollout = 0
    [batch]
    count = 6
    low = -10
    high = 10
    seed = 0
    [output]
    dir = out/lorenz

Every section except ``[system]`` and ``[initial]`` may be omitted; missing
keys take the defaults of :class:`ExperimentConfig`.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .dynsys import SYSTEMS, make_system
from .errors import ConfigError, UsageError
from .gp import KernelFamily
from .propagate import Mode


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    system: str
    x0: tuple[float, ...]
    params: dict = field(default_factory=dict)
    box_mode: str = "estimate"
    box_lower: tuple[float, ...] | None = None
    box_upper: tuple[float, ...] | None = None
    probe: tuple[float, ...] | None = None
    probe_horizon: float = 100.0
    margin: float = 0.05
    n: int | None = None  # defaults to 12*d
    dt: float = 0.01
    kernel: str = "se"
    restarts: int = 5
    atol: float = 1e-10
    rtol: float = 1e-8
    steps: int = 2000
    mode: str = "correlated"
    n_mc: int = 1000
    antithetic: bool = False
    design_seed: int = 0
    fit_seed: int = 0
    rollout_seed: int = 0
    batch_count: int = 6
    batch_low: float = -10.0
    batch_high: float = 10.0
    batch_seed: int = 0
    out: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        for name in ("box_lower", "box_upper", "probe"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in val))
        self.validate()

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def design_size(self) -> int:
        return self.n if self.n is not None else 12 * self.dim

    @property
    def seeds(self) -> dict:
        return {"design": self.design_seed, "fit": self.fit_seed, "rollout": self.rollout_seed}

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; known: {sorted(SYSTEMS)}")
        try:
            system = make_system(self.system, self.params)
        except UsageError as exc:
            raise ConfigError(str(exc)) from None
        d = system.dimension
        if len(self.x0) != d:
            raise ConfigError(f"x0 has {len(self.x0)} entries, system {self.system} has d={d}")
        if not np.all(np.isfinite(self.x0)):
            raise ConfigError("x0 must be finite")
        if self.box_mode == "explicit":
            if self.box_lower is None or self.box_upper is None:
                raise ConfigError("explicit box needs lower and upper")
            if len(self.box_lower) != d or len(self.box_upper) != d:
                raise ConfigError("box bounds must have one entry per state coordinate")
            if not all(lo < hi for lo, hi in zip(self.box_lower, self.box_upper)):
                raise ConfigError("box needs lower < upper in every coordinate")
        elif self.box_mode == "estimate":
            if self.probe is not None and len(self.probe) != d:
                raise ConfigError("probe must have one entry per state coordinate")
            if not self.probe_horizon > 0:
                raise ConfigError("probe_horizon must be positive")
            if self.margin < 0:
                raise ConfigError("margin must be non-negative")
        else:
            raise ConfigError(f"box mode must be 'explicit' or 'estimate', got {self.box_mode!r}")
        if self.n is not None and self.n < d + 3:
            raise ConfigError(f"design size n={self.n} is below d+3={d + 3}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        if not (self.atol > 0 and self.rtol > 0):
            raise ConfigError("integrator tolerances must be positive")
        try:
            KernelFamily.parse(self.kernel)
            mode = Mode.parse(self.mode)
        except UsageError as exc:
            raise ConfigError(str(exc)) from None
        if mode is not Mode.PLUGIN and self.n_mc < 2:
            raise ConfigError("n_mc must be at least 2")
        if self.batch_count < 1 or not self.batch_low < self.batch_high:
            raise ConfigError("batch needs count >= 1 and low < high")

    def with_overrides(self, seed: int | None = None, mode: str | None = None,
                       out: str | None = None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes.update(design_seed=seed, fit_seed=seed, rollout_seed=seed, batch_seed=seed)
        if mode is not None:
            changes["mode"] = mode
        if out is not None:
            changes["out"] = out
        return replace(self, **changes)

    def system_instance(self):
        return make_system(self.system, self.params)

    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["system"] = {"name": self.system}
        cp["system.params"] = {k: repr(v) for k, v in sorted(self.params.items())}
        cp["initial"] = {"x0": _fmt(self.x0)}
        box = {"mode": self.box_mode}
        if self.box_lower is not None:
            box["lower"] = _fmt(self.box_lower)
        if self.box_upper is not None:
            box["upper"] = _fmt(self.box_upper)
        if self.probe is not None:
            box["probe"] = _fmt(self.probe)
        box.update(probe_horizon=repr(self.probe_horizon), margin=repr(self.margin))
        cp["box"] = box
        emu = {"dt": repr(self.dt), "kernel": self.kernel, "restarts": str(self.restarts)}
        if self.n is not None:
            emu = {"n": str(self.n), **emu}
        cp["emulator"] = emu
        cp["integrator"] = {"atol": repr(self.atol), "rtol": repr(self.rtol)}
        cp["rollout"] = {"steps": str(self.steps), "mode": self.mode, "n_mc": str(self.n_mc),
                         "antithetic": str(self.antithetic).lower()}
        cp["seeds"] = {"design": str(self.design_seed), "fit": str(self.fit_seed),
                       "rollout": str(self.rollout_seed)}
        cp["batch"] = {"count": str(self.batch_count), "low": repr(self.batch_low),
                       "high": repr(self.batch_high), "seed": str(self.batch_seed)}
        cp["output"] = {"dir": self.out}
        return cp

    def to_ini(self) -> str:
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _bool(text: str) -> bool:
    key = text.strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_config(text: str) -> ExperimentConfig:
    """Parse an INI document into a validated :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for required in ("system", "initial"):
        if not cp.has_section(required):
            raise ConfigError(f"missing [{required}] section")
    if not cp.has_option("system", "name") or not cp.has_option("initial", "x0"):
        raise ConfigError("config needs [system] name and [initial] x0")
    params = {}
    if cp.has_section("system.params"):
        for k, v in cp.items("system.params"):
            try:
                params[k] = float(v)
            except ValueError:
                raise ConfigError(f"[system.params] {k}: not a number: {v!r}") from None
    d = ExperimentConfig.__dataclass_fields__
    kw = dict(
        system=cp.get("system", "name").strip(),
        params=params,
        x0=_floats(cp.get("initial", "x0")),
        box_mode=_get(cp, "box", "mode", str.strip, "estimate"),
        box_lower=_get(cp, "box", "lower", _floats, None),
        box_upper=_get(cp, "box", "upper", _floats, None),
        probe=_get(cp, "box", "probe", _floats, None),
        probe_horizon=_get(cp, "box", "probe_horizon", float, d["probe_horizon"].default),
        margin=_get(cp, "box", "margin", float, d["margin"].default),
        n=_get(cp, "emulator", "n", int, None),
        dt=_get(cp, "emulator", "dt", float, d["dt"].default),
        kernel=_get(cp, "emulator", "kernel", str.strip, d["kernel"].default),
        restarts=_get(cp, "emulator", "restarts", int, d["restarts"].default),
        atol=_get(cp, "integrator", "atol", float, d["atol"].default),
        rtol=_get(cp, "integrator", "rtol", float, d["rtol"].default),
        steps=_get(cp, "rollout", "steps", int, d["steps"].default),
        mode=_get(cp, "rollout", "mode", str.strip, d["mode"].default),
        n_mc=_get(cp, "rollout", "n_mc", int, d["n_mc"].default),
        antithetic=_get(cp, "rollout", "antithetic", _bool, d["antithetic"].default),
        design_seed=_get(cp, "seeds", "design", int, 0),
        fit_seed=_get(cp, "seeds", "fit", int, 0),
        rollout_seed=_get(cp, "seeds", "rollout", int, 0),
        batch_count=_get(cp, "batch", "count", int, d["batch_count"].default),
        batch_low=_get(cp, "batch", "low", float, d["batch_low"].default),
        batch_high=_get(cp, "batch", "high", float, d["batch_high"].default),
        batch_seed=_get(cp, "batch", "seed", int, 0),
        out=_get(cp, "output", "dir", str.strip, d["out"].default),
    )
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
