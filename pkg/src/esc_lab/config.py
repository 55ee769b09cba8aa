"""Experiment configuration: a flat ``section.key = value`` text format.

One experiment per file. Blank lines and ``#`` comments are ignored, lists are
comma separated. Example::

    cost.name = quadratic_shifted
    cost.center = 1
    cost.offset = 2020
    cost.domain = -3, 5
    pair.family = suttner_dashkovskiy
    dither.omega = 2
    initial.x0 = 3
    initial.z0 = 2024
    set.y0 = auto
    systems.run = proposed, lie_approx, grushkovskaya, suttner
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from esc_lab.cost import BUILTIN_COSTS, make_cost
from esc_lab.generators import FAMILIES, make_pair

SYSTEMS = ("proposed", "lie_approx", "grushkovskaya", "suttner")
OUT_ENV = "ESC_LAB_OUT"


class ConfigError(ValueError):
    """Raised with every violation found, one per line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class ExperimentConfig:
    cost_name: str = "quadratic_shifted"
    cost_params: dict = field(default_factory=lambda: {"center": 1.0, "offset": 2020.0})
    cost_domain: tuple | None = (-3.0, 5.0)
    pair_family: str = "suttner_dashkovskiy"
    pair_params: dict = field(default_factory=dict)
    omega: float = 2.0
    multipliers: tuple = (1,)
    x0: tuple = (3.0,)
    z0_init: float = 2024.0
    omega0: float = 2.0
    J0: float = 3.0
    z0: float = 5.0
    y0: float | str = "auto"
    epsilon: float = 0.5
    delta: float | None = None
    m: float = 1.0
    t_end: float = 40.0
    steps_per_period: int = 64
    max_steps: int = 50_000
    systems: tuple = SYSTEMS
    grushkovskaya_offset: float = 2019.0
    out_dir: str = "out"
    max_rows: int = 100_000
    seed: int = 0
    c2_samples: int = 400
    # > 0 requests the remainder-identity residuals of the proposed run on [0, lemma1_t2]
    lemma1_t2: float = 0.0
    jobs: int = 1
    name: str = "experiment"

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUT_ENV) or self.out_dir)

    def with_omega(self, omega: float) -> "ExperimentConfig":
        return replace(self, omega=float(omega))

    def problems(self) -> list[str]:
        """Every violated constraint, in a stable order; empty when the config is usable."""
        p = []
        if self.cost_name not in BUILTIN_COSTS:
            p.append(f"cost.name: unknown model {self.cost_name!r}")
        if self.pair_family not in FAMILIES:
            p.append(f"pair.family: unknown family {self.pair_family!r}")
        if not self.omega > 0:
            p.append("dither.omega must be positive")
        mult = list(self.multipliers)
        if not mult or any(not float(k) > 0 or float(k) != int(k) for k in mult):
            p.append("dither.multipliers must be positive integers")
        elif len(set(mult)) != len(mult):
            p.append("dither.multipliers must be pairwise distinct")
        elif len(mult) != len(self.x0):
            p.append(f"dither.multipliers has {len(mult)} entries but initial.x0 has {len(self.x0)}")
        if not self.systems:
            p.append("systems.run is empty")
        for s in self.systems:
            if s not in SYSTEMS:
                p.append(f"systems.run: unknown system {s!r}")
        for key in ("J0", "z0", "epsilon", "t_end"):
            if not getattr(self, key) > 0:
                p.append(f"{key} must be positive")
        if self.delta is not None and not 0 < self.delta < self.epsilon:
            p.append("set.delta must lie in (0, epsilon)")
        if self.z0 <= self.J0:
            p.append("set.z0 must exceed set.J0")
        if self.m < 1:
            p.append("set.m must be >= 1")
        if isinstance(self.y0, str):
            if self.y0 != "auto":
                p.append(f"set.y0 must be a number or 'auto', got {self.y0!r}")
        elif not self.y0 > 0:
            p.append("set.y0 must be positive")
        if self.lemma1_t2 < 0 or self.lemma1_t2 > self.t_end:
            p.append("analysis.lemma1_t2 must lie in [0, t_end]")
        if self.steps_per_period < 32:
            p.append("integration.steps_per_period must be >= 32")
        if self.max_steps < 1 or self.max_rows < 2 or self.jobs < 1 or self.c2_samples < 1:
            p.append("integration.max_steps, output.max_rows, run.jobs, analysis.c2_samples "
                     "must be positive")
        if not p:
            try:
                cost = self.build_cost()
                x0 = np.asarray(self.x0, dtype=float)
                if cost.dim != len(x0):
                    p.append(f"cost has dimension {cost.dim} but initial.x0 has {len(x0)}")
                elif any(s in ("proposed", "lie_approx", "suttner") for s in self.systems):
                    j = float(cost.eval(x0))
                    if not self.z0_init > j:
                        p.append(f"initial.z0 = {self.z0_init} must exceed J(x0) = {j}")
            except (TypeError, ValueError) as exc:
                p.append(f"cost: {exc}")
            try:
                self.build_pair()
            except (TypeError, ValueError) as exc:
                p.append(f"pair: {exc}")
        return p

    def validate(self) -> "ExperimentConfig":
        p = self.problems()
        if p:
            raise ConfigError(p)
        return self

    def build_cost(self):
        params = dict(self.cost_params)
        if self.cost_domain is not None:
            params["domain"] = self.cost_domain
        return make_cost(self.cost_name, **params)

    def build_pair(self):
        return make_pair(self.pair_family, **self.pair_params)


# parsing -------------------------------------------------------------------

def _value(text: str):
    parts = [s.strip() for s in text.split(",")]
    out = []
    for s in parts:
        try:
            out.append(int(s))
        except ValueError:
            try:
                out.append(float(s))
            except ValueError:
                out.append(s)
    return out[0] if len(out) == 1 else tuple(out)


def _tuple(v):
    return tuple(v) if isinstance(v, tuple) else (v,)


# key -> (field name, converter)
_FIELDS = {
    "pair.family": ("pair_family", str),
    "dither.omega": ("omega", float),
    "dither.multipliers": ("multipliers", _tuple),
    "initial.x0": ("x0", lambda v: tuple(float(a) for a in _tuple(v))),
    "initial.z0": ("z0_init", float),
    "initial.omega0": ("omega0", float),
    "set.J0": ("J0", float),
    "set.z0": ("z0", float),
    "set.y0": ("y0", lambda v: v if isinstance(v, str) else float(v)),
    "set.epsilon": ("epsilon", float),
    "set.delta": ("delta", float),
    "set.m": ("m", float),
    "integration.t_end": ("t_end", float),
    "integration.steps_per_period": ("steps_per_period", int),
    "integration.max_steps": ("max_steps", int),
    "systems.run": ("systems", lambda v: tuple(str(s) for s in _tuple(v))),
    "systems.grushkovskaya_offset": ("grushkovskaya_offset", float),
    "output.dir": ("out_dir", str),
    "output.max_rows": ("max_rows", int),
    "analysis.seed": ("seed", int),
    "analysis.c2_samples": ("c2_samples", int),
    "analysis.lemma1_t2": ("lemma1_t2", float),
    "run.jobs": ("jobs", int),
    "run.name": ("name", str),
}


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing all problems."""
    kw: dict = {"name": name}
    cost_params: dict = {}
    pair_params: dict = {}
    problems = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        v = _value(val)
        if key == "cost.name":
            kw["cost_name"] = str(v)
        elif key == "cost.domain":
            if isinstance(v, tuple) and len(v) == 2:
                kw["cost_domain"] = (float(v[0]), float(v[1]))
            else:
                problems.append(f"line {lineno}: cost.domain needs 'lo, hi'")
        elif key.startswith("cost."):
            cost_params[key[5:]] = v
        elif key.startswith("pair.") and key != "pair.family":
            pair_params[key[5:]] = v
        elif key in _FIELDS:
            fname, conv = _FIELDS[key]
            try:
                kw[fname] = conv(v)
            except (TypeError, ValueError):
                problems.append(f"line {lineno}: bad value for {key}: {val!r}")
        else:
            problems.append(f"line {lineno}: unknown key {key!r}")
    if cost_params or "cost_name" in kw:
        kw["cost_params"] = cost_params
    if pair_params:
        kw["pair_params"] = pair_params
    cfg = ExperimentConfig(**kw)
    problems.extend(cfg.problems())
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), name=path.stem)
