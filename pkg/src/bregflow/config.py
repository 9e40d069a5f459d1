"""
Run configuration: a YAML file with full defaulting.

Schema (every key optional)::

    experiment: flow            # flow | invariance | oracle-compare
    seed: 0
    target:
      name: gaussian            # gaussian | mixture
      mean: [0.0]               # gaussian
      cov: [[1.0]]
      weights: [0.5, 0.5]       # mixture
      components:               # mixture: list of {mean, cov}
        - {mean: [-2.0], cov: [[1.0]]}
        - {mean: [2.0], cov: [[1.0]]}
      scale: 1.0                # multiplies gamma(x) by c
    init: {mean: [0.0], cov: [[1.0]]}
    flow:
      metric: wfr               # wasserstein | fisher_rao | wfr | stein
      beta: 1.0
      gamma: 0.05
      n_steps: 100
      n_particles: 1000
      bandwidth: silverman      # or a positive number
      kernel_lengthscale: 1.0
      resample_threshold: 0.5
      metropolis: false
      use_normalised: false
    invariance:
      betas: [0.0, 0.5, 1.0, 2.0, 3.0]
      cs: [0.5, 2.0, 10.0]
      grid: {lo: -10.0, hi: 10.0, n: 4001}
      mus: [{mean: 0.0, var: 1.0}, {mean: 1.0, var: 1.0}]
    oracle:
      times: [0.0, 0.5, 1.0, 2.0, 3.0]
    output:
      dir: out
      plot: true

Errors are reported as :class:`ConfigError` carrying the line of the
offending key where it can be located.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .flows import FlowConfig, GaussianLaw
from .targets import Target, gaussian_target, mixture_target, scaled

EXPERIMENTS = ("flow", "invariance", "oracle-compare")
TARGET_NAMES = ("gaussian", "mixture")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass
class TargetSpec:
    name: str = "gaussian"
    mean: list = field(default_factory=lambda: [0.0])
    cov: list = field(default_factory=lambda: [[1.0]])
    weights: list | None = None
    components: list | None = None
    scale: float = 1.0

    def build(self) -> Target:
        if self.name == "gaussian":
            base = gaussian_target(self.mean, self.cov)
        else:
            comps = [(c["mean"], c["cov"]) for c in self.components or []]
            base = mixture_target(self.weights, comps)
        return base if self.scale == 1.0 else scaled(base, self.scale)


@dataclass
class GaussianSpec:
    mean: list = field(default_factory=lambda: [0.0])
    cov: list = field(default_factory=lambda: [[1.0]])

    def build(self) -> GaussianLaw:
        return GaussianLaw(self.mean, self.cov)


@dataclass
class GridSpec:
    lo: float = -10.0
    hi: float = 10.0
    n: int = 4001


@dataclass
class InvarianceSpec:
    betas: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 3.0])
    cs: list = field(default_factory=lambda: [0.5, 2.0, 10.0])
    grid: GridSpec = field(default_factory=GridSpec)
    mus: list = field(
        default_factory=lambda: [{"mean": 0.0, "var": 1.0}, {"mean": 1.0, "var": 1.0}]
    )


@dataclass
class OracleSpec:
    times: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 3.0])


@dataclass
class OutputSpec:
    dir: str = "out"
    plot: bool = True


@dataclass
class RunConfig:
    experiment: str = "flow"
    seed: int = 0
    target: TargetSpec = field(default_factory=TargetSpec)
    init: GaussianSpec = field(default_factory=GaussianSpec)
    flow: FlowConfig = field(default_factory=FlowConfig)
    invariance: InvarianceSpec = field(default_factory=InvarianceSpec)
    oracle: OracleSpec = field(default_factory=OracleSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def flow_config(self) -> FlowConfig:
        return dataclasses.replace(self.flow, seed=self.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["flow"].pop("seed")
        return d

    @classmethod
    def from_dict(cls, data: dict, lines: dict | None = None, source: str | None = None):
        return _Builder(lines or {}, source).run_config(data)


_SECTIONS = {
    "target": TargetSpec,
    "init": GaussianSpec,
    "invariance": InvarianceSpec,
    "oracle": OracleSpec,
    "output": OutputSpec,
}


class _Builder:
    def __init__(self, lines: dict, source: str | None):
        self.lines = lines
        self.source = source

    def error(self, msg: str, path: tuple) -> ConfigError:
        line = None
        for k in range(len(path), 0, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        return ConfigError(msg, line, self.source)

    def mapping(self, data, path: tuple, allowed) -> dict:
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise self.error(f"[{'.'.join(path) or 'root'}] must be a mapping", path)
        for key in data:
            if key not in allowed:
                where = ".".join(path) or "top level"
                raise self.error(f"unknown key {key!r} in {where}", path + (key,))
        return data

    def section(self, cls, data, path):
        names = [f.name for f in dataclasses.fields(cls)]
        data = dict(self.mapping(data, path, names))
        if cls is InvarianceSpec and "grid" in data:
            grid = self.mapping(data["grid"], path + ("grid",), ["lo", "hi", "n"])
            data["grid"] = GridSpec(**grid)
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise self.error(str(exc), path) from None

    def run_config(self, data) -> RunConfig:
        top = self.mapping(data, (), [f.name for f in dataclasses.fields(RunConfig)])
        kw: dict[str, Any] = {}
        if "experiment" in top:
            if top["experiment"] not in EXPERIMENTS:
                raise self.error(
                    f"experiment must be one of {EXPERIMENTS}, got {top['experiment']!r}",
                    ("experiment",),
                )
            kw["experiment"] = top["experiment"]
        if "seed" in top:
            seed = top["seed"]
            if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
                raise self.error("seed must be an integer in [0, 2**64)", ("seed",))
            kw["seed"] = seed
        for name, cls in _SECTIONS.items():
            if name in top:
                kw[name] = self.section(cls, top[name], (name,))
        if "flow" in top:
            flow_keys = [f.name for f in dataclasses.fields(FlowConfig) if f.name != "seed"]
            flow = self.mapping(top["flow"], ("flow",), flow_keys)
            try:
                kw["flow"] = FlowConfig(**flow)
            except (TypeError, ValueError) as exc:
                bad = next((k for k in flow if k in str(exc)), None)
                raise self.error(str(exc), ("flow", bad) if bad else ("flow",)) from None
        cfg = RunConfig(**kw)
        self.validate(cfg)
        return cfg

    def validate(self, cfg: RunConfig):
        t = cfg.target
        if t.name not in TARGET_NAMES:
            raise self.error(f"unknown target {t.name!r}; choose from {TARGET_NAMES}", ("target", "name"))
        if not t.scale > 0:
            raise self.error("target scale must be positive", ("target", "scale"))
        try:
            target = t.build()
            init = cfg.init.build()
        except (TypeError, ValueError, KeyError) as exc:
            raise self.error(f"invalid target/init: {exc}", ("target",)) from None
        if init.dim != target.dim:
            raise self.error("init and target dimensions differ", ("init",))
        if cfg.experiment == "invariance":
            if target.dim != 1 or t.name != "gaussian":
                raise self.error("invariance needs a 1D gaussian target", ("target",))
            g = cfg.invariance.grid
            if not (g.lo < g.hi and int(g.n) >= 2):
                raise self.error("grid needs lo < hi and n >= 2", ("invariance", "grid"))
            for mu in cfg.invariance.mus:
                if not isinstance(mu, dict) or set(mu) != {"mean", "var"} or not mu["var"] > 0:
                    raise self.error("each mu needs 'mean' and positive 'var'", ("invariance", "mus"))
            if any(not c > 0 for c in cfg.invariance.cs):
                raise self.error("scales c must be positive", ("invariance", "cs"))
        if cfg.experiment == "oracle-compare":
            if t.name != "gaussian" or target.dim != 1:
                raise self.error("oracle-compare needs a 1D gaussian target", ("target",))
            if any(not tm >= 0 for tm in cfg.oracle.times):
                raise self.error("oracle times must be non-negative", ("oracle", "times"))


def _key_lines(text: str) -> dict:
    """Map key paths to 1-based line numbers using the YAML node tree."""
    lines: dict = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = k.value
                lines[path + (key,)] = k.start_mark.line + 1
                walk(v, path + (key,))

    if root is not None:
        walk(root, ())
    return lines


def loads(text: str, source: str | None = None) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line, source) from None
    lines = _key_lines(text)
    if isinstance(data, dict) and "config" in data:
        # a summary.json: "config" is never a RunConfig key, so this is its echo
        data = data["config"]
        lines = {k[1:]: v for k, v in lines.items() if k[:1] == ("config",)}
    return RunConfig.from_dict(data or {}, lines, source)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return loads(text, str(path))


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2)
