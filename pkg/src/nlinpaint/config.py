"""Run configuration: dataclasses plus the flat ``key = value`` text format.

Example::

    graph.1.patch.size = 15x15
    graph.1.patch.sigma = 10
    graph.1.filters = identity
    graph.1.lambda.identity = 1.0
    init = multiscale:2:4
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


GLOBAL_KEYS = ("init", "outer.tol", "outer.max_iter", "solver.tol", "solver.max_iter",
               "nnf.mode", "boundary", "seed")
GRAPH_KEYS = ("patch.size", "patch.sigma", "patch.kind", "filters", "lambda.<filter>",
              "beta", "selectivity")
_GRAPH_RE = re.compile(r"^graph\.(\d+)\.(.+)$")


def valid_keys_text() -> str:
    keys = list(GLOBAL_KEYS) + [f"graph.<n>.{k}" for k in GRAPH_KEYS] + ["kernel.<name>"]
    return ", ".join(keys)


def _size(text: str) -> tuple:
    m = re.fullmatch(r"\s*(\d+)\s*(?:x\s*(\d+))?\s*", text)
    if not m:
        raise ConfigError(f"bad size {text!r}; expected RxC or N")
    r = int(m.group(1))
    c = int(m.group(2)) if m.group(2) else r
    if r % 2 == 0 or c % 2 == 0 or r < 1 or c < 1:
        raise ConfigError(f"size {text!r} must have odd positive sides")
    return r, c


def _float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


@dataclass
class GraphConfig:
    patch_size: tuple = (15, 15)
    patch_sigma: float = 10.0
    patch_kind: str = "gaussian"
    filters: list = field(default_factory=lambda: ["identity"])
    # filter name -> float | "file:<path>" | "aniso:<edges>:<lam_a>:<tau>"; missing means 1
    lam: dict = field(default_factory=dict)
    beta: object = 1.0           # float | "file:<path>"
    selectivity: float | None = None

    def lambda_spec(self, name: str):
        return self.lam.get(name, 1.0)


@dataclass
class InitSpec:
    mode: str = "random"         # random | multiscale | provided
    levels: int | None = None    # multiscale: None picks the default depth
    factor: int = 2
    path: str | None = None

    @classmethod
    def parse(cls, text: str) -> "InitSpec":
        parts = text.strip().split(":")
        if parts[0] == "random" and len(parts) == 1:
            return cls()
        if parts[0] == "multiscale" and len(parts) <= 3:
            levels = _int(parts[1], "init") if len(parts) > 1 else None
            factor = _int(parts[2], "init") if len(parts) > 2 else 2
            if levels is not None and levels < 1:
                raise ConfigError("init: multiscale levels must be >= 1")
            if factor < 2:
                raise ConfigError("init: multiscale factor must be >= 2")
            return cls("multiscale", levels, factor)
        if parts[0] == "provided" and len(parts) >= 2:
            return cls("provided", path=":".join(parts[1:]))
        raise ConfigError(f"init: expected random | multiscale[:levels[:factor]] | provided:<path>, got {text!r}")

    def __str__(self):
        if self.mode == "multiscale":
            return "multiscale" if self.levels is None else f"multiscale:{self.levels}:{self.factor}"
        if self.mode == "provided":
            return f"provided:{self.path}"
        return "random"


@dataclass
class NNFMode:
    kind: str = "exact"          # exact | accelerated
    iterations: int = 8
    seed: int = 0
    threshold: int = 0           # accelerated only above this pixel count

    @classmethod
    def parse(cls, text: str) -> "NNFMode":
        parts = text.strip().split(":")
        if parts == ["exact"]:
            return cls()
        if parts[0] == "accelerated" and len(parts) <= 4:
            vals = [_int(p, "nnf.mode") for p in parts[1:]]
            out = cls("accelerated", *vals)
            if out.iterations < 1:
                raise ConfigError("nnf.mode: accelerated iterations must be >= 1")
            return out
        raise ConfigError(f"nnf.mode: expected exact | accelerated[:iters[:seed[:threshold]]], got {text!r}")

    def __str__(self):
        if self.kind == "exact":
            return "exact"
        return f"accelerated:{self.iterations}:{self.seed}:{self.threshold}"


@dataclass
class InpaintConfig:
    graphs: list = field(default_factory=lambda: [GraphConfig()])
    init: InitSpec = field(default_factory=InitSpec)
    outer_tol: float = 1e-3
    outer_max_iter: int = 30
    solver_tol: float = 1e-6
    solver_max_iter: int | None = None
    nnf_mode: NNFMode = field(default_factory=NNFMode)
    boundary: str = "replicate"
    seed: int = 0
    kernels: dict = field(default_factory=dict)   # custom name -> path
    base_dir: str = "."

    def __post_init__(self):
        if not self.graphs:
            raise ConfigError("at least one graph is required")
        if not self.outer_tol > 0 or not self.solver_tol > 0:
            raise ConfigError("tolerances must be positive")
        if self.outer_max_iter < 1:
            raise ConfigError("outer.max_iter must be >= 1")
        if self.boundary not in ("replicate", "reflect"):
            raise ConfigError("boundary must be replicate or reflect")

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    # -- flat form -------------------------------------------------------

    @classmethod
    def from_flat(cls, flat: dict, base_dir: str = ".") -> "InpaintConfig":
        kw = {"base_dir": str(base_dir)}
        graphs: dict = {}
        kernels = {}
        for key, val in flat.items():
            val = str(val).strip()
            if key == "init":
                kw["init"] = InitSpec.parse(val)
            elif key == "outer.tol":
                kw["outer_tol"] = _float(val, key)
            elif key == "outer.max_iter":
                kw["outer_max_iter"] = _int(val, key)
            elif key == "solver.tol":
                kw["solver_tol"] = _float(val, key)
            elif key == "solver.max_iter":
                kw["solver_max_iter"] = None if val == "auto" else _int(val, key)
            elif key == "nnf.mode":
                kw["nnf_mode"] = NNFMode.parse(val)
            elif key == "boundary":
                kw["boundary"] = val
            elif key == "seed":
                kw["seed"] = _int(val, key)
            elif key.startswith("kernel.") and len(key) > 7:
                kernels[key[7:]] = val
            elif _GRAPH_RE.match(key):
                n, sub = _GRAPH_RE.match(key).groups()
                g = graphs.setdefault(int(n), GraphConfig())
                _set_graph(g, sub, val, key)
            else:
                raise ConfigError(f"unknown key {key!r}; valid keys: {valid_keys_text()}")
        kw["graphs"] = [graphs[n] for n in sorted(graphs)] if graphs else [GraphConfig()]
        # paths are made absolute so the echoed config works from anywhere
        absolute = lambda p: str((Path(base_dir) / p).resolve())
        kw["kernels"] = {k: absolute(v) for k, v in kernels.items()}
        if "init" in kw and kw["init"].path:
            kw["init"].path = absolute(kw["init"].path)
        for g in kw["graphs"]:
            g.lam = {k: _absolute_spec(v, absolute) for k, v in g.lam.items()}
            g.beta = _absolute_spec(g.beta, absolute)
        for g in kw["graphs"]:
            for name in g.lam:
                if name not in g.filters:
                    raise ConfigError(f"lambda given for filter {name!r} not listed in the graph's filters")
            g.lam = {name: g.lambda_spec(name) for name in g.filters}
        return cls(**kw)

    def to_flat(self) -> dict:
        out = {
            "init": str(self.init),
            "outer.tol": _fmt(float(self.outer_tol)),
            "outer.max_iter": str(self.outer_max_iter),
            "solver.tol": _fmt(float(self.solver_tol)),
            "solver.max_iter": "auto" if self.solver_max_iter is None else str(self.solver_max_iter),
            "nnf.mode": str(self.nnf_mode),
            "boundary": self.boundary,
            "seed": str(self.seed),
        }
        for name, path in sorted(self.kernels.items()):
            out[f"kernel.{name}"] = str(path)
        for n, g in enumerate(self.graphs, start=1):
            p = f"graph.{n}."
            out[p + "patch.size"] = f"{g.patch_size[0]}x{g.patch_size[1]}"
            out[p + "patch.sigma"] = _fmt(float(g.patch_sigma))
            out[p + "patch.kind"] = g.patch_kind
            out[p + "filters"] = ",".join(g.filters)
            for name in g.filters:
                out[p + f"lambda.{name}"] = _fmt(g.lambda_spec(name))
            out[p + "beta"] = _fmt(g.beta)
            out[p + "selectivity"] = "delta" if g.selectivity is None else _fmt(float(g.selectivity))
        return out


def _set_graph(g: GraphConfig, sub: str, val: str, key: str) -> None:
    if sub == "patch.size":
        g.patch_size = _size(val)
    elif sub == "patch.sigma":
        g.patch_sigma = _float(val, key)
        if not g.patch_sigma > 0:
            raise ConfigError(f"{key}: must be positive")
    elif sub == "patch.kind":
        if val not in ("gaussian", "uniform"):
            raise ConfigError(f"{key}: expected gaussian or uniform")
        g.patch_kind = val
    elif sub == "filters":
        names = [s.strip() for s in val.split(",") if s.strip()]
        if not names:
            raise ConfigError(f"{key}: empty filter list")
        g.filters = names
    elif sub.startswith("lambda.") and len(sub) > 7:
        g.lam[sub[7:]] = _value_spec(val, key)
    elif sub == "beta":
        g.beta = _value_spec(val, key)
    elif sub == "selectivity":
        g.selectivity = None if val == "delta" else _float(val, key)
    else:
        raise ConfigError(f"unknown key {key!r}; valid keys: {valid_keys_text()}")


def _absolute_spec(spec, absolute):
    if isinstance(spec, str) and spec.startswith("file:"):
        return "file:" + absolute(spec[5:])
    if isinstance(spec, str) and spec.startswith("aniso:"):
        parts = spec.split(":")
        parts[1] = absolute(parts[1])
        return ":".join(parts)
    return spec


def _value_spec(val: str, key: str):
    if val.startswith("file:") or val.startswith("aniso:"):
        if val.startswith("aniso:"):
            parts = val.split(":")
            if len(parts) not in (2, 4):
                raise ConfigError(f"{key}: expected aniso:<edges>[:<lam_a>:<tau>]")
        return val
    v = _float(val, key)
    if v < 0:
        raise ConfigError(f"{key}: must be nonnegative")
    return v


# -- text form ---------------------------------------------------------------


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in out and out[k] != v:
            raise ConfigError(f"{source}:{n}: conflicting values for {k!r}")
        out[k] = v
    return out


def format_text(flat: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in flat.items())


def apply_overrides(flat: dict, overrides) -> dict:
    """Apply ``key=value`` overrides; the same key twice with different values is an error."""
    out = dict(flat)
    seen = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        if k in seen and seen[k] != v:
            raise ConfigError(f"conflicting overrides for {k!r}: {seen[k]!r} vs {v!r}")
        seen[k] = v
        out[k] = v
    return out


def load_config(path=None, overrides=None) -> InpaintConfig:
    flat, base = {}, "."
    if path is not None:
        p = Path(path)
        flat = parse_text(p.read_text(), str(p))
        base = str(p.parent)
    return InpaintConfig.from_flat(apply_overrides(flat, overrides), base)
