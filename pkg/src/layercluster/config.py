"""Run configuration parsing, serialization, and hashing.

Configs are TOML: top-level scalars plus ``[curve]``, ``[potential]``, and
``[solver]`` tables.  Unknown keys are hard errors so tolerance-name typos
cannot pass silently.  Serialization is canonical (sorted keys, repr floats)
so identical configs hash identically.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


KINDS = ("predict", "solve-radial", "solve-strip", "toda", "resonance-scan",
         "verify")

_TOP_KEYS = {"kind", "n_layers", "eps", "out_dir"}
_CURVE_KEYS = {"kind", "radius", "a", "b"}
_POTENTIAL_KEYS = {"kind", "value", "expression", "slope"}
_SOLVER_KEYS = {"use_phi11", "gamma_weighted", "resonance_threshold",
                "n_s", "n_z", "n_radial_coarse", "delta0", "delta_tilde",
                "quad_window", "eps_scan_points", "toda_modes"}


@dataclass
class RunConfig:
    """One experiment: a pipeline kind plus geometry/potential/solver knobs."""

    kind: str
    n_layers: int
    eps: list
    curve: dict = field(default_factory=lambda: {"kind": "circle",
                                                 "radius": 1.0})
    potential: dict = field(default_factory=lambda: {"kind": "constant",
                                                     "value": 1.0})
    solver: dict = field(default_factory=dict)
    out_dir: str = "runs"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: unknown experiment kind {self.kind!r}; "
                              f"expected one of {KINDS}")
        if self.n_layers < 0:
            raise ConfigError("n_layers: must be >= 0")
        eps = [float(e) for e in self.eps]
        if any(e <= 0 for e in eps):
            raise ConfigError("eps: all entries must be positive")
        if eps != sorted(eps, reverse=True):
            raise ConfigError("eps: list must be sorted descending "
                              "(continuation order)")
        self.eps = eps
        for key, allowed, table in (("curve", _CURVE_KEYS, self.curve),
                                    ("potential", _POTENTIAL_KEYS,
                                     self.potential),
                                    ("solver", _SOLVER_KEYS, self.solver)):
            extra = set(table) - allowed
            if extra:
                raise ConfigError(f"{key}.{sorted(extra)[0]}: unknown key")
        for name, val in self.solver.items():
            if name in ("resonance_threshold", "delta0", "delta_tilde",
                        "quad_window") and float(val) <= 0:
                raise ConfigError(f"solver.{name}: must be positive")
            if name in ("n_s", "n_z", "n_radial_coarse", "eps_scan_points",
                        "toda_modes") and int(val) <= 0:
                raise ConfigError(f"solver.{name}: must be positive")


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    tables = {k: raw.pop(k) for k in ("curve", "potential", "solver")
              if k in raw}
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown key")
    missing = {"kind", "n_layers", "eps"} - set(raw)
    if missing:
        raise ConfigError(f"{sorted(missing)[0]}: required key missing")
    return RunConfig(**raw, **tables)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode()
    return parse_config(text)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"unserializable config value {v!r}")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for key in sorted(_TOP_KEYS):
        lines.append(f"{key} = {_toml_value(getattr(cfg, key))}")
    for table in ("curve", "potential", "solver"):
        payload = getattr(cfg, table)
        lines.append("")
        lines.append(f"[{table}]")
        for key in sorted(payload):
            lines.append(f"{key} = {_toml_value(payload[key])}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    """Results of one experiment run; append-only, JSON-serializable."""

    config_hash: str
    kind: str
    results: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    version: str = ""

    def to_dict(self) -> dict:
        return asdict(self)
