"""Run configuration: dataclasses, the block-style config text format, and a
stable hash for reproducibility manifests.

Config files use brace-delimited sections of key = value pairs:

    grid { n = 64  m_max = 4 }
    physics { nu = 0.01  tau = 0.01  T = 1.0 }
    omega { a = 1.0  b = 3.0 }

Unknown keys raise; values parse as int, float, tuple of floats, or string.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import asdict, dataclass, field, fields


@dataclass
class GridConfig:
    n: int = 64
    m_max: int = 4


@dataclass
class PhysicsConfig:
    nu: float = 0.01
    tau: float = 0.01
    T: float = 1.0


@dataclass
class OmegaConfig:
    a: float = 1.0
    b: float = 3.0
    commensurate_K: int = 0   # if > 0, override (a, b) by the grid-aligned strip


@dataclass
class GeometryConfig:
    margin_fraction: float = 0.125
    smoothstep_order: int = 7
    max_K: int = 512


@dataclass
class FlowsConfig:
    substeps: int = 256
    bump_order: int = 4
    phi_amplitude: float = 0.0   # 0 selects the tuned default family
    time_nodes: int = 257
    k_store: int = 0             # 0 selects n // 3


@dataclass
class SynthesisSection:
    M: int = 64
    ridge: float = 1e-3
    ridge_norm: str = "control"
    k_cut: int = 0               # 0 selects the stored band
    theta_weight: float = 50.0
    samples_per_window: int = 256


@dataclass
class LadderConfig:
    deltas: tuple = (0.2, 0.1, 0.05)
    delta0: float = 0.0          # 0 selects min(0.3 T, 0.45)


@dataclass
class TargetsConfig:
    preset: str = "band_limited"
    seed: int = 7
    amplitude: float = 0.3
    w0_path: str = ""
    theta0_path: str = ""
    wT_path: str = ""
    thetaT_path: str = ""


@dataclass
class OutputConfig:
    dir: str = "runs"


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    omega: OmegaConfig = field(default_factory=OmegaConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    flows: FlowsConfig = field(default_factory=FlowsConfig)
    synthesis: SynthesisSection = field(default_factory=SynthesisSection)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    targets: TargetsConfig = field(default_factory=TargetsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def hash(self) -> str:
        text = repr(sorted(_flatten(asdict(self)).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = repr(v)
    return out


_SECTION_RE = re.compile(r"(\w+)\s*\{([^}]*)\}", re.S)
_PAIR_RE = re.compile(r"(\w+)\s*=\s*([^\s=]+(?:\s*,\s*[^\s=]+)*)")


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(float(p) for p in text.split(","))
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    known = {f.name: f for f in fields(cfg)}
    for name, body in _SECTION_RE.findall(text):
        if name not in known:
            raise ValueError(f"unknown config section {name!r}")
        section = getattr(cfg, name)
        keys = {f.name for f in fields(section)}
        for key, raw in _PAIR_RE.findall(body):
            if key not in keys:
                raise ValueError(f"unknown key {key!r} in section {name!r}")
            value = _parse_value(raw)
            current = getattr(section, key)
            if isinstance(current, tuple) and not isinstance(value, tuple):
                value = (float(value),)
            setattr(section, key, type(current)(value) if not isinstance(value, tuple) else value)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
