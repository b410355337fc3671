"""Run directories, manifests, and assembled pipeline objects.

Every CLI run writes under <output.dir>/<name>-<confighash>/ a manifest
recording the actuator enumeration order, the partition data, and the config
hash, so coefficient files are unambiguous and runs are reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .config import RunConfig
from .flows import ConvectionStrategy, build_generating
from .geometry import build_partition, commensurate_strip
from .linear_control import SynthesisConfig
from .modes import LibraryConfig, ModeLibrary, T_LABELS

ZETA_ORDER = ("chi_tilde", "chi_tilde_prime") + T_LABELS


@dataclass
class Pipeline:
    cfg: RunConfig
    partition: object
    cutoffs: object
    strategy: object
    gf: object
    lib: ModeLibrary

    @property
    def synthesis(self) -> SynthesisConfig:
        s = self.cfg.synthesis
        return SynthesisConfig(
            M=s.M, ridge=s.ridge, ridge_norm=s.ridge_norm,
            k_cut=None if s.k_cut == 0 else s.k_cut,
            theta_weight=s.theta_weight,
        )


def build_pipeline(cfg: RunConfig) -> Pipeline:
    n = cfg.grid.n
    if cfg.omega.commensurate_K > 0:
        a, b = commensurate_strip(n, cfg.omega.commensurate_K,
                                  cfg.geometry.margin_fraction)
    else:
        a, b = cfg.omega.a, cfg.omega.b
    part, cut = build_partition(a, b, cfg.geometry.margin_fraction,
                                cfg.geometry.smoothstep_order, cfg.geometry.max_K)
    strat = ConvectionStrategy.build(part, bump_order=cfg.flows.bump_order)
    gf = (build_generating() if cfg.flows.phi_amplitude == 0.0
          else build_generating(amplitude=cfg.flows.phi_amplitude))
    k_store = cfg.flows.k_store or n // 3
    lib = ModeLibrary(strat, gf, cut, n,
                      LibraryConfig(time_nodes=cfg.flows.time_nodes, k_store=k_store))
    return Pipeline(cfg=cfg, partition=part, cutoffs=cut, strategy=strat, gf=gf, lib=lib)


def run_dir(cfg: RunConfig, name: str) -> str:
    path = os.path.join(cfg.output.dir, f"{name}-{cfg.hash()}")
    os.makedirs(path, exist_ok=True)
    return path


def write_manifest(path, cfg: RunConfig, pipeline: Pipeline, extra: dict = None) -> None:
    part = pipeline.partition
    manifest = {
        "package_version": __version__,
        "config_hash": cfg.hash(),
        "config": asdict(cfg),
        "zeta_enumeration": list(ZETA_ORDER),
        "partition": {
            "a": part.a, "b": part.b, "H1": part.H1, "H2": part.H2,
            "K": part.K, "lK": part.lK,
            "T_delta": pipeline.strategy.grid.T_delta,
            "displacements": [float(c) for c in pipeline.strategy.displacements],
        },
        **(extra or {}),
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")
