"""Experiment configuration: flat INI-style sections or an equivalent JSON
document, hand-editable for sweeps.

Sections: [model] (lattice sizes, horizon, rate table, initial profile,
diffusion convention), [tilt] (initial tilt profile, environment test
function, walker tilt), [run] (experiment kind, replicas, seed, recording
grid, output, tolerances).
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from ..model import LocalRate
from ..profiles import DensityProfile
from ..tilt import TestFunctionH, TiltParams, TimeFunction


def parse_rates(spec: str) -> LocalRate:
    """Rate grammar: 'intro' | 'archetype A B' | 'constant CP CM' |
    'file:PATH' (serialized table)."""
    toks = spec.split()
    if toks[0] == "intro":
        return LocalRate.intro()
    if toks[0] == "archetype":
        return LocalRate.archetype(_number(toks[1]), _number(toks[2]))
    if toks[0] == "constant":
        return LocalRate.constant(_number(toks[1]), _number(toks[2]))
    if toks[0].startswith("file:"):
        return LocalRate.from_text(Path(toks[0][5:]).read_text())
    raise ValueError(f"unknown rate spec {spec!r}")


def _number(tok: str):
    if "/" in tok:
        return Fraction(tok)
    if "." in tok or "e" in tok or "E" in tok:
        return float(tok)
    return Fraction(int(tok))


def parse_profile(spec: str, interior_eps: float = 0.0) -> DensityProfile:
    """Profile grammar: 'const RHO' | 'cosine MEAN AMP K' |
    'knots x:v,x:v,...' | 'file:PATH'."""
    toks = spec.split()
    if toks[0] == "const":
        return DensityProfile.constant(float(toks[1]), interior_eps)
    if toks[0] == "cosine":
        k = int(toks[3]) if len(toks) > 3 else 1
        return DensityProfile.cosine(float(toks[1]), float(toks[2]), k,
                                     interior_eps=interior_eps)
    if toks[0] == "knots":
        knots = []
        for pair in toks[1].split(","):
            x, v = pair.split(":")
            knots.append((float(x), float(v)))
        return DensityProfile.from_knots(knots, interior_eps)
    if toks[0].startswith("file:"):
        return DensityProfile.from_knot_text(Path(toks[0][5:]).read_text(),
                                             interior_eps)
    raise ValueError(f"unknown profile spec {spec!r}")


def parse_h_modes(spec: str, T: float) -> Optional[TestFunctionH]:
    """Test-function grammar: space-separated modes 'kind:k:amp' with kind in
    {cos, sin}, optionally 'kind:k:amp:c0,c1,...' for Chebyshev time
    coefficients."""
    spec = spec.strip()
    if not spec or spec == "none":
        return None
    modes = []
    for tok in spec.split():
        parts = tok.split(":")
        kind, k, amp = parts[0], int(parts[1]), float(parts[2])
        tc = None
        if len(parts) > 3:
            tc = [float(v) for v in parts[3].split(",")]
        modes.append((kind, k, amp, tc))
    return TestFunctionH.from_modes(modes, T)


def parse_a(spec: str) -> Optional[TimeFunction]:
    spec = spec.strip()
    if not spec or spec == "none":
        return None
    toks = spec.split()
    if toks[0] == "const":
        return TimeFunction.constant(float(toks[1]))
    if toks[0] == "poly":
        return TimeFunction([float(v) for v in toks[1:]])
    raise ValueError(f"unknown walker tilt spec {spec!r}")


_RUN_DEFAULTS = {
    "experiment": "lln",
    "replicas": 200,
    "seed": 20240801,
    "grid_points": 33,
    "out": "out",
    "threads": 1,
    "format": "csv",
    "figures": True,
    "mollify_eps": 0.35,
    "replica_scaling": "flat",
    "pde_m": 256,
    "pde_dt": 0.0,
    "basis_k": 4,
    "basis_p": 2,
    "radius_density": 0.15,
    "radius_walker": 0.15,
    "replicas_naive": 2000,
    "naive_max_n": 32,
    "eps_list": "0.05 0.1 0.2",
    "ell_list": "4 6 8 10 12",
    # tolerances
    "z_factor": 4.0,
    "lln_l1_max": 0.05,
    "entropy_gap_max": 0.05,
    "rate_gap_max": 0.15,
}


@dataclass
class ExperimentConfig:
    ns: list[int]
    T: float
    rates: LocalRate
    u0: DensityProfile
    D: float
    tilt: Optional[TiltParams]
    run: dict
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.run["seed"])

    @property
    def null_tilt(self) -> bool:
        return self.tilt is None or self.tilt.null

    def v0(self) -> DensityProfile:
        if self.tilt is not None and self.tilt.v0 is not None:
            return self.tilt.v0
        return self.u0

    def config_hash(self) -> str:
        payload = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def tolerance(self, key: str) -> float:
        return float(self.run[key])


def _sections_from_ini(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(text)
    return {sec: dict(cp.items(sec)) for sec in cp.sections()}


def load_config(path: str | Path, overrides: Optional[dict] = None
                ) -> ExperimentConfig:
    """Load the INI or JSON config; `overrides` patches [run] keys."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        sections = json.loads(text)
        sections = {k: {kk: str(vv) for kk, vv in v.items()}
                    for k, v in sections.items()}
    else:
        sections = _sections_from_ini(text)
    sections = {k.lower(): {kk.lower(): vv for kk, vv in v.items()}
                for k, v in sections.items()}
    return build_config(sections, overrides)


def build_config(sections: dict, overrides: Optional[dict] = None
                 ) -> ExperimentConfig:
    model = sections.get("model", {})
    tilt_sec = sections.get("tilt", {})
    run = dict(_RUN_DEFAULTS)
    for k, v in sections.get("run", {}).items():
        if k not in _RUN_DEFAULTS:
            raise ValueError(f"unknown run key {k!r}")
        run[k] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            run[k] = v
    run["replicas"] = int(run["replicas"])
    run["seed"] = int(run["seed"])
    run["grid_points"] = int(run["grid_points"])
    run["threads"] = int(run["threads"])
    run["pde_m"] = int(run["pde_m"])
    run["basis_k"] = int(run["basis_k"])
    run["basis_p"] = int(run["basis_p"])
    run["replicas_naive"] = int(run["replicas_naive"])
    run["naive_max_n"] = int(run["naive_max_n"])
    run["figures"] = str(run["figures"]).lower() in ("1", "true", "yes")
    for key in ("mollify_eps", "pde_dt", "radius_density", "radius_walker",
                "z_factor", "lln_l1_max", "entropy_gap_max", "rate_gap_max"):
        run[key] = float(run[key])

    ns = [int(v) for v in str(model.get("n", "64")).split()]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("lattice sizes must be sorted strictly ascending")
    if run["replicas"] < 1:
        raise ValueError("replicas must be >= 1")
    T = float(model.get("t", model.get("T", 1.0)))
    rates = parse_rates(str(model.get("rates", "intro")))
    u0 = parse_profile(str(model.get("u0", "const 0.5")))
    D = float(model.get("d", model.get("D", 1.0)))

    tilt = None
    if tilt_sec and str(tilt_sec.get("null", "false")).lower() not in ("1", "true"):
        v0_spec = str(tilt_sec.get("v0", "same"))
        v0 = None if v0_spec == "same" else parse_profile(v0_spec)
        H = parse_h_modes(str(tilt_sec.get("h", tilt_sec.get("H", "none"))), T)
        a = parse_a(str(tilt_sec.get("a", "none")))
        if not (v0 is None and H is None and a is None):
            tilt = TiltParams(v0=v0, H=H, a=a)

    # the echo (and hash) cover only value-affecting keys; presentation keys
    # (output dir, thread count, table format, figure toggle) are excluded so
    # identical science configs produce byte-identical reports
    presentation = {"out", "threads", "format", "figures"}
    raw = {"model": {k: str(v) for k, v in sorted(model.items())},
           "tilt": {k: str(v) for k, v in sorted(tilt_sec.items())},
           "run": {k: str(v) for k, v in sorted(run.items())
                   if k not in presentation}}
    return ExperimentConfig(ns=ns, T=T, rates=rates, u0=u0, D=D, tilt=tilt,
                            run=run, raw=raw)
