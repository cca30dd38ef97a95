"""Experiment configuration: JSON schema, validation, and typed accessors.

A config file is a single JSON object.  Validation errors always name the
offending key.  Desk-scale caps (n_samples <= 2^20, dim <= 12, and a bound
on the factor-array memory) keep accidental runs small; `allow_large`
overrides them.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import GaussianWavepacket, Observable, PhaseSpacePoint, SimConfig, WidthMatrix
from .dynamics import Potential, TimeGrid, make_potential
from .errors import ConfigError
from .sampling import DensitySpec, HmcParams

__all__ = ["ExperimentConfig", "parse_observable_label"]

_POTENTIALS = ("harmonic", "henon-heiles")
_DENSITIES = ("husimi", "sqrt-husimi", "optimal")
_ESTIMATORS = ("crude", "wis")
_RHO1 = ("husimi", "sqrt-husimi")
_POLICIES = ("abort", "drop")
_MAX_SAMPLES = 2**20
_MAX_DIM = 12
_MAX_FACTOR_ELEMENTS = 2**27  # ~2 GB of complex128 across saves x observables

_COMPONENT_RE = re.compile(r"^([qp])(\d+)(sq)?$")


def parse_observable_label(label: str, dim: int, potential: str, sigma: float | None) -> Observable:
    """Resolve a config label ('Id', 'q2', 'p1sq', 'T', 'V', 'E') to an Observable."""
    if label == "Id":
        return Observable.identity()
    if label == "T":
        return Observable.kinetic()
    if label == "V":
        return Observable("potential", potential=potential, sigma=sigma)
    if label == "E":
        return Observable.total_energy(potential, sigma)
    m = _COMPONENT_RE.match(label)
    if m:
        axis, idx, sq = m.group(1), int(m.group(2)), m.group(3)
        if not (1 <= idx <= dim):
            raise ConfigError(f"observables: component index in {label!r} out of range for dim={dim}")
        kind = {"q": "position", "p": "momentum"}[axis] + ("_sq" if sq else "")
        return Observable(kind, index=idx)
    raise ConfigError(f"observables: unknown label {label!r}")


def _need(d: dict, key: str, typ, where: str = ""):
    path = f"{where}.{key}" if where else key
    if key not in d:
        raise ConfigError(f"{path}: missing required key")
    val = d[key]
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {type(val).__name__}")
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}: expected an integer, got {type(val).__name__}")
        return val
    if not isinstance(val, typ):
        raise ConfigError(f"{path}: expected {typ.__name__}, got {type(val).__name__}")
    return val


def _float_list(d: dict, key: str, length: int, where: str = "") -> list[float]:
    val = _need(d, key, list, where)
    path = f"{where}.{key}" if where else key
    if len(val) != length:
        raise ConfigError(f"{path}: expected {length} entries, got {len(val)}")
    out = []
    for i, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ConfigError(f"{path}[{i}]: expected a finite number")
        out.append(float(x))
    return out


def _reject_unknown(d: dict, allowed, where: str = "config"):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see from_dict for the JSON schema)."""

    dim: int
    epsilon: float
    potential_kind: str
    potential_sigma: float | None
    q0: tuple[float, ...]
    p0: tuple[float, ...]
    gamma: tuple[float, ...]
    observables: tuple[str, ...]
    sampling_kind: str
    sampling_observable: str
    hmc: HmcParams
    estimator_kind: str
    rho1: str
    n_samples: int
    t_final: float
    dt: float
    save_stride: int
    repeats: int
    seed: int
    blow_up_policy: str
    paired_intrinsic: bool
    allow_large: bool
    output: str | None

    # -- construction ---------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        _reject_unknown(
            raw,
            {
                "dim", "epsilon", "potential", "initial_state", "observables",
                "sampling", "estimator", "n_samples", "time", "repeats", "seed",
                "blow_up_policy", "paired_intrinsic", "allow_large", "output",
            },
        )
        allow_large = bool(raw.get("allow_large", False))
        dim = _need(raw, "dim", int)
        if dim < 1:
            raise ConfigError("dim: must be >= 1")
        if dim > _MAX_DIM and not allow_large:
            raise ConfigError(f"dim: {dim} exceeds the desk-scale cap {_MAX_DIM}; set allow_large")
        epsilon = _need(raw, "epsilon", float)
        if not (epsilon > 0):
            raise ConfigError("epsilon: must be positive")

        pot = _need(raw, "potential", dict)
        _reject_unknown(pot, {"kind", "sigma"}, "potential")
        potential_kind = _need(pot, "kind", str, "potential")
        if potential_kind not in _POTENTIALS:
            raise ConfigError(f"potential.kind: must be one of {_POTENTIALS}")
        potential_sigma = None
        if potential_kind == "henon-heiles":
            potential_sigma = _need(pot, "sigma", float, "potential")
            if potential_sigma < 0:
                raise ConfigError("potential.sigma: must be >= 0")
        elif "sigma" in pot:
            raise ConfigError("potential.sigma: only valid for the henon-heiles potential")

        init = _need(raw, "initial_state", dict)
        _reject_unknown(init, {"q0", "p0", "gamma"}, "initial_state")
        q0 = _float_list(init, "q0", dim, "initial_state")
        p0 = _float_list(init, "p0", dim, "initial_state")
        gamma = (
            _float_list(init, "gamma", dim, "initial_state")
            if "gamma" in init
            else [1.0] * dim
        )
        if any(g <= 0 for g in gamma):
            raise ConfigError("initial_state.gamma: entries must be positive")

        obs_raw = _need(raw, "observables", list)
        if not obs_raw:
            raise ConfigError("observables: must not be empty")
        for label in obs_raw:
            if not isinstance(label, str):
                raise ConfigError("observables: entries must be strings")
            parse_observable_label(label, dim, potential_kind, potential_sigma)
        if len(set(obs_raw)) != len(obs_raw):
            raise ConfigError("observables: duplicate labels")

        samp = _need(raw, "sampling", dict)
        _reject_unknown(samp, {"kind", "observable", "hmc"}, "sampling")
        sampling_kind = _need(samp, "kind", str, "sampling")
        if sampling_kind not in _DENSITIES:
            raise ConfigError(f"sampling.kind: must be one of {_DENSITIES}")
        sampling_observable = samp.get("observable", "Id")
        if not isinstance(sampling_observable, str):
            raise ConfigError("sampling.observable: expected a string label")
        if sampling_kind != "optimal" and "observable" in samp:
            raise ConfigError("sampling.observable: only valid for optimal sampling")
        samp_obs = parse_observable_label(sampling_observable, dim, potential_kind, potential_sigma)
        hmc_raw = samp.get("hmc", {})
        if not isinstance(hmc_raw, dict):
            raise ConfigError("sampling.hmc: expected an object")
        _reject_unknown(hmc_raw, {"step_size", "n_leapfrog", "mass", "burn_in", "n_chains"}, "sampling.hmc")
        try:
            hmc = HmcParams(
                step_size=hmc_raw.get("step_size"),
                n_leapfrog=hmc_raw.get("n_leapfrog", 10),
                mass=hmc_raw.get("mass", 1.0),
                burn_in=hmc_raw.get("burn_in", 1000),
                n_chains=hmc_raw.get("n_chains", 64),
            )
        except ValueError as exc:
            raise ConfigError(f"sampling.hmc: {exc}") from exc
        if sampling_kind == "optimal" and samp_obs.kind != "identity":
            if any(g != 1.0 for g in gamma):
                raise ConfigError(
                    "sampling.kind: optimal sampling of a non-identity observable "
                    "requires initial_state.gamma of all ones"
                )

        est = _need(raw, "estimator", dict)
        _reject_unknown(est, {"kind", "rho1"}, "estimator")
        estimator_kind = _need(est, "kind", str, "estimator")
        if estimator_kind not in _ESTIMATORS:
            raise ConfigError(f"estimator.kind: must be one of {_ESTIMATORS}")
        rho1 = est.get("rho1", "husimi")
        if estimator_kind == "crude" and "rho1" in est:
            raise ConfigError("estimator.rho1: only valid for the wis estimator")
        if rho1 not in _RHO1:
            raise ConfigError(f"estimator.rho1: must be one of {_RHO1}")
        if estimator_kind == "crude" and sampling_kind == "optimal" and samp_obs.kind != "identity":
            raise ConfigError(
                "estimator.kind: the crude estimator needs a normalized density; "
                "optimal sampling of a non-identity observable requires the wis estimator"
            )

        n_samples = _need(raw, "n_samples", int)
        if n_samples < 2:
            raise ConfigError("n_samples: must be >= 2")
        if n_samples > _MAX_SAMPLES and not allow_large:
            raise ConfigError(
                f"n_samples: {n_samples} exceeds the desk-scale cap {_MAX_SAMPLES}; set allow_large"
            )

        tgrid = _need(raw, "time", dict)
        _reject_unknown(tgrid, {"t_final", "dt", "save_stride"}, "time")
        t_final = _need(tgrid, "t_final", float, "time")
        dt = _need(tgrid, "dt", float, "time")
        save_stride = tgrid.get("save_stride", 1)
        if isinstance(save_stride, bool) or not isinstance(save_stride, int):
            raise ConfigError("time.save_stride: expected an integer")
        try:
            grid = TimeGrid(t_final, dt, save_stride)
        except ValueError as exc:
            raise ConfigError(f"time: {exc}") from exc
        footprint = grid.n_saves * (len(obs_raw) + 4) * n_samples
        if footprint > _MAX_FACTOR_ELEMENTS and not allow_large:
            raise ConfigError(
                "time.save_stride: factor storage would exceed the desk-scale memory cap "
                f"({footprint} > {_MAX_FACTOR_ELEMENTS} elements); increase the stride or set allow_large"
            )

        repeats = _need(raw, "repeats", int) if "repeats" in raw else 1
        if repeats < 1:
            raise ConfigError("repeats: must be >= 1")
        seed = _need(raw, "seed", int) if "seed" in raw else 0
        if seed < 0:
            raise ConfigError("seed: must be >= 0")
        policy = raw.get("blow_up_policy", "abort")
        if policy not in _POLICIES:
            raise ConfigError(f"blow_up_policy: must be one of {_POLICIES}")
        paired = raw.get("paired_intrinsic", False)
        if not isinstance(paired, bool):
            raise ConfigError("paired_intrinsic: expected a boolean")
        output = raw.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output: expected a string path")

        return cls(
            dim=dim,
            epsilon=epsilon,
            potential_kind=potential_kind,
            potential_sigma=potential_sigma,
            q0=tuple(q0),
            p0=tuple(p0),
            gamma=tuple(gamma),
            observables=tuple(obs_raw),
            sampling_kind=sampling_kind,
            sampling_observable=sampling_observable,
            hmc=hmc,
            estimator_kind=estimator_kind,
            rho1=rho1,
            n_samples=n_samples,
            t_final=t_final,
            dt=dt,
            save_stride=save_stride,
            repeats=repeats,
            seed=seed,
            blow_up_policy=policy,
            paired_intrinsic=paired,
            allow_large=allow_large,
            output=output,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path} ({exc})") from exc
        return cls.from_json(text)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        pot: dict[str, Any] = {"kind": self.potential_kind}
        if self.potential_sigma is not None:
            pot["sigma"] = self.potential_sigma
        samp: dict[str, Any] = {"kind": self.sampling_kind}
        if self.sampling_kind == "optimal":
            samp["observable"] = self.sampling_observable
            samp["hmc"] = {
                "step_size": self.hmc.step_size,
                "n_leapfrog": self.hmc.n_leapfrog,
                "mass": self.hmc.mass,
                "burn_in": self.hmc.burn_in,
                "n_chains": self.hmc.n_chains,
            }
        est: dict[str, Any] = {"kind": self.estimator_kind}
        if self.estimator_kind == "wis":
            est["rho1"] = self.rho1
        out: dict[str, Any] = {
            "dim": self.dim,
            "epsilon": self.epsilon,
            "potential": pot,
            "initial_state": {"q0": list(self.q0), "p0": list(self.p0), "gamma": list(self.gamma)},
            "observables": list(self.observables),
            "sampling": samp,
            "estimator": est,
            "n_samples": self.n_samples,
            "time": {"t_final": self.t_final, "dt": self.dt, "save_stride": self.save_stride},
            "repeats": self.repeats,
            "seed": self.seed,
            "blow_up_policy": self.blow_up_policy,
            "paired_intrinsic": self.paired_intrinsic,
            "allow_large": self.allow_large,
        }
        if self.output is not None:
            out["output"] = self.output
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    # -- typed accessors ---------------------------------------------------
    def sim_config(self) -> SimConfig:
        return SimConfig(self.dim, self.epsilon)

    def width(self) -> WidthMatrix:
        return WidthMatrix.from_diagonal(self.gamma)

    def psi0(self) -> GaussianWavepacket:
        return GaussianWavepacket(
            center=PhaseSpacePoint(np.array(self.q0), np.array(self.p0)),
            width=self.width(),
            config=self.sim_config(),
        )

    def potential(self) -> Potential:
        return make_potential(self.potential_kind, self.potential_sigma)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_final, self.dt, self.save_stride)

    def density_spec(self) -> DensitySpec:
        if self.sampling_kind == "optimal":
            obs = parse_observable_label(
                self.sampling_observable, self.dim, self.potential_kind, self.potential_sigma
            )
            return DensitySpec("optimal", self.psi0(), obs)
        return DensitySpec(self.sampling_kind, self.psi0())

    def observable_objects(self) -> list[Observable]:
        return [
            parse_observable_label(label, self.dim, self.potential_kind, self.potential_sigma)
            for label in self.observables
        ]
