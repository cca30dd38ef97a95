"""End-to-end experiment runner: sample, propagate, estimate, tabulate.

One repeat draws a double phase-space batch, propagates the y and z seeds
once through the time grid (chunked, optionally across a process pool),
and evaluates every configured observable at every save point from the
shared trajectories.  All randomness is drawn before the parallel phase
and the per-sample factor arrays are assembled in sample-index order, so a
run is bit-identical for any worker count.

Results land in a flat ResultsTable whose CSV schema is fixed:
repeat,observable,t,estimate_re,estimate_im,std_err,variance_est,
intrinsic_err,acceptance,wall_ms.  Non-applicable cells stay empty.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig, parse_observable_label
from .core import Observable
from .estimators import (
    EstimatorResult,
    IntegrandFactors,
    crude_estimate,
    f0_batch,
    intrinsic_error,
    log_density_normalizer,
    variance_companion_estimate,
    wis_estimate,
)
from .errors import ConfigError, PropagationError
from .matel import matel_batch, total_energy_expectation
from .sampling import DensitySpec, SampleBatch, direct_sample, hmc_sample, log_density_unnormalized
from . import dynamics

__all__ = [
    "ResultRow",
    "ResultsTable",
    "run_experiment",
    "run_experiment_details",
    "emit_results",
    "parse_results",
    "reproduce_figure",
    "default_workers",
    "SCENARIOS",
]

logger = logging.getLogger(__name__)

_CHUNK = 8192  # samples per propagation job; 2x this many seeds stay cache-resident
_COLUMNS = (
    "repeat",
    "observable",
    "t",
    "estimate_re",
    "estimate_im",
    "std_err",
    "variance_est",
    "intrinsic_err",
    "acceptance",
    "wall_ms",
)


@dataclass(frozen=True)
class ResultRow:
    repeat: int
    observable: str
    t: float
    estimate_re: float
    estimate_im: float
    std_err: float | None = None
    variance_est: float | None = None
    intrinsic_err: float | None = None
    acceptance: float | None = None
    wall_ms: float | None = None


@dataclass(frozen=True)
class ResultsTable:
    rows: tuple[ResultRow, ...]

    def __len__(self):
        return len(self.rows)


def default_workers() -> int:
    env = os.environ.get("HK_EXPECT_WORKERS")
    if env:
        try:
            k = int(env)
        except ValueError as exc:
            raise ConfigError(f"HK_EXPECT_WORKERS: expected an integer, got {env!r}") from exc
        if k < 1:
            raise ConfigError("HK_EXPECT_WORKERS: must be >= 1")
        return k
    return 1


def _child_seed(base_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(key)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Factor evaluation (chunked over samples)
# ---------------------------------------------------------------------------

def _propagate_chunk(args):
    """Propagate one chunk of double points; return per-save factor slices.

    The y and z seeds of the chunk are stacked into a single trajectory
    batch (indices c.. belong to z).  Runs in worker processes; must stay
    a module-level function.  Returns
    (offset, [per save: (phi, abs_rr, alive, [o per observable])]).
    """
    offset, points, grid, potential, width, eps, observables, policy = args
    d = width.dim
    c = points.shape[0]
    seeds = np.vstack([points[:, : 2 * d], points[:, 2 * d :]])
    out = []
    try:
        for snap in dynamics.iterate_saves(seeds, grid, potential, width, policy=policy):
            log_abs = snap.log_abs_R[:c] + snap.log_abs_R[c:]
            phase = (snap.arg_R[c:] - snap.arg_R[:c]) + (snap.S[c:] - snap.S[:c]) / eps
            with np.errstate(over="ignore", invalid="ignore"):
                phi = np.exp(log_abs + 1j * phase)
                abs_rr = np.exp(log_abs)
            alive = snap.alive[:c] & snap.alive[c:]
            o_list = [
                matel_batch(obs, snap.q[:c], snap.p[:c], snap.q[c:], snap.p[c:], width, eps)
                for obs in observables
            ]
            out.append((phi, abs_rr, alive, o_list))
    except PropagationError as exc:
        if exc.indices is not None:  # map stacked y/z indices back to sample indices
            exc.indices = sorted({offset + (i % c) for i in exc.indices})
        raise
    return offset, out


def _evaluate_factors(points, config: ExperimentConfig, observables, workers: int):
    """Full-length per-save factor arrays (phi, |R_y R_z|, alive, O per observable)."""
    n = points.shape[0]
    grid = config.grid()
    potential = config.potential()
    width = config.width()
    eps = config.epsilon
    n_saves = grid.n_saves
    phi = np.empty((n_saves, n), dtype=complex)
    abs_rr = np.empty((n_saves, n))
    alive = np.empty((n_saves, n), dtype=bool)
    o_vals = [np.empty((n_saves, n), dtype=complex) for _ in observables]

    jobs = [
        (off, points[off : off + _CHUNK], grid, potential, width, eps, observables, config.blow_up_policy)
        for off in range(0, n, _CHUNK)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_propagate_chunk, jobs))
    else:
        results = [_propagate_chunk(job) for job in jobs]
    for offset, saves in results:
        hi = offset + saves[0][0].shape[0]
        for k, (phi_c, rr_c, alive_c, o_list) in enumerate(saves):
            phi[k, offset:hi] = phi_c
            abs_rr[k, offset:hi] = rr_c
            alive[k, offset:hi] = alive_c
            for arr, o_c in zip(o_vals, o_list):
                arr[k, offset:hi] = o_c
    return phi, abs_rr, alive, o_vals


# ---------------------------------------------------------------------------
# Single repeat
# ---------------------------------------------------------------------------

def _draw_batch(config: ExperimentConfig, n: int, seed: int) -> SampleBatch:
    spec = config.density_spec()
    if spec.kind == "optimal" and spec.observable.kind != "identity":
        return hmc_sample(spec, config.hmc, n, seed)
    return direct_sample(spec, n, seed)


def _estimate_batch(config: ExperimentConfig, batch: SampleBatch, workers: int):
    """Estimates and companion variances for every (observable, save point)."""
    spec = batch.spec
    psi0 = spec.psi0
    observables = config.observable_objects()
    labels = list(config.observables)
    grid = config.grid()
    points = batch.points
    f0 = f0_batch(points, psi0)

    phi, abs_rr, alive_all, o_vals = _evaluate_factors(points, config, observables, workers)
    if config.blow_up_policy == "abort":
        alive_masks = [None] * grid.n_saves
    else:
        alive_masks = [a if not a.all() else None for a in alive_all]
        dropped = 1.0 - float(np.mean(alive_all[-1]))
        if dropped > 0.0:
            logger.info("drop policy removed %.3g%% of samples", 100.0 * dropped)

    if config.estimator_kind == "crude":
        log_rho = log_density_normalizer(spec) + batch.log_density
    else:
        rho1_spec = DensitySpec(config.rho1, psi0)
        log_rho1 = log_density_normalizer(rho1_spec) + log_density_unnormalized(rho1_spec, points)
        log_rho2 = batch.log_density

    needs_husimi = spec.kind == "optimal" and spec.observable.kind != "identity"
    if needs_husimi:
        husimi_spec = DensitySpec("husimi", psi0)
        log_rho_h = log_density_normalizer(husimi_spec) + log_density_unnormalized(husimi_spec, points)
        o0_sampling = np.abs(
            matel_batch(
                spec.observable,
                points[:, : config.dim],
                points[:, config.dim : 2 * config.dim],
                points[:, 2 * config.dim : 3 * config.dim],
                points[:, 3 * config.dim :],
                config.width(),
                config.epsilon,
            )
        )

    results: dict[tuple[str, int], EstimatorResult] = {}
    companions: dict[tuple[str, int], float | None] = {}
    for k, t in enumerate(grid.save_times):
        mask = alive_masks[k]
        for obs, label, o_arr in zip(observables, labels, o_vals):
            factors = IntegrandFactors(f0=f0, phi=phi[k], o=o_arr[k])
            if config.estimator_kind == "crude":
                res = crude_estimate(
                    factors, log_rho, density_label=spec.label(), alive=mask,
                    t=float(t), observable=label,
                )
            else:
                res = wis_estimate(
                    factors, log_rho1, log_rho2,
                    rho1_label=config.rho1, rho2_label=spec.label(), alive=mask,
                    t=float(t), observable=label,
                )
            results[(label, k)] = res
            if spec.kind == "sqrt-husimi":
                comp = variance_companion_estimate(
                    spec, abs_phi=np.abs(phi[k]), abs_o_t=np.abs(o_arr[k]),
                    estimate=res.estimate, alive=mask,
                )
            elif spec.kind == "optimal":
                if spec.observable.kind == "identity":
                    o0 = np.abs(o_vals[labels.index("Id")][0]) if "Id" in labels else None
                    if o0 is None:
                        o0 = np.abs(
                            matel_batch(
                                spec.observable,
                                points[:, : config.dim],
                                points[:, config.dim : 2 * config.dim],
                                points[:, 2 * config.dim : 3 * config.dim],
                                points[:, 3 * config.dim :],
                                config.width(),
                                config.epsilon,
                            )
                        )
                    comp = variance_companion_estimate(
                        spec, abs_phi=np.abs(phi[k]), abs_o_t=np.abs(o_arr[k]),
                        abs_o0=o0, estimate=res.estimate, alive=mask,
                    )
                else:
                    comp = variance_companion_estimate(
                        spec, abs_phi=np.abs(phi[k]), abs_o_t=np.abs(o_arr[k]),
                        abs_o0=o0_sampling, abs_f0=np.abs(f0), log_rho_h=log_rho_h,
                        estimate=res.estimate, alive=mask,
                    )
            else:
                comp = None
            companions[(label, k)] = comp

    telemetry = {
        "avg_prefactor": np.array(
            [float(np.mean(abs_rr[k][alive_all[k]])) if alive_all[k].any() else math.nan
             for k in range(grid.n_saves)]
        ),
        "save_times": grid.save_times,
    }
    return results, companions, telemetry


def run_experiment_details(config: ExperimentConfig, workers: int | None = None):
    """run_experiment plus per-repeat telemetry (averaged |R_y R_z| per save point)."""
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    grid = config.grid()
    labels = list(config.observables)
    rows: list[ResultRow] = []
    telemetry: dict[int, dict] = {}
    for rep in range(config.repeats):
        t0 = time.perf_counter()
        batch = _draw_batch(config, config.n_samples, _child_seed(config.seed, rep, 0))
        results, companions, tele = _estimate_batch(config, batch, workers)
        intrinsic: dict[tuple[str, int], float] = {}
        if config.paired_intrinsic:
            batch2 = _draw_batch(config, 2 * config.n_samples, _child_seed(config.seed, rep, 1))
            results2, _, _ = _estimate_batch(config, batch2, workers)
            intrinsic = {
                key: intrinsic_error(results[key], results2[key]) for key in results
            }
        wall_ms = 1000.0 * (time.perf_counter() - t0)
        for k, t in enumerate(grid.save_times):
            for label in labels:
                res = results[(label, k)]
                rows.append(
                    ResultRow(
                        repeat=rep,
                        observable=label,
                        t=float(t),
                        estimate_re=res.estimate.real,
                        estimate_im=res.estimate.imag,
                        std_err=res.std_err,
                        variance_est=companions[(label, k)],
                        intrinsic_err=intrinsic.get((label, k)),
                        acceptance=batch.acceptance,
                        wall_ms=wall_ms,
                    )
                )
        telemetry[rep] = tele
    return ResultsTable(tuple(rows)), telemetry


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ResultsTable:
    """Execute the configured experiment; one row per (repeat, observable, save point)."""
    table, _ = run_experiment_details(config, workers)
    return table


# ---------------------------------------------------------------------------
# Emission / parsing
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(table: ResultsTable, path, fmt: str = "csv") -> None:
    """Write the table to path as CSV or JSON lines (schema fixed, see _COLUMNS)."""
    text = render_results(table, fmt)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def render_results(table: ResultsTable, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for row in table.rows:
            writer.writerow([_cell(getattr(row, col)) for col in _COLUMNS])
        return buf.getvalue()
    if fmt == "jsonl":
        lines = []
        for row in table.rows:
            lines.append(json.dumps({col: getattr(row, col) for col in _COLUMNS}))
        return "\n".join(lines) + ("\n" if table.rows else "")
    raise ValueError(f"unknown format {fmt!r} (expected 'csv' or 'jsonl')")


def parse_results(path_or_text, fmt: str = "csv", *, is_text: bool = False) -> ResultsTable:
    """Inverse of emit_results; accepts a path or (with is_text) the raw string."""
    if is_text:
        text = path_or_text
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is not None and tuple(header) != _COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for rec in reader:
            if not rec:
                continue
            rows.append(_row_from_cells(dict(zip(_COLUMNS, rec))))
    elif fmt == "jsonl":
        for line in text.splitlines():
            if not line.strip():
                continue
            rows.append(_row_from_cells(json.loads(line)))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return ResultsTable(tuple(rows))


def _row_from_cells(cells: dict) -> ResultRow:
    def opt_float(v):
        if v is None or v == "":
            return None
        return float(v)

    return ResultRow(
        repeat=int(cells["repeat"]),
        observable=str(cells["observable"]),
        t=float(cells["t"]),
        estimate_re=float(cells["estimate_re"]),
        estimate_im=float(cells["estimate_im"]),
        std_err=opt_float(cells["std_err"]),
        variance_est=opt_float(cells["variance_est"]),
        intrinsic_err=opt_float(cells["intrinsic_err"]),
        acceptance=opt_float(cells["acceptance"]),
        wall_ms=opt_float(cells["wall_ms"]),
    )


# ---------------------------------------------------------------------------
# Preconfigured desk-scale reproductions
# ---------------------------------------------------------------------------

SCENARIOS = ("init-scan", "harmonic-d5", "henon-heiles")


def _base_config(**overrides) -> dict:
    cfg = {
        "dim": 1,
        "epsilon": 1.0,
        "potential": {"kind": "harmonic"},
        "initial_state": {"q0": [1.0], "p0": [1.0]},
        "observables": ["Id"],
        "sampling": {"kind": "sqrt-husimi"},
        "estimator": {"kind": "crude"},
        "n_samples": 1024,
        "time": {"t_final": 0.0, "dt": 1.0},
        "repeats": 1,
        "seed": 20,
    }
    cfg.update(overrides)
    return cfg


def _prefixed(table: ResultsTable, prefix: str, extra_rows=()) -> list[ResultRow]:
    rows = [replace(row, observable=f"{row.observable}{prefix}") for row in table.rows]
    rows.extend(extra_rows)
    return rows


def reproduce_figure(
    scenario: str,
    workers: int | None = None,
    *,
    n_override: int | None = None,
    repeats_override: int | None = None,
) -> ResultsTable:
    """Desk-scale reruns of the three experiment families, with oracle rows.

    Oracle reference values and averaged-prefactor telemetry are appended
    as pseudo-observable rows ("oracle:...", "avg_prefactor...") so the
    fixed CSV schema carries them; estimate_re holds the value.
    """
    if scenario == "init-scan":
        return _scenario_init_scan(workers, n_override, repeats_override)
    if scenario == "harmonic-d5":
        return _scenario_harmonic(workers, n_override, repeats_override)
    if scenario == "henon-heiles":
        return _scenario_henon(workers, n_override, repeats_override)
    raise ConfigError(f"scenario: unknown name {scenario!r}; pick one of {SCENARIOS}")


def _scenario_init_scan(workers, n_override, repeats_override) -> ResultsTable:
    from .estimators import analytic_oracle
    from .core import PhaseSpacePoint

    repeats = repeats_override or 20
    n_values = (
        [n_override]
        if n_override
        else [2**k for k in range(8, 17, 2)]
    )
    rows: list[ResultRow] = []
    z0 = PhaseSpacePoint(np.array([1.0]), np.array([1.0]))
    for density in ("husimi", "sqrt-husimi", "optimal"):
        sampling = {"kind": density} if density != "optimal" else {"kind": "optimal", "observable": "Id"}
        for n in n_values:
            cfg = ExperimentConfig.from_dict(
                _base_config(sampling=sampling, n_samples=n, repeats=repeats, seed=101)
            )
            table = run_experiment(cfg, workers)
            suffix = f"@{density}@N{n}"
            rows.extend(_prefixed(table, suffix))
            if density != "husimi":
                kind = "variance-sqrt-husimi" if density == "sqrt-husimi" else "variance-optimal"
                var = analytic_oracle(Observable.identity(), 0.0, 1, 1.0, z0, kind)
                rows.append(
                    ResultRow(0, f"oracle:rmse{suffix}", 0.0, math.sqrt(var / n), 0.0)
                )
    return ResultsTable(tuple(rows))


def _scenario_harmonic(workers, n_override, repeats_override) -> ResultsTable:
    from .estimators import analytic_oracle
    from .core import PhaseSpacePoint

    dim = 5
    n = n_override or 2**14
    repeats = repeats_override or 8
    steps = 256
    stride = 8
    dt = 2.0 * math.pi / steps
    labels = ["Id", "q1", "p1", "V", "T"]
    cfg = ExperimentConfig.from_dict(
        _base_config(
            dim=dim,
            initial_state={"q0": [1.0] * dim, "p0": [1.0] * dim},
            observables=labels,
            n_samples=n,
            repeats=repeats,
            time={"t_final": 2.0 * math.pi, "dt": dt, "save_stride": stride},
            seed=102,
        )
    )
    table = run_experiment(cfg, workers)
    z0 = PhaseSpacePoint(np.ones(dim), np.ones(dim))
    extra = []
    for label in labels:
        obs = parse_observable_label(label, dim, "harmonic", None)
        for t in cfg.grid().save_times:
            exact = analytic_oracle(obs, float(t), dim, 1.0, z0, "harmonic-expectation")
            var = analytic_oracle(obs, float(t), dim, 1.0, z0, "variance-sqrt-husimi")
            extra.append(ResultRow(0, f"oracle:exact({label})", float(t), exact, 0.0))
            extra.append(ResultRow(0, f"oracle:variance({label})", float(t), var, 0.0))
    return ResultsTable(tuple(_prefixed(table, "", extra)))


def _scenario_henon(workers, n_override, repeats_override) -> ResultsTable:
    dim = 6
    sigma = 1.0 / math.sqrt(80.0)
    n = n_override or 2**13
    repeats = repeats_override or 2
    rows: list[ResultRow] = []
    for scale in (1.0, 2.0, 2.3):
        cfg0 = None
        for density in ("husimi", "sqrt-husimi", "optimal"):
            sampling = {"kind": density} if density != "optimal" else {"kind": "optimal", "observable": "Id"}
            cfg = ExperimentConfig.from_dict(
                _base_config(
                    dim=dim,
                    epsilon=0.01,
                    potential={"kind": "henon-heiles", "sigma": sigma},
                    initial_state={"q0": [scale] * dim, "p0": [0.0] * dim},
                    observables=["Id"],
                    sampling=sampling,
                    n_samples=n,
                    repeats=repeats,
                    time={"t_final": 40.0, "dt": 0.2, "save_stride": 25},
                    seed=103,
                )
            )
            cfg0 = cfg
            table, tele = run_experiment_details(cfg, workers)
            suffix = f"@{density}@q{scale:g}"
            rows.extend(_prefixed(table, suffix))
            for rep, t_rep in tele.items():
                for t, val in zip(t_rep["save_times"], t_rep["avg_prefactor"]):
                    rows.append(ResultRow(rep, f"avg_prefactor{suffix}", float(t), float(val), 0.0))
        etot = total_energy_expectation(cfg0.psi0(), "henon-heiles", sigma)
        rows.append(ResultRow(0, f"oracle:Etot@q{scale:g}", 0.0, etot, 0.0))
    return ResultsTable(tuple(rows))
