"""Monte-Carlo sweeps over the Landau rate.

Each trial draws a random multiband signal, optionally adds noise, folds
it through every channel, reconstructs it and scores the result. Trial
``t`` of sweep point ``p`` uses ``default_rng([seed, p, t])`` so results do
not depend on the order or process in which trials run.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from ..grid import (ChannelConfig, FoldingMatrix, check_unique_columns, concatenate_system,
                    fold_all)
from ..pipeline import reconstruct
from ..realvalued import build_real_split
from ..solver import SolveConfig, condition_diagnostics, matrix_condition
from ..support import DetectorConfig, NoSignalDetected, SupportMask, reduce_system
from .signals import PlacementError, add_noise, generate_complex_signal, generate_real_signal

SUCCESS_RULES = ("perfect", "per_band_l1", "per_band_l2")
PERFECT_TOLERANCE = 1e-10


class ConfigError(ValueError):
    """An experiment configuration is inconsistent."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: fixed channels, band widths set by ``landau_sweep``.

    ``channels`` are rates in Hz. ``f_max`` is the span of the grid: the
    monitored band ``[0, f_max)`` for complex signals and the Nyquist rate
    for real ones (so positive frequencies reach ``f_max / 2``).
    ``band_count`` counts positive bands; a real signal also carries their
    mirrors, so its Landau rate is twice the positive occupancy. An empty
    ``landau_sweep`` runs a single point at ``band_width``. Error thresholds
    are multiples of ``noise_sigma``.
    """

    mode: str = "complex"
    channels: tuple = (0.95e9, 1.0e9, 1.05e9)
    delta_f: float = 25e6
    f_max: float = 20e9
    band_count: int = 4
    band_width: float = 200e6
    landau_sweep: tuple = ()
    trials: int = 200
    seed: int = 0
    noise_sigma: float = 0.0
    detector: DetectorConfig = DetectorConfig()
    solver: SolveConfig = SolveConfig()
    success_rule: str = "perfect"
    l1_threshold: float = 2 * math.sqrt(5.0)
    l2_threshold: float = 3.3

    def __post_init__(self):
        if self.mode not in ("complex", "real"):
            raise ConfigError(f"mode must be 'complex' or 'real', got {self.mode!r}")
        if self.success_rule not in SUCCESS_RULES:
            raise ConfigError(f"success_rule must be one of {SUCCESS_RULES}")
        if not self.channels:
            raise ConfigError("at least one channel is required")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.band_count < 1:
            raise ConfigError("band_count must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.success_rule != "perfect" and self.noise_sigma == 0:
            raise ConfigError("per-band rules scale with noise_sigma, which is 0")
        try:
            configs = self.channel_configs()
            self.m_total
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode == "real":
            for ch in configs:
                if ch.m_i % 2:
                    raise ConfigError(f"real mode needs even M_i, got {ch.m_i}")
            if self.m_total % 2:
                raise ConfigError("real mode needs an even grid size")
        for point in self.points():
            if self.width_bins(point) < 1:
                raise ConfigError(f"band width for F_Landau={point:g} is under one bin")
            span = self.m_total // 2 if self.mode == "real" else self.m_total
            if self.band_count * self.width_bins(point) > span:
                raise ConfigError(f"{self.band_count} bands do not fit for F_Landau={point:g}")

    def channel_configs(self) -> list:
        return [ChannelConfig.from_rate(r, self.delta_f) for r in self.channels]

    @property
    def m_total(self) -> int:
        m = self.f_max / self.delta_f
        if abs(m - round(m)) > 1e-6 * max(1.0, m):
            raise ValueError(f"f_max={self.f_max} is not a multiple of delta_f={self.delta_f}")
        return int(round(m))

    @property
    def f_total(self) -> float:
        return float(sum(self.channels))

    def points(self) -> list:
        """The F_Landau values swept, in order."""
        if self.landau_sweep:
            return [float(v) for v in self.landau_sweep]
        sides = 2 if self.mode == "real" else 1
        return [sides * self.band_count * self.band_width]

    def width_bins(self, f_landau: float) -> int:
        """Band width in bins, rounding halves up."""
        sides = 2 if self.mode == "real" else 1
        return int(math.floor(f_landau / (sides * self.band_count * self.delta_f) + 0.5))

    def effective_landau(self, f_landau: float) -> float:
        sides = 2 if self.mode == "real" else 1
        return sides * self.band_count * self.width_bins(f_landau) * self.delta_f

    def to_dict(self) -> dict:
        out = asdict(self)
        out["channels"] = list(self.channels)
        out["landau_sweep"] = list(self.landau_sweep)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = _coerce(cls, data)
        try:
            if "detector" in data:
                data["detector"] = _sub_config(DetectorConfig, data["detector"], "detector")
            if "solver" in data:
                data["solver"] = _sub_config(SolveConfig, data["solver"], "solver")
            for key in ("channels", "landau_sweep"):
                if key in data:
                    data[key] = tuple(float(v) for v in data[key])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _coerce(kind, data: dict) -> dict:
    """Convert numeric strings (YAML reads ``100e6`` as text) per field type."""
    types = {f.name: f.type for f in fields(kind)}
    out = {}
    for key, value in data.items():
        t = str(types.get(key, ""))
        if isinstance(value, str) and t.startswith(("float", "Optional[float]", "int")):
            try:
                value = int(value) if t == "int" else float(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: expected a number, got {value!r}") from exc
        out[key] = value
    return out


def _sub_config(kind, data, name):
    if isinstance(data, kind):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = {f.name for f in fields(kind)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    return kind(**_coerce(kind, data))


@dataclass
class TrialRecord:
    trial_id: int
    f_landau: float
    success: bool
    ill_posed: bool
    converged: bool
    condition_number: Optional[float]
    aliased_bin_count: int
    runtime: float
    band_errors: list = field(default_factory=list)
    mean_error: Optional[float] = None
    reason: str = ""
    support_condition_number: Optional[float] = None

    def to_dict(self, include_runtime: bool = True) -> dict:
        out = asdict(self)
        if not include_runtime:
            del out["runtime"]
        return out


def aliased_bin_count(support_bins: Sequence[int], m_values: Sequence[int],
                      real: bool = False) -> int:
    """Support bins that share a congruence class with another support bin
    in every channel.

    In real mode ``support_bins`` are positive and their mirrors count as
    support too; only the positive bins are counted.
    """
    bins = np.asarray(sorted(set(int(b) for b in support_bins)), dtype=np.int64)
    if len(bins) == 0:
        return 0
    full = np.union1d(bins, -bins) if real else bins
    aliased = np.ones(len(bins), bool)
    for m in m_values:
        classes, counts = np.unique(full % m, return_counts=True)
        shared = classes[counts >= 2]
        aliased &= np.isin(bins % m, shared)
    return int(aliased.sum())


def support_condition(samples, support_bins: Sequence[int], m_total: int) -> float:
    """Condition number of the system restricted to the true support.

    Only the matrix matters, so every row touching a support column is
    kept. Real mode returns the larger of the real-part and imaginary-part
    values.
    """
    real = samples[0].real
    bins = np.asarray(support_bins, dtype=np.int64)
    if real:
        full = FoldingMatrix(tuple(s.config for s in samples), m_total, real=True)
        mask = np.zeros(full.grid_size, bool)
        mask[bins + full.grid_size // 2] = True
        mask[-bins + full.grid_size // 2] = True
        split = build_real_split(full, samples, SupportMask(mask, real=True),
                                 keep_rows="touching")
        return max(matrix_condition(a) for a in (split.matrix_real, split.matrix_imag)
                   if a.shape[1])
    mask = np.zeros(m_total, bool)
    mask[bins] = True
    matrix, stacked = concatenate_system(
        [FoldingMatrix((s.config,), m_total) for s in samples], samples)
    return condition_diagnostics(
        reduce_system(matrix, stacked, SupportMask(mask), keep_rows="touching"))


def _band_bins(bands) -> np.ndarray:
    return np.concatenate([np.arange(a, b + 1) for a, b in bands])


def _score(cfg: ExperimentConfig, truth, estimate, bands):
    if cfg.mode == "real":
        x, y = truth.positive(), estimate.positive()
    else:
        x, y = truth.values, estimate.values
    diff = np.abs(y - x)
    if cfg.success_rule == "per_band_l2":
        errors = [float(np.sqrt(np.mean(diff[a:b + 1] ** 2))) for a, b in bands]
    else:
        errors = [float(np.mean(diff[a:b + 1])) for a, b in bands]
    if cfg.mode == "real":
        # mean over the whole signed grid
        mean_error = float(np.mean(np.abs(estimate.values - truth.values)))
    else:
        mean_error = float(np.mean(diff))
    if cfg.success_rule == "perfect":
        ok = mean_error < PERFECT_TOLERANCE
    else:
        limit = (cfg.l1_threshold if cfg.success_rule == "per_band_l1"
                 else cfg.l2_threshold) * cfg.noise_sigma
        ok = all(e < limit for e in errors)
    return ok, errors, mean_error


def run_trial(cfg: ExperimentConfig, rng, f_landau: Optional[float] = None,
              trial_id: int = 0) -> TrialRecord:
    """Generate, fold, reconstruct and score one random signal.

    Stage errors become a failed record with ``reason`` set.
    """
    if f_landau is None:
        f_landau = cfg.points()[0]
    width = cfg.width_bins(f_landau)
    channels = cfg.channel_configs()
    real = cfg.mode == "real"
    try:
        if real:
            truth, bands = generate_real_signal(cfg.m_total, cfg.delta_f,
                                                cfg.band_count, width, rng)
        else:
            truth, bands = generate_complex_signal(cfg.m_total, cfg.delta_f,
                                                   cfg.band_count, width, rng)
    except PlacementError as exc:
        return TrialRecord(trial_id, f_landau, False, False, False, None, 0, 0.0,
                           reason=f"placement: {exc}")
    support = _band_bins(bands)
    if real:
        support = support[np.abs(truth.positive()[support]) > 0]
    aliased = aliased_bin_count(support, [c.m_i for c in channels], real)
    observed = add_noise(truth, cfg.noise_sigma, rng)
    samples = fold_all(observed, channels)
    known = support_condition(samples, support, cfg.m_total)
    known = float(known) if math.isfinite(known) else None
    try:
        rep = reconstruct(samples, cfg.m_total, cfg.detector, cfg.solver)
    except NoSignalDetected as exc:
        return TrialRecord(trial_id, f_landau, False, False, False, None, aliased, 0.0,
                           reason=f"no_signal: {exc}", support_condition_number=known)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return TrialRecord(trial_id, f_landau, False, False, False, None, aliased, 0.0,
                           reason=f"solver: {exc}", support_condition_number=known)
    ok, errors, mean_error = _score(cfg, truth, rep.spectrum, bands)
    cond = rep.condition_number
    reason = "" if ok else ("not_converged" if not rep.converged else "error_threshold")
    return TrialRecord(
        trial_id=trial_id, f_landau=f_landau, success=bool(ok),
        ill_posed=bool(rep.ill_posed), converged=bool(rep.converged),
        condition_number=float(cond) if math.isfinite(cond) else None,
        aliased_bin_count=aliased, runtime=rep.runtime,
        band_errors=errors, mean_error=mean_error, reason=reason,
        support_condition_number=known,
    )


def _run_one(args):
    cfg, point_index, f_landau, trial = args
    rng = np.random.default_rng([cfg.seed, point_index, trial])
    return run_trial(cfg, rng, f_landau, trial)


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: dict  # F_Landau -> list of TrialRecord

    def rows(self) -> list:
        """One aggregate row per sweep point."""
        out = []
        for point, recs in self.records.items():
            n = len(recs)
            conds = np.array([r.condition_number for r in recs
                              if r.condition_number is not None])
            known = np.array([r.support_condition_number for r in recs
                              if r.support_condition_number is not None])
            eff = self.config.effective_landau(point)
            out.append({
                "f_landau": point,
                "effective_f_landau": eff,
                "ratio": self.config.f_total / point,
                "effective_ratio": self.config.f_total / eff,
                "width_bins": self.config.width_bins(point),
                "trials": n,
                "success_rate": sum(r.success for r in recs) / n,
                "ill_posed_rate": sum(r.ill_posed for r in recs) / n,
                "ill_posed_success_rate": sum(r.ill_posed and r.success for r in recs) / n,
                "cond_mean": float(conds.mean()) if len(conds) else None,
                "cond_median": float(np.median(conds)) if len(conds) else None,
                "cond_max": float(conds.max()) if len(conds) else None,
                "cond_infinite": n - len(conds),
                "support_cond_mean": float(known.mean()) if len(known) else None,
                "support_cond_max": float(known.max()) if len(known) else None,
                "mean_aliased_bins": float(np.mean([r.aliased_bin_count for r in recs])),
            })
        return out

    def timing_rows(self) -> list:
        return [{"f_landau": p, "ratio": self.config.f_total / p,
                 "mean_runtime": float(np.mean([r.runtime for r in recs]))}
                for p, recs in self.records.items()]

    def csv_text(self) -> str:
        return _csv(self.rows())

    def timing_csv_text(self) -> str:
        return _csv(self.timing_rows())

    def json_text(self, include_runtime: bool = False) -> str:
        doc = {
            "config": self.config.to_dict(),
            "points": [{"f_landau": p,
                        "trials": [r.to_dict(include_runtime) for r in recs]}
                       for p, recs in self.records.items()],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _csv(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
    return buf.getvalue()


def run_sweep(cfg: ExperimentConfig, workers: int = 1, progress=None) -> SweepResult:
    """All trials of all sweep points; ``workers > 1`` uses a process pool."""
    verdict = check_unique_columns(cfg.channel_configs(), cfg.m_total)
    if not verdict.ok:
        raise ConfigError(f"channel grid repeats after {verdict.lcm} bins, "
                          f"grid has {cfg.m_total}")
    jobs = [(cfg, p, f, t) for p, f in enumerate(cfg.points()) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            if progress is not None:
                progress(len(results), len(jobs))
    records = {f: [] for f in cfg.points()}
    for (_, _, f, _), rec in zip(jobs, results):
        records[f].append(rec)
    return SweepResult(cfg, records)
