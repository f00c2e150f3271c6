"""End-to-end reconstruction from per-channel basebands."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .grid import ChannelSamples, FoldingMatrix, SpectrumGrid, concatenate_system
from .realvalued import build_real_split, solve_real
from .solver import SolveConfig, solve
from .support import (DetectorConfig, ReducedSystem, SupportMask, baseband_flags,
                      detect_support, noise_floor, reduce_system, split_blocks)


@dataclass
class ReconstructionReport:
    spectrum: SpectrumGrid
    mask: SupportMask
    blocks: tuple
    ill_posed: bool
    converged: bool
    iterations: int
    residual_norm: float
    condition_number: float
    selected_bins: tuple
    runtime: float
    system_shape: tuple
    details: object = field(default=None, repr=False)

    def summary(self) -> dict:
        cond = float(self.condition_number)
        return {
            "ill_posed": bool(self.ill_posed),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual_norm": float(self.residual_norm),
            "condition_number": cond if np.isfinite(cond) else None,
            "candidate_bins": int(self.mask.mask.sum()),
            "blocks": len(self.blocks),
            "system_shape": [int(n) for n in self.system_shape],
            "runtime": float(self.runtime),
        }


def noise_residual_threshold(system: ReducedSystem, floors: Sequence[float],
                             channel_m: Sequence[int], factor: float,
                             part: str = "complex") -> float:
    """``factor`` times the expected residual energy of pure noise.

    ``floors[i]`` is the noise energy per baseband bin of channel ``i``.
    The real or imaginary part of a bin carries half of it, except that the
    real part of the self-mirrored bins ``k = 0`` and ``k = M_i/2`` carries
    all of it.
    """
    total = 0.0
    for ch, k in system.row_map:
        if part == "complex" or (part == "real" and k in (0, channel_m[ch] // 2)):
            total += floors[ch]
        else:
            total += floors[ch] / 2
    return factor * total


def reconstruct(samples: Sequence[ChannelSamples], m_total: int,
                detector: DetectorConfig = DetectorConfig(),
                solver_cfg: SolveConfig = SolveConfig(),
                mask: Optional[SupportMask] = None) -> ReconstructionReport:
    """Detect the support, reduce the system and invert it.

    Supplying ``mask`` skips detection (known band locations); rows are then
    still filtered by the baseband flags. In noisy mode the OMP threshold is
    raised to ``noise_residual_factor`` times the residual energy expected
    from the estimated noise floor.

    Raises :class:`~smrs.support.NoSignalDetected` when the candidate
    support is empty.
    """
    if not samples:
        raise ValueError("no channel samples")
    real = samples[0].real
    if any(s.real != real for s in samples):
        raise ValueError("all channels must use the same grid mode")
    delta_f = samples[0].config.delta_f
    if any(s.config.delta_f != delta_f for s in samples):
        raise ValueError("all channels must share delta_f")
    if mask is None:
        mask = detect_support(samples, detector, m_total)
    flags = [baseband_flags(s, detector) for s in samples]
    keep_rows = "touching" if detector.noisy else "flagged"
    channel_m = [s.config.m_i for s in samples]
    noise_eps = solver_cfg.noisy_mode and solver_cfg.noise_residual_factor > 0
    floors = [noise_floor(s, detector) for s in samples] if noise_eps else None

    if real:
        blocks = mask.positive_blocks()
        if solver_cfg.noisy_mode:
            blocks = split_blocks(blocks, solver_cfg.subblock_bins(delta_f))
        full = FoldingMatrix(tuple(s.config for s in samples), m_total, real=True)
        split = build_real_split(full, samples, mask, flags, keep_rows)
        thresholds = None
        if noise_eps:
            k = solver_cfg.noise_residual_factor
            thresholds = tuple(
                max(solver_cfg.omp_threshold,
                    noise_residual_threshold(part, floors, channel_m, k, name))
                for part, name in ((split.real, "real"), (split.imag, "imag")))
        start = time.perf_counter()
        spectrum, rep = solve_real(split, solver_cfg, blocks, thresholds)
        runtime = time.perf_counter() - start
        selected = sorted(set(rep.selected_bins_real) | set(rep.selected_bins_imag))
        return ReconstructionReport(
            spectrum=spectrum, mask=mask, blocks=blocks,
            ill_posed=rep.ill_posed, converged=rep.converged,
            iterations=rep.iterations, residual_norm=rep.residual_norm,
            condition_number=rep.condition_number, selected_bins=tuple(selected),
            runtime=runtime,
            system_shape=(split.real.shape[0] + split.imag.shape[0],
                          split.real.shape[1] + split.imag.shape[1]),
            details=rep,
        )

    blocks = mask.blocks
    if solver_cfg.noisy_mode:
        blocks = split_blocks(blocks, solver_cfg.subblock_bins(delta_f))
    matrix, stacked = concatenate_system(
        [FoldingMatrix((s.config,), m_total) for s in samples], samples)
    system = reduce_system(matrix, stacked, mask, np.concatenate(flags), keep_rows)
    cfg = solver_cfg
    if noise_eps:
        eps = noise_residual_threshold(system, floors, channel_m,
                                       solver_cfg.noise_residual_factor)
        cfg = replace(solver_cfg, omp_threshold=max(solver_cfg.omp_threshold, eps))
    col_blocks = system.block_columns(blocks)
    start = time.perf_counter()
    out = solve(system, col_blocks, cfg)
    runtime = time.perf_counter() - start
    if out.ill_posed:
        chosen = [col_blocks[j] for j in out.selected_blocks]
        cols = np.concatenate(chosen) if chosen else np.zeros(0, int)
    else:
        cols = np.arange(system.shape[1])
    return ReconstructionReport(
        spectrum=SpectrumGrid(delta_f, m_total, system.scatter(out.solution, m_total)),
        mask=mask, blocks=blocks,
        ill_posed=out.ill_posed, converged=out.converged,
        iterations=out.iterations, residual_norm=out.residual_norm,
        condition_number=out.condition_number,
        selected_bins=tuple(int(b) for b in np.sort(system.column_map[cols])),
        runtime=runtime, system_shape=system.shape, details=out,
    )
