"""Real-valued signals: split the stacked system into real and imaginary parts.

For a conjugate-symmetric spectrum only bins ``m = 0 .. M//2`` are unknown.
Baseband bin ``k`` of channel ``i`` (``0 <= k <= M_i/2``) receives

    F_i * sum_{m = k} X[m] + F_i * sum_{-m = k} conj(X[m])      (mod M_i)

so with ``P[k, m] = F_i [m = k]`` and ``N[k, m] = F_i [-m = k]``:

    Re X_i[k] = (P + N) Re X,     Im X_i[k] = (P - N) Im X.

The DC column appears once (it is its own mirror, ``N[:, 0] = 0``). Rows
``k = 0`` and ``k = M_i/2`` of the imaginary system vanish identically and
DC has no imaginary part, so both are left out of that system.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .grid import ChannelSamples, FoldingMatrix, SpectrumGrid
from .solver import (ILL_POSED, WELL_POSED, SolveConfig, SolveOutcome, block_omp,
                     classify_posedness, solve_direct)
from .support import NoSignalDetected, ReducedSystem, SupportMask


@dataclass(frozen=True)
class RealSplitSystem:
    """The pair of real-valued systems for the real and imaginary parts.

    ``column_map`` lists the retained positive bins (the columns of
    ``real``); ``imag`` uses the same bins without DC.
    """

    real: ReducedSystem
    imag: ReducedSystem
    column_map: np.ndarray
    m_total: int
    delta_f: float

    @property
    def matrix_real(self) -> np.ndarray:
        return self.real.matrix

    @property
    def matrix_imag(self) -> np.ndarray:
        return self.imag.matrix

    @property
    def rhs_real(self) -> np.ndarray:
        return self.real.rhs

    @property
    def rhs_imag(self) -> np.ndarray:
        return self.imag.rhs


def _channel_split(m_i: int, gain: float, cols: np.ndarray):
    half = m_i // 2
    k = np.arange(half + 1)[:, None]
    same = (cols[None, :] - k) % m_i == 0
    mirror = (cols[None, :] + k) % m_i == 0
    mirror &= cols[None, :] > 0
    pos = gain * same
    neg = gain * mirror
    return pos + neg, pos - neg


def build_real_split(full: FoldingMatrix, samples: Sequence[ChannelSamples],
                     mask: Optional[SupportMask] = None,
                     row_flags: Optional[Sequence[np.ndarray]] = None,
                     keep_rows: str = "flagged") -> RealSplitSystem:
    """Assemble ``A^r`` and ``A^im`` over the retained positive bins.

    ``row_flags`` holds one boolean array per channel in baseband storage
    order; rows whose positive baseband bin is unflagged are dropped under
    ``keep_rows="flagged"``. Without flags, every row is kept.
    ``keep_rows="touching"`` keeps rows with a nonzero in a retained column.
    """
    if not full.real:
        raise ValueError("the real split needs a signed (real-mode) folding matrix")
    if len(samples) != len(full.channels):
        raise ValueError("one sample vector per channel is required")
    for ch, s in zip(full.channels, samples):
        ch.require_real_compatible()
        if s.config != ch or not s.real:
            raise ValueError("samples must be real-mode and in matrix channel order")
    half_total = full.m_total // 2
    if mask is None:
        cols = np.arange(half_total + 1)
    else:
        if not mask.real or len(mask) != full.grid_size:
            raise ValueError("mask must be a real-mode mask over the full signed grid")
        cols = mask.bins[mask.bins >= 0]
    if len(cols) == 0:
        raise NoSignalDetected("no candidate support bins")

    re_rows, im_rows, re_rhs, im_rhs, re_map, im_map = [], [], [], [], [], []
    for i, (ch, s) in enumerate(zip(full.channels, samples)):
        half = ch.m_i // 2
        a_re, a_im = _channel_split(ch.m_i, ch.gain, cols)
        values = s.baseband[half:]
        if keep_rows == "flagged":
            keep = (np.ones(half + 1, bool) if row_flags is None
                    else np.asarray(row_flags[i], bool)[half:])
        elif keep_rows == "touching":
            keep = np.any(a_re != 0, axis=1)
        else:
            raise ValueError(f"unknown row rule {keep_rows!r}")
        for k in np.flatnonzero(keep):
            re_rows.append(a_re[k])
            re_rhs.append(values[k].real)
            re_map.append((i, int(k)))
            if 0 < k < half:
                im_rows.append(a_im[k])
                im_rhs.append(values[k].imag)
                im_map.append((i, int(k)))

    im_cols = cols > 0
    n = len(cols)
    re_mat = np.array(re_rows, float).reshape(-1, n)
    im_mat = np.array(im_rows, float).reshape(-1, n)[:, im_cols]
    return RealSplitSystem(
        real=ReducedSystem(re_mat, np.array(re_rhs, float), cols, tuple(re_map)),
        imag=ReducedSystem(im_mat, np.array(im_rhs, float), cols[im_cols], tuple(im_map)),
        column_map=cols,
        m_total=full.m_total,
        delta_f=full.channels[0].delta_f,
    )


@dataclass
class RealSolveReport:
    real: Optional[SolveOutcome]
    imag: Optional[SolveOutcome]
    support_disagreement: bool = False
    selected_bins_real: tuple = ()
    selected_bins_imag: tuple = ()

    @property
    def ill_posed(self) -> bool:
        return any(o is not None and o.ill_posed for o in (self.real, self.imag))

    @property
    def condition_number(self) -> float:
        conds = [o.condition_number for o in (self.real, self.imag) if o is not None]
        return max(conds) if conds else 1.0

    @property
    def iterations(self) -> int:
        return sum(o.iterations for o in (self.real, self.imag) if o is not None)

    @property
    def converged(self) -> bool:
        return all(o.converged for o in (self.real, self.imag) if o is not None)

    @property
    def residual_norm(self) -> float:
        parts = [o.residual_norm for o in (self.real, self.imag) if o is not None]
        return float(np.hypot.reduce(parts)) if parts else 0.0


def _solve_part(system: ReducedSystem, blocks: Sequence[tuple], cfg: SolveConfig):
    if system.matrix.shape[1] == 0:
        return None, ()
    if system.matrix.shape[0] == 0:
        # no equations: nothing can be recovered, report the zero solution
        zero = np.zeros(system.matrix.shape[1])
        return SolveOutcome(zero, ILL_POSED, condition_number=float("inf"),
                            converged=False), ()
    posedness = classify_posedness(system, cfg)
    if posedness == WELL_POSED:
        out = solve_direct(system, cfg)
        return out, tuple(int(c) for c in system.column_map)
    col_blocks = system.block_columns(blocks)
    out = block_omp(system, col_blocks, cfg, posedness=ILL_POSED)
    chosen = [col_blocks[j] for j in out.selected_blocks]
    bins = np.sort(system.column_map[np.concatenate(chosen)]) if chosen else []
    return out, tuple(int(c) for c in bins)


def solve_real(system: RealSplitSystem, cfg: SolveConfig, blocks: Sequence[tuple],
               omp_thresholds: Optional[tuple] = None):
    """Solve both split systems independently and rebuild the signed spectrum.

    ``blocks`` are inclusive ``(first, last)`` positive-bin intervals.
    ``omp_thresholds`` optionally overrides ``cfg.omp_threshold`` per part
    as ``(real, imag)``. Returns ``(SpectrumGrid, RealSolveReport)``; the
    spectrum is conjugate symmetric by construction.
    """
    cfg_re = cfg_im = cfg
    if omp_thresholds is not None:
        cfg_re = replace(cfg, omp_threshold=omp_thresholds[0])
        cfg_im = replace(cfg, omp_threshold=omp_thresholds[1])
    re_out, re_bins = _solve_part(system.real, blocks, cfg_re)
    im_out, im_bins = _solve_part(system.imag, blocks, cfg_im)
    positive = np.zeros(system.m_total // 2 + 1, dtype=complex)
    if re_out is not None:
        positive[system.real.column_map] += np.real(re_out.solution)
    if im_out is not None:
        positive[system.imag.column_map] += 1j * np.real(im_out.solution)
    spectrum = SpectrumGrid.from_positive(system.delta_f, system.m_total, positive)
    # only meaningful when both parts went through block OMP; DC carries no
    # imaginary part, so compare the selections off DC
    disagree = (re_out is not None and im_out is not None
                and re_out.ill_posed and im_out.ill_posed
                and tuple(b for b in re_bins if b > 0) != im_bins)
    report = RealSolveReport(re_out, im_out, disagree, re_bins, im_bins)
    return spectrum, report
