"""Support detection and reduction of the stacked aliasing system."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .grid import ChannelSamples, FoldingMatrix, residue_index


class NoSignalDetected(ValueError):
    """The detected support is empty, so there is nothing to solve for."""


@dataclass(frozen=True)
class DetectorConfig:
    """Settings for turning basebands into per-channel indicators.

    ``energy_threshold=None`` estimates the noise floor per channel: the
    ``noise_quantile`` quantile of the window energies is matched to the
    same quantile of a pure-noise window (a Gamma variate with shape equal
    to the window length), and the threshold is ``threshold_factor`` times
    that floor.
    """

    mode: str = "noiseless"
    energy_window: float = 100e6
    energy_threshold: Optional[float] = None
    threshold_factor: float = 1.3
    noise_quantile: float = 0.1
    widen_fraction: float = 0.0
    zero_tolerance: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("noiseless", "noisy"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.widen_fraction < 0:
            raise ValueError("widen_fraction must be >= 0")
        if not self.energy_window > 0:
            raise ValueError("energy_window must be positive")
        if not 0 < self.noise_quantile < 1:
            raise ValueError("noise_quantile must lie in (0, 1)")

    @property
    def noisy(self) -> bool:
        return self.mode == "noisy"

    def window_bins(self, delta_f: float) -> int:
        if self.energy_window < delta_f * (1 - 1e-9):
            raise ValueError("energy_window must be at least one bin wide")
        return max(1, int(math.floor(self.energy_window / delta_f + 0.5)))


def _blocks_from_mask(mask: np.ndarray, offset: int) -> tuple:
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, stops = edges[::2], edges[1::2]
    return tuple((int(a) - offset, int(b) - 1 - offset) for a, b in zip(starts, stops))


@dataclass(frozen=True)
class SupportMask:
    """Candidate support ``chi[l]`` over a full grid.

    ``blocks`` are maximal runs of true bins as inclusive ``(first, last)``
    signed bin pairs, sorted and disjoint.
    """

    mask: np.ndarray
    real: bool = False
    blocks: tuple = field(init=False)

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if self.real and len(m) % 2 == 0:
            raise ValueError("a real-mode mask covers an odd number of signed bins")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "blocks", _blocks_from_mask(m, self.offset))

    @property
    def offset(self) -> int:
        return len(self.mask) // 2 if self.real else 0

    @property
    def bins(self) -> np.ndarray:
        return np.flatnonzero(self.mask) - self.offset

    def positive_blocks(self) -> tuple:
        """Blocks clipped to bins ``>= 0``."""
        out = []
        for a, b in self.blocks:
            if b >= 0:
                out.append((max(a, 0), b))
        return tuple(out)

    def __len__(self):
        return len(self.mask)


def _window_energy(energy: np.ndarray, width: int) -> np.ndarray:
    """Circular moving average centered on each bin."""
    lo = -((width - 1) // 2)
    acc = np.zeros_like(energy)
    for shift in range(lo, lo + width):
        acc += np.roll(energy, -shift)
    return acc / width


def _periodic_energy(samples: ChannelSamples) -> np.ndarray:
    # one entry per distinct baseband bin (the real-mode upper edge repeats)
    return np.abs(samples.baseband[:samples.config.m_i]) ** 2


def noise_floor(samples: ChannelSamples, cfg: DetectorConfig) -> float:
    """Estimated noise energy ``E|n|^2`` per baseband bin.

    The ``cfg.noise_quantile`` quantile of the windowed energies is matched
    to the same quantile of a window holding only circular Gaussian noise,
    whose mean energy is a Gamma variate with shape equal to the window
    length. Occupied bins only push the estimate up if they fill more than
    the lower quantile of the baseband.
    """
    width = cfg.window_bins(samples.config.delta_f)
    window = _window_energy(_periodic_energy(samples), width)
    q = cfg.noise_quantile
    return float(np.quantile(window, q) / (stats.gamma.ppf(q, width) / width))


def baseband_flags(samples: ChannelSamples, cfg: DetectorConfig) -> np.ndarray:
    """Which baseband bins carry signal, in baseband storage order.

    Real-mode flags are symmetric in the signed baseband index.
    """
    m_i = samples.config.m_i
    energy = _periodic_energy(samples)
    if not cfg.noisy:
        peak = energy.max(initial=0.0)
        flags = energy > cfg.zero_tolerance ** 2 * peak if peak > 0 else np.zeros(m_i, bool)
    else:
        window = _window_energy(energy, cfg.window_bins(samples.config.delta_f))
        threshold = cfg.energy_threshold
        if threshold is None:
            threshold = cfg.threshold_factor * noise_floor(samples, cfg)
        flags = window > threshold
    if samples.real:
        # storage position j holds signed bin j - m_i/2; mirror is m_i - j
        mirror = (m_i - np.arange(m_i)) % m_i
        flags = flags | flags[mirror]
        flags = np.append(flags, flags[0])
    return flags


def channel_indicator(samples: ChannelSamples, cfg: DetectorConfig, m_total: int) -> np.ndarray:
    """Periodic extension of the baseband flags over the full grid."""
    flags = baseband_flags(samples, cfg)
    if samples.real:
        half = m_total // 2
        bins = np.arange(-half, half + 1)
    else:
        bins = np.arange(m_total)
    return flags[residue_index(bins, samples.config.m_i, samples.real)]


def intersect_indicators(per_channel: Sequence[np.ndarray], real: bool = False) -> SupportMask:
    if not per_channel:
        raise ValueError("need at least one indicator")
    lengths = {len(m) for m in per_channel}
    if len(lengths) != 1:
        raise ValueError(f"indicators differ in length: {sorted(lengths)}")
    mask = np.logical_and.reduce([np.asarray(m, bool) for m in per_channel])
    return SupportMask(mask, real)


def widen_mask(mask: SupportMask, widen_fraction: float) -> SupportMask:
    """Grow every block by ``round(widen_fraction * width)`` bins per side."""
    if widen_fraction < 0:
        raise ValueError("widen_fraction must be >= 0")
    if widen_fraction == 0:
        return mask
    out = np.zeros(len(mask), bool)
    off, n = mask.offset, len(mask)
    for a, b in mask.blocks:
        w = int(math.floor(widen_fraction * (b - a + 1) + 0.5))
        lo = max(a - w + off, 0)
        hi = min(b + w + off, n - 1)
        out[lo:hi + 1] = True
    return SupportMask(out, mask.real)


def detect_support(samples: Sequence[ChannelSamples], cfg: DetectorConfig,
                   m_total: int) -> SupportMask:
    """Indicators per channel, intersected, then widened by ``cfg``."""
    real = samples[0].real
    per_channel = [channel_indicator(s, cfg, m_total) for s in samples]
    return widen_mask(intersect_indicators(per_channel, real), cfg.widen_fraction)


def split_blocks(blocks: Sequence[tuple], width_bins: int) -> tuple:
    """Cut each block into consecutive pieces of at most ``width_bins`` bins."""
    if width_bins < 1:
        raise ValueError("sub-block width must be at least one bin")
    out = []
    for a, b in blocks:
        for start in range(a, b + 1, width_bins):
            out.append((start, min(start + width_bins - 1, b)))
    return tuple(out)


@dataclass(frozen=True)
class ReducedSystem:
    """Stacked system restricted to candidate columns and informative rows.

    ``column_map[j]`` is the signed grid bin of column ``j``;
    ``row_map[r]`` is ``(channel position, signed baseband bin)``.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    column_map: np.ndarray
    row_map: tuple

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def block_columns(self, blocks: Sequence[tuple]) -> list:
        """Column positions covered by each ``(first, last)`` bin block.

        Blocks that contain no retained column are dropped.
        """
        out = []
        for a, b in blocks:
            cols = np.flatnonzero((self.column_map >= a) & (self.column_map <= b))
            if len(cols):
                out.append(cols)
        return out

    def scatter(self, solution, size: int, offset: int = 0) -> np.ndarray:
        """Full-grid vector with ``solution`` placed on the retained bins."""
        full = np.zeros(size, dtype=np.result_type(solution, complex))
        full[self.column_map + offset] = solution
        return full


def reduce_system(full: FoldingMatrix, stacked, mask: SupportMask,
                  row_flags: Optional[np.ndarray] = None,
                  keep_rows: str = "flagged") -> ReducedSystem:
    """Drop columns off the support, then uninformative rows.

    ``keep_rows="flagged"`` keeps exactly the rows whose baseband bin is
    flagged in ``row_flags`` (noiseless elimination; without flags every
    nonzero sample counts as flagged). ``keep_rows="touching"`` keeps every
    row with a nonzero entry in a retained column, which is what noisy data
    needs: a quiet row still pins widened columns near zero.
    """
    if len(mask) != full.grid_size:
        raise ValueError(f"mask covers {len(mask)} bins, grid has {full.grid_size}")
    stacked = np.asarray(stacked, dtype=complex)
    if stacked.shape != (full.shape[0],):
        raise ValueError("stacked sample vector does not match the matrix rows")
    columns = mask.bins
    if len(columns) == 0:
        raise NoSignalDetected("no candidate support bins")
    sub = full.restrict(columns)
    dense = sub.dense()
    if keep_rows == "flagged":
        if row_flags is None:
            row_flags = stacked != 0
        keep = np.asarray(row_flags, bool)
        if keep.shape != stacked.shape:
            raise ValueError("row_flags must have one entry per stacked row")
    elif keep_rows == "touching":
        keep = np.any(dense != 0, axis=1)
    else:
        raise ValueError(f"unknown row rule {keep_rows!r}")
    rows = np.flatnonzero(keep)
    row_map = full.row_map()
    return ReducedSystem(dense[rows], stacked[rows], columns,
                         tuple(row_map[r] for r in rows))
