"""Discrete frequency grids and the congruence folding operator.

Complex-mode grids index bins ``k = 0 .. M-1`` (``f = k * delta_f``).
Real-mode grids index signed bins ``k = -K .. K`` with ``K = M // 2`` and
are stored with an offset of ``K`` so that ``values[k + K] = X[k]``.
A real-mode channel baseband covers ``k = -M_i/2 .. M_i/2`` (length
``M_i + 1``); its two edge bins are congruent and hold the same value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence

import numpy as np

# Channel rates enter the fold (and therefore every matrix entry) in GHz.
# This keeps baseband magnitudes O(1) so an absolute OMP threshold such as
# 1e-20 sits well above double-precision round-off.
GAIN_UNIT = 1e9


def bin_count(span: float, delta_f: float) -> int:
    """Number of grid bins ``ceil(span / delta_f)``, robust to float noise."""
    ratio = span / delta_f
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, abs(ratio)):
        return int(nearest)
    return int(math.ceil(ratio))


@dataclass(frozen=True)
class ChannelConfig:
    """One sampling channel running at ``rate = m_i * delta_f``."""

    m_i: int
    delta_f: float

    def __post_init__(self):
        if int(self.m_i) != self.m_i or self.m_i < 1:
            raise ValueError(f"m_i must be a positive integer, got {self.m_i!r}")
        if not self.delta_f > 0:
            raise ValueError("delta_f must be positive")
        object.__setattr__(self, "m_i", int(self.m_i))

    @classmethod
    def from_rate(cls, rate: float, delta_f: float) -> "ChannelConfig":
        ratio = rate / delta_f
        m_i = round(ratio)
        if m_i < 1 or abs(ratio - m_i) > 1e-9 * ratio:
            raise ValueError(
                f"rate {rate:g} Hz is not an integer multiple of delta_f {delta_f:g} Hz"
            )
        return cls(m_i, delta_f)

    @property
    def rate(self) -> float:
        return self.m_i * self.delta_f

    @property
    def gain(self) -> float:
        return self.rate / GAIN_UNIT

    def baseband_length(self, real: bool = False) -> int:
        return self.m_i + 1 if real else self.m_i

    def require_real_compatible(self) -> None:
        if self.m_i % 2:
            raise ValueError(f"real-signal mode needs an even m_i, got {self.m_i}")


class SpectrumGrid:
    """Uniformly discretized spectrum.

    Parameters
    ----------
    delta_f : float
        Bin spacing in Hz.
    m_total : int
        Bin count ``M``. A complex grid stores ``M`` values, a real grid
        stores ``2 * (M // 2) + 1`` values on the signed index range.
    values : array_like
        Complex amplitudes in storage order.
    real : bool
        Signed, conjugate-symmetric grid of a real-valued signal.
    """

    __slots__ = ("delta_f", "m_total", "real", "_values")

    def __init__(self, delta_f: float, m_total: int, values, real: bool = False):
        if not delta_f > 0:
            raise ValueError("delta_f must be positive")
        if m_total < 1:
            raise ValueError("m_total must be >= 1")
        values = np.array(values, dtype=complex)
        expected = 2 * (m_total // 2) + 1 if real else m_total
        if values.shape != (expected,):
            raise ValueError(f"expected {expected} values, got shape {values.shape}")
        if real:
            if not np.array_equal(values, np.conj(values[::-1])):
                raise ValueError("real-signal grid must satisfy X[-k] == conj(X[k])")
        values.setflags(write=False)
        self.delta_f = float(delta_f)
        self.m_total = int(m_total)
        self.real = bool(real)
        self._values = values

    @classmethod
    def zeros(cls, delta_f: float, m_total: int, real: bool = False) -> "SpectrumGrid":
        n = 2 * (m_total // 2) + 1 if real else m_total
        return cls(delta_f, m_total, np.zeros(n, complex), real)

    @classmethod
    def from_positive(cls, delta_f: float, m_total: int, positive) -> "SpectrumGrid":
        """Real-mode grid from bins ``0 .. M//2``; negative bins are mirrored.

        The imaginary part of the DC bin is discarded.
        """
        positive = np.array(positive, dtype=complex)
        half = m_total // 2
        if positive.shape != (half + 1,):
            raise ValueError(f"expected {half + 1} positive bins, got {positive.shape}")
        positive[0] = positive[0].real
        values = np.concatenate([np.conj(positive[:0:-1]), positive])
        return cls(delta_f, m_total, values, real=True)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def offset(self) -> int:
        return self.m_total // 2 if self.real else 0

    @property
    def indices(self) -> np.ndarray:
        """Signed bin index of every stored value."""
        return np.arange(len(self._values)) - self.offset

    @property
    def frequencies(self) -> np.ndarray:
        return self.indices * self.delta_f

    def positive(self) -> np.ndarray:
        """Bins ``0 .. M//2`` of a real grid (all bins for a complex grid)."""
        return self._values[self.offset:]

    def with_values(self, values) -> "SpectrumGrid":
        return SpectrumGrid(self.delta_f, self.m_total, values, self.real)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        kind = "real" if self.real else "complex"
        return f"SpectrumGrid({kind}, M={self.m_total}, delta_f={self.delta_f:g})"


@dataclass(frozen=True)
class ChannelSamples:
    """Baseband spectrum of one channel.

    ``baseband[j]`` is bin ``j`` in complex mode and bin ``j - m_i/2`` in
    real mode.
    """

    config: ChannelConfig
    baseband: np.ndarray
    real: bool = False

    def __post_init__(self):
        arr = np.array(self.baseband, dtype=complex)
        if self.real:
            self.config.require_real_compatible()
        if arr.shape != (self.config.baseband_length(self.real),):
            raise ValueError(
                f"baseband length {arr.shape} does not match m_i={self.config.m_i}"
                f" ({'real' if self.real else 'complex'} mode)"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "baseband", arr)

    @property
    def offset(self) -> int:
        return self.config.m_i // 2 if self.real else 0

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self.baseband)) - self.offset


def residue_index(bins: np.ndarray, m_i: int, real: bool) -> np.ndarray:
    """Storage position in a channel baseband that each grid bin folds onto.

    Real mode maps onto ``0 .. m_i - 1`` (signed ``-m_i/2 .. m_i/2 - 1``);
    the duplicated upper edge bin ``+m_i/2`` is filled separately.
    """
    bins = np.asarray(bins)
    if real:
        return (bins + m_i // 2) % m_i
    return bins % m_i


def fold_spectrum(signal: SpectrumGrid, channel: ChannelConfig) -> ChannelSamples:
    """Sample ``signal`` with ``channel``: ``X_i[k] = F_i * sum_{l = k mod M_i} X[l]``.

    Replicas are accumulated in ascending bin order, so the result is
    reproducible bit for bit.
    """
    if signal.real:
        channel.require_real_compatible()
    m_i = channel.m_i
    idx = residue_index(signal.indices, m_i, signal.real)
    vals = signal.values
    folded = (np.bincount(idx, weights=vals.real, minlength=m_i)
              + 1j * np.bincount(idx, weights=vals.imag, minlength=m_i))
    folded = folded * channel.gain
    if signal.real:
        folded = np.append(folded, folded[0])
    return ChannelSamples(channel, folded, signal.real)


@dataclass(frozen=True)
class FoldingMatrix:
    """Implicit aliasing matrix of one or more stacked channels.

    Entry ``(k, l)`` of the block of channel ``i`` is ``F_i`` when grid bin
    ``l`` folds onto baseband bin ``k`` and zero otherwise. Only the channel
    list and the retained column set are stored; :meth:`dense` materializes.
    """

    channels: tuple
    m_total: int
    real: bool = False
    retained_columns: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise ValueError("at least one channel is required")
        if self.m_total < 1:
            raise ValueError("m_total must be >= 1")
        if self.real:
            for ch in self.channels:
                ch.require_real_compatible()
        if self.retained_columns is not None:
            cols = np.asarray(self.retained_columns, dtype=int)
            cols.setflags(write=False)
            object.__setattr__(self, "retained_columns", cols)

    @property
    def offset(self) -> int:
        return self.m_total // 2 if self.real else 0

    @property
    def grid_size(self) -> int:
        return 2 * (self.m_total // 2) + 1 if self.real else self.m_total

    @property
    def column_bins(self) -> np.ndarray:
        """Signed grid bin of every column."""
        if self.retained_columns is not None:
            return self.retained_columns.copy()
        return np.arange(self.grid_size) - self.offset

    @property
    def row_counts(self) -> list:
        return [ch.baseband_length(self.real) for ch in self.channels]

    @property
    def shape(self) -> tuple:
        return sum(self.row_counts), len(self.column_bins)

    def row_map(self) -> list:
        """``(channel position, signed baseband bin)`` of every row."""
        rows = []
        for i, ch in enumerate(self.channels):
            off = ch.m_i // 2 if self.real else 0
            rows.extend((i, j - off) for j in range(ch.baseband_length(self.real)))
        return rows

    def restrict(self, columns) -> "FoldingMatrix":
        """Same channels with only the given signed grid bins as columns."""
        return FoldingMatrix(self.channels, self.m_total, self.real,
                             np.asarray(columns, dtype=int))

    def block(self, channel_pos: int) -> np.ndarray:
        ch = self.channels[channel_pos]
        bins = self.column_bins
        rows = ch.baseband_length(self.real)
        out = np.zeros((rows, len(bins)))
        target = residue_index(bins, ch.m_i, self.real)
        out[target, np.arange(len(bins))] = ch.gain
        if self.real:
            # upper edge bin +m_i/2 repeats the lower edge -m_i/2
            out[-1] = out[0]
        return out

    def dense(self) -> np.ndarray:
        return np.vstack([self.block(i) for i in range(len(self.channels))])

    def apply(self, x) -> np.ndarray:
        """Matrix-vector product with a vector over the retained columns."""
        x = np.asarray(x, dtype=complex)
        bins = self.column_bins
        if x.shape != (len(bins),):
            raise ValueError(f"vector length {x.shape} does not match {len(bins)} columns")
        parts = []
        for ch in self.channels:
            idx = residue_index(bins, ch.m_i, self.real)
            y = (np.bincount(idx, weights=x.real, minlength=ch.m_i)
                 + 1j * np.bincount(idx, weights=x.imag, minlength=ch.m_i)) * ch.gain
            if self.real:
                y = np.append(y, y[0])
            parts.append(y)
        return np.concatenate(parts)


def build_channel_matrix(channel: ChannelConfig, m_total: int, real: bool = False) -> FoldingMatrix:
    if m_total < 1:
        raise ValueError("m_total must be >= 1")
    return FoldingMatrix((channel,), m_total, real)


def concatenate_system(blocks: Sequence[FoldingMatrix],
                       samples: Sequence[ChannelSamples]) -> tuple:
    """Stack per-channel blocks and sample vectors in channel order.

    Returns ``(matrix, stacked)`` where ``stacked`` has one entry per row of
    ``matrix``.
    """
    if not blocks:
        raise ValueError("no blocks to concatenate")
    if len(blocks) != len(samples):
        raise ValueError(f"{len(blocks)} blocks but {len(samples)} sample vectors")
    m_total = blocks[0].m_total
    real = blocks[0].real
    channels = []
    for b in blocks:
        if b.m_total != m_total or b.real != real:
            raise ValueError("all blocks must share m_total and grid mode")
        if b.retained_columns is not None:
            raise ValueError("concatenate full blocks before restricting columns")
        channels.extend(b.channels)
    configs = [s.config for s in samples]
    if len(configs) != len(channels):
        raise ValueError("each channel needs exactly one sample vector")
    for ch, s in zip(channels, samples):
        if ch != s.config:
            raise ValueError(f"channel order mismatch: matrix has m_i={ch.m_i}, "
                             f"samples have m_i={s.config.m_i}")
        if s.real != real:
            raise ValueError("sample mode does not match the matrix grid mode")
    matrix = FoldingMatrix(tuple(channels), m_total, real)
    stacked = np.concatenate([s.baseband for s in samples])
    return matrix, stacked


def fold_all(signal: SpectrumGrid, channels: Sequence[ChannelConfig]) -> list:
    return [fold_spectrum(signal, ch) for ch in channels]


@dataclass(frozen=True)
class UniquenessVerdict:
    ok: bool
    lcm: int
    max_supported_bins: int
    duplicate_columns: Optional[tuple] = None


def check_unique_columns(channels: Sequence[ChannelConfig], m_total: int) -> UniquenessVerdict:
    """Whether every grid column of the stacked matrix is distinct.

    Columns repeat with period ``lcm(M_1, .., M_P)``. The check covers bins
    ``0 .. m_total`` inclusive, since a band edge may sit exactly at
    ``F_max``, so it passes iff ``m_total < lcm``. On failure the first
    coinciding pair ``(0, lcm)`` is returned as a witness.
    """
    if not channels:
        raise ValueError("at least one channel is required")
    period = reduce(math.lcm, (ch.m_i for ch in channels))
    ok = m_total < period
    return UniquenessVerdict(ok, period, period - 1, None if ok else (0, period))
