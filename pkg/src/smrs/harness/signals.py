"""Random multiband test signals and additive spectral noise."""
from __future__ import annotations

import math

import numpy as np

from ..grid import SpectrumGrid


class PlacementError(RuntimeError):
    """Bands could not be placed without overlap."""


def _place_bands(rng, n_bands: int, width: int, lo: int, hi: int, max_tries: int) -> list:
    """``n_bands`` disjoint runs of ``width`` bins with starts in ``[lo, hi]``."""
    if hi < lo:
        raise PlacementError(f"a band of {width} bins does not fit on the grid")
    for _ in range(max_tries):
        starts = np.sort(rng.integers(lo, hi + 1, size=n_bands))
        if n_bands < 2 or np.all(np.diff(starts) >= width):
            return [(int(s), int(s) + width - 1) for s in starts]
    raise PlacementError(f"could not place {n_bands} disjoint bands of {width} bins "
                         f"after {max_tries} tries")


def generate_complex_signal(m_total: int, delta_f: float, n_bands: int, width_bins: int,
                            rng, energy_range=(1.0, 5.0), max_tries: int = 1000):
    """Bands of i.i.d. complex Gaussian bins, each scaled to ``||X_band||_2 = E``.

    ``E`` is drawn uniformly from ``energy_range`` per band. Returns the
    spectrum and the inclusive ``(first, last)`` bin range of every band.
    """
    if width_bins < 1:
        raise ValueError("band width must be at least one bin")
    bands = _place_bands(rng, n_bands, width_bins, 0, m_total - width_bins, max_tries)
    values = np.zeros(m_total, complex)
    for a, b in bands:
        x = rng.standard_normal(width_bins) + 1j * rng.standard_normal(width_bins)
        energy = rng.uniform(*energy_range)
        values[a:b + 1] = x * (energy / np.linalg.norm(x))
    return SpectrumGrid(delta_f, m_total, values), tuple(bands)


def generate_real_signal(m_total: int, delta_f: float, n_bands: int, width_bins: int,
                         rng, amplitude_range=(1.0, 1.2), max_tries: int = 1000):
    """Conjugate-symmetric signal with ``n_bands`` positive half-sine bands.

    A band ``(a, b]`` holds ``A sin(pi (f - a) / (b - a)) exp(j theta)`` on
    bins ``a+1 .. b`` with ``A ~ U(amplitude_range)`` and
    ``theta ~ U[0, 2 pi)``; it is mirrored onto negative frequencies and
    never contains DC. Returned band ranges are positive bins.
    """
    if width_bins < 1:
        raise ValueError("band width must be at least one bin")
    half = m_total // 2
    bands = _place_bands(rng, n_bands, width_bins, 1, half - width_bins + 1, max_tries)
    positive = np.zeros(half + 1, complex)
    steps = np.arange(1, width_bins + 1)
    envelope = np.sin(np.pi * steps / width_bins)
    envelope[-1] = 0.0  # sin(pi) is zero at the upper band edge
    for a, b in bands:
        amp = rng.uniform(*amplitude_range)
        theta = rng.uniform(0.0, 2 * math.pi)
        positive[a:b + 1] = amp * envelope * np.exp(1j * theta)
    return SpectrumGrid.from_positive(delta_f, m_total, positive), tuple(bands)


def add_noise(signal: SpectrumGrid, sigma: float, rng) -> SpectrumGrid:
    """Add circular complex Gaussian noise with ``E|n|^2 = sigma^2`` per bin.

    Real-mode noise is drawn on the positive bins and mirrored, so the
    result stays conjugate symmetric (DC gets real noise of variance
    ``sigma^2``).
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return signal
    scale = sigma / math.sqrt(2)
    if not signal.real:
        n = len(signal)
        noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        return signal.with_values(signal.values + noise)
    half = signal.m_total // 2
    noise = scale * (rng.standard_normal(half + 1) + 1j * rng.standard_normal(half + 1))
    noise[0] = sigma * rng.standard_normal()
    return SpectrumGrid.from_positive(signal.delta_f, signal.m_total,
                                      signal.positive() + noise)


def snr_db(sigma: float, f_max: float, reference_rate: float) -> float:
    """Post-sampling SNR ``10 log10(1 / (sigma sqrt(F_max / F_ref)))``."""
    return 10 * math.log10(1.0 / (sigma * math.sqrt(f_max / reference_rate)))
