"""Config files, channel specs and the text baseband-spectra format.

Spectra file::

    # comments start with '#'
    delta_f 25e6
    mode complex            # or: real
    m_total 800
    channel 38
    0.25 -1.0               # real and imaginary part, one bin per line
    ...
    channel 40
    ...

A complex channel lists ``M_i`` bins for ``k = 0 .. M_i-1``; a real channel
lists ``M_i + 1`` bins for ``k = -M_i/2 .. M_i/2``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from ..grid import ChannelConfig, ChannelSamples, SpectrumGrid
from .experiment import ConfigError, ExperimentConfig


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def parse_channels(spec: str) -> list:
    """Comma-separated rates in Hz, e.g. ``0.95e9,1e9,1.05e9``."""
    try:
        rates = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad channel spec {spec!r}") from exc
    if not rates:
        raise ConfigError("empty channel spec")
    return rates


def read_spectra(path) -> tuple:
    """Parse a spectra file into ``(samples, m_total)``."""
    header, channels, current = {}, [], None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0].lower()
        if key in ("delta_f", "mode", "m_total"):
            if channels:
                raise ConfigError(f"{path}:{lineno}: header after first channel")
            header[key] = parts[1] if len(parts) > 1 else ""
        elif key == "channel":
            current = (int(parts[1]), [])
            channels.append(current)
        else:
            if current is None:
                raise ConfigError(f"{path}:{lineno}: value before any channel")
            try:
                re_part, im_part = (float(v) for v in parts)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: expected 're im'") from exc
            current[1].append(complex(re_part, im_part))
    missing = {"delta_f", "m_total"} - set(header)
    if missing:
        raise ConfigError(f"{path}: missing header fields {sorted(missing)}")
    mode = header.get("mode", "complex")
    if mode not in ("complex", "real"):
        raise ConfigError(f"{path}: unknown mode {mode!r}")
    if not channels:
        raise ConfigError(f"{path}: no channels")
    delta_f = float(header["delta_f"])
    samples = []
    try:
        for m_i, values in channels:
            samples.append(ChannelSamples(ChannelConfig(m_i, delta_f),
                                          np.array(values, complex), real=mode == "real"))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return samples, int(header["m_total"])


def write_spectra(path, samples: Sequence[ChannelSamples], m_total: int) -> None:
    first = samples[0]
    lines = [f"delta_f {first.config.delta_f:.17g}",
             f"mode {'real' if first.real else 'complex'}",
             f"m_total {m_total}"]
    for s in samples:
        lines.append(f"channel {s.config.m_i}")
        lines.extend(f"{v.real:.17g} {v.imag:.17g}" for v in s.baseband)
    Path(path).write_text("\n".join(lines) + "\n")


def format_spectrum(spectrum: SpectrumGrid, tol: float = 0.0) -> str:
    """``bin frequency re im`` lines for bins with ``|X| > tol``."""
    rows = []
    for k, f, v in zip(spectrum.indices, spectrum.frequencies, spectrum.values):
        if abs(v) > tol:
            rows.append(f"{k} {f:.6g} {v.real:.12g} {v.imag:.12g}")
    return "\n".join(rows) + ("\n" if rows else "")
