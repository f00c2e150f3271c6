import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smrs.cli import main
from smrs.grid import ChannelConfig, SpectrumGrid, fold_all
from smrs.harness.experiment import (ConfigError, ExperimentConfig, aliased_bin_count,
                                     run_sweep, run_trial, support_condition)
from smrs.harness.io import dump_config, load_config, read_spectra, write_spectra
from smrs.harness.signals import (PlacementError, add_noise, generate_complex_signal,
                                  generate_real_signal, snr_db)

from oracles import brute_aliased_count, brute_fold, brute_signed_baseband


def test_complex_band_energies_in_range():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, bands = generate_complex_signal(800, 25e6, 4, 8, rng)
        norms = [np.linalg.norm(x.values[a:b + 1]) for a, b in bands]
        assert all(1.0 <= n <= 5.0 for n in norms)
        starts = [a for a, _ in bands]
        assert starts == sorted(starts) and all(np.diff(starts) >= 8)
        assert np.count_nonzero(x.values) == 32


def test_full_scale_band_width():
    # width = F_Landau / 4 for 4 bands, F_max = 20 GHz at 5 MHz
    x, bands = generate_complex_signal(4000, 5e6, 4, 50, np.random.default_rng(1))
    assert all(b - a + 1 == 50 for a, b in bands)


def test_degenerate_and_impossible_placement():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        generate_complex_signal(100, 1e6, 2, 0, rng)
    with pytest.raises(PlacementError):
        generate_complex_signal(10, 1e6, 2, 6, rng)
    with pytest.raises(PlacementError):
        generate_complex_signal(40, 1e6, 4, 10, rng, max_tries=20)


def test_real_bands_shape_and_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, bands = generate_real_signal(1600, 25e6, 4, 8, rng)
        vals = x.values
        np.testing.assert_array_equal(vals, np.conj(vals[::-1]))
        pos = x.positive()
        assert pos[0] == 0
        for a, b in bands:
            mag = np.abs(pos[a:b + 1])
            assert mag[-1] == 0 and pos[a - 1] == 0
            amp = mag.max() / np.sin(np.pi * 4 / 8)
            assert 1.0 <= amp <= 1.2
            assert np.argmax(mag) == 3  # sin peaks at the band middle
            phases = np.angle(pos[a:b])
            np.testing.assert_allclose(np.exp(1j * phases), np.exp(1j * phases[0]))


def test_eight_total_bands_of_landau_over_eight():
    cfg = ExperimentConfig(mode="real", channels=(3.8e9, 4.0e9, 4.2e9), f_max=40e9,
                           landau_sweep=(1.6e9,))
    assert cfg.width_bins(1.6e9) == 8
    x, bands = generate_real_signal(cfg.m_total, 25e6, 4, 8, np.random.default_rng(3))
    assert np.count_nonzero(x.values) == 8 * 7  # the last bin of each band is zero


def test_noise_identity_and_energy():
    x = SpectrumGrid(1.0, 10, np.arange(10) + 0j)
    assert add_noise(x, 0.0, np.random.default_rng(0)) is x
    big = SpectrumGrid(1.0, 10**6, np.zeros(10**6, complex))
    noisy = add_noise(big, 0.04, np.random.default_rng(1))
    assert np.mean(np.abs(noisy.values) ** 2) == pytest.approx(0.04 ** 2, rel=0.01)
    with pytest.raises(ValueError):
        add_noise(big, -1, np.random.default_rng(0))


def test_real_noise_symmetric_with_sigma_energy():
    x = SpectrumGrid.zeros(1.0, 2 * 10**6, real=True)
    noisy = add_noise(x, 0.04, np.random.default_rng(4))
    vals = noisy.values
    np.testing.assert_array_equal(vals, np.conj(vals[::-1]))
    assert np.mean(np.abs(vals) ** 2) == pytest.approx(0.04 ** 2, rel=0.01)


def test_snr_reference_value():
    assert snr_db(0.04, 20e9, 4e9) == pytest.approx(10.5, abs=0.05)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 60), min_size=0, max_size=15),
       st.lists(st.integers(2, 20), min_size=1, max_size=3), st.booleans())
def test_aliased_count_matches_brute_force(support, ms, real):
    assert aliased_bin_count(support, ms, real) == brute_aliased_count(support, ms, real)


def test_aliased_count_derived():
    # bins 1 and 9 share residue 1 mod 4 and mod 8 but not mod 6
    assert aliased_bin_count([1, 9], [4, 8]) == 2
    assert aliased_bin_count([1, 9], [4, 6]) == 0
    # real mode: 3 and the mirror of 1 share residue 3 mod 4
    assert aliased_bin_count([1, 3], [4], real=True) == 2


def _cond(a):
    # a wide matrix has a null space
    if a.shape[0] < a.shape[1]:
        return np.inf
    s = np.linalg.svd(a, compute_uv=False)
    return s[0] / s[-1] if s[-1] > 0 else np.inf


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 29), min_size=1, max_size=6, unique=True),
       st.lists(st.integers(3, 12), min_size=2, max_size=3, unique=True))
def test_support_condition_complex_matches_brute(support, ms):
    samples = fold_all(SpectrumGrid(1e8, 30, np.zeros(30, complex)),
                       [ChannelConfig(m, 1e8) for m in ms])
    cols = []
    for l in support:
        unit = np.zeros(30)
        unit[l] = 1
        cols.append(np.concatenate([[brute_fold(unit, range(30), m, m / 10)[k] for k in range(m)]
                                    for m in ms]))
    expect = _cond(np.array(cols).T)
    got = support_condition(samples, support, 30)
    if expect > 1e8:
        assert got == float("inf")
    else:
        assert got == pytest.approx(expect, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 15), min_size=1, max_size=5, unique=True),
       st.lists(st.sampled_from([4, 6, 8, 10, 12]), min_size=2, max_size=3, unique=True))
def test_support_condition_real_matches_brute(support, ms):
    grid = SpectrumGrid.from_positive(1e8, 30, np.zeros(16, complex))
    samples = fold_all(grid, [ChannelConfig(m, 1e8) for m in ms])
    re_cols, im_cols = [], []
    for l in support:
        for part, sign, out in ((1, 1, re_cols), (1j, -1, im_cols)):
            vals = np.zeros(len(grid.indices), complex)
            vals[grid.indices == l] = part
            vals[grid.indices == -l] = sign * part
            bbs = [brute_signed_baseband(vals, grid.indices, m, m / 10) for m in ms]
            if part == 1:
                out.append(np.concatenate([b[m // 2:].real for b, m in zip(bbs, ms)]))
            else:
                out.append(np.concatenate([b[m // 2 + 1:m].imag for b, m in zip(bbs, ms)]))
    conds = [_cond(np.array(c).T) for c in (re_cols, im_cols)]
    got = support_condition(samples, support, 30)
    if max(conds) > 1e8:
        assert got == float("inf")
    else:
        assert got == pytest.approx(max(conds), rel=1e-9)


def small_complex(**kw):
    base = dict(channels=(0.95e9, 1.0e9, 1.05e9), landau_sweep=(1.0e9, 0.5e9), trials=6, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="imaginary")
    with pytest.raises(ConfigError):
        ExperimentConfig(channels=(1.01e9,))
    with pytest.raises(ConfigError):
        ExperimentConfig(landau_sweep=(1e6,))
    with pytest.raises(ConfigError):
        ExperimentConfig(success_rule="per_band_l1")
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="real", channels=(0.975e9,), f_max=40e9)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"detector": {"threshold": 3}})


def test_config_yaml_round_trip(tmp_path):
    cfg = small_complex(detector=replace(ExperimentConfig().detector, mode="noisy"))
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_yaml_exponent_strings_are_numbers(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("delta_f: 25e6\nchannels: [0.95e9, 1e9, 1.05e9]\n"
                    "detector:\n  energy_window: 100e6\n")
    cfg = load_config(path)
    assert cfg.delta_f == 25e6 and cfg.detector.energy_window == 100e6


def test_width_rounding_and_effective_ratio():
    cfg = ExperimentConfig(landau_sweep=(0.85e9,))
    # 212.5 MHz bands round up to 9 bins of 25 MHz
    assert cfg.width_bins(0.85e9) == 9
    assert cfg.f_total / cfg.effective_landau(0.85e9) == pytest.approx(3.0 / 0.9)


def test_run_trial_perfect_and_records():
    cfg = small_complex()
    rec = run_trial(cfg, np.random.default_rng(0), 0.5e9, 7)
    assert rec.trial_id == 7 and rec.success and rec.mean_error < 1e-10
    assert len(rec.band_errors) == cfg.band_count


def test_run_trial_placement_failure_is_recorded():
    cfg = ExperimentConfig(channels=(0.95e9, 1.0e9, 1.05e9), f_max=1e9,
                           landau_sweep=(1e9,), trials=1)
    rec = run_trial(cfg, np.random.default_rng(0))
    assert not rec.success and rec.reason.startswith("placement")


def test_sweep_reproducible_and_parallel_safe():
    cfg = small_complex()
    a, b = run_sweep(cfg), run_sweep(cfg)
    assert a.csv_text() == b.csv_text() and a.json_text() == b.json_text()
    c = run_sweep(cfg, workers=2)
    assert c.csv_text() == a.csv_text() and c.json_text() == a.json_text()
    d = run_sweep(replace(cfg, seed=4))
    assert d.json_text() != a.json_text()
    doc = json.loads(a.json_text())
    assert len(doc["points"]) == 2 and len(doc["points"][0]["trials"]) == 6
    assert "runtime" not in doc["points"][0]["trials"][0]


def test_success_non_increasing_in_landau_rate():
    cfg = ExperimentConfig(landau_sweep=(0.3e9, 1.0e9, 2.0e9, 3.0e9), trials=200, seed=9)
    rates = [row["success_rate"] for row in run_sweep(cfg).rows()]
    # allow a two-standard-error margin between neighbours
    for lo, hi in zip(rates, rates[1:]):
        margin = 2 * np.sqrt(max(lo * (1 - lo), 0.01) / 200)
        assert hi <= lo + margin
    assert rates[0] > rates[-1]


def test_noisy_rules_pass_on_clean_reconstruction():
    for rule in ("per_band_l1", "per_band_l2"):
        cfg = ExperimentConfig(mode="real", channels=(3.8e9, 4.0e9, 4.2e9), f_max=40e9,
                               trials=3, noise_sigma=0.04, success_rule=rule,
                               detector=replace(ExperimentConfig().detector, mode="noisy",
                                                widen_fraction=0.2),
                               solver=replace(ExperimentConfig().solver, noisy_mode=True))
        recs = run_sweep(cfg).records[cfg.points()[0]]
        assert sum(r.success for r in recs) >= 2


# CLI


def write_yaml(path, text):
    path.write_text(text)
    return str(path)


def test_cli_check(capsys):
    assert main(["check", "--channels", "0.95e9,1e9,1.05e9", "--fmax", "20e9"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["unique_span_hz"] == pytest.approx(399e9)
    assert main(["check", "--channels", "0.95e9,1e9,1.05e9", "--fmax", "400e9"]) == 1
    assert main(["check", "--channels", "1.001e9", "--fmax", "20e9"]) == 2


def test_cli_run(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", "mode: complex\nlandau_sweep: [0.5e9]\ntrials: 4\nseed: 2\n")
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--output", str(out), "--quiet"]) == 0
    first = (out / "results.csv").read_text()
    assert first.startswith("f_landau,")
    assert json.loads((out / "trials.json").read_text())["config"]["trials"] == 4
    assert (out / "timing.csv").exists()
    assert main(["run", "--config", cfg, "--output", str(out), "--quiet"]) == 0
    assert (out / "results.csv").read_text() == first


def test_cli_run_config_errors(tmp_path):
    bad = write_yaml(tmp_path / "bad.yaml", "mode: complex\nunknown_key: 1\n")
    assert main(["run", "--config", bad, "--output", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    broken = write_yaml(tmp_path / "broken.yaml", "mode: [unclosed\n")
    assert main(["run", "--config", broken]) == 2


def test_cli_solve_round_trip(tmp_path, capsys):
    rng = np.random.default_rng(5)
    x, bands = generate_complex_signal(800, 25e6, 4, 6, rng)
    chans = [ChannelConfig.from_rate(r, 25e6) for r in (0.95e9, 1.0e9, 1.05e9)]
    path = tmp_path / "spectra.txt"
    write_spectra(path, fold_all(x, chans), 800)
    samples, m_total = read_spectra(path)
    assert m_total == 800 and [s.config.m_i for s in samples] == [38, 40, 42]
    out = tmp_path / "rec.txt"
    code = main(["solve", "--channels", "0.95e9,1e9,1.05e9", "--input", str(path),
                 "--output", str(out), "--tolerance", "1e-9"])
    assert code == 0
    rec = np.zeros(800, complex)
    for line in out.read_text().splitlines():
        k, _, re_part, im_part = line.split()
        rec[int(k)] = complex(float(re_part), float(im_part))
    np.testing.assert_allclose(rec, x.values, atol=1e-9)
    assert main(["solve", "--channels", "1e9", "--input", str(path)]) == 2


def test_spectra_file_errors(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("delta_f 1e8\nm_total 12\n0 0\n")
    with pytest.raises(ConfigError):
        read_spectra(path)
    path.write_text("delta_f 1e8\nm_total 12\nchannel 4\n1 0\n")
    with pytest.raises(ConfigError):
        read_spectra(path)
    path.write_text("mode real\nchannel 4\n")
    with pytest.raises(ConfigError):
        read_spectra(path)
