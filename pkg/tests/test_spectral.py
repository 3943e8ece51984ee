"""Etalon filters, spectrum scans, peak extraction."""

import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from cfcomm.circuit import build_circuit, sideband_strengths, weak_trace
from cfcomm.config import reference_device
from cfcomm.errors import ConfigError, TopologyError
from cfcomm.spectral import (Etalon, PeakTable, Spectrum, extract_peaks,
                             scan_spectrum, source_filter_cascade)

import oracles


@pytest.fixture(scope="module")
def bench():
    return reference_device()


def noise_off(bench, preset, detector, **kw):
    c = build_circuit(bench, preset)
    return scan_spectrum(c, detector, bench.scan_etalon, bench.eoms,
                         noise=False, **kw)


# -- etalons -----------------------------------------------------------------

def test_etalon_peak_and_periodicity():
    e = Etalon(8.0, 0.1)
    assert e.transmission(0.0) == 1.0
    assert e.transmission(8.0) == pytest.approx(1.0, abs=1e-12)
    assert e.transmission(4.0) < 1e-3
    assert e.transmission(0.05) == pytest.approx(0.5, rel=1e-3)  # half width


def test_etalon_center_offset_shifts_the_comb():
    e = Etalon(8.0, 0.1, center_offset_ghz=1.3)
    assert e.transmission(1.3) == 1.0
    assert e.transmission(0.0) < 0.01


@given(d=st.floats(-60.0, 60.0))
def test_etalon_matches_airy_formula(d):
    e = Etalon(22.0, 0.315)
    assert e.transmission(d) == pytest.approx(oracles.airy(22.0, 0.315, d),
                                              abs=1e-14)


def test_etalon_validation():
    with pytest.raises(ConfigError):
        Etalon(0.1, 8.0)  # linewidth wider than the free spectral range
    with pytest.raises(ConfigError):
        Etalon(8.0, 0.0)


def test_source_cascade_narrows_to_sub_ghz(bench):
    rep = source_filter_cascade(bench.source_etalons,
                                bench.source_raw_linewidth_ghz)
    assert rep.effective_linewidth_ghz == pytest.approx(
        oracles.cascade_fwhm([(105.0, 1.4), (22.0, 0.315)]), abs=1e-9)
    assert rep.sidepeak_suppression_db == pytest.approx(
        10.0 * math.log10(1.0 / oracles.cascade_worst_sidepeak(
            [(105.0, 1.4), (22.0, 0.315)])), abs=1e-9)
    assert 1.0 <= rep.worst_sidepeak_ghz <= rep.window_ghz


def test_source_cascade_rejects_exclusion_inside_the_line(bench):
    with pytest.raises(ConfigError, match="exclusion"):
        source_filter_cascade(bench.source_etalons,
                              bench.source_raw_linewidth_ghz,
                              exclusion_ghz=0.1)


# -- scanning ----------------------------------------------------------------

def test_noise_off_carrier_height_is_exact(bench):
    s = noise_off(bench, "calibration", "det0")
    table = extract_peaks(s, bench.eoms)
    assert table.carrier_height == pytest.approx(1e6 * 25 / 64, rel=1e-12)


def test_noise_off_peaks_sit_at_modulation_frequencies(bench):
    s = noise_off(bench, "calibration", "det0")
    for spec in bench.eoms:
        iu = s.nearest_index(+spec.freq_ghz)
        idn = s.nearest_index(-spec.freq_ghz)
        # each line tops its immediate neighbourhood and scans symmetrically
        assert s.intensity[iu] == s.intensity[iu - 2:iu + 3].max()
        assert s.intensity[iu] > 1.5 * min(s.intensity[iu - 2], s.intensity[iu + 2])
        assert s.intensity[iu] == pytest.approx(s.intensity[idn], rel=1e-9)


@pytest.mark.parametrize("preset,detector,present", [
    ("bit0", "det0", {"C"}),
    ("bit1", "det1", {"E", "B", "F"}),
    ("calibration", "det0", {"A", "B", "C", "E", "F"}),
])
def test_presence_pattern(bench, preset, detector, present):
    s = noise_off(bench, preset, detector)
    table = extract_peaks(s, bench.eoms)
    got = {lab for lab, e in table.labels.items() if e.present}
    assert got == present


@pytest.mark.parametrize("preset,detector", [
    ("bit0", "det0"), ("bit1", "det1"), ("calibration", "det0")])
def test_ratios_reproduce_weak_trace_strengths(bench, preset, detector):
    """Spectral heights in calibration units equal squared-trace sums."""
    cal = extract_peaks(noise_off(bench, "calibration", "det0"), bench.eoms)
    table = extract_peaks(noise_off(bench, preset, detector), bench.eoms,
                          calibration=cal)
    trace = weak_trace(build_circuit(bench, preset, include_eoms=False),
                       detector)
    want = sideband_strengths(trace, bench)
    for lab, entry in table.labels.items():
        assert entry.height_over_calibration == pytest.approx(
            want[lab], abs=1e-9), lab


def test_doubled_labels_read_two_in_calibration_units(bench):
    cal = extract_peaks(noise_off(bench, "calibration", "det0"), bench.eoms)
    table = extract_peaks(noise_off(bench, "bit1", "det1"), bench.eoms,
                          calibration=cal)
    assert table.labels["B"].height_over_calibration == pytest.approx(2.0, abs=1e-9)
    assert table.labels["F"].height_over_calibration == pytest.approx(2.0, abs=1e-9)
    assert table.labels["E"].height_over_calibration == pytest.approx(1.0, abs=1e-9)


@pytest.mark.filterwarnings("ignore:scan range")
def test_noisy_scan_is_reproducible_and_plausible(bench):
    c = build_circuit(bench, "calibration")
    kw = dict(photons=1e5, seed=7, half_range_ghz=1.0)
    s1 = scan_spectrum(c, "det0", bench.scan_etalon, bench.eoms, **kw)
    s2 = scan_spectrum(c, "det0", bench.scan_etalon, bench.eoms, **kw)
    assert np.array_equal(s1.intensity, s2.intensity)
    assert np.array_equal(s1.stderr, s2.stderr)
    s3 = scan_spectrum(c, "det0", bench.scan_etalon, bench.eoms, seed=8,
                       photons=1e5, half_range_ghz=1.0)
    assert not np.array_equal(s1.intensity, s3.intensity)
    # Poisson draws are whole counts with positive spread at the carrier
    assert np.array_equal(s1.intensity, np.round(s1.intensity))
    i0 = s1.nearest_index(0.0)
    mu = 1e5 * 25 / 64
    assert abs(s1.intensity[i0] - mu) < 6 * math.sqrt(mu)
    assert s1.stderr[i0] == pytest.approx(math.sqrt(mu), rel=0.5)


@pytest.mark.filterwarnings("ignore:scan range")
def test_scan_grid_and_guards(bench):
    c = build_circuit(bench, "calibration")
    with pytest.raises(ConfigError, match="step"):
        scan_spectrum(c, "det0", bench.scan_etalon, bench.eoms, step_ghz=0.06)
    # exactly linewidth / 2 is the coarsest legal step
    s = scan_spectrum(c, "det0", bench.scan_etalon, bench.eoms,
                      step_ghz=0.05, noise=False, half_range_ghz=0.5)
    assert s.detuning_ghz[0] == -0.5 and s.detuning_ghz[-1] == 0.5
    with pytest.raises(TopologyError, match="detector"):
        scan_spectrum(c, "det9", bench.scan_etalon, bench.eoms, noise=False)
    with pytest.warns(UserWarning, match="scan range"):
        scan_spectrum(c, "det0", bench.scan_etalon, bench.eoms,
                      half_range_ghz=2.0, noise=False)


@pytest.mark.filterwarnings("ignore:scan range")
def test_spectrum_csv_round_trips(bench, tmp_path):
    s = noise_off(bench, "bit1", "det1", half_range_ghz=1.0)
    path = tmp_path / "scan.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "detuning_ghz,intensity,stderr"
    assert len(lines) == 1 + s.detuning_ghz.size
    d, y, e = (float(v) for v in lines[1].split(","))
    assert (d, y, e) == (s.detuning_ghz[0], s.intensity[0], s.stderr[0])


def test_spectrum_validation():
    with pytest.raises(ConfigError, match="increasing"):
        Spectrum(np.array([0.0, 0.0]), np.zeros(2), np.zeros(2),
                 "det0", 1.0, Etalon(8.0, 0.1), False, 0)
    with pytest.raises(ConfigError, match="non-negative"):
        Spectrum(np.array([0.0, 1.0]), np.array([1.0, -2.0]), np.zeros(2),
                 "det0", 1.0, Etalon(8.0, 0.1), False, 0)


@pytest.mark.filterwarnings("ignore:scan range")
def test_nearest_index_rejects_off_grid(bench):
    s = noise_off(bench, "bit0", "det0", half_range_ghz=1.0)
    assert s.nearest_index(0.05) == s.detuning_ghz.size // 2 + 1
    with pytest.raises(ConfigError, match="cover"):
        s.nearest_index(1.5)


def test_extract_peaks_calibration_gate(bench):
    s = noise_off(bench, "bit0", "det0")
    with pytest.raises(ConfigError, match="lacks labels"):
        extract_peaks(s, bench.eoms, calibration=PeakTable(carrier_height=1.0))
    bad = PeakTable(carrier_height=0.0)
    bad.labels = {e.label: None for e in bench.eoms}
    with pytest.raises(ConfigError, match="carrier"):
        extract_peaks(s, bench.eoms, calibration=bad)


def test_peak_table_jsonable_shape(bench):
    table = extract_peaks(noise_off(bench, "bit0", "det0"), bench.eoms)
    out = table.to_jsonable()
    assert set(out) == {"detector", "tuning", "carrier_height", "labels"}
    assert sorted(out["labels"]) == ["A", "B", "C", "E", "F"]
    assert set(out["labels"]["C"]) == {"present", "height",
                                       "height_over_calibration"}
