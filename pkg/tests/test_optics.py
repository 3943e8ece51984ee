"""Element-level checks: splitter algebra, modulator sidebands, adjoints."""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from cfcomm.errors import ConfigError, TopologyError
from cfcomm.optics import (CARRIER, ALPHA_MAX, Attenuator, Beamsplitter, Block,
                           Detector, Eom, Mirror, PhaseShift, PhotonState,
                           apply_adjoint, apply_element)

MODES = frozenset({"a", "b", "c", "d", "loss"})


def two_mode(a1, a2):
    return PhotonState.from_sources(MODES, [("a", a1), ("b", a2)])


def inner(x: PhotonState, y: PhotonState) -> complex:
    keys = set(x.amps) | set(y.amps)
    return sum(x.amps.get(k, 0j).conjugate() * y.amps.get(k, 0j) for k in keys)


amps_st = st.complex_numbers(min_magnitude=0.0, max_magnitude=1.0,
                             allow_nan=False, allow_infinity=False)


# -- sideband tags ---------------------------------------------------------

def test_tag_detuning_sums_signed_shifts():
    tag = CARRIER.shifted("B", +1, 1).shifted("F", -1, 2)
    assert tag.order == 2
    assert tag.detuning_ghz({"B": 1.0, "F": 3.4}) == pytest.approx(1.0 - 3.4)
    assert CARRIER.detuning_ghz({}) == 0.0


def test_tag_instances_are_distinct_components():
    one = CARRIER.shifted("B", +1, 1)
    two = CARRIER.shifted("B", +1, 2)
    assert one != two
    assert one.labels == two.labels == ("B",)


def test_tag_prob_sums_instances_incoherently():
    state = PhotonState(MODES)
    state.amps[("a", CARRIER.shifted("B", +1, 1))] = 0.3 + 0j
    state.amps[("a", CARRIER.shifted("B", +1, 2))] = -0.3 + 0j
    assert state.tag_prob("a", "B") == pytest.approx(0.18)
    assert state.carrier_prob("a") == 0.0


# -- beamsplitter ----------------------------------------------------------

def test_splitter_convention_i_on_reflection():
    bs = Beamsplitter.from_r2(0.5, "a", "b", "c", "d")
    out = apply_element(two_mode(1.0, 0.0), bs)
    s2 = 1 / math.sqrt(2)
    assert out.amp("c") == pytest.approx(s2)
    assert out.amp("d") == pytest.approx(1j * s2)


def test_splitter_reflection_phase_is_antisymmetric():
    bs = Beamsplitter.from_r2(0.3, "a", "b", "c", "d", )
    bsp = Beamsplitter(bs.in1, bs.in2, bs.out1, bs.out2,
                       bs.reflect_amp, bs.transmit_amp, phase=0.7)
    up = apply_element(two_mode(0.0, 1.0), bsp).amp("c")
    dn = apply_element(two_mode(1.0, 0.0), bsp).amp("d")
    assert up == pytest.approx(1j * math.sqrt(0.3) * cmath.exp(0.7j))
    assert dn == pytest.approx(1j * math.sqrt(0.3) * cmath.exp(-0.7j))


@given(r2=st.floats(0.01, 0.99), a1=amps_st, a2=amps_st)
def test_splitter_preserves_norm(r2, a1, a2):
    bs = Beamsplitter.from_r2(r2, "a", "b", "c", "d")
    state = two_mode(a1, a2)
    out = apply_element(state, bs)
    assert out.norm() == pytest.approx(state.norm(), abs=1e-12)


@given(r2=st.floats(0.01, 0.99), a1=amps_st, a2=amps_st)
def test_splitter_adjoint_inverts(r2, a1, a2):
    bs = Beamsplitter.from_r2(r2, "a", "b", "c", "d")
    state = two_mode(a1, a2)
    back = apply_adjoint(apply_element(state, bs), bs)
    assert back.amp("a") == pytest.approx(a1, abs=1e-12)
    assert back.amp("b") == pytest.approx(a2, abs=1e-12)


def test_splitter_must_be_unitary():
    with pytest.raises(ConfigError):
        Beamsplitter("a", "b", "c", "d", 0.9, 0.9)
    with pytest.raises(ConfigError):
        Beamsplitter.from_r2(0.0, "a", "b", "c", "d")
    with pytest.raises(ConfigError):
        Beamsplitter.from_r2(1.0, "a", "b", "c", "d")


# -- adjoint pairing -------------------------------------------------------

@pytest.mark.parametrize("element", [
    Beamsplitter.from_r2(0.37, "a", "b", "c", "d"),
    Beamsplitter("a", "b", "c", "d", 0.6, 0.8, phase=1.1),
    PhaseShift("a", 0.9),
    Mirror("a", "c"),
    Attenuator("a", 0.55, "loss"),
])
@given(a1=amps_st, a2=amps_st, b1=amps_st, b2=amps_st)
@settings(max_examples=25)
def test_adjoint_pairing(element, a1, a2, b1, b2):
    """<U x, y> == <x, U' y> for the reversible elements."""
    x = two_mode(a1, a2)
    y = PhotonState.from_sources(MODES, [("c", b1), ("d", b2)])
    if isinstance(element, Attenuator):
        y = PhotonState.from_sources(MODES, [("a", b1), ("loss", b2)])
    lhs = inner(apply_element(x, element), y)
    rhs = inner(x, apply_adjoint(y, element))
    assert lhs == pytest.approx(rhs, abs=1e-12)


# -- phase shift, attenuator, block, mirror --------------------------------

def test_phase_shift_rotates_every_tag():
    state = two_mode(0.5, 0.0)
    state.amps[("a", CARRIER.shifted("B", +1, 1))] = 0.1 + 0j
    out = apply_element(state, PhaseShift("a", math.pi / 2))
    assert out.amp("a") == pytest.approx(0.5j)
    assert out.amp("a", CARRIER.shifted("B", +1, 1)) == pytest.approx(0.1j)


@given(t=st.floats(0.0, 1.0), a=amps_st)
def test_attenuator_routes_deficit_to_loss(t, a):
    out = apply_element(two_mode(a, 0.0), Attenuator("a", t, "loss"))
    assert out.amp("a") == pytest.approx(t * a, abs=1e-12)
    assert out.mode_prob("a") + out.mode_prob("loss") == pytest.approx(
        abs(a) ** 2, abs=1e-12)


def test_attenuator_range_checked():
    with pytest.raises(ConfigError):
        Attenuator("a", 1.5, "loss")
    with pytest.raises(ConfigError):
        Attenuator("a", -0.1, "loss")


def test_block_moves_all_power_to_loss():
    state = two_mode(0.6, 0.8)
    state.amps[("a", CARRIER.shifted("A", +1, 1))] = 0.11 + 0j
    out = apply_element(state, Block("a", "loss"))
    assert out.mode_prob("a") == 0.0
    assert out.mode_prob("loss") == pytest.approx(0.36 + 0.11 ** 2)
    assert out.mode_prob("b") == pytest.approx(0.64)


def test_mirror_relabels_amplitudes():
    out = apply_element(two_mode(0.6j, 0.0), Mirror("a", "c"))
    assert out.amp("a") == 0j
    assert out.amp("c") == pytest.approx(0.6j)


def test_detector_leaves_state_unchanged():
    state = two_mode(0.6, 0.8j)
    out = apply_element(state, Detector("a", "d_a"))
    assert out.amps == state.amps


def test_unknown_arm_rejected():
    with pytest.raises(TopologyError):
        apply_element(two_mode(1.0, 0.0), PhaseShift("nope", 0.1))


# -- modulator -------------------------------------------------------------

def test_modulator_first_order_sidebands():
    out = apply_element(two_mode(0.5, 0.0), Eom("a", "B", 1.0, 0.146))
    assert out.amp("a") == pytest.approx(0.5)  # carrier undepleted
    up = out.amp("a", CARRIER.shifted("B", +1, 1))
    dn = out.amp("a", CARRIER.shifted("B", -1, 1))
    assert up == pytest.approx(0.146 * 0.5)
    assert dn == pytest.approx(0.146 * 0.5)


@given(alpha=st.floats(0.0, ALPHA_MAX), a=amps_st)
def test_modulator_norm_growth_is_2_alpha_sq(alpha, a):
    state = two_mode(a, 0.3)
    out = apply_element(state, Eom("a", "B", 1.0, alpha))
    grown = state.norm() + 2.0 * alpha ** 2 * abs(a) ** 2
    assert out.norm() == pytest.approx(grown, abs=1e-12)


def test_modulator_truncates_at_max_order():
    e = Eom("a", "B", 1.0, 0.2)
    once = apply_element(two_mode(1.0, 0.0), e)
    twice = apply_element(once, e)
    # first-order model: existing sidebands pass unchanged
    assert twice.amp("a", CARRIER.shifted("B", +1, 1)) == pytest.approx(0.4)
    assert all(tag.order <= 1 for tag, _ in twice.components("a"))
    deeper = apply_element(once, e, max_order=2)
    double = CARRIER.shifted("B", +1, 1).shifted("B", +1, 1)
    assert deeper.amp("a", double) == pytest.approx(0.04)


def test_modulator_distinct_instances_do_not_interfere():
    """Two passes with opposite-sign amplitude: coherent would cancel."""
    state = two_mode(1.0, 0.0)
    state = apply_element(state, Eom("a", "B", 1.0, 0.1, instance=1))
    state = apply_element(state, PhaseShift("a", math.pi))
    # flip only the carrier back so pass 2 adds -0.1 against pass 1's +0.1
    state.amps[("a", CARRIER)] = -state.amps[("a", CARRIER)]
    state = apply_element(state, Eom("a", "B", 1.0, 0.1, instance=2))
    assert state.tag_prob("a", "B") == pytest.approx(2 * 2 * 0.1 ** 2)


def test_modulator_locked_rf_phase_interferes():
    """Same shared bucket: equal-and-opposite passes cancel exactly."""
    state = two_mode(1.0, 0.0)
    state = apply_element(state, Eom("a", "B", 1.0, 0.1, rf_phase=0.0))
    state.amps[("a", CARRIER)] = -state.amps[("a", CARRIER)]
    state = apply_element(state, Eom("a", "B", 1.0, 0.1, rf_phase=0.0))
    assert state.tag_prob("a", "B") == pytest.approx(0.0, abs=1e-15)


def test_modulator_rf_average_matches_instance_model():
    """MC average over independent RF phases reproduces the instance sum."""
    amps = (0.35 + 0.1j, -0.22 + 0.4j)  # arbitrary two-pass carrier amps

    def tagged():
        state = two_mode(amps[0], 0.0)
        state = apply_element(state, Eom("a", "B", 1.0, 0.1, instance=1))
        state.amps[("a", CARRIER)] = amps[1]
        state = apply_element(state, Eom("a", "B", 1.0, 0.1, instance=2))
        return state.tag_prob("a", "B")

    grid = np.linspace(0.0, 2 * math.pi, 64, endpoint=False)
    acc = 0.0
    for th1 in grid:
        for th2 in grid:
            state = two_mode(amps[0], 0.0)
            state = apply_element(state, Eom("a", "B", 1.0, 0.1, rf_phase=th1))
            state.amps[("a", CARRIER)] = amps[1]
            state = apply_element(state, Eom("a", "B", 1.0, 0.1, rf_phase=th2))
            acc += state.tag_prob("a", "B")
    assert acc / grid.size ** 2 == pytest.approx(tagged(), rel=1e-12)


def test_modulator_parameter_validation():
    with pytest.raises(ConfigError):
        Eom("a", "B", 1.0, ALPHA_MAX + 0.01)
    with pytest.raises(ConfigError):
        Eom("a", "B", -1.0, 0.1)
