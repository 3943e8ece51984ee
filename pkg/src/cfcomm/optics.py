"""Single-photon amplitudes over (arm, sideband) and the elements acting on them.

The photon state at any cut through the bench is a sparse map from
``(arm name, sideband tag)`` to a complex amplitude.  A sideband tag records
the chain of modulator kicks a component has received; the empty chain is
the unshifted carrier.  Every optical element is a small dataclass, and
:func:`apply_element` turns a state into the state after that element.

Two modelling choices live here and nowhere else:

* Modulators act to first order: a carrier amplitude ``a`` stays ``a`` and
  spawns ``alpha * a`` at the up- and down-shifted tags.  Components that
  already carry the maximum chain length pass through unchanged, so the
  truncated map is not exactly unitary — the norm grows by
  ``2 alpha^2 x (power on the arm)`` per pass.  The deficit is tracked, never
  renormalized (renormalizing would silently distort probability ratios).

* Each physical modulator pass stamps its own ``instance`` index into the
  tag.  Components created by different passes of the same modulator
  therefore sit in different buckets and their intensities add, which is
  what a slow free-running RF phase between passes does to time-averaged
  spectra.  Setting ``rf_phase`` on a modulator switches it to an explicit
  Monte-Carlo mode: the sidebands then carry ``e^{+-i theta}`` and share
  bucket 0, so different passes interfere; averaging over random ``theta``
  must reproduce the incoherent sums.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

from .errors import ConfigError, TopologyError

#: validity limit of the first-order sideband treatment
ALPHA_MAX = 0.5


@dataclass(frozen=True)
class Shift:
    """One modulator kick: which modulator, which sideband, which pass."""

    label: str
    sign: int
    instance: int


@dataclass(frozen=True)
class SidebandTag:
    """Frequency tag of one amplitude component (empty chain = carrier)."""

    shifts: tuple[Shift, ...] = ()

    @property
    def order(self) -> int:
        return len(self.shifts)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.shifts)

    @property
    def sort_key(self) -> tuple:
        """Stable ordering key: keeps float-summation order hash-independent."""
        return tuple((s.label, s.sign, s.instance) for s in self.shifts)

    def shifted(self, label: str, sign: int, instance: int) -> "SidebandTag":
        return SidebandTag(self.shifts + (Shift(label, sign, instance),))

    def detuning_ghz(self, freqs: Mapping[str, float]) -> float:
        """Net frequency offset from the carrier, given label -> GHz."""
        return sum(s.sign * freqs[s.label] for s in self.shifts)


CARRIER = SidebandTag()


@dataclass
class PhotonState:
    """Sparse complex amplitude map over (arm, sideband tag)."""

    modes: frozenset[str]
    amps: dict[tuple[str, SidebandTag], complex] = field(default_factory=dict)

    @classmethod
    def from_sources(cls, modes, sources) -> "PhotonState":
        state = cls(frozenset(modes))
        for mode, amp in sources:
            if mode not in state.modes:
                raise TopologyError(f"source on unknown arm {mode!r}")
            state.amps[(mode, CARRIER)] = state.amps.get((mode, CARRIER), 0j) + complex(amp)
        return state

    def copy(self) -> "PhotonState":
        return PhotonState(self.modes, dict(self.amps))

    def amp(self, mode: str, tag: SidebandTag = CARRIER) -> complex:
        return self.amps.get((mode, tag), 0j)

    def components(self, mode: str) -> Iterator[tuple[SidebandTag, complex]]:
        """All (tag, amplitude) pairs on one arm, in insertion order."""
        for (m, tag), a in self.amps.items():
            if m == mode:
                yield tag, a

    def norm(self) -> float:
        return sum(abs(a) ** 2 for a in self.amps.values())

    def mode_prob(self, mode: str) -> float:
        return sum(abs(a) ** 2 for (m, _), a in self.amps.items() if m == mode)

    def carrier_prob(self, mode: str) -> float:
        return abs(self.amps.get((mode, CARRIER), 0j)) ** 2

    def tag_prob(self, mode: str, label: str) -> float:
        """Intensity on one arm carrying a given modulator label.

        Sums |amplitude|^2 over both sideband signs and all passes — the
        buckets are distinct, so cross-pass addition is incoherent by
        construction.
        """
        return sum(abs(a) ** 2 for (m, tag), a in self.amps.items()
                   if m == mode and label in tag.labels)

    def finite(self) -> bool:
        return all(math.isfinite(a.real) and math.isfinite(a.imag)
                   for a in self.amps.values())


# --------------------------------------------------------------------------
# elements
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Beamsplitter:
    """Symmetric splitter: ``i`` on reflection, optional reflection phase.

    Maps ``(in1, in2) -> (out1, out2)`` with
    ``out1 = t in1 + i r e^{ip} in2`` and ``out2 = i r e^{-ip} in1 + t in2``,
    identically for every sideband tag (GHz shifts are negligible against
    the element bandwidth).
    """

    in1: str
    in2: str
    out1: str
    out2: str
    reflect_amp: float
    transmit_amp: float
    phase: float = 0.0
    name: str = ""

    def __post_init__(self):
        if abs(self.reflect_amp ** 2 + self.transmit_amp ** 2 - 1.0) > 1e-12:
            raise ConfigError(
                f"splitter {self.name or '?'} not unitary: "
                f"r^2 + t^2 = {self.reflect_amp ** 2 + self.transmit_amp ** 2:.15g}")

    @classmethod
    def from_r2(cls, r2: float, in1: str, in2: str, out1: str, out2: str,
                name: str = "") -> "Beamsplitter":
        if not 0.0 < r2 < 1.0:
            raise ConfigError(f"splitter {name or '?'}: r^2 must be in (0, 1), got {r2}")
        return cls(in1, in2, out1, out2, math.sqrt(r2), math.sqrt(1.0 - r2), 0.0, name)


@dataclass(frozen=True)
class PhaseShift:
    mode: str
    radians: float
    name: str = ""


@dataclass(frozen=True)
class Attenuator:
    """Scales the arm by ``t`` and routes the deficit to a loss arm."""

    mode: str
    amp_transmission: float
    loss_mode: str

    def __post_init__(self):
        if not 0.0 <= self.amp_transmission <= 1.0:
            raise ConfigError(
                f"attenuator transmission must be in [0, 1], got {self.amp_transmission}")


@dataclass(frozen=True)
class Eom:
    """Phase modulator: tags the passing carrier with +-freq sidebands."""

    mode: str
    label: str
    freq_ghz: float
    alpha: float
    instance: int = 1
    rf_phase: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= ALPHA_MAX:
            raise ConfigError(
                f"modulation depth alpha={self.alpha} outside [0, {ALPHA_MAX}]"
                " (first-order sideband model invalid)")
        if self.freq_ghz <= 0.0:
            raise ConfigError(f"modulator frequency must be positive, got {self.freq_ghz}")


@dataclass(frozen=True)
class Block:
    """Shutter: everything on the arm is absorbed (moved to the loss arm)."""

    mode: str
    loss_mode: str


@dataclass(frozen=True)
class Mirror:
    """Ideal fold: relabels one arm into another."""

    source: str
    target: str


@dataclass(frozen=True)
class Detector:
    mode: str
    name: str


Element = Union[Beamsplitter, PhaseShift, Attenuator, Eom, Block, Mirror, Detector]


def _check_modes(state: PhotonState, *modes: str) -> None:
    for m in modes:
        if m not in state.modes:
            raise TopologyError(f"element references unknown arm {m!r}")


def apply_element(state: PhotonState, e: Element, max_order: int = 1) -> PhotonState:
    """State after one element (pure: the input state is left untouched).

    ``max_order`` caps the sideband chain length a modulator may extend;
    1 is the standard first-order model, 2 adds the doubly-shifted terms
    used only to bound the truncation error.
    """
    out = state.copy()
    amps = out.amps

    if isinstance(e, Beamsplitter):
        _check_modes(state, e.in1, e.in2, e.out1, e.out2)
        t = e.transmit_amp
        re_up = 1j * e.reflect_amp * cmath.exp(1j * e.phase)
        re_dn = 1j * e.reflect_amp * cmath.exp(-1j * e.phase)
        tags = {tag for (m, tag) in amps if m in (e.in1, e.in2)}
        for tag in sorted(tags, key=lambda g: g.sort_key):
            a1 = amps.pop((e.in1, tag), 0j)
            a2 = amps.pop((e.in2, tag), 0j)
            o1 = t * a1 + re_up * a2
            o2 = re_dn * a1 + t * a2
            if o1 != 0j:
                amps[(e.out1, tag)] = amps.get((e.out1, tag), 0j) + o1
            if o2 != 0j:
                amps[(e.out2, tag)] = amps.get((e.out2, tag), 0j) + o2

    elif isinstance(e, PhaseShift):
        _check_modes(state, e.mode)
        ph = cmath.exp(1j * e.radians)
        for key in [k for k in amps if k[0] == e.mode]:
            amps[key] = amps[key] * ph

    elif isinstance(e, Attenuator):
        _check_modes(state, e.mode, e.loss_mode)
        t = e.amp_transmission
        s = math.sqrt(max(0.0, 1.0 - t * t))
        for key in [k for k in amps if k[0] == e.mode]:
            a = amps[key]
            amps[key] = t * a
            if s != 0.0 and a != 0j:
                lk = (e.loss_mode, key[1])
                amps[lk] = amps.get(lk, 0j) + s * a

    elif isinstance(e, Eom):
        _check_modes(state, e.mode)
        if e.rf_phase is None:
            up, dn, inst = complex(e.alpha), complex(e.alpha), e.instance
        else:
            up = e.alpha * cmath.exp(1j * e.rf_phase)
            dn = e.alpha * cmath.exp(-1j * e.rf_phase)
            inst = 0  # shared bucket: passes interfere, as for a locked RF phase
        # snapshot (key, amplitude) first: each INPUT component radiates
        # independently, so freshly written sidebands must not be re-read
        for key, a in [(k, amps[k]) for k in amps if k[0] == e.mode]:
            tag = key[1]
            if tag.order >= max_order:
                continue  # already at the truncation depth: passes unchanged
            if a == 0j or e.alpha == 0.0:
                continue
            ku = (e.mode, tag.shifted(e.label, +1, inst))
            kd = (e.mode, tag.shifted(e.label, -1, inst))
            amps[ku] = amps.get(ku, 0j) + up * a
            amps[kd] = amps.get(kd, 0j) + dn * a

    elif isinstance(e, Block):
        _check_modes(state, e.mode, e.loss_mode)
        for key in [k for k in amps if k[0] == e.mode]:
            a = amps.pop(key)
            lk = (e.loss_mode, key[1])
            amps[lk] = amps.get(lk, 0j) + a

    elif isinstance(e, Mirror):
        _check_modes(state, e.source, e.target)
        for key in [k for k in amps if k[0] == e.source]:
            a = amps.pop(key)
            tk = (e.target, key[1])
            amps[tk] = amps.get(tk, 0j) + a

    elif isinstance(e, Detector):
        _check_modes(state, e.mode)

    else:
        raise TopologyError(f"unknown element type {type(e).__name__}")

    return out


def apply_adjoint(state: PhotonState, e: Element) -> PhotonState:
    """One step of backward evolution: the element's adjoint.

    Meant for carrier-sector states propagated back from a detection event.
    Modulators act as the identity there — at first order the sidebands are
    forward-generated bookkeeping and never feed back into the carrier.
    """
    out = state.copy()
    amps = out.amps

    if isinstance(e, Beamsplitter):
        _check_modes(state, e.in1, e.in2, e.out1, e.out2)
        t = e.transmit_amp
        # conjugate transpose of the forward matrix
        ue_up = -1j * e.reflect_amp * cmath.exp(1j * e.phase)
        ue_dn = -1j * e.reflect_amp * cmath.exp(-1j * e.phase)
        tags = {tag for (m, tag) in amps if m in (e.out1, e.out2)}
        for tag in sorted(tags, key=lambda g: g.sort_key):
            b1 = amps.pop((e.out1, tag), 0j)
            b2 = amps.pop((e.out2, tag), 0j)
            i1 = t * b1 + ue_up * b2
            i2 = ue_dn * b1 + t * b2
            if i1 != 0j:
                amps[(e.in1, tag)] = amps.get((e.in1, tag), 0j) + i1
            if i2 != 0j:
                amps[(e.in2, tag)] = amps.get((e.in2, tag), 0j) + i2

    elif isinstance(e, PhaseShift):
        _check_modes(state, e.mode)
        ph = cmath.exp(-1j * e.radians)
        for key in [k for k in amps if k[0] == e.mode]:
            amps[key] = amps[key] * ph

    elif isinstance(e, Attenuator):
        _check_modes(state, e.mode, e.loss_mode)
        t = e.amp_transmission
        s = math.sqrt(max(0.0, 1.0 - t * t))
        tags = {tag for (m, tag) in amps if m in (e.mode, e.loss_mode)}
        for tag in sorted(tags, key=lambda g: g.sort_key):
            bm = amps.pop((e.mode, tag), 0j)
            bl = amps.pop((e.loss_mode, tag), 0j)
            i = t * bm + s * bl
            if i != 0j:
                amps[(e.mode, tag)] = i

    elif isinstance(e, Eom):
        _check_modes(state, e.mode)

    elif isinstance(e, Block):
        _check_modes(state, e.mode, e.loss_mode)
        # forward: loss' = mode + loss, mode' = 0; adjoint: mode <- loss'
        for key in [k for k in amps if k[0] == e.mode]:
            del amps[key]
        for (m, tag), a in list(amps.items()):
            if m == e.loss_mode and a != 0j:
                amps[(e.mode, tag)] = a

    elif isinstance(e, Mirror):
        _check_modes(state, e.source, e.target)
        for key in [k for k in amps if k[0] == e.target]:
            a = amps.pop(key)
            sk = (e.source, key[1])
            amps[sk] = amps.get(sk, 0j) + a

    elif isinstance(e, Detector):
        _check_modes(state, e.mode)

    else:
        raise TopologyError(f"unknown element type {type(e).__name__}")

    return out


# free-function aliases for the state queries
def norm(state: PhotonState) -> float:
    return state.norm()


def mode_prob(state: PhotonState, mode: str) -> float:
    return state.mode_prob(mode)


def tag_prob(state: PhotonState, mode: str, label: str) -> float:
    return state.tag_prob(mode, label)
