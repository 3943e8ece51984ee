"""Device description: modulators, splitting ratios, filters, imperfections.

A :class:`DeviceConfig` is a frozen value object (hashable, so derived
results can be cached against it) describing one bench setup.  Configs are
normally loaded from JSON; :func:`reference_device` returns the packaged
reference setup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

from .errors import ConfigError
from .optics import ALPHA_MAX
from .spectral import Etalon

#: the three physical splitters: one closing the outer loop, two in the inner loop,
#: "near" being the inner splitter adjacent to the entry/exit side
BS_NAMES = ("outer", "inner_near", "inner_far")

#: the five modulator positions on the bench
EOM_SITES = ("entry", "reference", "shutter_arm", "open_arm", "link")


@dataclass(frozen=True)
class EomSpec:
    """One modulator: where it sits, its sideband label, drive, strength."""

    site: str
    label: str
    freq_ghz: float
    alpha: float

    def __post_init__(self):
        if self.site not in EOM_SITES:
            raise ConfigError(
                f"unknown modulator site {self.site!r}; expected one of {EOM_SITES}")
        if not self.label:
            raise ConfigError("modulator label must be non-empty")
        if self.freq_ghz <= 0.0:
            raise ConfigError(f"modulator {self.label}: frequency must be positive")
        if not 0.0 <= self.alpha <= ALPHA_MAX:
            raise ConfigError(
                f"modulator {self.label}: alpha {self.alpha} outside "
                f"[0, {ALPHA_MAX}] weak-modulation range")


@dataclass(frozen=True)
class ImperfectionModel:
    """Channel imperfections: interferometer contrasts and detector figures.

    Visibilities are fringe contrasts of the two interferometer loops.
    ``dark_rate`` is the probability of a spurious click per detection bin,
    split evenly between the two detectors; ``heralding_efficiency`` is the
    end-to-end probability that a signal photon produces a click.
    """

    visibility_inner: float = 1.0
    visibility_outer: float = 1.0
    dark_rate: float = 0.0
    heralding_efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visibility_inner <= 1.0:
            raise ConfigError("visibility_inner must be in [0, 1]")
        if not 0.0 <= self.visibility_outer <= 1.0:
            raise ConfigError("visibility_outer must be in [0, 1]")
        if not 0.0 <= self.dark_rate < 1.0:
            raise ConfigError("dark_rate must be in [0, 1)")
        if not 0.0 < self.heralding_efficiency <= 1.0:
            raise ConfigError("heralding_efficiency must be in (0, 1]")

    @property
    def ideal(self) -> bool:
        return (self.visibility_inner == 1.0 and self.visibility_outer == 1.0
                and self.dark_rate == 0.0 and self.heralding_efficiency == 1.0)


@dataclass(frozen=True)
class DeviceConfig:
    """Complete description of one transmission bench."""

    eoms: tuple[EomSpec, ...]
    beamsplitter_r2: float | tuple[tuple[str, float], ...] = 0.5
    attenuator_t: float | str = "auto"
    source_etalons: tuple[Etalon, ...] = ()
    scan_etalon: Etalon = Etalon(8.0, 0.1)
    source_raw_linewidth_ghz: float = 1000.0
    imperfections: ImperfectionModel = field(default_factory=ImperfectionModel)
    photon_rate_hz: float = 1000.0
    bin_duration_s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        labels = [e.label for e in self.eoms]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate modulator labels: {labels}")
        sites = [e.site for e in self.eoms]
        if sorted(sites) != sorted(EOM_SITES):
            raise ConfigError(
                f"modulators must cover each site {EOM_SITES} exactly once, "
                f"got {sorted(sites)}")
        for name in BS_NAMES:
            r2 = self.r2(name)
            if not 0.0 < r2 < 1.0:
                raise ConfigError(f"{name}: reflectance {r2} must be in (0, 1)")
        if isinstance(self.beamsplitter_r2, tuple):
            extra = {n for n, _ in self.beamsplitter_r2} - set(BS_NAMES)
            if extra:
                raise ConfigError(f"unknown beamsplitter names: {sorted(extra)}")
        if isinstance(self.attenuator_t, str):
            if self.attenuator_t != "auto":
                raise ConfigError(
                    f"attenuator_t must be a number or 'auto', got "
                    f"{self.attenuator_t!r}")
        elif not 0.0 < self.attenuator_t <= 1.0:
            raise ConfigError(f"attenuator_t {self.attenuator_t} outside (0, 1]")
        if self.source_raw_linewidth_ghz <= 0.0:
            raise ConfigError("source_raw_linewidth_ghz must be positive")
        # every sideband must be resolvable from the carrier and its neighbours
        lw = self.scan_etalon.linewidth_ghz
        freqs = sorted({0.0} | {e.freq_ghz for e in self.eoms})
        for lo_f, hi_f in zip(freqs, freqs[1:]):
            if hi_f - lo_f <= lw:
                raise ConfigError(
                    f"modulation frequencies {lo_f} and {hi_f} GHz are closer "
                    f"than the {lw} GHz analysis linewidth")
        if self.photon_rate_hz <= 0.0:
            raise ConfigError("photon_rate_hz must be positive")
        if self.bin_duration_s <= 0.0:
            raise ConfigError("bin_duration_s must be positive")
        if self.photon_rate_hz * self.bin_duration_s < 1.0:
            raise ConfigError("a detection bin must hold at least one trial")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def r2(self, name: str) -> float:
        """Intensity reflectance of the named splitter."""
        if isinstance(self.beamsplitter_r2, (int, float)):
            return float(self.beamsplitter_r2)
        table = dict(self.beamsplitter_r2)
        try:
            return table[name]
        except KeyError:
            raise ConfigError(f"no reflectance configured for {name}") from None

    def eom_at(self, site: str) -> EomSpec:
        for e in self.eoms:
            if e.site == site:
                return e
        raise ConfigError(f"no modulator at site {site!r}")

    def eom_labelled(self, label: str) -> EomSpec:
        for e in self.eoms:
            if e.label == label:
                return e
        raise ConfigError(f"no modulator with label {label!r}")

    @property
    def trials_per_bin(self) -> int:
        return int(self.photon_rate_hz * self.bin_duration_s)

    def with_imperfections(self, imp: ImperfectionModel) -> "DeviceConfig":
        return replace(self, imperfections=imp)


def _parse_etalon(obj) -> Etalon:
    try:
        return Etalon(fsr_ghz=float(obj["fsr_ghz"]),
                      linewidth_ghz=float(obj["linewidth_ghz"]),
                      center_offset_ghz=float(obj.get("center_offset_ghz", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed etalon entry {obj!r}: {exc}") from None


def config_from_dict(raw: dict) -> DeviceConfig:
    """Build and validate a :class:`DeviceConfig` from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("device config must be a JSON object")
    try:
        eoms_raw = raw["eoms"]
        eoms = tuple(
            EomSpec(site=site, label=str(spec["label"]),
                    freq_ghz=float(spec["freq_ghz"]), alpha=float(spec["alpha"]))
            for site, spec in sorted(eoms_raw.items()))
        bs = raw.get("beamsplitter_r2", 0.5)
        if isinstance(bs, dict):
            bs = tuple(sorted((str(k), float(v)) for k, v in bs.items()))
        else:
            bs = float(bs)
        att = raw.get("attenuator_t", "auto")
        if not isinstance(att, str):
            att = float(att)
        imp = ImperfectionModel(**raw.get("imperfections", {}))
        return DeviceConfig(
            eoms=eoms,
            beamsplitter_r2=bs,
            attenuator_t=att,
            source_etalons=tuple(_parse_etalon(e)
                                 for e in raw.get("source_etalons", ())),
            scan_etalon=_parse_etalon(raw["scan_etalon"]),
            source_raw_linewidth_ghz=float(
                raw.get("source_raw_linewidth_ghz", 1000.0)),
            imperfections=imp,
            photon_rate_hz=float(raw.get("photon_rate_hz", 1000.0)),
            bin_duration_s=float(raw.get("bin_duration_s", 1.0)),
            seed=int(raw.get("seed", 0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"malformed device config: {exc}") from None


def load_config(path) -> DeviceConfig:
    """Read a device config from a JSON file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)


def reference_device(fitted: bool = False) -> DeviceConfig:
    """The packaged reference bench (optionally with fitted visibilities)."""
    name = "reference-bench-fitted.json" if fitted else "reference-bench.json"
    text = (resources.files("cfcomm") / "data" / name).read_text()
    return config_from_dict(json.loads(text))
