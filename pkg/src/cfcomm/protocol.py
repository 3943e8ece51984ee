"""Bit transport over the shuttered bench, with imperfections and images.

The sender encodes a bit by opening or closing the inner-loop shutter; the
receiver decodes from which detector clicks.  This module turns a
:class:`~cfcomm.config.DeviceConfig` into per-trial click probabilities
(dephasing mixtures, dark counts, finite heralding), samples bit decisions
from them, and moves whole bitmaps.

Slow interferometer drift is modelled as a four-sector mixture: each loop
is either coherent or fully dephased during a detection bin, with weights
set by its fringe visibility.  The dephased averages are taken over an
equispaced phase grid, which is exact here — the probabilities are
trigonometric polynomials of low order in the drift phases.

Sampling never loops over trials: the trial count to the first click, the
number of wrong clicks among a fixed quota, and the extra trials needed to
collect that quota are all drawn through the inverse CDFs of their exact
distributions (geometric, binomial, negative binomial).  One bit consumes
two uniforms from its own counter-based stream, so results are identical
bit for bit whether bits are sampled singly or in vectorized blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .circuit import REFERENCE, SHUTTER_1, SHUTTER_2, build_circuit, detection_probs
from .config import DeviceConfig, ImperfectionModel
from .errors import ConfigError, FitInfeasibleError
from .rand import bit_uniforms

__all__ = [
    "ImperfectionModel", "TrialProbs", "BitResult", "Bitmap",
    "TransmissionResult", "sector_probs", "mixture_probs", "trial_probs",
    "model_error_rates", "fit_model", "two_path_contrast", "send_bit",
    "transmit_image", "read_pbm", "write_pbm",
]

#: equispaced points per dephasing average; exact for harmonics below half this
PHASE_GRID = 16

_PRESET_BY_BIT = ("bit0", "bit1")


# --------------------------------------------------------------------------
# click probabilities
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def sector_probs(cfg: DeviceConfig, preset: str) -> dict[str, tuple[float, float]]:
    """(det0, det1) probabilities in the four drift sectors of one preset.

    Keys are two letters, inner loop first: 'c' coherent, 'd' dephased.
    """
    thetas = [2.0 * math.pi * k / PHASE_GRID for k in range(PHASE_GRID)]

    def probs(extra: dict[str, float] | None) -> np.ndarray:
        c = build_circuit(cfg, preset, include_eoms=False, extra_phases=extra)
        d = detection_probs(c)
        return np.array([d["det0"], d["det1"]])

    def inner(delta: float, theta: float | None = None) -> dict[str, float]:
        extra = {SHUTTER_1: delta, SHUTTER_2: delta}
        if theta is not None:
            extra[REFERENCE] = theta
        return extra

    cc = probs(None)
    dc = sum(probs(inner(d)) for d in thetas) / PHASE_GRID
    cd = sum(probs({REFERENCE: t}) for t in thetas) / PHASE_GRID
    dd = sum(probs(inner(d, t)) for d in thetas for t in thetas) / PHASE_GRID ** 2
    return {"cc": (cc[0], cc[1]), "dc": (dc[0], dc[1]),
            "cd": (cd[0], cd[1]), "dd": (dd[0], dd[1])}


def mixture_probs(cfg: DeviceConfig, preset: str,
                  visibility_inner: float | None = None,
                  visibility_outer: float | None = None) -> tuple[float, float]:
    """Drift-averaged (det0, det1) probabilities for one preset.

    Visibilities default to the config's; explicit values serve the fit.
    """
    vi = cfg.imperfections.visibility_inner if visibility_inner is None \
        else visibility_inner
    vo = cfg.imperfections.visibility_outer if visibility_outer is None \
        else visibility_outer
    sectors = sector_probs(cfg, preset)
    weights = {"cc": vi * vo, "dc": (1.0 - vi) * vo,
               "cd": vi * (1.0 - vo), "dd": (1.0 - vi) * (1.0 - vo)}
    p0 = sum(weights[s] * sectors[s][0] for s in sorted(weights))
    p1 = sum(weights[s] * sectors[s][1] for s in sorted(weights))
    return p0, p1


@dataclass(frozen=True)
class TrialProbs:
    """Per-trial click probabilities at the two detectors for one sent bit."""

    click0: float
    click1: float

    @property
    def click(self) -> float:
        return self.click0 + self.click1


def trial_probs(cfg: DeviceConfig, bit: int) -> TrialProbs:
    """Click probabilities including dark counts and heralding efficiency.

    A dark count fires only in bins without a signal click and lands on
    either detector with equal probability.
    """
    if bit not in (0, 1):
        raise ConfigError(f"bit must be 0 or 1, got {bit!r}")
    p0, p1 = mixture_probs(cfg, _PRESET_BY_BIT[bit])
    imp = cfg.imperfections
    eta, dark = imp.heralding_efficiency, imp.dark_rate
    signal = eta * (p0 + p1)
    return TrialProbs(eta * p0 + (1.0 - signal) * dark / 2.0,
                      eta * p1 + (1.0 - signal) * dark / 2.0)


# --------------------------------------------------------------------------
# visibility fit
# --------------------------------------------------------------------------

def model_error_rates(cfg: DeviceConfig, visibility_inner: float,
                      visibility_outer: float) -> tuple[float, float]:
    """Click-conditioned error rates (err0, err1) the drift model predicts.

    Ideal detectors are assumed: with no dark counts the heralding
    efficiency scales both click rates equally and drops out of the
    conditioning.
    """
    b0 = mixture_probs(cfg, "bit0", visibility_inner, visibility_outer)
    b1 = mixture_probs(cfg, "bit1", visibility_inner, visibility_outer)
    return b0[1] / (b0[0] + b0[1]), b1[0] / (b1[0] + b1[1])


def fit_model(cfg: DeviceConfig, err0: float, err1: float) -> ImperfectionModel:
    """Visibilities that reproduce measured click-conditioned error rates.

    err1 does not depend on the inner visibility — light reaching det1 on a
    closed-shutter bit never interferes in the inner loop — so the outer
    visibility is solved from err1 first and the inner from err0 after.
    Rates outside what any visibility pair can produce raise
    :class:`FitInfeasibleError`; nothing is clamped.
    """
    if not 0.0 <= err0 < 1.0 or not 0.0 <= err1 < 1.0:
        raise FitInfeasibleError(
            f"error rates must be in [0, 1), got err0={err0}, err1={err1}")

    def f_outer(vo: float) -> float:
        return model_error_rates(cfg, 1.0, vo)[1] - err1

    if f_outer(0.0) < 0.0:
        raise FitInfeasibleError(
            f"err1={err1} exceeds the fully dephased outer loop "
            f"({model_error_rates(cfg, 1.0, 0.0)[1]:.6g}); no visibility fits")
    vo = float(brentq(f_outer, 0.0, 1.0, xtol=1e-15))

    def f_inner(vi: float) -> float:
        return model_error_rates(cfg, vi, vo)[0] - err0

    if f_inner(0.0) < 0.0:
        raise FitInfeasibleError(
            f"err0={err0} exceeds the fully dephased inner loop "
            f"({model_error_rates(cfg, 0.0, vo)[0]:.6g}) at outer visibility "
            f"{vo:.6g}; no visibility fits")
    vi = float(brentq(f_inner, 0.0, 1.0, xtol=1e-15))
    return ImperfectionModel(visibility_inner=vi, visibility_outer=vo,
                             dark_rate=cfg.imperfections.dark_rate,
                             heralding_efficiency=cfg.imperfections.heralding_efficiency)


def two_path_contrast(visibility: float) -> float:
    """Fringe contrast of a balanced two-path loop at the given visibility.

    Anchors the sector model: a coherent/dephased mixture with weight
    ``visibility`` shows exactly that contrast, so the fit's visibilities
    are directly the fringe contrasts an experimenter would quote.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ConfigError(f"visibility must be in [0, 1], got {visibility}")

    def fringe(phi: float) -> float:
        coherent = abs(0.5 * (1.0 + math.cos(phi))) ** 2 + (0.5 * math.sin(phi)) ** 2
        dephased = sum(abs(0.5 * (1.0 + math.cos(phi + t))) ** 2
                       + (0.5 * math.sin(phi + t)) ** 2
                       for t in (2.0 * math.pi * k / PHASE_GRID
                                 for k in range(PHASE_GRID))) / PHASE_GRID
        return visibility * coherent + (1.0 - visibility) * dephased

    bright, dark = fringe(0.0), fringe(math.pi)
    return (bright - dark) / (bright + dark)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def _parse_policy(policy: str) -> tuple[str, int]:
    if policy == "first-click":
        return ("first", 0)
    if policy.startswith("majority:"):
        try:
            k = int(policy.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"malformed policy {policy!r}") from None
        if k < 1:
            raise ConfigError(f"majority quota must be >= 1, got {k}")
        return ("majority", k)
    raise ConfigError(
        f"unknown policy {policy!r}; expected 'first-click' or 'majority:<k>'")


def _decode_block(bits: np.ndarray, u1: np.ndarray, u2: np.ndarray,
                  cfg: DeviceConfig,
                  policy: tuple[str, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode a block of sent bits from their two uniforms each.

    Returns (received, erased, trials); received is 0 where erased.
    """
    tp = (trial_probs(cfg, 0), trial_probs(cfg, 1))
    c0 = np.where(bits == 1, tp[1].click0, tp[0].click0)
    c1 = np.where(bits == 1, tp[1].click1, tp[0].click1)
    pc = c0 + c1
    clickable = pc > 0.0
    kind, quota = policy

    if kind == "first":
        n_bin = cfg.trials_per_bin
        first = np.full(bits.shape, float(n_bin) + 1.0)
        with np.errstate(divide="ignore"):
            first[clickable] = 1.0 + np.floor(
                np.log1p(-u1[clickable]) / np.log1p(-pc[clickable]))
        erased = first > n_bin
        trials = np.minimum(first, float(n_bin)).astype(np.int64)
        frac0 = np.divide(c0, pc, out=np.zeros_like(pc), where=clickable)
        received = np.where(u2 < frac0, 0, 1)
    else:
        p_wrong = np.divide(np.where(bits == 1, c0, c1), pc,
                            out=np.zeros_like(pc), where=clickable)
        wrong = np.maximum(stats.binom.ppf(u1, quota, p_wrong), 0.0)
        wrong = wrong.astype(np.int64)
        extra = np.maximum(
            stats.nbinom.ppf(u2, quota, np.where(clickable, pc, 1.0)), 0.0)
        extra = np.minimum(extra, 2.0 ** 62).astype(np.int64)
        trials = np.where(clickable, quota + extra, 0)
        received = np.where(2 * wrong > quota, 1 - bits, bits)
        erased = (2 * wrong == quota) | ~clickable

    erased |= ~clickable
    received = np.where(erased, 0, received)
    return received, erased, trials


@dataclass(frozen=True)
class BitResult:
    """One channel use: the decoded bit (None if erased) and trials spent."""

    received: int | None
    trials: int

    @property
    def erased(self) -> bool:
        return self.received is None


def send_bit(cfg: DeviceConfig, bit: int, index: int = 0, *,
             policy: str = "first-click", seed: int | None = None) -> BitResult:
    """Transport one bit; ``index`` selects the channel use's random stream.

    Sending bit i of a block here gives exactly the i-th result of
    :func:`transmit_image` on the same block, policy and seed.
    """
    if bit not in (0, 1):
        raise ConfigError(f"bit must be 0 or 1, got {bit!r}")
    if seed is None:
        seed = cfg.seed
    u = bit_uniforms(seed, index, 1, 2)
    received, erased, trials = _decode_block(
        np.array([bit]), u[:, 0], u[:, 1], cfg, _parse_policy(policy))
    return BitResult(None if erased[0] else int(received[0]), int(trials[0]))


# --------------------------------------------------------------------------
# bitmaps
# --------------------------------------------------------------------------

@dataclass(eq=False)
class Bitmap:
    """Binary image, flat row-major uint8 (0 = white, 1 = black as in PBM)."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if self.width < 1 or self.height < 1:
            raise ConfigError("bitmap dimensions must be positive")
        if self.bits.size != self.width * self.height:
            raise ConfigError(
                f"bitmap has {self.bits.size} pixels, expected "
                f"{self.width}x{self.height}")
        if np.any(self.bits > 1):
            raise ConfigError("bitmap pixels must be 0 or 1")

    def __eq__(self, other) -> bool:
        return (isinstance(other, Bitmap) and self.width == other.width
                and self.height == other.height
                and np.array_equal(self.bits, other.bits))


def read_pbm(path) -> Bitmap:
    """Read a plain (P1) bitmap; digits may be packed without whitespace."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read bitmap {path}: {exc}") from None
    body = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    tokens = body.split()
    if not tokens or tokens[0] != "P1":
        raise ConfigError(f"{path}: not a plain P1 bitmap")
    fields: list[str] = []
    for tok in tokens[1:3]:
        fields.append(tok)
    try:
        width, height = int(fields[0]), int(fields[1])
    except (IndexError, ValueError):
        raise ConfigError(f"{path}: malformed bitmap dimensions") from None
    digits = "".join(tokens[3:])
    if not set(digits) <= {"0", "1"}:
        raise ConfigError(f"{path}: bitmap pixels must be 0 or 1")
    if len(digits) != width * height:
        raise ConfigError(
            f"{path}: expected {width * height} pixels, found {len(digits)}")
    bits = np.frombuffer(digits.encode(), dtype=np.uint8) - ord("0")
    return Bitmap(width, height, bits)


def write_pbm(path, image: Bitmap) -> None:
    """Write a plain P1 bitmap, byte-stable: fixed header, 68-column rows."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"P1\n{image.width} {image.height}\n")
        row = image.bits.reshape(image.height, image.width)
        for r in range(image.height):
            line = "".join("1" if b else "0" for b in row[r])
            for start in range(0, len(line), 68):
                fh.write(line[start:start + 68])
                fh.write("\n")


# --------------------------------------------------------------------------
# image transport
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransmissionResult:
    """Decoded image plus channel statistics.

    ``err0``/``err1`` are conditioned on non-erased pixels;
    ``pixel_error_rate`` counts every pixel, with erasures decoded as 0.
    """

    image: Bitmap
    pixel_error_rate: float
    err0: float
    err1: float
    erasures: int
    seed: int
    trials_used: int

    def stats(self) -> dict:
        return {"pixel_error_rate": self.pixel_error_rate, "err0": self.err0,
                "err1": self.err1, "erasures": self.erasures, "seed": self.seed,
                "trials_used": self.trials_used}


def transmit_image(cfg: DeviceConfig, image: Bitmap, *,
                   policy: str = "first-click",
                   seed: int | None = None) -> TransmissionResult:
    """Send every pixel in raster order, one channel use per pixel."""
    if seed is None:
        seed = cfg.seed
    bits = image.bits.astype(np.int64)
    u = bit_uniforms(seed, 0, bits.size, 2)
    received, erased, trials = _decode_block(
        bits, u[:, 0], u[:, 1], cfg, _parse_policy(policy))

    decoded = received.astype(np.uint8)  # erased entries are already 0
    kept = ~erased
    sent0, sent1 = kept & (bits == 0), kept & (bits == 1)
    err0 = float(np.mean(received[sent0] != 0)) if sent0.any() else 0.0
    err1 = float(np.mean(received[sent1] != 1)) if sent1.any() else 0.0
    return TransmissionResult(
        image=Bitmap(image.width, image.height, decoded),
        pixel_error_rate=float(np.mean(decoded != image.bits)),
        err0=err0,
        err1=err1,
        erasures=int(np.count_nonzero(erased)),
        seed=int(seed),
        trials_used=int(trials.sum()),
    )
