"""Desk-scale simulator of exchange-free bit transport.

A single photon probes a pair of nested interferometer loops; whether the
receiver's shutter is open or closed steers the photon to one of two
detectors even though, on the postselected records, no light weight sits in
the transmission channel.  The package builds the bench, tunes it, verifies
the "nothing crossed" claim with two-state weak traces and tagged-sideband
spectra, and runs the resulting bit/image channel with realistic
imperfections.
"""

from .circuit import (Circuit, FoldedDevice, TraceReport, Tuning, build_circuit,
                      calibration_tuning, detection_probs, expand_folded,
                      propagate, sideband_strengths, solve_tuning, weak_trace)
from .config import (DeviceConfig, EomSpec, ImperfectionModel, load_config,
                     reference_device)
from .errors import (CfcommError, ConfigError, FitInfeasibleError,
                     TopologyError, UndefinedPostselectionError)
from .protocol import (Bitmap, BitResult, TransmissionResult, fit_model,
                       read_pbm, send_bit, transmit_image, write_pbm)
from .spectral import (Etalon, PeakTable, Spectrum, extract_peaks,
                       scan_spectrum, source_filter_cascade)

__version__ = "0.1.0"

__all__ = [
    "Circuit", "FoldedDevice", "TraceReport", "Tuning", "build_circuit",
    "calibration_tuning", "detection_probs", "expand_folded", "propagate",
    "sideband_strengths", "solve_tuning", "weak_trace",
    "DeviceConfig", "EomSpec", "ImperfectionModel", "load_config",
    "reference_device",
    "CfcommError", "ConfigError", "FitInfeasibleError", "TopologyError",
    "UndefinedPostselectionError",
    "Bitmap", "BitResult", "TransmissionResult", "fit_model", "read_pbm",
    "send_bit", "transmit_image", "write_pbm",
    "Etalon", "PeakTable", "Spectrum", "extract_peaks", "scan_spectrum",
    "source_filter_cascade",
    "__version__",
]
