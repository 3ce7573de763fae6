"""
Exception types raised by the phaseharmonics package
"""


class PhaseHarmonicsError(Exception):
    """Base class for all package errors"""


class SignalFormatError(PhaseHarmonicsError, ValueError):
    """Malformed signal file, sidecar or array"""


class FrameError(PhaseHarmonicsError, ValueError):
    """Filter bank violates the frame condition"""


class SelectionError(PhaseHarmonicsError, ValueError):
    """Invalid selection parameters or mismatched selections"""


class NotInvertibleError(PhaseHarmonicsError, ValueError):
    """Phase filter has no first harmonic"""


class RecoveryError(PhaseHarmonicsError, RuntimeError):
    """Every restart of a reconstruction failed"""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
