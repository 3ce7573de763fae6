"""
Wavelet phase-harmonic analysis: analytic wavelet frames, phase-harmonic
descriptors and signal recovery from a compressed set of descriptors.
"""
from .errors import (PhaseHarmonicsError, SignalFormatError, FrameError, SelectionError,
                     NotInvertibleError, RecoveryError)
from .signal_io import (RngSpec, load_signal, save_signal, gen_white_noise, gen_piecewise_regular,
                        gen_modulated_cosine, gen_cartoon, circular_shift)
from .filterbank import (FilterBank, BankParams, FrameReport, build_bank, build_bank_1d, build_bank_2d,
                         frame_report, dual_bank, save_bank, load_bank)
from .transform import AnalyticCoefficients, analyze, reconstruct_frame, analytic_pair_check
from .phase_harmonics import (PhaseFilter, HarmonicField, phase_harmonic, hhat_table, apply_U, apply_U_hat,
                              invert_from_first_harmonic, sharpen_filter)
from .descriptors import (SelectionIndex, DescriptorSet, select_coefficients, describe, covariance,
                          mean_flatness)
from .recovery import (RecoveryConfig, RecoveryResult, reconstruct, align_and_psnr, decay_sweep,
                       ergodicity_report)
from .optimize import lbfgs

__version__ = '0.1.0'
