"""maskbeam: unsupervised multi-channel speech enhancement.

MCLP-based maximum-likelihood dereverberation produces a pseudo-clean signal;
ratio-mask targets derived from it (directly or through a small trainable
estimator) drive mask-weighted PSD estimation and GEV/MVDR beamforming.
"""

__version__ = "0.1.0"

from .stft import AudioBuffer, Spectrogram, StftConfig, analyze, synthesize  # noqa: F401
from .mask import IrmConfig, MaskTensor, compute_irm_targets, estimate_psd, median_fuse  # noqa: F401
