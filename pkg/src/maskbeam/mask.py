"""Time-frequency masks: pseudo-target computation, channel fusion, and
mask-weighted PSD estimation.

Speech masks s(k, n) live in [0, 1]; the noise mask is 1 - s by construction.
Pseudo targets are binary: a bin is speech-dominated when the level of the
clean estimate relative to the noisy channel clears a threshold that differs
between voiced and unvoiced frames (frames split by full-band energy
quantile of the clean estimate).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMaskError, InputError
from .numerics import hermitize

MAGNITUDE_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class IrmConfig:
    """Thresholds (dB) for the binary ratio-mask targets and the energy
    quantile separating voiced from unvoiced frames."""

    threshold_voiced: float = -6.0
    threshold_unvoiced: float = -12.0
    vad_energy_quantile: float = 0.6

    def __post_init__(self):
        if not np.isfinite(self.threshold_voiced) or not np.isfinite(self.threshold_unvoiced):
            raise InputError("thresholds must be finite")
        if not (0.0 < self.vad_energy_quantile < 1.0):
            raise InputError(
                f"vad_energy_quantile must be in (0, 1), got {self.vad_energy_quantile}"
            )


@dataclass
class MaskTensor:
    """Real mask values, (F, T) fused or (F, T, M) per channel, in [0, 1]."""

    values: np.ndarray
    kind: str = "speech"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim not in (2, 3):
            raise InputError(f"mask must be (F, T) or (F, T, M), got shape {self.values.shape}")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise InputError("mask values must lie in [0, 1]")
        if self.kind not in ("speech", "noise"):
            raise InputError(f"mask kind must be 'speech' or 'noise', got {self.kind!r}")

    @property
    def per_channel(self):
        return self.values.ndim == 3

    def complement(self):
        other = "noise" if self.kind == "speech" else "speech"
        return MaskTensor(1.0 - self.values, other)


def compute_irm_targets(clean_est, noisy, cfg=None):
    """Binary speech-presence targets per channel, shape (F, T, M).

    Per bin and channel: the clean-to-noisy magnitude ratio (noisy magnitude
    floored at MAGNITUDE_FLOOR_REL times its maximum) is compared in dB
    against the voiced or unvoiced threshold; a frame counts as voiced when
    the clean estimate's full-band log energy exceeds the configured quantile.
    """
    cfg = cfg or IrmConfig()
    if clean_est.num_channels != 1:
        raise InputError(f"clean estimate must be single channel, got {clean_est.num_channels}")
    if clean_est.data.shape[:2] != noisy.data.shape[:2]:
        raise InputError(
            f"clean/noisy shape mismatch: {clean_est.data.shape[:2]} vs {noisy.data.shape[:2]}"
        )
    clean_mag = np.abs(clean_est.data[:, :, 0])
    noisy_mag = np.abs(noisy.data)
    floor = MAGNITUDE_FLOOR_REL * max(noisy_mag.max(), 1e-300)
    ratio_db = 20.0 * np.log10(
        np.maximum(clean_mag[:, :, None], 1e-300) / np.maximum(noisy_mag, floor)
    )
    frame_energy = np.sum(clean_mag ** 2, axis=0)
    log_energy = np.log10(frame_energy + 1e-300)
    voiced = log_energy > np.quantile(log_energy, cfg.vad_energy_quantile)
    thresholds = np.where(voiced, cfg.threshold_voiced, cfg.threshold_unvoiced)
    mask = (ratio_db > thresholds[None, :, None]).astype(np.float64)
    return MaskTensor(mask, "speech")


def median_fuse(masks):
    """Elementwise median across channels, (F, T, M) -> (F, T).

    For even channel counts the lower median (order statistic ceil(M/2)) is
    taken, which keeps the result deterministic and inside the value set.
    """
    if not masks.per_channel:
        return MaskTensor(masks.values.copy(), masks.kind)
    m = masks.values.shape[2]
    order = np.sort(masks.values, axis=2)
    return MaskTensor(order[:, :, (m + 1) // 2 - 1], masks.kind)


def substitute_degenerate_rows(values):
    """Replace all-zero mask rows (bins) with uniform ones.

    Returns (patched copy, list of patched bins).  This is the documented
    pipeline fallback for bins where the masked PSD of estimate_psd would be
    undefined; a uniform row turns the weighted PSD into the plain sample
    covariance for that bin.
    """
    values = np.asarray(values, dtype=np.float64)
    dead = np.flatnonzero(values.sum(axis=1) == 0.0)
    if dead.size:
        values = values.copy()
        values[dead] = 1.0
    return values, dead.tolist()


def estimate_psd(spec, mask):
    """Mask-weighted spatial PSDs, one M x M Hermitian matrix per bin.

    Phi(k) = sum_n s(k,n) y(k,n) y(k,n)^H / sum_n s(k,n).  Raises
    DegenerateMaskError naming the offending bins when a mask row sums to
    zero (the pipeline substitutes a uniform mask for those bins).
    """
    values = mask.values if isinstance(mask, MaskTensor) else np.asarray(mask)
    if values.ndim != 2:
        raise InputError(f"estimate_psd expects a fused (F, T) mask, got shape {values.shape}")
    y = spec.data
    if values.shape != y.shape[:2]:
        raise InputError(f"mask shape {values.shape} does not match spectrogram {y.shape[:2]}")
    weight_sums = values.sum(axis=1)
    dead = np.flatnonzero(weight_sums == 0.0)
    if dead.size:
        raise DegenerateMaskError("mask sums to zero, PSD undefined", bins=dead.tolist())
    num = np.einsum("ft,ftm,ftn->fmn", values, y, y.conj())
    psd = num / weight_sums[:, None, None]
    return hermitize(psd)
