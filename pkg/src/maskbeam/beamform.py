"""GEV and MVDR spatial filters from mask-derived PSDs.

Weights follow the conjugate convention: the beamformed signal is
z(k, n) = w(k)^H y(k, n) = sum_m conj(w(m, k)) y^m(k, n).

GEV weights maximize the per-bin output SNR (dominant generalized
eigenvector of the speech/noise PSD pair) and carry the attained Rayleigh
quotient as a diagnostic.  They have unit norm and a real, non-negative
first significant component; no blind analytic normalization postfilter is
applied, so per-bin output scale is arbitrary.  MVDR weights are
distortionless toward a steering vector: w^H d = 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalFailure
from .numerics import (
    DEFAULT_DELTA,
    dominant_eigvec,
    max_generalized_eigvec,
    solve_hermitian,
)
from .stft import Spectrogram

STEERING_REF_TOL = 1e-8


@dataclass
class BeamformerWeights:
    """Per-bin filter vectors (F, M) with method tag and diagnostics.

    eigenvalues holds the per-bin GEV output-SNR diagnostic (NaN for MVDR);
    steering holds the MVDR steering vectors when applicable; fallback_bins
    lists bins that degraded to the reference unit vector.
    """

    weights: np.ndarray
    method: str
    eigenvalues: np.ndarray = None
    steering: np.ndarray = None
    fallback_bins: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.complex128)
        if self.weights.ndim != 2:
            raise InputError(f"weights must be (F, M), got shape {self.weights.shape}")
        if self.method not in ("gev", "mvdr"):
            raise InputError(f"method must be 'gev' or 'mvdr', got {self.method!r}")
        if not np.all(np.isfinite(self.weights.view(np.float64))):
            raise InputError("weights must be finite")


def gev_weights(phi_xx, phi_vv, delta=DEFAULT_DELTA, reference_channel=0):
    """Max-SNR weights per bin from speech/noise PSD stacks of shape (F, M, M).

    A bin whose eigensolve fails falls back to the reference-channel unit
    vector and is recorded in fallback_bins.
    """
    phi_xx = np.asarray(phi_xx)
    phi_vv = np.asarray(phi_vv)
    if phi_xx.shape != phi_vv.shape or phi_xx.ndim != 3:
        raise InputError(
            f"PSD stacks must share shape (F, M, M), got {phi_xx.shape} vs {phi_vv.shape}"
        )
    f_bins, m, _ = phi_xx.shape
    weights = np.zeros((f_bins, m), dtype=np.complex128)
    lams = np.full(f_bins, np.nan)
    fallback = []
    for k in range(f_bins):
        try:
            w, lam = max_generalized_eigvec(phi_xx[k], phi_vv[k], delta, bin_index=k)
            weights[k] = w
            lams[k] = lam
        except NumericalFailure:
            weights[k, reference_channel] = 1.0
            fallback.append(k)
    return BeamformerWeights(weights, "gev", eigenvalues=lams, fallback_bins=fallback)


def mvdr_weights(phi_vv, steering, delta=DEFAULT_DELTA):
    """Distortionless minimum-noise weights: w = R^-1 d / (d^H R^-1 d) per bin.

    phi_vv is (F, M, M), steering is (F, M) and nonzero per bin.  Solve
    failures propagate as NumericalFailure naming the bin.
    """
    phi_vv = np.asarray(phi_vv)
    steering = np.asarray(steering, dtype=np.complex128)
    if phi_vv.ndim != 3 or steering.shape != phi_vv.shape[:2]:
        raise InputError(
            f"expected phi_vv (F, M, M) and steering (F, M), got "
            f"{phi_vv.shape} and {steering.shape}"
        )
    f_bins, m = steering.shape
    weights = np.zeros((f_bins, m), dtype=np.complex128)
    for k in range(f_bins):
        d = steering[k]
        if not np.any(d):
            raise InputError(f"steering vector is zero at bin {k}")
        u = solve_hermitian(phi_vv[k], d, delta, bin_index=k)
        denom = np.vdot(d, u).real
        if denom <= 0.0 or not np.isfinite(denom):
            raise NumericalFailure(
                f"MVDR normalization degenerate (d^H R^-1 d = {denom:.3e})",
                bin_index=k,
            )
        weights[k] = u / denom
    return BeamformerWeights(weights, "mvdr", steering=steering.copy())


def steering_from_psd(phi_xx):
    """Per-bin steering vectors: dominant eigenvector of the speech PSD,
    normalized to unit first component.

    Bins where the PSD is degenerate (zero, or steering nearly orthogonal to
    the first channel) fall back to e1; exact eigenvalue ties resolve
    deterministically to the lowest-index basis vector.
    """
    phi_xx = np.asarray(phi_xx)
    if phi_xx.ndim != 3:
        raise InputError(f"PSD stack must be (F, M, M), got shape {phi_xx.shape}")
    f_bins, m, _ = phi_xx.shape
    steering = np.zeros((f_bins, m), dtype=np.complex128)
    for k in range(f_bins):
        if not np.any(phi_xx[k]):
            steering[k, 0] = 1.0
            continue
        v = dominant_eigvec(phi_xx[k], bin_index=k)
        if abs(v[0]) < STEERING_REF_TOL:
            steering[k] = 0.0
            steering[k, 0] = 1.0
        else:
            steering[k] = v / v[0]
    return steering


def apply_weights(spec, bf):
    """Beamform a multichannel spectrogram: z(k, n) = w(k)^H y(k, n)."""
    if spec.num_channels != bf.weights.shape[1]:
        raise InputError(
            f"weights for {bf.weights.shape[1]} channels applied to "
            f"{spec.num_channels}-channel spectrogram"
        )
    if spec.num_bins != bf.weights.shape[0]:
        raise InputError(
            f"weights for {bf.weights.shape[0]} bins applied to "
            f"{spec.num_bins}-bin spectrogram"
        )
    z = np.einsum("fm,ftm->ft", bf.weights.conj(), spec.data)
    return Spectrogram(z[:, :, None], spec.config)
