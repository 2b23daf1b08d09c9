"""Joint multi-channel linear prediction dereverberation and spatial filtering.

Per frequency bin, the late reverberation in y(k, n) is modeled as a linear
prediction from delayed STFT frames of all channels, and a reference signal
d1(k, n) is extracted by a distortionless spatial filter.  Estimation is
iterative maximum likelihood under a zero-mean complex Gaussian prior with
per-bin, per-frame variance gamma:

  per iteration: prediction filter G (weighted least squares) -> residual
  -> RTF a (principal eigenvector of the residual covariance, unit reference
  component) -> spatial filter w (distortionless, w^H a = 1) ->
  d1 = w^H (y - G^H phi) -> gamma (windowed mean power of d1, floored).

The spatial filter is the exact constrained minimizer of the objective being
descended: it is built from the variance-weighted residual covariance
(1/T) sum_n gamma_n^-1 r r^H, so each iteration's G and w updates jointly
lower the weighted residual.  (A filter built from the predicted-reverb
covariance alone ignores additive noise and does not descend the
objective.)

Objective bookkeeping: the weighted residual sum_n gamma^-1 |w^H (y - G^H
phi)|^2 is recorded twice per iteration, both under the variances in effect
during that iteration's updates: once for the entering parameters (with the
previous spatial filter renormalized onto the fresh constraint w^H a = 1)
and once for the updated parameters.  Each post value is mathematically
guaranteed not to exceed its pre value; entries of different iterations use
different variances and are not directly comparable.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBinError, InputError, NumericalFailure
from .numerics import DEFAULT_DELTA, dominant_eigvec, hermitize, solve_hermitian
from .stft import Spectrogram

RTF_DEGENERATE_ABS = 1e-12


@dataclass(frozen=True)
class MclpConfig:
    """Prediction taps per channel (L), frame delay (D), iteration count,
    variance floor, regularization, reference channel, and the one-sided
    context (frames) of the variance smoothing window.

    variance_floor=None resolves at run time to 1e-8 times the mean input
    power, which keeps the floor scale-free.
    """

    taps: int = 10
    delay: int = 2
    iterations: int = 3
    variance_floor: float = None
    delta: float = DEFAULT_DELTA
    reference_channel: int = 0
    context: int = 1

    def __post_init__(self):
        if self.taps < 1:
            raise InputError(f"taps must be >= 1, got {self.taps}")
        if self.delay < 1:
            raise InputError(f"delay must be >= 1, got {self.delay}")
        if self.iterations < 1:
            raise InputError(f"iterations must be >= 1, got {self.iterations}")
        if self.variance_floor is not None and self.variance_floor <= 0:
            raise InputError(f"variance_floor must be positive, got {self.variance_floor}")
        if self.reference_channel < 0:
            raise InputError(f"reference_channel must be >= 0, got {self.reference_channel}")
        if self.context < 0:
            raise InputError(f"context must be >= 0, got {self.context}")


@dataclass
class MclpState:
    """Per-bin estimates after the final iteration plus objective traces.

    prediction_filters: (F, L*M, M); rtf: (F, M) with unit reference
    component; spatial_filters: (F, M) with w^H a = 1; variances: (F, T);
    objective_trace / objective_pre_trace: (F, iterations), see module
    docstring; fallback_bins: bins that degraded to reference passthrough.
    """

    prediction_filters: np.ndarray
    rtf: np.ndarray
    spatial_filters: np.ndarray
    variances: np.ndarray
    objective_trace: np.ndarray
    objective_pre_trace: np.ndarray
    fallback_bins: list = field(default_factory=list)
    rtf_fallback_bins: list = field(default_factory=list)


def build_delayed_stack(spec, bin_index, cfg):
    """Delayed multi-channel STFT stack phi for one bin, shape (L*M, T).

    Column n holds [y^1(k, n-D-1), ..., y^1(k, n-D-L), ...,
    y^M(k, n-D-1), ..., y^M(k, n-D-L)]; lags before frame 0 are zero.
    """
    y = spec.data[bin_index]  # (T, M)
    t, m = y.shape
    stack = np.zeros((cfg.taps * m, t), dtype=np.complex128)
    for lag in range(1, cfg.taps + 1):
        shift = cfg.delay + lag
        if shift >= t:
            continue
        for ch in range(m):
            stack[ch * cfg.taps + lag - 1, shift:] = y[:t - shift, ch]
    return stack


def estimate_prediction_filter(stack, y, gamma, delta=DEFAULT_DELTA, bin_index=None):
    """Weighted least-squares prediction filter G, shape (L*M, M).

    Solves R_pp G = R_py with R_pp = sum_n gamma_n^-1 phi_n phi_n^H and
    R_py = sum_n gamma_n^-1 phi_n y_n^H.
    """
    inv_g = 1.0 / gamma
    weighted = stack * inv_g[None, :]
    r_pp = weighted @ stack.conj().T
    r_py = weighted @ y.conj().T if y.ndim == 2 else weighted @ y.conj()[:, None]
    return solve_hermitian(hermitize(r_pp), r_py, delta, bin_index=bin_index)


def estimate_rtf(residual, reference=0):
    """Relative transfer function from the residual spatial covariance.

    Takes the principal eigenvector of (1/T) sum_n r r^H and normalizes it
    to a unit reference component.  For a rank-one residual a * d(n) this
    recovers a exactly; unlike the raw reference column of the covariance,
    the eigenvector is unbiased under spatially white noise (the eigenvectors
    of sigma^2 a a^H + sigma_v^2 I are those of the rank-one part).  Raises
    DegenerateBinError when the reference component of the eigenvector is
    below RTF_DEGENERATE_ABS (callers substitute the reference unit vector).
    """
    t = residual.shape[1]
    cov = hermitize(residual @ residual.conj().T / t)
    vec = dominant_eigvec(cov)
    ref_component = vec[reference]
    if abs(ref_component) < RTF_DEGENERATE_ABS:
        raise DegenerateBinError(
            f"reference-channel component {abs(ref_component):.3e} too small for RTF"
        )
    return vec / ref_component


def estimate_spatial_filter(r_rr, rtf, delta=DEFAULT_DELTA, bin_index=None):
    """Distortionless filter w = R^-1 a / (a^H R^-1 a); w^H a = 1 holds exactly.

    R is the spatial covariance of the predicted reverberation component.
    """
    u = solve_hermitian(r_rr, rtf, delta, bin_index=bin_index)
    denom = np.vdot(rtf, u).real
    if denom <= 0.0 or not np.isfinite(denom):
        raise NumericalFailure(
            f"spatial filter normalization degenerate (a^H R^-1 a = {denom:.3e})",
            bin_index=bin_index,
        )
    return u / denom


def update_variance(d1, cfg, floor):
    """Windowed mean power of the desired-signal estimate, floored.

    gamma_n = max(floor, mean |d1|^2 over frames [n - context, n + context]);
    the window is truncated at the edges (mean over the frames present).
    """
    power = np.abs(d1) ** 2
    if cfg.context == 0:
        return np.maximum(power, floor)
    t = len(power)
    acc = np.zeros(t)
    counts = np.zeros(t)
    for c in range(-cfg.context, cfg.context + 1):
        lo, hi = max(c, 0), min(t, t + c)
        acc[lo:hi] += power[max(-c, 0):min(t, t - c)]
        counts[lo:hi] += 1
    return np.maximum(acc / counts, floor)


def _unit_vector(m, index):
    e = np.zeros(m, dtype=np.complex128)
    e[index] = 1.0
    return e


def _weighted_objective(residual, w, gamma):
    out = w.conj() @ residual
    return float(np.sum(np.abs(out) ** 2 / gamma))


def _refeasibilize(w_prev, rtf, e_ref):
    """Rescale the previous spatial filter onto the current constraint
    w^H a = 1; falls back to the reference unit vector (always feasible,
    since a has unit reference component) when they are near-orthogonal."""
    c = np.vdot(w_prev, rtf)
    if abs(c) < 1e-6:
        return e_ref
    return w_prev / np.conj(c)


def _lazy_delta_solve(solver, delta):
    """Run a solve with no diagonal loading, escalating to the configured
    loading only when the unloaded system is not positive definite.  Keeps
    the weighted-least-squares updates exact minimizers (the descent
    guarantee) whenever the data allows it."""
    try:
        return solver(0.0)
    except NumericalFailure:
        if delta == 0.0:
            raise
        return solver(delta)


def run_mclp(spec, cfg=None):
    """Iterative per-bin MCLP estimation over a full spectrogram.

    Returns (d1, state): d1 is a single-channel Spectrogram of the desired
    signal estimate; state carries the per-bin filters, RTFs, variances and
    objective traces.  A bin whose linear algebra fails falls back to
    reference-channel passthrough and is listed in state.fallback_bins.

    Initialization: gamma from reference-channel power, G = 0, a = w = e_ref;
    the first iteration then reduces to standard weighted prediction-error
    dereverberation.
    """
    cfg = cfg or MclpConfig()
    f_bins, t_frames, m = spec.data.shape
    if cfg.reference_channel >= m:
        raise InputError(
            f"reference channel {cfg.reference_channel} out of range for {m} channels"
        )
    if t_frames <= cfg.delay + cfg.taps:
        raise InputError(
            f"need more than delay + taps = {cfg.delay + cfg.taps} frames, got {t_frames}"
        )
    floor = cfg.variance_floor
    if floor is None:
        mean_power = float(np.mean(np.abs(spec.data) ** 2))
        floor = 1e-8 * mean_power if mean_power > 0 else 1e-8
    lm = cfg.taps * m
    ref = cfg.reference_channel
    e_ref = _unit_vector(m, ref)

    d1 = np.zeros((f_bins, t_frames, 1), dtype=np.complex128)
    state = MclpState(
        prediction_filters=np.zeros((f_bins, lm, m), dtype=np.complex128),
        rtf=np.tile(e_ref, (f_bins, 1)),
        spatial_filters=np.tile(e_ref, (f_bins, 1)),
        variances=np.zeros((f_bins, t_frames)),
        objective_trace=np.zeros((f_bins, cfg.iterations)),
        objective_pre_trace=np.zeros((f_bins, cfg.iterations)),
    )

    for k in range(f_bins):
        y = spec.data[k].T  # (M, T)
        stack = build_delayed_stack(spec, k, cfg)
        gamma = np.maximum(np.abs(y[ref]) ** 2, floor)
        g = np.zeros((lm, m), dtype=np.complex128)
        a = e_ref.copy()
        w = e_ref.copy()
        residual = y.copy()
        try:
            for it in range(cfg.iterations):
                prev_residual = residual
                g = _lazy_delta_solve(
                    lambda d: estimate_prediction_filter(stack, y, gamma, d, bin_index=k),
                    cfg.delta,
                )
                residual = y - g.conj().T @ stack
                try:
                    a = estimate_rtf(residual, ref)
                except DegenerateBinError:
                    a = e_ref.copy()
                    if k not in state.rtf_fallback_bins:
                        state.rtf_fallback_bins.append(k)
                state.objective_pre_trace[k, it] = _weighted_objective(
                    prev_residual, _refeasibilize(w, a, e_ref), gamma
                )
                weighted = residual / np.sqrt(gamma)[None, :]
                r_rr = hermitize(weighted @ weighted.conj().T / t_frames)
                w = _lazy_delta_solve(
                    lambda d: estimate_spatial_filter(r_rr, a, d, bin_index=k),
                    cfg.delta,
                )
                out = w.conj() @ residual
                state.objective_trace[k, it] = float(np.sum(np.abs(out) ** 2 / gamma))
                gamma = update_variance(out, cfg, floor)
            d1[k, :, 0] = out
            state.prediction_filters[k] = g
            state.rtf[k] = a
            state.spatial_filters[k] = w
            state.variances[k] = gamma
        except NumericalFailure:
            d1[k, :, 0] = y[ref]
            state.prediction_filters[k] = 0.0
            state.rtf[k] = e_ref
            state.spatial_filters[k] = e_ref
            state.variances[k] = np.maximum(np.abs(y[ref]) ** 2, floor)
            state.objective_trace[k] = 0.0
            state.objective_pre_trace[k] = 0.0
            state.fallback_bins.append(k)
    return Spectrogram(d1, spec.config), state
