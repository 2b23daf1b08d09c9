"""End-to-end enhancement and training pipelines.

The enhancement chain (multi-channel input):

    analyze -> run_mclp -> dereverberate all channels with the learned
    prediction filters -> speech masks (from the MCLP pseudo-clean signal,
    a trained estimator, or a mask file) -> median fusion -> mask-weighted
    PSDs -> GEV or MVDR weights -> beamform -> overlap-add synthesis.

Masks, PSDs and the beamformer all operate on the dereverberated channels:
the linear-prediction stage stands in for the usual dereverberation
preprocessing of the observation, and the pseudo-clean teacher signal is
consistent with what the beamformer sees.  Single-channel input skips
beamforming and returns the synthesized pseudo-clean signal.

Degenerate masks: bins whose mask sums to zero get a uniform mask (plain
sample covariance); if every bin of the noise mask is degenerate (e.g. a
file mask that is 1 everywhere), both PSDs coincide and the beamformer is
meaningless, so the tool warns and emits the untouched reference channel.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .beamform import apply_weights, gev_weights, mvdr_weights, steering_from_psd
from .checkpoint import load_checkpoint
from .errors import InputError
from .estimator import MaskNet, TrainConfig, featurize, predict_masks, train
from .mask import (
    IrmConfig,
    MaskTensor,
    compute_irm_targets,
    estimate_psd,
    median_fuse,
    substitute_degenerate_rows,
)
from .mclp import MclpConfig, build_delayed_stack, run_mclp
from .numerics import DEFAULT_DELTA
from .stft import AudioBuffer, Spectrogram, StftConfig, analyze, synthesize
from .tensorfile import load_tensor

MASK_SOURCES = ("mclp-direct", "neural", "file")
BEAMFORMERS = ("gev", "mvdr")
STEERING_SOURCES = ("psd", "rtf")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything cmd-level entry points need, with per-stage sub-configs."""

    stft: StftConfig = field(default_factory=StftConfig)
    mclp: MclpConfig = field(default_factory=MclpConfig)
    irm: IrmConfig = field(default_factory=IrmConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    beamformer: str = "gev"
    mask_source: str = "mclp-direct"
    steering_source: str = "psd"
    beamform_delta: float = DEFAULT_DELTA
    net_hidden: tuple = (512, 512)
    net_context: int = 1
    model_path: str = None
    mask_path: str = None

    def __post_init__(self):
        if self.beamformer not in BEAMFORMERS:
            raise InputError(f"beamformer must be one of {BEAMFORMERS}, got {self.beamformer!r}")
        if self.mask_source not in MASK_SOURCES:
            raise InputError(f"mask_source must be one of {MASK_SOURCES}, got {self.mask_source!r}")
        if self.steering_source not in STEERING_SOURCES:
            raise InputError(
                f"steering_source must be one of {STEERING_SOURCES}, got {self.steering_source!r}"
            )
        if self.beamform_delta < 0:
            raise InputError(f"beamform_delta must be >= 0, got {self.beamform_delta}")


@dataclass
class EnhanceResult:
    """Enhanced audio plus everything the diagnostics and tests inspect."""

    output: AudioBuffer
    pseudo_clean: AudioBuffer
    fused_mask: MaskTensor
    weights: object  # BeamformerWeights or None for passthrough paths
    mclp_state: object
    diagnostics: dict
    warnings: list = field(default_factory=list)

    def summary(self):
        d = self.diagnostics
        return {
            "channels": d["channels"],
            "frames": d["frames"],
            "beamformer": d["beamformer"],
            "mask_source": d["mask_source"],
            "mclp_fallback_bins": d["mclp_fallback_bins"],
            "psd_substituted_bins": d["psd_substituted_bins"],
            "beamform_fallback_bins": d["beamform_fallback_bins"],
            "timings_s": {k: round(v, 4) for k, v in d["timings_s"].items()},
            "warnings": list(self.warnings),
        }


def dereverberate_channels(spec, state, cfg):
    """Apply the per-bin MCLP prediction filters to every channel:
    returns the multichannel prediction residual y - G^H phi."""
    out = np.empty_like(spec.data)
    for k in range(spec.num_bins):
        stack = build_delayed_stack(spec, k, cfg)
        out[k] = (spec.data[k].T - state.prediction_filters[k].conj().T @ stack).T
    return Spectrogram(out, spec.config)


def _resolve_masks(cfg, dereverbed, pseudo_clean, warnings):
    if cfg.mask_source == "mclp-direct":
        per_channel = compute_irm_targets(pseudo_clean, dereverbed, cfg.irm)
        return median_fuse(per_channel)
    if cfg.mask_source == "neural":
        if not cfg.model_path:
            raise InputError("mask_source 'neural' requires a model checkpoint path")
        net = load_checkpoint(cfg.model_path)
        expected = dereverbed.num_bins * (2 * net.context + 1)
        if net.input_dim != expected:
            raise InputError(
                f"checkpoint expects {net.input_dim} features, input yields {expected}"
            )
        return median_fuse(predict_masks(net, dereverbed))
    # mask_source == "file"
    if not cfg.mask_path:
        raise InputError("mask_source 'file' requires a mask tensor path")
    values = load_tensor(cfg.mask_path)
    if np.iscomplexobj(values):
        raise InputError(f"{cfg.mask_path}: mask tensor must be real")
    if values.ndim == 3:
        fused = median_fuse(MaskTensor(values, "speech"))
    elif values.ndim == 2:
        fused = MaskTensor(values, "speech")
    else:
        raise InputError(f"{cfg.mask_path}: mask must be (F, T) or (F, T, M)")
    if fused.values.shape != (dereverbed.num_bins, dereverbed.num_frames):
        raise InputError(
            f"mask shape {fused.values.shape} does not match spectrogram "
            f"{(dereverbed.num_bins, dereverbed.num_frames)}"
        )
    return fused


def enhance(audio, cfg=None):
    """Run the full enhancement chain on a multi-channel buffer."""
    cfg = cfg or PipelineConfig()
    timings = {}
    warnings = []
    t0 = time.perf_counter()
    spec = analyze(audio, cfg.stft)
    timings["analyze"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pseudo_clean, state = run_mclp(spec, cfg.mclp)
    timings["mclp"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    d1_audio = synthesize(pseudo_clean, cfg.stft)
    d1_audio = AudioBuffer(d1_audio.samples[:, :audio.num_samples], audio.sample_rate)

    diagnostics = {
        "channels": audio.num_channels,
        "frames": spec.num_frames,
        "beamformer": cfg.beamformer,
        "mask_source": cfg.mask_source,
        "mclp_fallback_bins": len(state.fallback_bins),
        "psd_substituted_bins": 0,
        "beamform_fallback_bins": 0,
    }

    if audio.num_channels == 1:
        # nothing to beamform: the pseudo-clean estimate is the output
        warnings.append("single-channel input: MCLP output only, no beamforming")
        timings["synthesize"] = time.perf_counter() - t0
        diagnostics["timings_s"] = timings
        return EnhanceResult(d1_audio, d1_audio, MaskTensor(
            np.ones((spec.num_bins, spec.num_frames))), None, state, diagnostics, warnings)

    dereverbed = dereverberate_channels(spec, state, cfg.mclp)
    timings["dereverberate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    fused = _resolve_masks(cfg, dereverbed, pseudo_clean, warnings)
    timings["masks"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    speech_vals, speech_subst = substitute_degenerate_rows(fused.values)
    noise_vals, noise_subst = substitute_degenerate_rows(1.0 - fused.values)
    diagnostics["psd_substituted_bins"] = len(speech_subst) + len(noise_subst)
    if len(noise_subst) == spec.num_bins:
        # speech mask is 1 everywhere: speech and noise PSDs coincide and the
        # beamformer degenerates; emit the untouched reference channel
        warnings.append(
            "noise mask is zero on every bin (speech and noise PSDs coincide); "
            "emitting reference channel unchanged"
        )
        timings["beamform"] = time.perf_counter() - t0
        diagnostics["timings_s"] = timings
        ref = audio.channel(cfg.mclp.reference_channel)
        return EnhanceResult(ref, d1_audio, fused, None, state, diagnostics, warnings)

    phi_xx = estimate_psd(dereverbed, speech_vals)
    phi_vv = estimate_psd(dereverbed, noise_vals)
    timings["psd"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.beamformer == "gev":
        weights = gev_weights(phi_xx, phi_vv, cfg.beamform_delta,
                              cfg.mclp.reference_channel)
        diagnostics["beamform_fallback_bins"] = len(weights.fallback_bins)
    else:
        if cfg.steering_source == "psd":
            steering = steering_from_psd(phi_xx)
        else:
            steering = state.rtf
        weights = mvdr_weights(phi_vv, steering, cfg.beamform_delta)
    beamformed = apply_weights(dereverbed, weights)
    timings["beamform"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = synthesize(beamformed, cfg.stft)
    out = AudioBuffer(out.samples[:, :audio.num_samples], audio.sample_rate)
    timings["synthesize"] = time.perf_counter() - t0
    diagnostics["timings_s"] = timings
    return EnhanceResult(out, d1_audio, fused, weights, state, diagnostics, warnings)


def build_training_set(buffers, cfg):
    """Pseudo-target dataset from unlabeled multi-channel recordings.

    Per utterance: run MCLP, dereverberate, compute binary ratio-mask
    targets against the pseudo-clean signal, and pair per-channel features
    with per-channel targets.
    """
    dataset = []
    per_utt = []
    for audio in buffers:
        spec = analyze(audio, cfg.stft)
        pseudo_clean, state = run_mclp(spec, cfg.mclp)
        dereverbed = dereverberate_channels(spec, state, cfg.mclp)
        targets = compute_irm_targets(pseudo_clean, dereverbed, cfg.irm)
        for m in range(audio.num_channels):
            feats = featurize(dereverbed, m, cfg.net_context)
            dataset.append((feats, targets.values[:, :, m].T))
        per_utt.append({
            "frames": spec.num_frames,
            "channels": audio.num_channels,
            "mclp_fallback_bins": len(state.fallback_bins),
        })
    return dataset, per_utt


def train_mask_net(buffers, cfg=None):
    """Train the mask estimator on MCLP pseudo-targets.

    Returns (net, loss_trace, diagnostics).
    """
    cfg = cfg or PipelineConfig()
    if not buffers:
        raise InputError("need at least one training utterance")
    freq_bins = cfg.stft.freq_bins
    dataset, per_utt = build_training_set(buffers, cfg)
    net = MaskNet.initialize(
        freq_bins,
        context=cfg.net_context,
        hidden=tuple(cfg.net_hidden),
        seed=cfg.train.seed,
        dropout_rate=cfg.train.dropout_rate,
    )
    net, loss_trace = train(net, dataset, cfg.train)
    return net, loss_trace, {"utterances": per_utt, "examples": len(dataset)}
