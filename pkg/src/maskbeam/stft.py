"""Short-time Fourier analysis and overlap-add synthesis.

Conventions used throughout the toolkit:
  * Spectrogram tensors are complex, indexed (F, T, M): frequency bin k,
    frame n, channel m.  F = fft_size // 2 + 1 (one-sided spectrum).
  * Frame n covers samples [n * hop, n * hop + fft_size).  Frames are taken
    while their start lies inside the signal and at least one full-frame
    boundary fits; a final frame that extends past the end of the signal is
    zero-padded.  For a signal of length N this gives
        T = (N - fft_size) // hop + 1            if (N - fft_size) % hop == 0
        T = (N - fft_size) // hop + 2            otherwise (one padded frame)
  * Analysis and synthesis use the same window (weighted overlap-add);
    synthesis divides by the accumulated squared window, so an unmodified
    round trip reconstructs the input exactly wherever that accumulation is
    nonzero.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

COLA_RTOL = 1e-10


def make_window(name, fft_size):
    """Return the named analysis taper as a float64 array of length fft_size.

    Supported: "sqrt_hann" (default analysis/synthesis pair), "hann", "rect".
    Periodic definitions are used so overlap-add sums are constant.
    """
    n = np.arange(fft_size)
    if name == "sqrt_hann":
        return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / fft_size))
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / fft_size)
    if name == "rect":
        return np.ones(fft_size)
    raise ConfigurationError(f"unknown window: {name!r}")


def cola_deviation(window, hop):
    """Max relative deviation of the overlap-added squared window from constant.

    The analysis/synthesis pair uses the same taper, so the quantity that must
    be constant for perfect reconstruction is sum_k w^2(t - k*hop).
    """
    n = len(window)
    reps = 8 * (n // hop + 2)
    acc = np.zeros(reps * hop + n)
    w2 = window * window
    for k in range(reps):
        acc[k * hop:k * hop + n] += w2
    interior = acc[n:reps * hop]  # fully overlapped region
    ref = np.median(interior)
    if ref <= 0.0:
        return np.inf
    return float(np.max(np.abs(interior - ref)) / ref)


@dataclass(frozen=True)
class StftConfig:
    """STFT parameters. fft_size must be a power of two; the window/hop pair
    must satisfy the constant-overlap-add condition (checked at construction).
    """

    fft_size: int = 512
    hop: int = 128
    window: str = "sqrt_hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.fft_size < 2 or (self.fft_size & (self.fft_size - 1)) != 0:
            raise ConfigurationError(f"fft_size must be a power of two, got {self.fft_size}")
        if not (0 < self.hop <= self.fft_size):
            raise ConfigurationError(f"hop must satisfy 0 < hop <= fft_size, got {self.hop}")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        w = make_window(self.window, self.fft_size)
        dev = cola_deviation(w, self.hop)
        if dev > COLA_RTOL:
            raise ConfigurationError(
                f"window {self.window!r} at hop {self.hop} is not COLA "
                f"(relative deviation {dev:.3e})"
            )

    @property
    def freq_bins(self):
        return self.fft_size // 2 + 1

    def num_frames(self, n_samples):
        """Frame count for a signal of n_samples (see module docstring)."""
        if n_samples < self.fft_size:
            raise InputError(
                f"signal of {n_samples} samples is shorter than one frame ({self.fft_size})"
            )
        full = (n_samples - self.fft_size) // self.hop + 1
        if (n_samples - self.fft_size) % self.hop:
            return full + 1
        return full

    def frame_time(self, frame):
        """Start time of a frame in seconds (frame n starts at sample n*hop)."""
        return frame * self.hop / self.sample_rate


@dataclass
class AudioBuffer:
    """Multi-channel PCM samples, shape (channels, time), plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise InputError(f"samples must be (channels, time), got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def num_channels(self):
        return self.samples.shape[0]

    @property
    def num_samples(self):
        return self.samples.shape[1]

    def channel(self, m):
        return AudioBuffer(self.samples[m:m + 1].copy(), self.sample_rate)


@dataclass
class Spectrogram:
    """Complex STFT tensor of shape (F, T, M) with the config that made it."""

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 3:
            raise InputError(f"spectrogram must be (F, T, M), got shape {self.data.shape}")
        if self.data.shape[0] != self.config.freq_bins:
            raise InputError(
                f"frequency axis {self.data.shape[0]} does not match "
                f"fft_size {self.config.fft_size} (expected {self.config.freq_bins} bins)"
            )

    @property
    def num_bins(self):
        return self.data.shape[0]

    @property
    def num_frames(self):
        return self.data.shape[1]

    @property
    def num_channels(self):
        return self.data.shape[2]


def _frame_signal(x, cfg, num_frames):
    """Slice one channel into (T, fft_size) frames, zero-padding past the end."""
    needed = (num_frames - 1) * cfg.hop + cfg.fft_size
    if needed > len(x):
        x = np.concatenate([x, np.zeros(needed - len(x))])
    idx = cfg.hop * np.arange(num_frames)[:, None] + np.arange(cfg.fft_size)[None, :]
    return x[idx]


def analyze(audio, cfg=None):
    """STFT of a multi-channel buffer -> Spectrogram of shape (F, T, M).

    Channels are transformed independently (channel m of the result is
    bit-identical to analyzing that channel alone).
    """
    cfg = cfg or StftConfig()
    if audio.num_samples < cfg.fft_size:
        raise InputError(
            f"audio of {audio.num_samples} samples is shorter than one frame ({cfg.fft_size})"
        )
    window = make_window(cfg.window, cfg.fft_size)
    num_frames = cfg.num_frames(audio.num_samples)
    out = np.empty((cfg.freq_bins, num_frames, audio.num_channels), dtype=np.complex128)
    for m in range(audio.num_channels):
        frames = _frame_signal(audio.samples[m], cfg, num_frames)
        out[:, :, m] = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1).T
    return Spectrogram(out, cfg)


def synthesize(spec, cfg=None):
    """Weighted overlap-add synthesis of a single-channel Spectrogram.

    Output length is fft_size + (T - 1) * hop; callers that know the original
    signal length should trim.  For an unmodified spectrum this inverts
    analyze() exactly (up to roundoff) wherever the squared-window
    accumulation is nonzero.
    """
    cfg = cfg or spec.config
    if spec.num_channels != 1:
        raise InputError(f"synthesize expects a single channel, got {spec.num_channels}")
    if spec.num_bins != cfg.freq_bins:
        raise InputError(
            f"spectrogram has {spec.num_bins} bins, config expects {cfg.freq_bins}"
        )
    window = make_window(cfg.window, cfg.fft_size)
    frames = np.fft.irfft(spec.data[:, :, 0].T, n=cfg.fft_size, axis=1)
    n_out = cfg.fft_size + (spec.num_frames - 1) * cfg.hop
    acc = np.zeros(n_out)
    norm = np.zeros(n_out)
    w2 = window * window
    for n in range(spec.num_frames):
        s = n * cfg.hop
        acc[s:s + cfg.fft_size] += frames[n] * window
        norm[s:s + cfg.fft_size] += w2
    nz = norm > 1e-12
    acc[nz] /= norm[nz]
    return AudioBuffer(acc[None, :], cfg.sample_rate)
