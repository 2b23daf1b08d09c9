"""WAV input/output.

Accepts 16-bit integer and 32-bit float PCM; always writes 32-bit float so
round trips are lossless and numerical assertions are not masked by
quantization.
"""

import numpy as np
import scipy.io.wavfile

from .errors import InputError
from .stft import AudioBuffer


def read_wav(path):
    """Read a WAV file into an AudioBuffer (channels x time, float64)."""
    try:
        rate, data = scipy.io.wavfile.read(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file")
    except ValueError as exc:
        raise InputError(f"{path}: unreadable WAV ({exc})")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    elif data.dtype == np.float64:
        samples = data
    else:
        raise InputError(
            f"{path}: unsupported sample format {data.dtype} "
            f"(expected 16-bit PCM or 32-bit float)"
        )
    if samples.ndim == 1:
        samples = samples[None, :]
    else:
        samples = samples.T
    if samples.size == 0:
        raise InputError(f"{path}: empty WAV file")
    return AudioBuffer(samples, rate)


def write_wav(path, audio):
    """Write an AudioBuffer as 32-bit float WAV (mono files stay 1-D)."""
    data = audio.samples.T.astype(np.float32)
    if data.shape[1] == 1:
        data = data[:, 0]
    scipy.io.wavfile.write(path, audio.sample_rate, data)
