"""Binary model checkpoint format for the mask estimator.

Layout (all integers and floats little-endian):

    offset  size  field
    0       8     magic b"MASKNET1"
    8       4     uint32 version (1)
    12      4     uint32 frame context of the feature extractor
    16      8     float64 dropout rate
    24      4     uint32 number of layers N (weight matrices)
    28      4*(N+1)  uint32 layer dims: input, hidden..., output
    ...     -     per layer, in order: weight matrix (fan_out x fan_in,
                  row-major float64), then bias vector (fan_out float64)
"""

import struct

import numpy as np

from .errors import InputError
from .estimator import MaskNet

MAGIC = b"MASKNET1"
VERSION = 1


def save_checkpoint(net, path):
    dims = net.layer_dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, net.context))
        fh.write(struct.pack("<d", net.dropout_rate))
        fh.write(struct.pack("<I", len(net.weights)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise InputError(f"{path}: not a mask-estimator checkpoint (bad magic)")
    version, context = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    (dropout_rate,) = struct.unpack_from("<d", data, 16)
    (n_layers,) = struct.unpack_from("<I", data, 24)
    if n_layers == 0 or len(data) < 28 + 4 * (n_layers + 1):
        raise InputError(f"{path}: truncated checkpoint header")
    dims = struct.unpack_from(f"<{n_layers + 1}I", data, 28)
    offset = 28 + 4 * (n_layers + 1)
    payload = sum(8 * (dims[i + 1] * dims[i] + dims[i + 1]) for i in range(n_layers))
    if len(data) != offset + payload:
        raise InputError(
            f"{path}: checkpoint size mismatch (expected {offset + payload} bytes, "
            f"got {len(data)})"
        )
    weights, biases = [], []
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = np.frombuffer(data, dtype="<f8", count=fan_out * fan_in, offset=offset)
        offset += 8 * fan_out * fan_in
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_out, fan_in).copy())
        biases.append(b.copy())
    return MaskNet(weights, biases, context, dropout_rate)
