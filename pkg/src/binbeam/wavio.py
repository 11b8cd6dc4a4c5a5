"""WAV reading/writing with channels-first float64 arrays in [-1, 1] scale.

Wraps scipy's WAV codec: 16-bit PCM and 32-bit float files are supported in
both directions. Head-mic files are ordered L1..LM, R1..RM; when an external
channel is present it is the last one.
"""

from __future__ import annotations

import numpy as np
import scipy.io.wavfile

__all__ = ["read_wav", "write_wav"]


def read_wav(path) -> tuple[int, np.ndarray]:
    """Read a WAV file as (sample_rate, (channels, samples) float64)."""
    rate, data = scipy.io.wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        scaled = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        scaled = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        scaled = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        scaled = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return int(rate), scaled.T


def write_wav(path, sample_rate: int, data: np.ndarray, encoding: str = "float32") -> None:
    """Write (channels, samples) or (samples,) data as a WAV file.

    encoding: "float32" (default, lossless for pipeline outputs) or "pcm16"
    (clipped to [-1, 1] and rounded).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2:
        raise ValueError("expected (channels, samples) audio data")
    frames = data.T
    if encoding == "float32":
        out = frames.astype(np.float32)
    elif encoding == "pcm16":
        out = np.round(np.clip(frames, -1.0, 1.0) * 32767.0).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    if out.shape[1] == 1:
        out = out[:, 0]
    scipy.io.wavfile.write(path, int(sample_rate), out)
