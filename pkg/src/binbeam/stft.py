"""Short-time Fourier analysis and weighted overlap-add synthesis.

Frame l covers samples [l*hop, l*hop + frame_len); there is no centering and
trailing samples that do not fill a complete frame are dropped. Analysis and
synthesis both use a periodic square-root Hann window, so the synthesis
overlap-add of the squared window is constant for any hop that divides the
frame length by an integer >= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StftConfig",
    "SpectralFrameTensor",
    "sqrt_hann_window",
    "num_frames",
    "analyze",
    "synthesize",
]


def sqrt_hann_window(length: int) -> np.ndarray:
    """Periodic square-root Hann window of the given length."""
    if length <= 0:
        raise ValueError("window length must be positive")
    t = np.arange(length)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * t / length))


def _overlap_added_power(window: np.ndarray, hop: int) -> np.ndarray:
    """Sum of w^2(t - l*hop) over all shifts, evaluated on one hop period."""
    w2 = window**2
    acc = np.zeros(hop)
    for start in range(0, len(window), hop):
        acc += w2[start : start + hop]
    return acc


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis parameters.

    Attributes
    ----------
    frame_len:
        Samples per frame (DFT length, T).
    hop:
        Frame advance in samples (R).
    sample_rate:
        Sampling rate in Hz, used for bin frequencies only.
    """

    frame_len: int = 256
    hop: int = 128
    sample_rate: float = 16000.0

    def __post_init__(self) -> None:
        if self.frame_len <= 0:
            raise ValueError("frame_len must be positive")
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("hop must satisfy 0 < hop <= frame_len")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        ola = _overlap_added_power(self.window, self.hop)
        if self.frame_len % self.hop or not np.allclose(ola, ola[0], rtol=1e-10, atol=1e-12):
            raise ValueError(
                "squared window does not overlap-add to a constant at this hop"
            )

    @property
    def num_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return sqrt_hann_window(self.frame_len)

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each one-sided DFT bin."""
        return np.arange(self.num_bins) * self.sample_rate / self.frame_len


def num_frames(num_samples: int, config: StftConfig) -> int:
    """Complete frames available in a signal of the given length."""
    if num_samples < config.frame_len:
        return 0
    return (num_samples - config.frame_len) // config.hop + 1


@dataclass
class SpectralFrameTensor:
    """One-sided STFT coefficients, shape (num_channels, num_bins, num_frames)."""

    data: np.ndarray
    config: StftConfig

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("data must be 3-dimensional (channels, bins, frames)")
        if self.data.shape[1] != self.config.num_bins:
            raise ValueError(
                f"expected {self.config.num_bins} bins, got {self.data.shape[1]}"
            )
        if not np.iscomplexobj(self.data):
            self.data = self.data.astype(np.complex128)

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_bins(self) -> int:
        return self.data.shape[1]

    @property
    def num_frames(self) -> int:
        return self.data.shape[2]

    def channel(self, index: int) -> "SpectralFrameTensor":
        """Single-channel view of this tensor."""
        return SpectralFrameTensor(self.data[index : index + 1], self.config)


def _as_channel_matrix(signal) -> np.ndarray:
    """Coerce input to float (channels, samples); reject ragged channel lists."""
    if isinstance(signal, (list, tuple)):
        lengths = {np.asarray(ch).shape[-1] for ch in signal}
        if len(lengths) > 1:
            raise ValueError("channels have mismatched lengths")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or (channels, samples)")
    return x


def analyze(signal, config: StftConfig) -> SpectralFrameTensor:
    """Windowed one-sided STFT of a real multichannel signal.

    Arguments
    ---------
    signal:
        Real samples, shape (num_samples,) or (num_channels, num_samples).
    config:
        Analysis parameters.

    Return
    ------
    SpectralFrameTensor with shape (num_channels, frame_len//2+1, num_frames).
    """
    x = _as_channel_matrix(signal)
    frames = num_frames(x.shape[1], config)
    if frames == 0:
        raise ValueError(
            f"signal shorter than one frame ({x.shape[1]} < {config.frame_len})"
        )
    strided = np.lib.stride_tricks.sliding_window_view(x, config.frame_len, axis=1)
    windowed = strided[:, :: config.hop, :][:, :frames, :] * config.window
    spec = np.fft.rfft(windowed, axis=-1)
    return SpectralFrameTensor(spec.transpose(0, 2, 1), config)


def synthesize(tensor: SpectralFrameTensor) -> np.ndarray:
    """Weighted overlap-add synthesis, the adjoint-normalized inverse of analyze.

    Each frame is inverse-transformed, weighted by the synthesis window, and
    accumulated at its frame position; the result is divided by the overlap-added
    squared window. Output has (num_frames-1)*hop + frame_len samples per channel
    and reconstructs analyze input exactly on the fully overlapped interior.
    """
    cfg = tensor.config
    window = cfg.window
    frames_t = np.fft.irfft(tensor.data, n=cfg.frame_len, axis=1) * window[None, :, None]
    total = (tensor.num_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros((tensor.num_channels, total))
    weight = np.zeros(total)
    w2 = window**2
    for l in range(tensor.num_frames):
        start = l * cfg.hop
        out[:, start : start + cfg.frame_len] += frames_t[:, :, l]
        weight[start : start + cfg.frame_len] += w2
    # Edge samples where the window power never accumulates stay zero.
    np.divide(out, weight[None, :], out=out, where=weight[None, :] > 1e-12)
    return out
