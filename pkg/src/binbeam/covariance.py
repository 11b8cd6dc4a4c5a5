"""Recursive second-order statistics gated by an oracle voice-activity label.

The noisy-speech covariance R_y and the cross-power vector between the head
mics and the external microphone are updated during speech frames; the noise
covariance R_n is updated during noise-only frames. Updates are exponential
recursions r <- alpha r + (1-alpha) (new outer product), re-Hermitized after
every step so roundoff cannot accumulate asymmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stft import SpectralFrameTensor

__all__ = [
    "alpha_from_time_constant",
    "oracle_vad",
    "diagonally_loaded",
    "CovarianceState",
    "initialize",
]


def alpha_from_time_constant(tau_s: float, sample_rate: float, hop: int) -> float:
    """Per-frame forgetting factor exp(-hop / (sample_rate * tau))."""
    if tau_s <= 0 or sample_rate <= 0 or hop <= 0:
        raise ValueError("tau_s, sample_rate and hop must be positive")
    return math.exp(-hop / (sample_rate * tau_s))


def _frame_matrix(frames) -> np.ndarray:
    """Coerce a single-channel tensor or array to (num_bins, num_frames)."""
    if isinstance(frames, SpectralFrameTensor):
        if frames.num_channels != 1:
            raise ValueError("expected a single-channel tensor")
        return frames.data[0]
    x = np.asarray(frames)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("frames must be (num_bins, num_frames)")
    return x


def oracle_vad(clean_speech_ref, threshold_db: float = 40.0) -> np.ndarray:
    """Broadband frame labels from the clean speech at the reference mic.

    A frame is speech iff its summed spectral energy lies within threshold_db
    of the loudest frame. The input must be the clean speech component; an
    all-zero input has no loudest frame and is rejected.
    """
    x = _frame_matrix(clean_speech_ref)
    if threshold_db <= 0:
        raise ValueError("threshold_db must be positive")
    energy = np.sum(np.abs(x) ** 2, axis=0)
    peak = float(np.max(energy)) if energy.size else 0.0
    if peak <= 0.0:
        raise ValueError("clean speech frames are all zero; no activity to label")
    return energy > peak * 10.0 ** (-threshold_db / 10.0)


def diagonally_loaded(matrices: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Copy with rel * trace/n added to the diagonal, batched over leading axes."""
    m = np.array(matrices, dtype=np.complex128)
    n = m.shape[-1]
    trace = np.trace(m, axis1=-2, axis2=-1).real / n
    idx = np.arange(n)
    m[..., idx, idx] += (rel * trace)[..., None]
    return m


def _hermitized(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def _check_alpha(name: str, value: float) -> float:
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must lie in [0, 1)")
    return float(value)


@dataclass
class CovarianceState:
    """Per-bin running statistics for the head-mic vector y.

    Attributes
    ----------
    r_y, r_n:
        (num_bins, 2M, 2M) Hermitian noisy-speech and noise covariances.
    r_ye:
        (num_bins, 2M) cross-power between y and the external microphone.
    r_ys:
        Optional (num_bins, 2M) cross-power between y and the clean source
        frames; tracked only when the oracle variant of the coherence
        estimator is in use.
    alpha_y, alpha_n, alpha_c:
        Forgetting factors for speech, noise and cross-power updates.
    """

    r_y: np.ndarray
    r_n: np.ndarray
    r_ye: np.ndarray
    alpha_y: float
    alpha_n: float
    alpha_c: float
    r_ys: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.r_y = np.asarray(self.r_y, dtype=np.complex128)
        self.r_n = np.asarray(self.r_n, dtype=np.complex128)
        self.r_ye = np.asarray(self.r_ye, dtype=np.complex128)
        bins, ch = self.r_ye.shape
        if self.r_y.shape != (bins, ch, ch) or self.r_n.shape != (bins, ch, ch):
            raise ValueError("covariance shapes do not match r_ye")
        if self.r_ys is not None:
            self.r_ys = np.asarray(self.r_ys, dtype=np.complex128)
            if self.r_ys.shape != (bins, ch):
                raise ValueError("r_ys shape does not match r_ye")
        for name in ("alpha_y", "alpha_n", "alpha_c"):
            _check_alpha(name, getattr(self, name))

    @property
    def num_bins(self) -> int:
        return self.r_ye.shape[0]

    @property
    def num_channels(self) -> int:
        return self.r_ye.shape[1]

    def copy(self) -> "CovarianceState":
        return CovarianceState(
            r_y=self.r_y.copy(),
            r_n=self.r_n.copy(),
            r_ye=self.r_ye.copy(),
            alpha_y=self.alpha_y,
            alpha_n=self.alpha_n,
            alpha_c=self.alpha_c,
            r_ys=None if self.r_ys is None else self.r_ys.copy(),
        )

    def update(self, y: np.ndarray, y_ext, is_speech: bool, source=None) -> "CovarianceState":
        """Fold one frame into the state; exactly one of R_y/R_n is touched.

        Arguments
        ---------
        y:
            Head-mic coefficients for this frame, (num_bins, 2M).
        y_ext:
            External-mic coefficient per bin, (num_bins,).
        is_speech:
            Oracle label for this frame.
        source:
            Clean source coefficient per bin, required iff r_ys is tracked.
        """
        y = np.asarray(y)
        if y.shape != (self.num_bins, self.num_channels):
            raise ValueError("frame shape does not match state")
        if is_speech:
            outer = y[:, :, None] * np.conj(y[:, None, :])
            self.r_y = _hermitized(self.alpha_y * self.r_y + (1.0 - self.alpha_y) * outer)
            y_ext = np.asarray(y_ext)
            self.r_ye = self.alpha_c * self.r_ye + (1.0 - self.alpha_c) * y * np.conj(y_ext)[:, None]
            if self.r_ys is not None:
                if source is None:
                    raise ValueError("state tracks r_ys but no source frame was given")
                self.r_ys = self.alpha_c * self.r_ys + (1.0 - self.alpha_c) * y * np.conj(
                    np.asarray(source)
                )[:, None]
        else:
            outer = y[:, :, None] * np.conj(y[:, None, :])
            self.r_n = _hermitized(self.alpha_n * self.r_n + (1.0 - self.alpha_n) * outer)
        return self


def _multichannel(frames) -> np.ndarray:
    if isinstance(frames, SpectralFrameTensor):
        return frames.data
    x = np.asarray(frames)
    if x.ndim != 3:
        raise ValueError("expected (channels, bins, frames)")
    return x


def initialize(
    head,
    external,
    labels: np.ndarray,
    alpha_y: float,
    alpha_n: float,
    alpha_c: float | None = None,
    source=None,
) -> CovarianceState:
    """Long-term state from labeled frames: plain sample averages per bin.

    R_y(0) and the cross-powers average over the speech frames, R_n(0) over the
    noise-only frames; both label classes must be non-empty.
    """
    data = _multichannel(head)
    ext = _frame_matrix(external)
    labels = np.asarray(labels, dtype=bool)
    n_ch, n_bins, n_frames = data.shape
    if labels.shape != (n_frames,):
        raise ValueError("labels length does not match frame count")
    if ext.shape != (n_bins, n_frames):
        raise ValueError("external frames do not match head frames")
    speech = labels
    noise = ~labels
    if not speech.any() or not noise.any():
        raise ValueError("need at least one speech and one noise-only frame")

    ys = data[:, :, speech]
    yn = data[:, :, noise]
    r_y = _hermitized(np.einsum("ibl,jbl->bij", ys, np.conj(ys)) / ys.shape[2])
    r_n = _hermitized(np.einsum("ibl,jbl->bij", yn, np.conj(yn)) / yn.shape[2])
    r_ye = np.einsum("ibl,bl->bi", ys, np.conj(ext[:, speech])) / ys.shape[2]
    r_ys = None
    if source is not None:
        src = _frame_matrix(source)
        if src.shape != (n_bins, n_frames):
            raise ValueError("source frames do not match head frames")
        r_ys = np.einsum("ibl,bl->bi", ys, np.conj(src[:, speech])) / ys.shape[2]
    return CovarianceState(
        r_y=r_y,
        r_n=r_n,
        r_ye=r_ye,
        alpha_y=alpha_y,
        alpha_n=alpha_n,
        alpha_c=alpha_y if alpha_c is None else alpha_c,
        r_ys=r_ys,
    )
