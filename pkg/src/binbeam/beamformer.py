"""Binaural MVDR beamformer on the head-mic channels.

One noise covariance is shared by both ears; only the steering vector (the
left- or right-referenced RTF) differs. The filters minimize output noise
power subject to a unit response toward the steering vector, so the speech
component at each reference mic passes through unchanged and the interaural
relation of the source survives filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rtf import RtfVector, ref_index
from .stft import SpectralFrameTensor

__all__ = [
    "DegenerateSteeringError",
    "BeamformerFilters",
    "compute_bmvdr",
    "apply",
]


class DegenerateSteeringError(ValueError):
    """The steered noise-power denominator is numerically zero."""


@dataclass
class BeamformerFilters:
    """Per-bin filter pairs: (num_bins, 2M) or (num_frames, num_bins, 2M)."""

    w_left: np.ndarray
    w_right: np.ndarray

    def __post_init__(self) -> None:
        self.w_left = np.asarray(self.w_left, dtype=np.complex128)
        self.w_right = np.asarray(self.w_right, dtype=np.complex128)
        if self.w_left.shape != self.w_right.shape:
            raise ValueError("left/right filter shapes differ")
        if self.w_left.ndim not in (1, 2, 3):
            raise ValueError("filters must be (2M,), (bins, 2M) or (frames, bins, 2M)")
        if not (np.all(np.isfinite(self.w_left)) and np.all(np.isfinite(self.w_right))):
            raise ValueError("filter entries must be finite")

    @property
    def num_channels(self) -> int:
        return self.w_left.shape[-1]

    @property
    def is_time_varying(self) -> bool:
        return self.w_left.ndim == 3


def _conj_t(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def compute_bmvdr(r_n: np.ndarray, rtf_left: RtfVector, rtf_right: RtfVector) -> BeamformerFilters:
    """MVDR filters w = R_n^-1 a / (a^H R_n^-1 a) for both ears.

    R_n is diagonally loaded before the Cholesky solve; early-frame noise
    estimates can be rank-deficient. Both steering vectors share one
    factorization (stacked right-hand sides). Bins flagged unreliable by the
    steering estimate fall back to the reference-selection filter, a
    passthrough that keeps the cues of whatever reaches the reference mics.
    """
    r_n = np.asarray(r_n, dtype=np.complex128)
    a_l = rtf_left.values
    a_r = rtf_right.values
    n = r_n.shape[-1]
    if a_l.shape != a_r.shape or a_l.shape[-1] != n or a_l.shape != r_n.shape[:-1]:
        raise ValueError("RTF shapes do not match the noise covariance stack")
    if rtf_left.ref_side == rtf_right.ref_side:
        raise ValueError("expected one left-referenced and one right-referenced RTF")

    delta = np.asarray(1e-6 * np.trace(r_n, axis1=-2, axis2=-1).real / n)
    loaded = r_n.copy()
    idx = np.arange(n)
    loaded[..., idx, idx] += delta[..., None]
    chol = np.linalg.cholesky(loaded)
    rhs = np.stack([a_l, a_r], axis=-1)
    solved = np.linalg.solve(_conj_t(chol), np.linalg.solve(chol, rhs))
    denom = np.sum(np.conj(rhs) * solved, axis=-2).real
    if np.any(denom < 1e-12):
        raise DegenerateSteeringError("steered noise power denominator below 1e-12")
    filters = solved / denom[..., None, :]
    w_l = filters[..., 0]
    w_r = filters[..., 1]

    for w, rtf in ((w_l, rtf_left), (w_r, rtf_right)):
        if rtf.reliable is not None and not rtf.reliable.all():
            e = np.zeros(n, dtype=np.complex128)
            e[rtf.ref_index] = 1.0
            w[~rtf.reliable] = e
    return BeamformerFilters(w_l, w_r)


def _apply_side(w: np.ndarray, tensor: SpectralFrameTensor) -> SpectralFrameTensor:
    if w.shape[-1] != tensor.num_channels:
        raise ValueError("filter channel count does not match the tensor")
    if w.ndim == 2:
        if w.shape[0] != tensor.num_bins:
            raise ValueError("filter bin count does not match the tensor")
        out = np.einsum("kc,ckl->kl", np.conj(w), tensor.data)
    elif w.ndim == 3:
        if w.shape[0] != tensor.num_frames or w.shape[1] != tensor.num_bins:
            raise ValueError("filter frame/bin counts do not match the tensor")
        out = np.einsum("lkc,ckl->kl", np.conj(w), tensor.data)
    else:
        raise ValueError("filters must be (bins, 2M) or (frames, bins, 2M)")
    return SpectralFrameTensor(out[None, :, :], tensor.config)


def apply(filters: BeamformerFilters, tensor: SpectralFrameTensor) -> tuple[SpectralFrameTensor, SpectralFrameTensor]:
    """Filter the head-mic frames: Z(k, l) = w(k, l)^H y(k, l) per ear.

    Static (per-bin) filters broadcast over frames; time-varying filters must
    match the tensor's frame count. Output is linear in the tensor, so
    filtering speech and noise components separately sums to filtering their
    mix.
    """
    return _apply_side(filters.w_left, tensor), _apply_side(filters.w_right, tensor)
