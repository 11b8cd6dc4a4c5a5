"""Relative transfer function (RTF) estimators for the head-mic array.

All estimators return the RTF of the desired source normalized to a reference
channel: entry 0 for the left device, entry M for the right device. Inputs may
be a single per-bin matrix/vector or a stack with leading batch axes (the
per-bin case of a whole spectrum).

Estimators
----------
biased:
    Reference column of R_y; exact only in noise-free conditions, otherwise
    biased by the noise covariance column.
covariance whitening (CW):
    Principal eigenvector of R_n^{-1/2} R_y R_n^{-H/2}, de-whitened; exact for
    rank-1-plus-noise inputs.
spatial coherence (SC):
    Cross-power between the head mics and an external microphone whose noise
    is uncorrelated with the head-mic noise; normalizing the cross-power
    vector by its reference entry cancels the unknown external path.
SC oracle:
    Same cross-power idea with the clean source frames in place of the
    external signal; an upper bound for what SC can do.
true:
    Ground-truth RTF from a rendered scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ESTIMATOR_TAGS",
    "UnreliableBinError",
    "RtfVector",
    "ref_index",
    "estimate_biased",
    "estimate_cw",
    "estimate_sc",
    "estimate_sc_oracle",
    "true_rtf",
]

ESTIMATOR_TAGS = ("B", "CW", "SC", "SC_opt", "true")

# Bins whose cross-power reference entry falls below this fraction of the
# vector norm are flagged unreliable.
SC_RELIABILITY_FLOOR = 1e-3


class UnreliableBinError(ValueError):
    """The cross-power reference entry is too small to normalize against."""


def ref_index(ref_side: str, num_channels: int) -> int:
    """Reference channel for a side: 0 (left) or M (right) in a 2M stack."""
    if num_channels < 2 or num_channels % 2:
        raise ValueError("head-mic vectors must have an even channel count >= 2")
    if ref_side == "left":
        return 0
    if ref_side == "right":
        return num_channels // 2
    raise ValueError(f"ref_side must be 'left' or 'right', got {ref_side!r}")


@dataclass
class RtfVector:
    """An RTF estimate: values (..., 2M) with the reference entry exactly 1."""

    values: np.ndarray
    ref_side: str
    estimator_tag: str
    reliable: np.ndarray | None = None  # per-bin mask, None means all reliable

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.complex128)
        ref = ref_index(self.ref_side, self.values.shape[-1])
        if self.estimator_tag not in ESTIMATOR_TAGS:
            raise ValueError(f"unknown estimator tag {self.estimator_tag!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("RTF entries must be finite")
        if not np.all(self.values[..., ref] == 1.0 + 0.0j):
            raise ValueError("reference entry must be exactly 1")
        if self.reliable is not None:
            self.reliable = np.asarray(self.reliable, dtype=bool)
            if self.reliable.shape != self.values.shape[:-1]:
                raise ValueError("reliability mask shape does not match values")

    @property
    def ref_index(self) -> int:
        return ref_index(self.ref_side, self.values.shape[-1])


def _normalized(values: np.ndarray, ref: int) -> np.ndarray:
    denom = values[..., ref : ref + 1]
    if np.any(denom == 0):
        raise ValueError("reference entry is zero; cannot normalize")
    out = values / denom
    out[..., ref] = 1.0  # exact by definition, not up to rounding
    return out


def estimate_biased(r_y: np.ndarray, ref_side: str) -> RtfVector:
    """Reference column of the noisy covariance, normalized.

    Cheap and exact without noise; with noise the estimate is pulled toward
    the noise covariance's reference column.
    """
    r_y = np.asarray(r_y, dtype=np.complex128)
    ref = ref_index(ref_side, r_y.shape[-1])
    power = np.asarray(r_y[..., ref, ref].real)
    if np.any(power <= 0):
        raise ValueError("reference channel has no power")
    values = r_y[..., :, ref] / power[..., None]
    values[..., ref] = 1.0
    return RtfVector(values, ref_side, "B")


def _whitening_cholesky(r_n: np.ndarray) -> np.ndarray:
    """Cholesky factor of R_n, diagonally loading bins that are not PD.

    Loading is a repair for numerically singular noise estimates, not an
    unconditional bias: a healthy matrix factors untouched, which keeps the
    estimator exact on constructed rank-1-plus-noise inputs. The bump scales
    with the trace, so scale invariance survives the repair path too.
    """
    try:
        return np.linalg.cholesky(r_n)
    except np.linalg.LinAlgError:
        pass
    n = r_n.shape[-1]
    delta = np.asarray(1e-6 * np.trace(r_n, axis1=-2, axis2=-1).real / n)
    smallest = np.linalg.eigvalsh(r_n)[..., 0]
    bump = np.where(smallest <= delta, delta + np.maximum(-smallest, 0.0), 0.0)
    loaded = r_n.copy()
    idx = np.arange(n)
    loaded[..., idx, idx] += np.asarray(bump)[..., None]
    return np.linalg.cholesky(loaded)


def estimate_cw(r_y: np.ndarray, r_n: np.ndarray, ref_side: str) -> RtfVector:
    """Covariance whitening: whiten R_y by a Cholesky factor of R_n, take the
    principal eigenvector, de-whiten and normalize.

    Exact for rank-1-plus-noise inputs R_y = phi a a^H + R_n: the whitened
    matrix is then rank-1-plus-identity whose principal eigenvector de-whitens
    back to a exactly.
    """
    r_y = np.asarray(r_y, dtype=np.complex128)
    r_n = np.asarray(r_n, dtype=np.complex128)
    ref = ref_index(ref_side, r_y.shape[-1])
    chol = _whitening_cholesky(r_n)
    half = np.linalg.solve(chol, r_y)
    # r_y is Hermitian, so solving against its conjugate transpose whitens the
    # right side as well: chol^-1 r_y chol^-H.
    whitened = np.linalg.solve(chol, np.conj(np.swapaxes(half, -1, -2)))
    whitened = 0.5 * (whitened + np.conj(np.swapaxes(whitened, -1, -2)))
    _, vecs = np.linalg.eigh(whitened)
    principal = vecs[..., :, -1]
    steering = (chol @ principal[..., None])[..., 0]
    return RtfVector(_normalized(steering, ref), ref_side, "CW")


def _cross_power_rtf(cross: np.ndarray, ref_side: str, tag: str, on_unreliable: str) -> RtfVector:
    cross = np.asarray(cross, dtype=np.complex128)
    ref = ref_index(ref_side, cross.shape[-1])
    norm = np.linalg.norm(cross, axis=-1)
    reliable = np.abs(cross[..., ref]) > SC_RELIABILITY_FLOOR * norm
    if cross.ndim == 1 or on_unreliable == "raise":
        if not np.all(reliable):
            raise UnreliableBinError(
                "cross-power reference entry below the reliability floor"
            )
        values = _normalized(cross, ref)
        return RtfVector(values, ref_side, tag)
    # Batched: flagged bins get the reference-selection vector as a finite
    # placeholder; the beamformer substitutes its passthrough fallback there.
    e_ref = np.zeros(cross.shape[-1], dtype=np.complex128)
    e_ref[ref] = 1.0
    safe = np.where(reliable[..., None], cross, e_ref)
    values = _normalized(safe, ref)
    values[~reliable] = e_ref
    return RtfVector(values, ref_side, tag, reliable=reliable)


def estimate_sc(cross_power, ref_side: str, *, on_unreliable: str = "raise", tag: str = "SC") -> RtfVector:
    """Spatial-coherence RTF from the head-vs-external cross-power vector.

    With on_unreliable="raise" (default, and always for a single bin) a bin
    below the reliability floor raises UnreliableBinError. With "mask", the
    returned vector carries a per-bin `reliable` mask instead.
    """
    if on_unreliable not in ("raise", "mask"):
        raise ValueError("on_unreliable must be 'raise' or 'mask'")
    if tag not in ("SC", "SC_opt"):
        raise ValueError("cross-power estimators tag as 'SC' or 'SC_opt'")
    return _cross_power_rtf(cross_power, ref_side, tag, on_unreliable)


def estimate_sc_oracle(
    head,
    source_frames,
    labels: np.ndarray,
    alpha: float,
    ref_side: str,
    *,
    on_unreliable: str = "raise",
) -> RtfVector:
    """Oracle variant of the coherence estimator over a whole tensor.

    Accumulates the cross-power between the head mics and the clean source
    frames over the labeled speech frames with the same exponential recursion
    the covariance state uses (starting from zero, which cancels in the final
    normalization), then normalizes like estimate_sc.
    """
    from .covariance import _multichannel, _frame_matrix  # shared coercions

    data = _multichannel(head)
    src = _frame_matrix(source_frames)
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != (data.shape[2],):
        raise ValueError("labels length does not match frame count")
    if src.shape != (data.shape[1], data.shape[2]):
        raise ValueError("source frames do not match head frames")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if not labels.any():
        raise ValueError("no speech frames to accumulate over")
    cross = np.zeros((data.shape[1], data.shape[0]), dtype=np.complex128)
    for l in np.flatnonzero(labels):
        update = data[:, :, l].T * np.conj(src[:, l])[:, None]
        cross = alpha * cross + (1.0 - alpha) * update
    return estimate_sc(cross, ref_side, on_unreliable=on_unreliable, tag="SC_opt")


def true_rtf(ground_truth, ref_side: str) -> RtfVector:
    """Ground-truth RTF of a rendered scene's head microphones."""
    atf_head = np.asarray(ground_truth.atf)[:, :-1]
    ref = ref_index(ref_side, atf_head.shape[-1])
    return RtfVector(_normalized(atf_head.copy(), ref), ref_side, "true")
