"""Noise-reduction and binaural-cue metrics.

Three measurements:

- intelligibility-weighted SNR improvement: per one-third-octave band, the
  output-vs-input SNR gain, averaged with speech-importance weights. Needs the
  speech and noise components separately at input and output (simulated
  scenes, or shadow filtering of separately known components).
- binaural cue errors: level and time differences of the desired source read
  from the interaural transfer function before and after filtering.
- long-term magnitude-squared coherence between two signals, the diagnostic
  curve for diffuse fields.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.signal

from .beamformer import BeamformerFilters
from .stft import StftConfig, analyze

__all__ = [
    "ILD_BAND_HZ",
    "ITD_BAND_HZ",
    "load_band_weights",
    "band_edges",
    "isnr_improvement",
    "CueErrors",
    "binaural_cue_errors",
    "measure_msc",
    "MetricReport",
]

logger = logging.getLogger(__name__)

ILD_BAND_HZ = (500.0, 8000.0)
ITD_BAND_HZ = (200.0, 1500.0)

# Welch segment length for band powers; finer than the processing STFT so the
# narrow low-frequency third-octave bands contain several PSD bins.
_WELCH_NPERSEG = 2048


def load_band_weights(uniform: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Band centers (Hz) and importance weights, renormalized to sum to 1.

    With uniform=True the shipped centers keep equal weight instead of the
    speech-importance table.
    """
    text = (
        resources.files("binbeam")
        .joinpath("data/third_octave_sii_weights.txt")
        .read_text(encoding="utf-8")
    )
    centers = []
    weights = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        center, weight = line.split()
        centers.append(float(center))
        weights.append(float(weight))
    centers = np.asarray(centers)
    weights = np.asarray(weights)
    if uniform:
        weights = np.ones_like(weights)
    return centers, weights / weights.sum()


def band_edges(centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-third-octave band edges: center / 2^(1/6) to center * 2^(1/6)."""
    centers = np.asarray(centers, dtype=np.float64)
    half = 2.0 ** (1.0 / 6.0)
    return centers / half, centers * half


def _band_powers(signal: np.ndarray, sample_rate: float, centers: np.ndarray) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError("expected a single-channel signal")
    nperseg = min(_WELCH_NPERSEG, signal.size)
    freqs, psd = scipy.signal.welch(signal, fs=sample_rate, nperseg=nperseg)
    lo, hi = band_edges(centers)
    powers = np.empty(centers.size)
    for i in range(centers.size):
        sel = (freqs >= lo[i]) & (freqs < hi[i])
        powers[i] = psd[sel].sum()
    return powers


def isnr_improvement(
    x_in,
    n_in,
    x_out,
    n_out,
    sample_rate: float,
    band_weights: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, list[dict]]:
    """Intelligibility-weighted SNR improvement in dB.

    Per band i: SNR_i = 10 log10(P_x,i / P_n,i); the improvement is the
    importance-weighted sum of output-minus-input band SNRs. Bands where any
    of the four component powers vanish carry no SNR information; they are
    skipped and the remaining weights renormalized (logged).

    Returns the improvement and a per-band detail table.
    """
    signals = [np.asarray(s, dtype=np.float64) for s in (x_in, n_in, x_out, n_out)]
    if len({s.shape for s in signals}) != 1:
        raise ValueError("component signals must have equal length")
    if band_weights is None:
        band_weights = load_band_weights()
    centers, weights = band_weights
    px_in, pn_in, px_out, pn_out = (
        _band_powers(s, sample_rate, centers) for s in signals
    )
    usable = (px_in > 0) & (pn_in > 0) & (px_out > 0) & (pn_out > 0)
    if not usable.any():
        raise ValueError("no band carries both speech and noise power")
    if not usable.all():
        skipped = ", ".join(f"{c:g} Hz" for c in centers[~usable])
        logger.warning("skipping bands without usable power: %s", skipped)
    snr_in = np.full(centers.size, np.nan)
    snr_out = np.full(centers.size, np.nan)
    snr_in[usable] = 10.0 * np.log10(px_in[usable] / pn_in[usable])
    snr_out[usable] = 10.0 * np.log10(px_out[usable] / pn_out[usable])
    norm = weights[usable].sum()
    delta = float(np.sum(weights[usable] * (snr_out[usable] - snr_in[usable])) / norm)
    detail = [
        {
            "center_hz": float(centers[i]),
            "weight": float(weights[i] / norm) if usable[i] else 0.0,
            "snr_in_db": float(snr_in[i]) if usable[i] else None,
            "snr_out_db": float(snr_out[i]) if usable[i] else None,
            "used": bool(usable[i]),
        }
        for i in range(centers.size)
    ]
    return delta, detail


@dataclass
class CueErrors:
    """Interaural cue errors, frequency-averaged over the declared bands."""

    ild_error_db: float
    itd_error_us: float
    ild_per_bin: np.ndarray  # (num_bins,), NaN outside usable bins
    itd_per_bin: np.ndarray
    excluded: np.ndarray  # bins dropped for a vanishing right-ear response


def _head_atf(ground_atf: np.ndarray) -> np.ndarray:
    atf = np.asarray(ground_atf, dtype=np.complex128)
    if atf.ndim != 2:
        raise ValueError("ground ATF must be (num_bins, num_mics)")
    if atf.shape[1] % 2:  # external channel appended: drop it
        atf = atf[:, :-1]
    return atf


def binaural_cue_errors(
    filters: BeamformerFilters, ground_atf: np.ndarray, cfg: StftConfig
) -> CueErrors:
    """Cue errors of the desired source through the given filters.

    The source reaches the ears with interaural transfer rho_in(k) =
    a_Lref(k) / a_Rref(k); after filtering it is rho_out(k) =
    (w_L^H a)(k) / (w_R^H a)(k). The level error is the absolute dB gap
    between the two magnitudes, averaged over 500 Hz-8 kHz; the time error is
    the frequency-unwrapped phase gap over angular frequency, averaged over
    200 Hz-1.5 kHz, in microseconds. Time-varying filters are averaged over
    frames. Bins where the filtered right-ear response vanishes are excluded
    (logged).
    """
    atf = _head_atf(ground_atf)
    num_bins = atf.shape[0]
    if filters.w_left.ndim == 1:
        raise ValueError("expected per-bin filters, got a single vector")
    if filters.w_left.shape[-2] != num_bins or filters.num_channels != atf.shape[1]:
        raise ValueError("filter shape does not match the ground ATF")
    freqs = cfg.bin_frequencies()
    if freqs.size != num_bins:
        raise ValueError("ground ATF bin count does not match the config")
    ref_right = atf.shape[1] // 2
    rho_in = atf[:, 0] / atf[:, ref_right]

    spec = "lkc,kc->lk" if filters.is_time_varying else "kc,kc->k"
    resp_l = np.einsum(spec, np.conj(filters.w_left), atf)
    resp_r = np.einsum(spec, np.conj(filters.w_right), atf)
    resp_l = np.atleast_2d(resp_l)
    resp_r = np.atleast_2d(resp_r)

    excluded = (np.abs(resp_r) < 1e-12).any(axis=0)
    if excluded.any():
        logger.warning("excluding %d bins with vanishing right-ear response", int(excluded.sum()))
    safe_r = np.where(np.abs(resp_r) < 1e-12, 1.0, resp_r)
    rho_out = resp_l / safe_r

    ild = np.abs(20.0 * np.log10(np.abs(rho_out)) - 20.0 * np.log10(np.abs(rho_in)))
    ild_per_bin = np.where(excluded, np.nan, ild.mean(axis=0))

    # Difference of angles (not angle of the ratio) so identical transfer
    # functions give a bit-exact zero gap; wrapped into (-pi, pi] and then
    # unwrapped along frequency.
    phase_gap = np.angle(rho_out) - np.angle(rho_in)[None, :]
    phase_gap = np.mod(phase_gap + np.pi, 2.0 * np.pi) - np.pi
    phase_gap = np.unwrap(np.where(excluded, 0.0, phase_gap), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        itd = np.abs(phase_gap) / (2.0 * np.pi * freqs)[None, :]
    itd_per_bin = np.where(excluded | (freqs == 0.0), np.nan, itd.mean(axis=0)) * 1e6

    ild_band = (freqs >= ILD_BAND_HZ[0]) & (freqs <= ILD_BAND_HZ[1]) & ~excluded
    itd_band = (
        (freqs >= ITD_BAND_HZ[0]) & (freqs <= ITD_BAND_HZ[1]) & ~excluded & (freqs > 0)
    )
    if not ild_band.any() or not itd_band.any():
        raise ValueError("no usable bins in a cue band")
    return CueErrors(
        ild_error_db=float(ild_per_bin[ild_band].mean()),
        itd_error_us=float(itd_per_bin[itd_band].mean()),
        ild_per_bin=ild_per_bin,
        itd_per_bin=itd_per_bin,
        excluded=excluded,
    )


def measure_msc(x1, x2, cfg: StftConfig) -> np.ndarray:
    """Long-term magnitude-squared coherence per bin, in [0, 1].

    Welch-style: cross- and auto-spectra averaged over STFT frames. Requires
    at least 100 frames for a stable estimate.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError("expected two equal-length single-channel signals")
    spec = analyze(np.stack([x1, x2]), cfg)
    if spec.num_frames < 100:
        raise ValueError("need at least 100 frames for a coherence estimate")
    s1 = spec.data[0]
    s2 = spec.data[1]
    p11 = np.mean(np.abs(s1) ** 2, axis=1)
    p22 = np.mean(np.abs(s2) ** 2, axis=1)
    p12 = np.mean(s1 * np.conj(s2), axis=1)
    denom = p11 * p22
    with np.errstate(divide="ignore", invalid="ignore"):
        msc = np.abs(p12) ** 2 / denom
    msc = np.where(denom > 0, msc, 0.0)
    return np.clip(msc, 0.0, 1.0)


@dataclass
class MetricReport:
    """One evaluated condition: broadband numbers plus per-band detail."""

    delta_isnr_db: float
    ild_error_db: float
    itd_error_us: float
    per_band_detail: list[dict] = field(default_factory=list)
    msc_curves: dict[str, np.ndarray] | None = None

    def __post_init__(self) -> None:
        for name in ("delta_isnr_db", "ild_error_db", "itd_error_us"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.ild_error_db < 0 or self.itd_error_us < 0:
            raise ValueError("cue errors are nonnegative")
