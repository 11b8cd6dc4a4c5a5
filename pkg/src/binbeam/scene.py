"""Synthetic binaural acoustic scenes.

A scene is a point source rendered to a pair of head-worn microphone arrays
plus one external microphone through free-field transfer functions (spherical
spreading and fractional delay, both exact per frequency), an optional set of
sparse decaying echoes standing in for reverberation, and spherically
isotropic noise whose pairwise coherence follows the sinc law of an ideal
diffuse field. The external microphone receives its own statistically
independent noise so its noise component is uncorrelated with the head-mic
noise by construction.

Channel order everywhere is L1..LM, R1..RM, E; the left reference is channel
0, the right reference is channel M, the external microphone is channel 2M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .stft import SpectralFrameTensor, StftConfig, synthesize

__all__ = [
    "SPEED_OF_SOUND",
    "ArrayGeometry",
    "SceneDescription",
    "GroundTruth",
    "RenderedScene",
    "binaural_geometry",
    "source_position",
    "diffuse_msc",
    "build_coherence_matrix",
    "generate_diffuse_noise",
    "render_scene",
]

SPEED_OF_SOUND = 343.0

# Echo directions follow a golden-angle sequence around the head so that no
# two taps arrive from the same azimuth and each channel sees its own delay.
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters, shape (2M+1, 3), external mic last.

    M microphones per ear; channel 0 and channel M are the left and right
    reference microphones.
    """

    mic_positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self) -> None:
        pos = np.asarray(self.mic_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("mic_positions must have shape (2M+1, 3)")
        if pos.shape[0] < 3 or pos.shape[0] % 2 == 0:
            raise ValueError("need an odd number of microphones, 2M+1 with M >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("mic_positions must be finite")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def mics_per_ear(self) -> int:
        return (self.num_mics - 1) // 2

    @property
    def num_head_mics(self) -> int:
        return self.num_mics - 1

    @property
    def left_ref(self) -> int:
        return 0

    @property
    def right_ref(self) -> int:
        return self.mics_per_ear

    @property
    def external_index(self) -> int:
        return self.num_mics - 1

    @property
    def head_positions(self) -> np.ndarray:
        return self.mic_positions[:-1]

    @property
    def external_position(self) -> np.ndarray:
        return self.mic_positions[-1]

    @property
    def head_center(self) -> np.ndarray:
        return self.head_positions.mean(axis=0)


def source_position(distance: float = 2.0, azimuth_deg: float = -35.0) -> np.ndarray:
    """Source location in the horizontal plane; negative azimuth is the right side."""
    az = math.radians(azimuth_deg)
    return np.array([distance * math.cos(az), distance * math.sin(az), 0.0])


def binaural_geometry(
    source_pos: np.ndarray | None = None,
    head_width: float = 0.15,
    mic_spacing: float = 0.012,
    external_distance: float = 1.5,
) -> ArrayGeometry:
    """Default setup: two 2-mic devices on +-y, external mic toward the source.

    The external microphone sits on the line from the head center to the
    source, `external_distance` meters out, i.e. much closer to the source
    than the head is.
    """
    src = source_position() if source_pos is None else np.asarray(source_pos, float)
    half_w = head_width / 2.0
    half_s = mic_spacing / 2.0
    head = np.array(
        [
            [half_s, half_w, 0.0],   # L1 (front left, reference)
            [-half_s, half_w, 0.0],  # L2
            [half_s, -half_w, 0.0],  # R1 (front right, reference)
            [-half_s, -half_w, 0.0], # R2
        ]
    )
    direction = src / np.linalg.norm(src)
    external = direction * external_distance
    return ArrayGeometry(np.vstack([head, external[None, :]]))


@dataclass
class SceneDescription:
    """Everything needed to render one scene deterministically.

    Attributes
    ----------
    geometry:
        Microphone layout.
    source_position:
        Point-source location in meters, shape (3,).
    source_signal:
        Dry source samples; must cover at least 2 s at the render sample rate.
    reverb_proxy:
        Echo taps as (delay_s, gain) pairs, delays relative to the direct path.
    snr_db:
        Broadband SNR at the right reference microphone; +inf renders noise-free.
    external_snr_offset_db:
        How much better the external mic's SNR is than the right reference's.
    residual_coherence:
        Fraction of right-reference head noise mixed into the external noise
        channel (0 keeps it exactly independent).
    noise_seed:
        Seed for all noise draws; same seed and description give identical bits.
    """

    geometry: ArrayGeometry
    source_position: np.ndarray
    source_signal: np.ndarray
    reverb_proxy: tuple = ()
    snr_db: float = 0.0
    external_snr_offset_db: float = 9.6
    residual_coherence: float = 0.0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        self.source_position = np.asarray(self.source_position, dtype=np.float64)
        if self.source_position.shape != (3,):
            raise ValueError("source_position must have shape (3,)")
        self.source_signal = np.asarray(self.source_signal, dtype=np.float64)
        if self.source_signal.ndim != 1:
            raise ValueError("source_signal must be 1-D")
        taps = tuple((float(d), float(g)) for d, g in self.reverb_proxy)
        for delay, gain in taps:
            if delay <= 0 or not math.isfinite(gain):
                raise ValueError("echo taps need positive delay and finite gain")
        self.reverb_proxy = taps
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr_db must be finite or +inf")
        if not 0.0 <= self.residual_coherence < 1.0:
            raise ValueError("residual_coherence must be in [0, 1)")
        if int(self.noise_seed) < 0:
            raise ValueError("noise_seed must be non-negative")


@dataclass
class GroundTruth:
    """Per-channel clean components and the transfer functions that made them.

    speech/noise have the same shape as the rendered mixture and sum to it
    exactly. atf holds the full per-bin acoustic transfer function (direct
    path plus echoes) for every microphone; direct_atf is the direct path
    alone. rtf_left/rtf_right are the head-mic RTFs of the full ATF,
    normalized to the left and right reference channels.
    """

    speech: np.ndarray
    noise: np.ndarray
    atf: np.ndarray
    direct_atf: np.ndarray
    rtf_left: np.ndarray
    rtf_right: np.ndarray


@dataclass
class RenderedScene:
    signals: np.ndarray  # (2M+1, num_samples), external channel last
    ground_truth: GroundTruth
    geometry: ArrayGeometry

    @property
    def head_signals(self) -> np.ndarray:
        return self.signals[:-1]

    @property
    def external_signal(self) -> np.ndarray:
        return self.signals[-1]


def _positions_of(geometry) -> np.ndarray:
    if isinstance(geometry, ArrayGeometry):
        return geometry.mic_positions
    pos = np.asarray(geometry, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError("positions must have shape (num_mics, 3)")
    return pos


def diffuse_msc(freq_hz, distance_m, speed_of_sound: float = SPEED_OF_SOUND):
    """Magnitude-squared coherence of an ideal diffuse field at one spacing.

    sinc^2(omega d / c) with the unnormalized sinc, so 1 at zero argument.
    """
    # np.sinc(x) = sin(pi x)/(pi x); omega d / c == pi * (2 f d / c).
    return np.sinc(2.0 * np.asarray(freq_hz) * distance_m / speed_of_sound) ** 2


def build_coherence_matrix(geometry, freq_hz, speed_of_sound: float | None = None):
    """Spatial coherence of an ideal diffuse field for all microphone pairs.

    Arguments
    ---------
    geometry:
        ArrayGeometry or raw positions (num_mics, 3).
    freq_hz:
        Scalar or (F,) array of frequencies.

    Return
    ------
    (num_mics, num_mics) for scalar input, else (F, num_mics, num_mics).
    Real symmetric with unit diagonal.
    """
    pos = _positions_of(geometry)
    c = speed_of_sound
    if c is None:
        c = geometry.speed_of_sound if isinstance(geometry, ArrayGeometry) else SPEED_OF_SOUND
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    f = np.asarray(freq_hz, dtype=np.float64)
    gamma = np.sinc(2.0 * f[..., None, None] * dist / c)
    return gamma


def _coherence_mixing_factor(gamma: np.ndarray) -> np.ndarray:
    """Factor C with C @ C^H = gamma, eigenvalues floored at 1e-10."""
    evals, evecs = np.linalg.eigh(gamma)
    evals = np.maximum(evals, 1e-10)
    return evecs * np.sqrt(evals)[..., None, :]


def _gaussian_field(positions: np.ndarray, num_samples: int, cfg: StftConfig, seed: int) -> np.ndarray:
    """Stationary Gaussian field with diffuse inter-channel coherence.

    Independent complex spectra are drawn per bin and frame from a counter-based
    stream keyed by (seed, bin), mixed by the coherence factor, and synthesized
    by overlap-add. The taper regions at both ends are generated and discarded
    so every returned sample has full window power; per-channel variance is
    unity up to the uncolored DC/Nyquist bins.
    """
    if num_samples <= 0:
        raise ValueError("num_samples must be positive")
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    n_mics = positions.shape[0]
    t = cfg.frame_len
    frames = -(-(num_samples + t) // cfg.hop) + 1
    gamma = build_coherence_matrix(positions, cfg.bin_frequencies())
    mix = _coherence_mixing_factor(gamma)
    scale = math.sqrt(t / 2.0)
    spec = np.empty((n_mics, cfg.num_bins, frames), dtype=np.complex128)
    for k in range(cfg.num_bins):
        key = np.array([int(seed) % 2**64, k], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        draw = rng.standard_normal((2, n_mics, frames))
        spec[:, k, :] = mix[k] @ ((draw[0] + 1j * draw[1]) * scale)
    signal = synthesize(SpectralFrameTensor(spec, cfg))
    return signal[:, t : t + num_samples]


def generate_diffuse_noise(geometry, num_samples: int, cfg: StftConfig, seed: int) -> np.ndarray:
    """Spherically isotropic noise for the given microphones.

    Return
    ------
    (num_mics, num_samples) real array; each channel has variance close to 1
    and pairwise coherence following `diffuse_msc` of the mic spacing.
    """
    return _gaussian_field(_positions_of(geometry), num_samples, cfg, seed)


def _virtual_sources(desc: SceneDescription) -> list[tuple[np.ndarray, float]]:
    """Echo taps as (position, emission_gain) point sources around the head."""
    center = desc.geometry.head_center
    offset = desc.source_position - center
    r0 = float(np.linalg.norm(offset))
    base_az = math.atan2(offset[1], offset[0])
    c = desc.geometry.speed_of_sound
    out = []
    for j, (delay, gain) in enumerate(desc.reverb_proxy):
        az = base_az + (j + 1) * _GOLDEN_ANGLE
        r = r0 + c * delay
        pos = center + np.array([r * math.cos(az), r * math.sin(az), 0.0])
        # Emission scaled so the echo sits `gain` below the direct path at the
        # head center after 1/r spreading.
        out.append((pos, gain * r / r0))
    return out


def _atf(freq_hz: np.ndarray, positions: np.ndarray, desc: SceneDescription, include_taps: bool) -> np.ndarray:
    """Analytic transfer function source -> mics, shape (F, num_mics)."""
    c = desc.geometry.speed_of_sound
    sources = [(desc.source_position, 1.0)]
    if include_taps:
        sources += _virtual_sources(desc)
    f = np.asarray(freq_hz, dtype=np.float64)
    atf = np.zeros((f.shape[0], positions.shape[0]), dtype=np.complex128)
    for pos, emission in sources:
        dist = np.linalg.norm(positions - pos[None, :], axis=1)
        if np.any(dist <= 0):
            raise ValueError("source position coincides with a microphone")
        atf += (emission / dist) * np.exp(-2j * np.pi * f[:, None] * dist[None, :] / c)
    return atf


def _convolve_source(desc: SceneDescription, sample_rate: float) -> np.ndarray:
    """Clean speech component at every mic: exact fractional-delay filtering."""
    s = desc.source_signal
    positions = desc.geometry.mic_positions
    c = desc.geometry.speed_of_sound
    max_dist = max(
        float(np.max(np.linalg.norm(positions - pos[None, :], axis=1)))
        for pos, _ in [(desc.source_position, 1.0)] + _virtual_sources(desc)
    )
    nfft = next_fast_len(len(s) + int(math.ceil(max_dist / c * sample_rate)) + 8)
    freqs = np.fft.rfftfreq(nfft, d=1.0 / sample_rate)
    response = _atf(freqs, positions, desc, include_taps=True)
    spectrum = np.fft.rfft(s, nfft)
    x = np.fft.irfft(spectrum[:, None] * response, nfft, axis=0)
    return np.ascontiguousarray(x[: len(s)].T)


def _normalized_rtf(atf_head: np.ndarray, ref: int) -> np.ndarray:
    if np.any(atf_head[:, ref] == 0):
        raise ValueError("reference-channel transfer function vanishes at a bin")
    rtf = atf_head / atf_head[:, ref : ref + 1]
    rtf[:, ref] = 1.0  # exact by definition
    return rtf


def _noise_gain(power_speech: float, power_noise: float, snr_db: float) -> float:
    if snr_db == math.inf:
        return 0.0
    if power_speech <= 0:
        raise ValueError("speech component has zero power at the reference mic")
    return math.sqrt(power_speech / (power_noise * 10.0 ** (snr_db / 10.0)))


def render_scene(desc: SceneDescription, cfg: StftConfig) -> RenderedScene:
    """Render a scene description to microphone signals plus ground truth.

    The head microphones receive diffuse noise; the external microphone
    receives an independent noise stream scaled so its SNR sits
    `external_snr_offset_db` above the right-reference SNR. The broadband SNR
    at the right reference microphone equals snr_db exactly.
    """
    geom = desc.geometry
    fs = cfg.sample_rate
    if len(desc.source_signal) < 2 * fs:
        raise ValueError("source signal must cover at least 2 s")

    x = _convolve_source(desc, fs)
    n_samples = x.shape[1]

    head_seed, ext_seed = np.random.SeedSequence(int(desc.noise_seed)).generate_state(2, dtype=np.uint64)
    noise_head = _gaussian_field(geom.head_positions, n_samples, cfg, int(head_seed))
    noise_ext = _gaussian_field(geom.external_position[None, :], n_samples, cfg, int(ext_seed))[0]
    if desc.residual_coherence > 0:
        rho = desc.residual_coherence
        noise_ext = math.sqrt(1.0 - rho) * noise_ext + math.sqrt(rho) * noise_head[geom.right_ref]

    p_speech_ref = float(np.mean(x[geom.right_ref] ** 2))
    p_noise_ref = float(np.mean(noise_head[geom.right_ref] ** 2))
    gain_head = _noise_gain(p_speech_ref, p_noise_ref, desc.snr_db)

    p_speech_ext = float(np.mean(x[geom.external_index] ** 2))
    p_noise_ext = float(np.mean(noise_ext**2))
    gain_ext = _noise_gain(p_speech_ext, p_noise_ext, desc.snr_db + desc.external_snr_offset_db)

    noise = np.vstack([gain_head * noise_head, (gain_ext * noise_ext)[None, :]])
    signals = x + noise

    bin_freqs = cfg.bin_frequencies()
    atf = _atf(bin_freqs, geom.mic_positions, desc, include_taps=True)
    direct = _atf(bin_freqs, geom.mic_positions, desc, include_taps=False)
    head = atf[:, : geom.num_head_mics]
    truth = GroundTruth(
        speech=x,
        noise=noise,
        atf=atf,
        direct_atf=direct,
        rtf_left=_normalized_rtf(head, geom.left_ref),
        rtf_right=_normalized_rtf(head, geom.right_ref),
    )
    return RenderedScene(signals=signals, ground_truth=truth, geometry=geom)
