"""End-to-end experiment runner.

Sweeps estimators x input SNRs x reverberation severities over synthetic
scenes (or supplied recordings), runs the full enhancement pipeline per
condition, and writes enhanced audio plus CSV/JSON metric reports. Everything
is deterministic given the config and seeds, down to the output bytes.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .beamformer import BeamformerFilters, apply, compute_bmvdr
from .covariance import alpha_from_time_constant, initialize, oracle_vad
from .metrics import MetricReport, binaural_cue_errors, isnr_improvement, load_band_weights
from .rtf import (
    ESTIMATOR_TAGS,
    RtfVector,
    estimate_biased,
    estimate_cw,
    estimate_sc,
    true_rtf,
)
from .scene import SceneDescription, binaural_geometry, render_scene, source_position
from .stft import SpectralFrameTensor, StftConfig, analyze, synthesize
from .wavio import read_wav, write_wav

__all__ = [
    "ConfigError",
    "REVERB_PRESETS",
    "exponential_decay_taps",
    "speech_like_source",
    "InputFiles",
    "ExperimentConfig",
    "config_from_mapping",
    "config_from_file",
    "load_config_mapping",
    "ConditionRow",
    "condition_grid",
    "synthetic_scene",
    "process_condition",
    "run_experiment",
    "emit_report",
]


class ConfigError(ValueError):
    """Invalid experiment configuration (bad values, unknown keys, bad files)."""


def exponential_decay_taps(
    t60_s: float,
    num_taps: int,
    echo_to_direct: float,
    start_s: float = 0.012,
) -> tuple[tuple[float, float], ...]:
    """Echo taps whose amplitudes decay 60 dB over t60_s.

    Delays spread from start_s toward t60_s with golden-ratio jitter so the
    taps never form a periodic comb; signs alternate. Gains are scaled so the
    summed echo energy at the head center is echo_to_direct times the
    direct-path energy.
    """
    if t60_s <= start_s:
        raise ValueError("t60_s must exceed the first-echo delay")
    if num_taps < 1 or echo_to_direct <= 0:
        raise ValueError("need at least one tap and positive echo energy")
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    span = t60_s - start_s
    delays = [
        start_s + span * (k + (k + 1) * golden % 1.0) / num_taps
        for k in range(num_taps)
    ]
    envelope = [10.0 ** (-3.0 * d / t60_s) for d in delays]
    scale = math.sqrt(echo_to_direct / sum(e * e for e in envelope))
    return tuple(
        (d, scale * e * (1.0 if k % 2 == 0 else -1.0))
        for k, (d, e) in enumerate(zip(delays, envelope))
    )


# Labelled severities; echo-to-direct energy grows with the decay time.
REVERB_PRESETS: dict[str, tuple[tuple[float, float], ...]] = {
    "anechoic": (),
    "250ms": exponential_decay_taps(0.25, 10, 0.35),
    "500ms": exponential_decay_taps(0.50, 14, 0.80),
    "750ms": exponential_decay_taps(0.75, 18, 1.30),
}


def speech_like_source(
    num_samples: int,
    sample_rate: float,
    seed: int,
    lead_silence_s: float = 0.5,
) -> np.ndarray:
    """Deterministic speech-shaped test source.

    Gaussian noise with a pink spectral tilt (extra rolloff above ~1.8 kHz and
    a highpass below 60 Hz) under a syllabic on/off envelope, silent for the
    first lead_silence_s. Peak-normalized to 0.5.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    lead = int(round(lead_silence_s * sample_rate))
    if lead >= num_samples:
        raise ValueError("lead silence swallows the whole signal")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x517EC5])))
    spectrum = np.fft.rfft(rng.standard_normal(num_samples))
    f = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
    tilt = np.sqrt(1.0 / np.maximum(f, 120.0)) / np.sqrt(1.0 + (f / 1800.0) ** 2)
    tilt *= f / (f + 60.0)
    x = np.fft.irfft(spectrum * tilt, num_samples)
    t = np.arange(num_samples) / sample_rate
    syllabic = np.sin(2.0 * np.pi * 2.3 * t) + 0.45 * np.sin(2.0 * np.pi * 0.53 * t + 1.1)
    x *= np.maximum(syllabic, 0.0)
    x[:lead] = 0.0
    peak = float(np.max(np.abs(x)))
    if peak == 0.0:
        raise ValueError("envelope left no signal; lengthen the source")
    return 0.5 * x / peak


@dataclass(frozen=True)
class InputFiles:
    """Recorded clean components, one multichannel WAV per component.

    Head channels are ordered L1..LM, R1..RM. The external microphone is the
    last channel of each file unless separate mono external files are given
    (then both must be present and the head files carry head channels only).
    """

    speech: str
    noise: str
    external_speech: str | None = None
    external_noise: str | None = None

    def __post_init__(self) -> None:
        if (self.external_speech is None) != (self.external_noise is None):
            raise ConfigError("external files must be given for both components or neither")

    @property
    def external_is_last_channel(self) -> bool:
        return self.external_speech is None


@dataclass
class ExperimentConfig:
    """Full description of one experiment sweep.

    Synthetic mode (default) renders scenes from the seeded source template
    and the reverb presets; supplying input_files switches to recorded
    components, where the reverberation grid collapses to the single label
    "recorded" and seeds only tag report rows.
    """

    stft: StftConfig = field(default_factory=StftConfig)
    estimators: tuple[str, ...] = ("B", "CW", "SC", "SC_opt")
    snr_grid_db: tuple[float, ...] = (-5.0, 0.0, 5.0)
    reverb_grid: tuple[str, ...] = ("250ms", "500ms", "750ms")
    seeds: tuple[int, ...] = (0,)
    vad_threshold_db: float = 40.0
    tau_y_s: float = 0.050
    tau_n_s: float = 0.500
    duration_s: float = 20.0
    lead_silence_s: float = 0.5
    external_snr_offset_db: float = 9.6
    residual_coherence: float = 0.0
    static_filters: bool = False
    uniform_weights: bool = False
    write_audio: bool = True
    workers: int = 0
    output_dir: str = "results"
    input_files: InputFiles | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.stft, StftConfig):
            raise ConfigError("stft must be an StftConfig")
        self.estimators = tuple(self.estimators)
        if not self.estimators:
            raise ConfigError("estimators must not be empty")
        for tag in self.estimators:
            if tag not in ESTIMATOR_TAGS:
                raise ConfigError(f"unknown estimator {tag!r}; choose from {ESTIMATOR_TAGS}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("duplicate estimator in grid")
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must not be empty")
        if any(not math.isfinite(s) for s in self.snr_grid_db):
            raise ConfigError("snr_grid_db entries must be finite")
        self.reverb_grid = tuple(self.reverb_grid)
        if not self.reverb_grid:
            raise ConfigError("reverb_grid must not be empty")
        if self.input_files is None:
            for label in self.reverb_grid:
                if label not in REVERB_PRESETS:
                    raise ConfigError(
                        f"unknown reverb preset {label!r}; choose from {sorted(REVERB_PRESETS)}"
                    )
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seed in grid")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.vad_threshold_db <= 0:
            raise ConfigError("vad_threshold_db must be positive")
        if self.tau_y_s <= 0 or self.tau_n_s <= 0:
            raise ConfigError("time constants must be positive")
        if self.input_files is None and self.duration_s < 2.0:
            raise ConfigError("synthetic scenes need at least 2 s of signal")
        if not 0.0 <= self.lead_silence_s < self.duration_s:
            raise ConfigError("lead_silence_s must lie inside the signal")
        if not 0.0 <= self.residual_coherence < 1.0:
            raise ConfigError("residual_coherence must be in [0, 1)")
        if self.workers < 0:
            raise ConfigError("workers must be non-negative")

    @property
    def alpha_y(self) -> float:
        return alpha_from_time_constant(self.tau_y_s, self.stft.sample_rate, self.stft.hop)

    @property
    def alpha_n(self) -> float:
        return alpha_from_time_constant(self.tau_n_s, self.stft.sample_rate, self.stft.hop)

    def to_dict(self) -> dict:
        echo = dataclasses.asdict(self)
        echo["stft"] = {
            "frame_len": self.stft.frame_len,
            "hop": self.stft.hop,
            "sample_rate": self.stft.sample_rate,
        }
        return echo


_STFT_KEYS = ("frame_len", "hop", "sample_rate")


def config_from_mapping(raw: dict) -> ExperimentConfig:
    """Build a config from a parsed TOML document; unknown keys are errors."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(raw)
    if "stft" in kwargs:
        table = kwargs["stft"]
        if not isinstance(table, dict):
            raise ConfigError("stft must be a table")
        bad = sorted(set(table) - set(_STFT_KEYS))
        if bad:
            raise ConfigError(f"unknown stft keys: {', '.join(bad)}")
        try:
            kwargs["stft"] = StftConfig(**table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid stft table: {exc}") from exc
    if "input_files" in kwargs and kwargs["input_files"] is not None:
        table = kwargs["input_files"]
        if not isinstance(table, dict):
            raise ConfigError("input_files must be a table")
        names = {f.name for f in dataclasses.fields(InputFiles)}
        bad = sorted(set(table) - names)
        if bad:
            raise ConfigError(f"unknown input_files keys: {', '.join(bad)}")
        try:
            kwargs["input_files"] = InputFiles(**table)
        except TypeError as exc:
            raise ConfigError(f"invalid input_files table: {exc}") from exc
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config_mapping(path: str | Path) -> dict:
    """Raw TOML document as a dict. I/O errors propagate as OSError."""
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def config_from_file(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment description."""
    return config_from_mapping(load_config_mapping(path))


@dataclass
class ConditionRow:
    """One evaluated (estimator, SNR, reverb, seed) cell of the grid."""

    estimator: str
    snr_db: float
    reverb_label: str
    seed: int
    report: MetricReport


def condition_grid(cfg: ExperimentConfig) -> list[tuple[float, str, int]]:
    """Scene conditions in report order; estimators fan out within each."""
    reverbs = ("recorded",) if cfg.input_files is not None else cfg.reverb_grid
    return [
        (snr, rev, seed)
        for seed in cfg.seeds
        for rev in reverbs
        for snr in cfg.snr_grid_db
    ]


def synthetic_scene(
    cfg: ExperimentConfig, snr_db: float, reverb_label: str, seed: int
) -> SceneDescription:
    """Scene for one grid cell; the noise seed ignores SNR and reverb so a
    seed hears the same noise realization across those axes."""
    n = int(round(cfg.duration_s * cfg.stft.sample_rate))
    return SceneDescription(
        geometry=binaural_geometry(),
        source_position=source_position(),
        source_signal=speech_like_source(n, cfg.stft.sample_rate, seed, cfg.lead_silence_s),
        reverb_proxy=REVERB_PRESETS[reverb_label],
        snr_db=snr_db,
        external_snr_offset_db=cfg.external_snr_offset_db,
        residual_coherence=cfg.residual_coherence,
        noise_seed=seed,
    )


@dataclass
class EstimatedTruth:
    """Stand-in ground truth for recordings: per-bin principal eigenvectors of
    the clean-speech sample covariance. The per-bin scale is arbitrary, which
    the ratio-based RTF and cue math never sees."""

    atf: np.ndarray


def _mono(data: np.ndarray, what: str) -> np.ndarray:
    if data.shape[0] != 1:
        raise ConfigError(f"{what} must be mono, got {data.shape[0]} channels")
    return data[0]


def _load_components(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Clean components as (2M+1, N) arrays with the external channel last."""
    files = cfg.input_files
    rate_x, x = read_wav(files.speech)
    rate_n, n = read_wav(files.noise)
    rates = {rate_x, rate_n}
    if not files.external_is_last_channel:
        rate_ex, ex = read_wav(files.external_speech)
        rate_en, en = read_wav(files.external_noise)
        rates |= {rate_ex, rate_en}
        x = np.vstack([x, _mono(ex, "external speech")[None, :]])
        n = np.vstack([n, _mono(en, "external noise")[None, :]])
    if rates != {int(cfg.stft.sample_rate)}:
        raise ConfigError(
            f"input sample rates {sorted(rates)} do not match the configured "
            f"{cfg.stft.sample_rate:g} Hz"
        )
    if x.shape != n.shape:
        raise ConfigError("speech and noise recordings must have identical shape")
    channels = x.shape[0]
    if channels < 3 or channels % 2 == 0:
        raise ConfigError(
            "recordings must carry an even head-mic count plus the external channel"
        )
    return x, n


def _estimated_truth(x_all: np.ndarray, stft_cfg: StftConfig) -> EstimatedTruth:
    frames = analyze(x_all, stft_cfg).data
    r_x = np.einsum("ibl,jbl->bij", frames, np.conj(frames)) / frames.shape[2]
    _, vecs = np.linalg.eigh(0.5 * (r_x + np.conj(np.swapaxes(r_x, -1, -2))))
    return EstimatedTruth(atf=vecs[..., :, -1])


def _initial_window(labels: np.ndarray, min_each: int = 3) -> int:
    """Shortest prefix holding min_each frames of each VAD class."""
    speech = np.cumsum(labels)
    noise = np.cumsum(~labels)
    usable = (speech >= min_each) & (noise >= min_each)
    if not usable.any():
        raise ConfigError(
            "no usable initialization window: the signal needs both speech and "
            "noise-only frames near its start"
        )
    return int(np.flatnonzero(usable)[0]) + 1


def _mirrored(left: RtfVector) -> RtfVector:
    """Right-reference counterpart of a shared-direction left estimate.

    Both sides normalize the same underlying vector, so dividing by the
    right-reference entry is exactly what re-estimating would compute (an
    exactly zero entry fails validation either way).
    """
    ref = left.values.shape[-1] // 2
    values = left.values / left.values[..., ref : ref + 1]
    values[..., ref] = 1.0
    return RtfVector(values, "right", left.estimator_tag)


def _estimate_pair(tag, state, truth) -> tuple[RtfVector, RtfVector]:
    if tag == "B":
        return estimate_biased(state.r_y, "left"), estimate_biased(state.r_y, "right")
    if tag == "CW":
        left = estimate_cw(state.r_y, state.r_n, "left")
        return left, _mirrored(left)
    if tag == "SC":
        return (
            estimate_sc(state.r_ye, "left", on_unreliable="mask"),
            estimate_sc(state.r_ye, "right", on_unreliable="mask"),
        )
    if tag == "SC_opt":
        return (
            estimate_sc(state.r_ys, "left", on_unreliable="mask", tag="SC_opt"),
            estimate_sc(state.r_ys, "right", on_unreliable="mask", tag="SC_opt"),
        )
    if tag == "true":
        return true_rtf(truth, "left"), true_rtf(truth, "right")
    raise ValueError(f"unknown estimator tag {tag!r}")


def _run_filters(
    cfg: ExperimentConfig,
    head: np.ndarray,
    ext: np.ndarray,
    src: np.ndarray,
    labels: np.ndarray,
    truth,
) -> dict[str, BeamformerFilters]:
    """Per-estimator beamformer filters over the whole signal.

    Static mode estimates once from long-term sample averages. The default
    time-varying mode warm-starts the recursive state from the shortest prefix
    holding both VAD classes, then updates and re-estimates every frame.
    """
    track = "SC_opt" in cfg.estimators
    total = head.shape[2]
    try:
        if cfg.static_filters:
            state = initialize(
                head, ext, labels, cfg.alpha_y, cfg.alpha_n, source=src if track else None
            )
            return {
                tag: compute_bmvdr(state.r_n, *_estimate_pair(tag, state, truth))
                for tag in cfg.estimators
            }
        warm = _initial_window(labels)
        state = initialize(
            head[:, :, :warm],
            ext[:, :warm],
            labels[:warm],
            cfg.alpha_y,
            cfg.alpha_n,
            source=src[:, :warm] if track else None,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    true_pair = _estimate_pair("true", state, truth) if "true" in cfg.estimators else None
    sides: dict[str, tuple[list, list]] = {tag: ([], []) for tag in cfg.estimators}
    for l in range(total):
        state.update(
            head[:, :, l].T,
            ext[:, l],
            bool(labels[l]),
            source=src[:, l] if track else None,
        )
        for tag in cfg.estimators:
            pair = true_pair if tag == "true" else _estimate_pair(tag, state, truth)
            filt = compute_bmvdr(state.r_n, *pair)
            sides[tag][0].append(filt.w_left)
            sides[tag][1].append(filt.w_right)
    return {
        tag: BeamformerFilters(np.stack(wl), np.stack(wr))
        for tag, (wl, wr) in sides.items()
    }


def _wav_name(tag: str, snr_db: float, reverb_label: str, seed: int) -> str:
    return f"{tag}_snr{snr_db:g}dB_{reverb_label}_seed{seed}.wav"


def process_condition(
    cfg: ExperimentConfig, snr_db: float, reverb_label: str, seed: int
) -> list[ConditionRow]:
    """Run one scene condition through every configured estimator.

    Renders (or loads and remixes) the scene, runs the frame loop once with a
    shared covariance state, filters the mixture plus both clean components
    through identical filters, and scores each estimator. Exceptions gain the
    condition label so failures in a sweep can be located.
    """
    try:
        return _condition_rows(cfg, snr_db, reverb_label, seed)
    except Exception as exc:
        note = f"[snr={snr_db:g} dB, reverb={reverb_label}, seed={seed}]"
        if isinstance(exc, OSError) and exc.strerror:
            exc.strerror = f"{note} {exc.strerror}"  # str(OSError) ignores args
        else:
            exc.args = (f"{note} {exc.args[0]}" if exc.args else note,) + exc.args[1:]
        raise


def _condition_rows(
    cfg: ExperimentConfig, snr_db: float, reverb_label: str, seed: int
) -> list[ConditionRow]:
    stft_cfg = cfg.stft
    if cfg.input_files is None:
        rendered = render_scene(synthetic_scene(cfg, snr_db, reverb_label, seed), stft_cfg)
        signals = rendered.signals
        x_all = rendered.ground_truth.speech
        n_all = rendered.ground_truth.noise
        truth = rendered.ground_truth
    else:
        x_all, clean_noise = _load_components(cfg)
        ref = (x_all.shape[0] - 1) // 2
        p_x = float(np.mean(x_all[ref] ** 2))
        p_n = float(np.mean(clean_noise[ref] ** 2))
        if p_x <= 0 or p_n <= 0:
            raise ConfigError("recorded components have no power at the right reference")
        n_all = clean_noise * math.sqrt(p_x / (p_n * 10.0 ** (snr_db / 10.0)))
        signals = x_all + n_all
        truth = _estimated_truth(x_all, stft_cfg)

    head_count = signals.shape[0] - 1
    right_ref = head_count // 2

    y_t = analyze(signals, stft_cfg)
    x_t = analyze(x_all, stft_cfg)
    n_t = analyze(n_all, stft_cfg)
    labels = oracle_vad(x_t.channel(right_ref), cfg.vad_threshold_db)

    filters_by_tag = _run_filters(
        cfg,
        y_t.data[:head_count],
        y_t.data[head_count],  # external channel is last
        x_t.data[head_count],
        labels,
        truth,
    )

    weights = load_band_weights(uniform=cfg.uniform_weights)
    head_y = SpectralFrameTensor(y_t.data[:head_count], stft_cfg)
    head_x = SpectralFrameTensor(x_t.data[:head_count], stft_cfg)
    head_n = SpectralFrameTensor(n_t.data[:head_count], stft_cfg)
    edge = stft_cfg.frame_len
    ref_x = synthesize(x_t.channel(right_ref))[0]
    ref_n = synthesize(n_t.channel(right_ref))[0]

    out_dir = Path(cfg.output_dir)
    rows = []
    for tag in cfg.estimators:
        filters = filters_by_tag[tag]
        zy = apply(filters, head_y)
        zx = apply(filters, head_x)
        zn = apply(filters, head_n)
        stacked = SpectralFrameTensor(
            np.stack([t.data[0] for t in (*zy, *zx, *zn)]), stft_cfg
        )
        z_time = synthesize(stacked)
        delta, detail = isnr_improvement(
            ref_x[edge:-edge],
            ref_n[edge:-edge],
            z_time[3][edge:-edge],  # right-ear speech component
            z_time[5][edge:-edge],  # right-ear noise component
            stft_cfg.sample_rate,
            weights,
        )
        cues = binaural_cue_errors(filters, truth.atf, stft_cfg)
        rows.append(
            ConditionRow(
                estimator=tag,
                snr_db=snr_db,
                reverb_label=reverb_label,
                seed=seed,
                report=MetricReport(
                    delta_isnr_db=delta,
                    ild_error_db=cues.ild_error_db,
                    itd_error_us=cues.itd_error_us,
                    per_band_detail=detail,
                ),
            )
        )
        if cfg.write_audio:
            write_wav(
                out_dir / _wav_name(tag, snr_db, reverb_label, seed),
                int(stft_cfg.sample_rate),
                z_time[:2],
                encoding="float32",
            )
    return rows


def _fmt(value: float) -> str:
    return f"{float(value):.6g}"


def emit_report(
    rows: list[ConditionRow], cfg: ExperimentConfig, out_dir: str | Path
) -> tuple[Path, Path]:
    """Write report.csv and report.json; returns both paths.

    Column order and float formatting are fixed so identical runs produce
    identical bytes. The JSON carries the full per-band detail plus an echo of
    the config that produced it.
    """
    if not rows:
        raise ValueError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    header = "estimator,snr_db,reverb_label,seed,delta_isnr_db,ild_error_db,itd_error_us"
    lines = [header]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.estimator,
                    _fmt(r.snr_db),
                    r.reverb_label,
                    str(r.seed),
                    _fmt(r.report.delta_isnr_db),
                    _fmt(r.report.ild_error_db),
                    _fmt(r.report.itd_error_us),
                )
            )
        )
    csv_path = out_dir / "report.csv"
    csv_path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    payload = {
        "config": cfg.to_dict(),
        "rows": [
            {
                "estimator": r.estimator,
                "snr_db": r.snr_db,
                "reverb_label": r.reverb_label,
                "seed": r.seed,
                "delta_isnr_db": r.report.delta_isnr_db,
                "ild_error_db": r.report.ild_error_db,
                "itd_error_us": r.report.itd_error_us,
                "per_band": r.report.per_band_detail,
            }
            for r in rows
        ],
    }
    json_path = out_dir / "report.json"
    json_path.write_bytes((json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return csv_path, json_path


def run_experiment(cfg: ExperimentConfig) -> list[ConditionRow]:
    """Evaluate the whole grid and write the consolidated report.

    Conditions are independent; with workers != 1 they run in a process pool.
    Row order, report bytes and WAV bytes depend only on the config.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    conditions = condition_grid(cfg)
    workers = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    workers = min(workers, len(conditions))
    rows: list[ConditionRow] = []
    if workers <= 1:
        for cond in conditions:
            rows.extend(process_condition(cfg, *cond))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(process_condition, cfg, *cond) for cond in conditions]
            for fut in futures:
                rows.extend(fut.result())
    emit_report(rows, cfg, out_dir)
    return rows
