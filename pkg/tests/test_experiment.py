import json
import math

import jsonschema
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from binbeam.beamformer import apply
from binbeam.experiment import (
    REVERB_PRESETS,
    ConditionRow,
    ConfigError,
    ExperimentConfig,
    InputFiles,
    condition_grid,
    config_from_file,
    config_from_mapping,
    emit_report,
    exponential_decay_taps,
    process_condition,
    run_experiment,
    speech_like_source,
    synthetic_scene,
)
from binbeam.experiment import _run_filters
from binbeam.metrics import MetricReport
from binbeam.scene import render_scene
from binbeam.stft import SpectralFrameTensor, analyze, synthesize
from binbeam.wavio import read_wav, write_wav


def small_config(tmp_path, **overrides) -> ExperimentConfig:
    base = dict(
        estimators=("CW", "SC"),
        snr_grid_db=(0.0,),
        reverb_grid=("250ms",),
        seeds=(5,),
        duration_s=3.0,
        workers=1,
        output_dir=str(tmp_path / "out"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_defaults_are_valid(self):
        cfg = ExperimentConfig()
        assert cfg.estimators == ("B", "CW", "SC", "SC_opt")
        assert cfg.snr_grid_db == (-5.0, 0.0, 5.0)

    def test_forgetting_factors_from_time_constants(self):
        cfg = ExperimentConfig()
        assert_allclose(cfg.alpha_y, math.exp(-128.0 / (16000.0 * 0.050)), rtol=1e-12)
        assert_allclose(cfg.alpha_n, math.exp(-128.0 / (16000.0 * 0.500)), rtol=1e-12)

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(estimators=()),
            dict(estimators=("B", "XX")),
            dict(estimators=("B", "B")),
            dict(snr_grid_db=()),
            dict(snr_grid_db=(0.0, math.inf)),
            dict(reverb_grid=()),
            dict(reverb_grid=("300ms",)),
            dict(seeds=()),
            dict(seeds=(1, 1)),
            dict(seeds=(-1,)),
            dict(vad_threshold_db=0.0),
            dict(tau_y_s=0.0),
            dict(tau_n_s=-1.0),
            dict(duration_s=1.0),
            dict(lead_silence_s=25.0),
            dict(residual_coherence=1.0),
            dict(workers=-1),
        ],
    )
    def test_rejects_bad_fields(self, overrides):
        with pytest.raises(ConfigError):
            ExperimentConfig(**overrides)

    def test_file_mode_skips_reverb_label_check(self, tmp_path):
        files = InputFiles(speech="s.wav", noise="n.wav")
        cfg = ExperimentConfig(reverb_grid=("whatever",), input_files=files)
        assert condition_grid(cfg) == [(s, "recorded", 0) for s in (-5.0, 0.0, 5.0)]

    def test_input_files_need_both_external_components(self):
        with pytest.raises(ConfigError):
            InputFiles(speech="s.wav", noise="n.wav", external_speech="e.wav")

    def test_to_dict_is_json_serializable(self):
        text = json.dumps(ExperimentConfig().to_dict())
        assert '"frame_len": 256' in text


class TestConfigParsing:
    def test_round_trip_through_toml(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "\n".join(
                [
                    'estimators = ["B", "SC"]',
                    "snr_grid_db = [-5.0, 5.0]",
                    'reverb_grid = ["500ms"]',
                    "seeds = [1, 2]",
                    "duration_s = 2.5",
                    "static_filters = true",
                    "[stft]",
                    "frame_len = 128",
                    "hop = 64",
                ]
            )
        )
        cfg = config_from_file(path)
        assert cfg.estimators == ("B", "SC")
        assert cfg.snr_grid_db == (-5.0, 5.0)
        assert cfg.seeds == (1, 2)
        assert cfg.static_filters is True
        assert cfg.stft.frame_len == 128
        assert cfg.stft.sample_rate == 16000.0

    def test_unknown_top_level_key_is_an_error(self):
        with pytest.raises(ConfigError, match="unknown config keys: snr_grid"):
            config_from_mapping({"snr_grid": [0.0]})

    def test_unknown_stft_key_is_an_error(self):
        with pytest.raises(ConfigError, match="unknown stft keys"):
            config_from_mapping({"stft": {"frame_len": 256, "window": "hann"}})

    def test_invalid_stft_values_become_config_errors(self):
        with pytest.raises(ConfigError, match="invalid stft table"):
            config_from_mapping({"stft": {"frame_len": 128, "hop": 256}})

    def test_unknown_input_files_key_is_an_error(self):
        with pytest.raises(ConfigError, match="unknown input_files keys"):
            config_from_mapping({"input_files": {"speech": "a", "noise": "b", "ext": "c"}})

    def test_bad_toml_is_a_config_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("seeds = [1,\n")
        with pytest.raises(ConfigError):
            config_from_file(path)

    def test_missing_file_is_an_os_error(self, tmp_path):
        with pytest.raises(OSError):
            config_from_file(tmp_path / "absent.toml")


class TestReverbPresets:
    def test_labels(self):
        assert set(REVERB_PRESETS) == {"anechoic", "250ms", "500ms", "750ms"}
        assert REVERB_PRESETS["anechoic"] == ()

    def test_gain_envelope_follows_the_decay_law(self):
        # any two taps must sit on the same 10^(-3 d / t60) curve
        taps = exponential_decay_taps(0.5, 14, 0.8)
        d0, g0 = taps[0]
        for d, g in taps[1:]:
            assert_allclose(abs(g) / abs(g0), 10.0 ** (-3.0 * (d - d0) / 0.5), rtol=1e-12)

    def test_total_echo_energy_matches_request(self):
        for target in (0.35, 1.3):
            taps = exponential_decay_taps(0.75, 18, target)
            assert_allclose(sum(g * g for _, g in taps), target, rtol=1e-12)

    def test_delays_increase_and_signs_alternate(self):
        taps = exponential_decay_taps(0.25, 10, 0.35)
        delays = [d for d, _ in taps]
        assert delays == sorted(delays)
        assert all(0.012 <= d < 0.25 for d in delays)
        signs = [math.copysign(1.0, g) for _, g in taps]
        assert signs == [(-1.0) ** k for k in range(len(taps))]

    def test_rejects_degenerate_requests(self):
        with pytest.raises(ValueError):
            exponential_decay_taps(0.01, 4, 0.5)
        with pytest.raises(ValueError):
            exponential_decay_taps(0.5, 0, 0.5)


class TestSpeechLikeSource:
    def test_deterministic_per_seed(self):
        a = speech_like_source(16000, 16000.0, 3)
        b = speech_like_source(16000, 16000.0, 3)
        c = speech_like_source(16000, 16000.0, 4)
        assert_array_equal(a, b)
        assert np.any(a != c)

    def test_lead_silence_and_peak(self):
        x = speech_like_source(16000, 16000.0, 0, lead_silence_s=0.5)
        assert_array_equal(x[:8000], 0.0)
        assert_allclose(np.max(np.abs(x)), 0.5, rtol=1e-12)

    def test_has_pauses_after_the_lead(self):
        x = speech_like_source(64000, 16000.0, 1, lead_silence_s=0.5)
        silent = np.mean(x[8000:] == 0.0)
        assert 0.2 < silent < 0.8

    def test_rejects_all_silence(self):
        with pytest.raises(ValueError):
            speech_like_source(4000, 16000.0, 0, lead_silence_s=1.0)


class TestConditionGrid:
    def test_every_condition_exactly_once(self):
        cfg = ExperimentConfig(seeds=(0, 1), snr_grid_db=(-5.0, 5.0), reverb_grid=("250ms", "750ms"))
        grid = condition_grid(cfg)
        assert len(grid) == 8
        assert len(set(grid)) == 8
        assert set(grid) == {
            (snr, rev, seed)
            for snr in (-5.0, 5.0)
            for rev in ("250ms", "750ms")
            for seed in (0, 1)
        }

    def test_scene_noise_ignores_snr_and_reverb(self):
        cfg = ExperimentConfig(duration_s=2.0)
        a = synthetic_scene(cfg, -5.0, "250ms", 3)
        b = synthetic_scene(cfg, 5.0, "750ms", 3)
        assert a.noise_seed == b.noise_seed
        assert_array_equal(a.source_signal, b.source_signal)


REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "rows"],
    "properties": {
        "config": {
            "type": "object",
            "required": ["estimators", "snr_grid_db", "reverb_grid", "seeds", "stft"],
            "properties": {
                "stft": {
                    "type": "object",
                    "required": ["frame_len", "hop", "sample_rate"],
                },
            },
        },
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": [
                    "estimator",
                    "snr_db",
                    "reverb_label",
                    "seed",
                    "delta_isnr_db",
                    "ild_error_db",
                    "itd_error_us",
                    "per_band",
                ],
                "properties": {
                    "estimator": {"type": "string"},
                    "snr_db": {"type": "number"},
                    "reverb_label": {"type": "string"},
                    "seed": {"type": "integer"},
                    "delta_isnr_db": {"type": "number"},
                    "ild_error_db": {"type": "number"},
                    "itd_error_us": {"type": "number"},
                    "per_band": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["center_hz", "weight", "snr_in_db", "snr_out_db", "used"],
                            "properties": {
                                "center_hz": {"type": "number"},
                                "weight": {"type": "number"},
                                "snr_in_db": {"type": ["number", "null"]},
                                "snr_out_db": {"type": ["number", "null"]},
                                "used": {"type": "boolean"},
                            },
                        },
                    },
                },
            },
        },
    },
}


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "results"
    cfg = ExperimentConfig(
        estimators=("CW", "SC"),
        snr_grid_db=(0.0, 5.0),
        reverb_grid=("250ms",),
        seeds=(5,),
        duration_s=3.0,
        workers=1,
        output_dir=str(out),
    )
    rows = run_experiment(cfg)
    first = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    rows_again = run_experiment(cfg)
    second = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    return cfg, rows, first, rows_again, second


class TestRunExperiment:
    def test_row_grid_is_complete(self, finished_run):
        cfg, rows = finished_run[0], finished_run[1]
        cells = [(r.estimator, r.snr_db, r.reverb_label, r.seed) for r in rows]
        assert len(cells) == len(set(cells)) == 4
        assert set(cells) == {
            (est, snr, "250ms", 5) for est in ("CW", "SC") for snr in (0.0, 5.0)
        }

    def test_reruns_are_byte_identical(self, finished_run):
        _, _, first, _, second = finished_run
        assert first.keys() == second.keys()
        for name in first:
            assert first[name] == second[name], name

    def test_csv_layout_and_formatting(self, finished_run):
        cfg, rows, first = finished_run[0], finished_run[1], finished_run[2]
        lines = first["report.csv"].decode().splitlines()
        assert lines[0] == "estimator,snr_db,reverb_label,seed,delta_isnr_db,ild_error_db,itd_error_us"
        assert len(lines) == len(rows) + 1
        for line, row in zip(lines[1:], rows):
            fields = line.split(",")
            assert fields[0] == row.estimator
            assert fields[2] == row.reverb_label
            assert int(fields[3]) == row.seed
            assert fields[4] == f"{row.report.delta_isnr_db:.6g}"

    def test_json_matches_schema(self, finished_run):
        payload = json.loads(finished_run[2]["report.json"].decode())
        jsonschema.validate(payload, REPORT_SCHEMA)
        assert payload["config"]["estimators"] == ["CW", "SC"]
        assert len(payload["rows"]) == 4

    def test_wav_outputs(self, finished_run):
        cfg = finished_run[0]
        names = set(finished_run[2])
        assert "CW_snr0dB_250ms_seed5.wav" in names
        assert "SC_snr5dB_250ms_seed5.wav" in names
        rate, data = read_wav(f"{cfg.output_dir}/CW_snr0dB_250ms_seed5.wav")
        assert rate == 16000
        assert data.shape[0] == 2
        assert np.all(np.isfinite(data))
        assert np.max(np.abs(data)) > 1e-4

    def test_worker_pool_matches_sequential(self, tmp_path):
        seq = small_config(tmp_path / "a", estimators=("B",), seeds=(0, 1), duration_s=2.5)
        par = small_config(tmp_path / "b", estimators=("B",), seeds=(0, 1), duration_s=2.5, workers=2)
        run_experiment(seq)
        run_experiment(par)
        a = (tmp_path / "a" / "out" / "report.csv").read_bytes()
        b = (tmp_path / "b" / "out" / "report.csv").read_bytes()
        assert a == b

    def test_true_estimator_rows_preserve_cues_and_reduce_noise(self, tmp_path):
        cfg = small_config(tmp_path, estimators=("true",), write_audio=False)
        rows = run_experiment(cfg)
        assert len(rows) == 1
        assert rows[0].report.delta_isnr_db > 0.0
        assert rows[0].report.ild_error_db < 1e-6
        assert rows[0].report.itd_error_us < 1e-6

    def test_condition_label_attached_to_failures(self, tmp_path):
        cfg = small_config(tmp_path, input_files=InputFiles(speech="gone.wav", noise="gone2.wav"))
        with pytest.raises(FileNotFoundError, match=r"\[snr=0 dB, reverb=recorded, seed=5\]"):
            process_condition(cfg, 0.0, "recorded", 5)


class TestShadowFiltering:
    def test_mix_filtering_equals_component_sum(self, tmp_path):
        # pipeline linearity: the enhanced mixture must equal the sum of the
        # separately filtered speech and noise components
        cfg = small_config(tmp_path, estimators=("CW",))
        rendered = render_scene(synthetic_scene(cfg, 0.0, "250ms", 5), cfg.stft)
        y_t = analyze(rendered.signals, cfg.stft)
        x_t = analyze(rendered.ground_truth.speech, cfg.stft)
        n_t = analyze(rendered.ground_truth.noise, cfg.stft)
        from binbeam.covariance import oracle_vad

        labels = oracle_vad(x_t.channel(2), cfg.vad_threshold_db)
        filters = _run_filters(
            cfg, y_t.data[:4], y_t.data[4], x_t.data[4], labels, rendered.ground_truth
        )["CW"]
        head = lambda t: SpectralFrameTensor(t.data[:4], cfg.stft)
        zy = synthesize(apply(filters, head(y_t))[0])
        zx = synthesize(apply(filters, head(x_t))[0])
        zn = synthesize(apply(filters, head(n_t))[0])
        assert np.linalg.norm(zy - (zx + zn)) < 1e-6 * np.linalg.norm(zy)


class TestEmitReport:
    def _row(self, value=1.2345678):
        return ConditionRow(
            estimator="B",
            snr_db=0.0,
            reverb_label="250ms",
            seed=0,
            report=MetricReport(
                delta_isnr_db=value,
                ild_error_db=0.5,
                itd_error_us=12.0,
                per_band_detail=[
                    {"center_hz": 1000.0, "weight": 1.0, "snr_in_db": 0.0, "snr_out_db": 1.0, "used": True}
                ],
            ),
        )

    def test_single_row_gives_two_line_csv(self, tmp_path):
        csv_path, json_path = emit_report([self._row()], ExperimentConfig(), tmp_path)
        lines = csv_path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("B,0,250ms,0,")

    def test_six_significant_digits(self, tmp_path):
        csv_path, _ = emit_report([self._row(1.2345678)], ExperimentConfig(), tmp_path)
        assert ",1.23457," in csv_path.read_text().splitlines()[1]

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], ExperimentConfig(), tmp_path)

    def test_unwritable_directory_is_an_os_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_report([self._row()], ExperimentConfig(), blocker / "sub")


@pytest.fixture(scope="module")
def recorded_components(tmp_path_factory):
    """Clean components of one rendered scene written out as WAV files."""
    root = tmp_path_factory.mktemp("recorded")
    cfg = ExperimentConfig(duration_s=2.5, seeds=(9,))
    rendered = render_scene(synthetic_scene(cfg, 0.0, "250ms", 9), cfg.stft)
    speech, noise = rendered.ground_truth.speech, rendered.ground_truth.noise
    write_wav(root / "speech.wav", 16000, speech)
    write_wav(root / "noise.wav", 16000, noise)
    write_wav(root / "speech_head.wav", 16000, speech[:4])
    write_wav(root / "noise_head.wav", 16000, noise[:4])
    write_wav(root / "speech_ext.wav", 16000, speech[4])
    write_wav(root / "noise_ext.wav", 16000, noise[4])
    return root


class TestFileMode:
    def _config(self, root, out, **kw):
        files = kw.pop(
            "input_files",
            InputFiles(speech=str(root / "speech.wav"), noise=str(root / "noise.wav")),
        )
        return ExperimentConfig(
            estimators=("SC",),
            snr_grid_db=(-5.0, 5.0),
            seeds=(0,),
            workers=1,
            write_audio=False,
            output_dir=str(out),
            input_files=files,
            **kw,
        )

    def test_runs_and_labels_rows_recorded(self, recorded_components, tmp_path):
        rows = run_experiment(self._config(recorded_components, tmp_path / "o1"))
        assert [(r.snr_db, r.reverb_label) for r in rows] == [
            (-5.0, "recorded"),
            (5.0, "recorded"),
        ]
        assert all(np.isfinite(r.report.delta_isnr_db) for r in rows)

    def test_separate_external_files_match_last_channel_layout(
        self, recorded_components, tmp_path
    ):
        root = recorded_components
        combined = self._config(root, tmp_path / "o2")
        split = self._config(
            root,
            tmp_path / "o3",
            input_files=InputFiles(
                speech=str(root / "speech_head.wav"),
                noise=str(root / "noise_head.wav"),
                external_speech=str(root / "speech_ext.wav"),
                external_noise=str(root / "noise_ext.wav"),
            ),
        )
        run_experiment(combined)
        run_experiment(split)
        a = (tmp_path / "o2" / "report.csv").read_bytes()
        b = (tmp_path / "o3" / "report.csv").read_bytes()
        assert a == b

    def test_sample_rate_mismatch_is_a_config_error(self, recorded_components, tmp_path):
        root = recorded_components
        rate, data = read_wav(root / "speech.wav")
        write_wav(tmp_path / "slow.wav", 8000, data)
        cfg = self._config(
            root,
            tmp_path / "o4",
            input_files=InputFiles(speech=str(tmp_path / "slow.wav"), noise=str(root / "noise.wav")),
        )
        with pytest.raises(ConfigError, match="sample rates"):
            process_condition(cfg, 0.0, "recorded", 0)

    def test_even_channel_count_is_a_config_error(self, recorded_components, tmp_path):
        root = recorded_components
        cfg = self._config(
            root,
            tmp_path / "o5",
            input_files=InputFiles(
                speech=str(root / "speech_head.wav"), noise=str(root / "noise_head.wav")
            ),
        )
        with pytest.raises(ConfigError, match="external channel"):
            process_condition(cfg, 0.0, "recorded", 0)
