import json

import numpy as np
import pytest

from shotlog.clip_io import (
    AudioClip,
    EventAnnotation,
    mixdown,
    read_annotations,
    read_wav,
    write_annotations,
    write_wav,
)
from shotlog.errors import FormatError, ValidationError


def test_silence_roundtrip(tmp_path):
    clip = AudioClip(np.zeros(16000), 16000)
    path = tmp_path / "silence.wav"
    write_wav(clip, path)
    back = read_wav(path)
    assert back.sample_rate_hz == 16000
    assert len(back.samples) == 16000
    assert np.all(back.samples == 0.0)


def test_stereo_opposite_channels_average_to_zero(tmp_path):
    from scipy.io import wavfile

    stereo = np.empty((1000, 2), dtype=np.float32)
    stereo[:, 0] = 0.5
    stereo[:, 1] = -0.5
    path = tmp_path / "stereo.wav"
    wavfile.write(path, 16000, stereo)
    clip = read_wav(path)
    assert clip.channel_count_at_source == 2
    assert np.all(clip.samples == 0.0)


def test_pcm16_min_value_maps_to_minus_one(tmp_path):
    from scipy.io import wavfile

    path = tmp_path / "min.wav"
    wavfile.write(path, 16000, np.array([-32768, 32767, 0], dtype=np.int16))
    clip = read_wav(path)
    assert clip.samples[0] == -1.0
    assert clip.samples[1] == 32767.0 / 32768.0
    assert clip.samples[2] == 0.0


def test_sine_roundtrip_within_quantization(tmp_path):
    t = np.arange(16000) / 16000.0
    clip = AudioClip(np.sin(2 * np.pi * 440 * t), 16000)
    path = tmp_path / "sine.wav"
    write_wav(clip, path)
    back = read_wav(path)
    assert np.max(np.abs(back.samples - clip.samples)) <= 2.0**-15


def test_noise_roundtrip_within_quantization(tmp_path):
    rng = np.random.default_rng(7)
    clip = AudioClip(rng.uniform(-1.0, 1.0, 10_000), 48000)
    path = tmp_path / "noise.wav"
    write_wav(clip, path)
    back = read_wav(path)
    assert back.sample_rate_hz == 48000
    assert np.max(np.abs(back.samples - clip.samples)) <= 2.0**-15


def test_empty_clip_roundtrip(tmp_path):
    clip = AudioClip(np.zeros(0), 16000)
    path = tmp_path / "empty.wav"
    write_wav(clip, path)
    back = read_wav(path)
    assert len(back.samples) == 0


def test_unsupported_encoding_rejected(tmp_path):
    from scipy.io import wavfile

    path = tmp_path / "pcm32.wav"
    wavfile.write(path, 16000, np.array([1, 2, 3], dtype=np.int32))
    with pytest.raises(FormatError):
        read_wav(path)


def test_garbage_file_rejected(tmp_path):
    path = tmp_path / "garbage.wav"
    path.write_bytes(b"RIFF....not really a wav")
    with pytest.raises((FormatError, OSError)):
        read_wav(path)


def test_mixdown_is_linear():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(500, 2))
    b = rng.normal(size=(500, 2))
    assert np.max(np.abs(mixdown(a) + mixdown(b) - mixdown(a + b))) < 1e-9


def test_clip_rejects_bad_rates_and_nonfinite():
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 22050)
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]), 16000)


def test_read_annotations_sorted(tmp_path):
    path = tmp_path / "ann.jsonl"
    rows = [
        {"onset_s": 5.0, "offset_s": 5.2, "label": "explosion"},
        {"onset_s": 3.0, "offset_s": 3.2, "label": "gunshot"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    anns = read_annotations(path)
    assert [a.onset_s for a in anns] == [3.0, 5.0]
    assert anns[0].label == "gunshot"


def test_read_annotations_single_line(tmp_path):
    path = tmp_path / "one.jsonl"
    path.write_text(json.dumps({"onset_s": 3.0, "offset_s": 3.2, "label": "gunshot"}) + "\n")
    anns = read_annotations(path)
    assert len(anns) == 1
    assert anns[0].offset_s == 3.2


def test_read_annotations_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"onset_s": 3.0, "offset_s": 2.0, "label": "gunshot"}) + "\n")
    with pytest.raises(ValidationError) as excinfo:
        read_annotations(path)
    assert "line 1" in str(excinfo.value)


def test_read_annotations_unknown_label(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"onset_s": 1.0, "offset_s": 2.0, "label": "thunder"}) + "\n")
    with pytest.raises(ValidationError):
        read_annotations(path)


def test_annotation_roundtrip(tmp_path):
    anns = [
        EventAnnotation(1.0, 1.5, "gunshot", source_file="a.wav"),
        EventAnnotation(4.0, 4.4, "explosion"),
    ]
    path = tmp_path / "out.jsonl"
    write_annotations(anns, path)
    back = read_annotations(path)
    assert back == anns


def test_write_annotations_extra_fields(tmp_path):
    path = tmp_path / "prop.jsonl"
    write_annotations([EventAnnotation(0.5, 0.9, "gunshot")], path, extra_fields={"proposed": True})
    row = json.loads(path.read_text().splitlines()[0])
    assert row["proposed"] is True
    assert read_annotations(path)[0].onset_s == 0.5
