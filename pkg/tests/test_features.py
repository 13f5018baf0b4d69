import math

import numpy as np
import pytest

from ibdiar.exceptions import FeatureFileError, ParameterError
from ibdiar.features import (
    FeatureMatrix,
    MfccConfig,
    Recording,
    SpeechMask,
    apply_speech_mask,
    extract_mfcc,
    load_features,
    load_features_csv,
    read_speech_mask,
    read_wav,
    save_features,
    write_wav,
)

SR = 16000


def reference_mfcc(x, sr, n_coeffs=19, n_filters=26, win_s=0.025, hop_s=0.010, pre=0.97):
    """Slow textbook MFCC: explicit DFT sums, per-bin triangle weights, DCT-II."""
    win, hop = int(win_s * sr), int(hop_s * sr)
    nfft = 512
    y = np.concatenate([[x[0]], x[1:] - pre * x[:-1]])
    n = np.arange(win)
    hamming = 0.54 - 0.46 * np.cos(2 * math.pi * n / (win - 1))
    k = np.arange(nfft // 2 + 1)
    dft = np.exp(-2j * math.pi * np.outer(k, n) / nfft)

    def mel(f):
        return 2595 * math.log10(1 + f / 700)

    def imel(m):
        return 700 * (10 ** (m / 2595) - 1)

    top = mel(sr / 2)
    edges = [imel(top * i / (n_filters + 1)) for i in range(n_filters + 2)]
    weights = np.zeros((n_filters, k.size))
    for m in range(n_filters):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        for b in k:
            f = b * sr / nfft
            if lo < f <= c:
                weights[m, b] = (f - lo) / (c - lo)
            elif c < f < hi:
                weights[m, b] = (hi - f) / (hi - c)
    out = []
    for start in range(0, len(y) - win + 1, hop):
        spec = dft @ (y[start:start + win] * hamming)
        energies = weights @ (np.abs(spec) ** 2)
        loge = np.log(np.maximum(energies, 1e-10))
        cep = []
        for q in range(1, n_coeffs + 1):
            c = sum(loge[j] * math.cos(math.pi * q * (j + 0.5) / n_filters) for j in range(n_filters))
            cep.append(c * math.sqrt(2.0 / n_filters))
        out.append(cep)
    return np.array(out)


def test_frame_count_formula():
    # 2.005 s, 25 ms window, 10 ms hop: floor((32080 - 400) / 160) + 1
    rec = Recording("r", np.random.default_rng(0).standard_normal(32080), SR)
    feat = extract_mfcc(rec)
    assert feat.frames.shape == (199, 19)


def test_silence_gives_identical_rows():
    feat = extract_mfcc(Recording("z", np.zeros(SR), SR))
    assert np.all(np.isfinite(feat.frames))
    assert np.array_equal(feat.frames, np.broadcast_to(feat.frames[0], feat.frames.shape))


def test_sine_matches_reference_implementation():
    t = np.arange(SR) / SR
    x = 0.5 * np.sin(2 * np.pi * 440 * t)
    ours = extract_mfcc(Recording("sine", x, SR)).frames
    ref = reference_mfcc(x, SR)
    assert ours.shape == ref.shape
    np.testing.assert_allclose(ours, ref, atol=1e-4)


def test_sine_frames_repeat_with_the_phase_cycle():
    t = np.arange(SR) / SR
    x = 0.5 * np.sin(2 * np.pi * 440 * t)
    f = extract_mfcc(Recording("sine", x, SR)).frames
    # 440 Hz advances 4.4 cycles per 10 ms hop, so the frame pattern repeats
    # every 5 hops; frame 0 differs because pre-emphasis has no history there
    np.testing.assert_allclose(f[6:], f[1:-5], atol=1e-6)


def test_time_shift_equivariance():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(SR)
    shift_frames = 7
    shifted = np.concatenate([np.zeros(160 * shift_frames), x])
    a = extract_mfcc(Recording("a", x, SR)).frames
    b = extract_mfcc(Recording("b", shifted, SR)).frames
    np.testing.assert_allclose(b[shift_frames:shift_frames + a.shape[0]], a, atol=1e-6)


def test_finite_for_extreme_inputs():
    rng = np.random.default_rng(1)
    for x in (np.zeros(800), 1e-30 * rng.standard_normal(800), 1e6 * rng.standard_normal(800)):
        assert np.all(np.isfinite(extract_mfcc(Recording("x", x, SR)).frames))


def test_too_short_and_bad_rate():
    with pytest.raises(ParameterError, match="recording too short"):
        extract_mfcc(Recording("s", np.zeros(100), SR))
    with pytest.raises(ParameterError):
        Recording("s", np.zeros(100), 0)


def test_c0_configurable():
    x = np.random.default_rng(0).standard_normal(4000)
    with_c0 = extract_mfcc(Recording("x", x, SR), MfccConfig(include_c0=True)).frames
    without = extract_mfcc(Recording("x", x, SR)).frames
    np.testing.assert_allclose(with_c0[:, 1:], without[:, :18])


def test_feature_file_roundtrip(tmp_path):
    values = np.random.default_rng(0).standard_normal((100, 19)).astype(np.float32).astype(np.float64)
    save_features(tmp_path / "a.feat", FeatureMatrix(values))
    back = load_features(tmp_path / "a.feat")
    assert back.frames.shape == (100, 19)
    assert np.array_equal(back.frames, values)
    assert back.frame_shift_s == 0.010


def test_feature_file_validation(tmp_path):
    (tmp_path / "empty.feat").write_bytes(b"")
    with pytest.raises(FeatureFileError, match="empty feature file"):
        load_features(tmp_path / "empty.feat")
    (tmp_path / "junk.feat").write_bytes(b"not a header at all, definitely")
    with pytest.raises(FeatureFileError, match="malformed header"):
        load_features(tmp_path / "junk.feat")

    save_features(tmp_path / "a.feat", FeatureMatrix(np.ones((10, 3))))
    blob = (tmp_path / "a.feat").read_bytes()
    (tmp_path / "short.feat").write_bytes(blob[:-4])
    with pytest.raises(FeatureFileError, match="dimension mismatch"):
        load_features(tmp_path / "short.feat")

    arr = np.frombuffer(blob[32:], dtype="<f4").copy()
    arr[7] = np.nan
    (tmp_path / "nan.feat").write_bytes(blob[:32] + arr.tobytes())
    with pytest.raises(FeatureFileError, match=r"non-finite value at \(2,1\)"):
        load_features(tmp_path / "nan.feat")


def test_csv_import(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("# comment\n1,2,3\n4,5,6\n")
    f = load_features_csv(p)
    assert f.frames.tolist() == [[1, 2, 3], [4, 5, 6]]
    p.write_text("1,2\n3\n")
    with pytest.raises(FeatureFileError):
        load_features(p)
    p.write_text("1,nan\n")
    with pytest.raises(FeatureFileError, match="non-finite"):
        load_features(p)


def test_wav_roundtrip(tmp_path):
    x = 0.3 * np.sin(np.arange(1600) / 5.0)
    write_wav(tmp_path / "a.wav", Recording("a", x, SR))
    rec = read_wav(tmp_path / "a.wav")
    assert rec.sample_rate_hz == SR and rec.id == "a"
    np.testing.assert_allclose(rec.samples, x, atol=1 / 32768)


def _feat(t, d=2):
    return FeatureMatrix(np.arange(t * d, dtype=float).reshape(t, d))


def test_mask_full_is_identity():
    f = _feat(200)
    out, idx = apply_speech_mask(f, SpeechMask.full(2.0))
    assert np.array_equal(idx, np.arange(200))
    assert np.array_equal(out.frames, f.frames)


def test_mask_first_second():
    out, idx = apply_speech_mask(_feat(200), SpeechMask([(0.0, 1.0)]))
    assert out.num_frames == 100
    assert np.array_equal(idx, np.arange(100))


def test_mask_index_map_projects_back():
    f = _feat(300)
    out, idx = apply_speech_mask(f, SpeechMask([(0.2, 0.9), (1.5, 2.4)]))
    assert np.array_equal(f.frames[idx], out.frames)
    assert np.all(np.diff(idx) > 0)


def test_empty_mask_rejected():
    with pytest.raises(ParameterError, match="no speech frames"):
        apply_speech_mask(_feat(10), SpeechMask([]))


def test_mask_validation_and_reading(tmp_path):
    with pytest.raises(ParameterError):
        SpeechMask([(1.0, 2.0), (1.5, 3.0)])
    with pytest.raises(ParameterError):
        SpeechMask([(2.0, 1.0)])
    (tmp_path / "m.csv").write_text("0.0,1.0\n2.0,3.5\n")
    assert read_speech_mask(tmp_path / "m.csv").intervals == [(0.0, 1.0), (2.0, 3.5)]
    (tmp_path / "r.rttm").write_text(
        "SPEAKER r 1 0.00 1.00 <NA> <NA> A <NA> <NA>\n"
        "SPEAKER r 1 0.50 1.00 <NA> <NA> B <NA> <NA>\n"
        "SPEAKER r 1 3.00 1.00 <NA> <NA> A <NA> <NA>\n")
    assert read_speech_mask(tmp_path / "r.rttm").intervals == [(0.0, 1.5), (3.0, 4.0)]
