"""Round-trip and validation tests for the binary/text artifact formats."""

import struct
import wave

import numpy as np
import pytest

from deskspeaker import fileio
from deskspeaker.errors import EmptyInputError, FormatError
from deskspeaker.fileio import AcousticFrameSequence, Waveform


def _seq(rng, n=7, d=3, period=0.01):
    return AcousticFrameSequence(rng.standard_normal((n, d)), period)


class TestFrameSequences:
    def test_features_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        seq = _seq(rng)
        path = tmp_path / "u.afs"
        fileio.write_features(path, seq)
        back = fileio.read_features(path)
        assert back.frames.shape == (7, 3)
        assert back.frame_period == pytest.approx(0.01, abs=1e-9)
        # storage is float32, so round-tripping equals the cast, not the original
        np.testing.assert_array_equal(back.frames,
                                      seq.frames.astype(np.float32).astype(np.float64))

    def test_single_frame_ok(self, tmp_path):
        seq = AcousticFrameSequence(np.array([[1.0, 2.0]]), 0.02)
        fileio.write_features(tmp_path / "one.afs", seq)
        assert len(fileio.read_features(tmp_path / "one.afs")) == 1

    def test_empty_frames_rejected(self):
        with pytest.raises(EmptyInputError):
            AcousticFrameSequence(np.empty((0, 4)), 0.01)

    def test_non_2d_rejected(self):
        with pytest.raises(EmptyInputError):
            AcousticFrameSequence(np.zeros(5), 0.01)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.afs"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            fileio.read_features(path)

    def test_truncated_payload(self, tmp_path):
        rng = np.random.default_rng(1)
        path = tmp_path / "cut.afs"
        fileio.write_features(path, _seq(rng))
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError):
            fileio.read_features(path)


class TestPosteriorsAndWeights:
    def test_posteriors_round_trip_and_clip(self, tmp_path):
        q = np.array([-0.25, 0.0, 0.5, 1.0, 1.75])
        path = tmp_path / "u.vps"
        fileio.write_posteriors(path, q, 0.01)
        back = fileio.read_posteriors(path)
        np.testing.assert_allclose(back, [0.0, 0.0, 0.5, 1.0, 1.0], atol=0)
        assert back.ndim == 1

    def test_weights_renormalized_on_read(self, tmp_path):
        rng = np.random.default_rng(2)
        w = rng.random(11)
        w /= w.sum()
        path = tmp_path / "u.fwt"
        fileio.write_frame_weights(path, w, 0.01)
        back = fileio.read_frame_weights(path)
        # float32 storage perturbs the sum; the reader restores exact unit mass
        assert back.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(back, w, atol=1e-6)

    def test_negative_weights_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            fileio.write_frame_weights(tmp_path / "bad.fwt",
                                       np.array([0.5, -0.1, 0.6]), 0.01)


class TestWav:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        samples = np.clip(rng.standard_normal(800) * 0.25, -0.999, 0.999)
        path = tmp_path / "a.wav"
        fileio.write_wav(path, Waveform(samples, 8000))
        back = fileio.read_wav(path)
        assert back.sample_rate == 8000
        np.testing.assert_allclose(back.samples, samples, atol=1.0 / 32767)

    def test_rejects_stereo(self, tmp_path):
        path = tmp_path / "st.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(2)
            w.setsampwidth(2)
            w.setframerate(8000)
            w.writeframes(b"\x00\x00" * 40)
        with pytest.raises(FormatError):
            fileio.read_wav(path)

    def test_rejects_8bit(self, tmp_path):
        path = tmp_path / "u8.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(1)
            w.setframerate(8000)
            w.writeframes(b"\x80" * 20)
        with pytest.raises(FormatError):
            fileio.read_wav(path)


class TestModelFiles:
    def test_gmm_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        weights = rng.dirichlet(np.ones(5))
        means = rng.standard_normal((5, 3))
        variances = rng.random((5, 3)) + 0.1
        path = tmp_path / "m.gmm1"
        fileio.write_gmm(path, weights, means, variances)
        w, m, v = fileio.read_gmm(path)
        np.testing.assert_array_equal(w, weights)
        np.testing.assert_array_equal(m, means)
        np.testing.assert_array_equal(v, variances)

    def test_stats_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        n = rng.random(4) * 10
        first = rng.standard_normal((4, 3))
        path = tmp_path / "u.sta"
        fileio.write_stats(path, n, first)
        n2, f2 = fileio.read_stats(path)
        np.testing.assert_array_equal(n2, n)
        np.testing.assert_array_equal(f2, first)

    def test_tvm_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        mean = rng.standard_normal(12)
        t = rng.standard_normal((12, 2))
        sigma = rng.random(12) + 0.01
        path = tmp_path / "t.tvm1"
        fileio.write_tvm(path, mean, t, sigma)
        m2, t2, s2 = fileio.read_tvm(path)
        np.testing.assert_array_equal(m2, mean)
        np.testing.assert_array_equal(t2, t)
        np.testing.assert_array_equal(s2, sigma)

    def test_plda_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        mean = rng.standard_normal(6)
        v = rng.standard_normal((6, 2))
        lam = rng.standard_normal((6, 6))
        lam = lam @ lam.T + 6 * np.eye(6)
        path = tmp_path / "p.pld1"
        fileio.write_plda(path, mean, v, lam)
        m2, v2, l2 = fileio.read_plda(path)
        np.testing.assert_array_equal(m2, mean)
        np.testing.assert_array_equal(v2, v)
        np.testing.assert_array_equal(l2, lam)

    def test_plda_zero_rank_subspace(self, tmp_path):
        path = tmp_path / "p0.pld1"
        fileio.write_plda(path, np.zeros(3), np.zeros((3, 0)), np.eye(3))
        _, v2, _ = fileio.read_plda(path)
        assert v2.shape == (3, 0)

    def test_preprocessor_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        mean = rng.standard_normal(5)
        wh = rng.standard_normal((5, 5))
        path = tmp_path / "w.pre1"
        fileio.write_preprocessor(path, mean, wh)
        m2, w2 = fileio.read_preprocessor(path)
        np.testing.assert_array_equal(m2, mean)
        np.testing.assert_array_equal(w2, wh)


class TestNamedTensors:
    def test_round_trip_with_negative_meta(self, tmp_path):
        rng = np.random.default_rng(9)
        meta = {"n": 3, "offset": -2, "flag": 1}
        tensors = {
            "a.w": rng.standard_normal((3, 4)),
            "b": rng.standard_normal(5),
            "k": np.array(0.75),
        }
        path = tmp_path / "t.emb1"
        fileio.write_named_tensors(path, b"EMB1", meta, tensors)
        meta2, tensors2 = fileio.read_named_tensors(path, b"EMB1")
        assert meta2 == meta
        assert set(tensors2) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(
                tensors2[name], tensors[name].astype(np.float32).astype(np.float64))
        assert tensors2["k"].shape == ()

    def test_version_guard(self, tmp_path):
        path = tmp_path / "v9.emb1"
        path.write_bytes(struct.pack("<4sI", b"EMB1", 9) + struct.pack("<I", 0))
        with pytest.raises(FormatError):
            fileio.read_named_tensors(path, b"EMB1")


class TestTextSidecars:
    def test_vector_set_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        ids = ["spk000_u00", "spk000_u01", "spk003_u02"]
        vecs = rng.standard_normal((3, 6))
        fileio.write_vector_set(tmp_path / "enroll", ids, vecs)
        ids2, vecs2 = fileio.read_vector_set(tmp_path / "enroll")
        assert ids2 == ids
        np.testing.assert_array_equal(
            vecs2, vecs.astype(np.float32).astype(np.float64))

    def test_vector_set_id_mismatch(self, tmp_path):
        with pytest.raises(FormatError):
            fileio.write_vector_set(tmp_path / "bad", ["a"], np.zeros((2, 3)))

    def test_trial_list_round_trip(self, tmp_path):
        trials = [("e1", "t1", True), ("e1", "t2", False), ("e2", "t1", False)]
        path = tmp_path / "trials.txt"
        fileio.write_trial_list(path, trials)
        assert fileio.read_trial_list(path) == trials

    def test_trial_list_bad_label(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("e1 t1 maybe\n")
        with pytest.raises(FormatError):
            fileio.read_trial_list(path)

    def test_scores_round_trip(self, tmp_path):
        scored = [("e1", "t1", 1.25), ("e2", "t9", -3.5)]
        path = tmp_path / "scores.txt"
        fileio.write_scores(path, scored)
        back = fileio.read_scores(path)
        assert [(e, t) for e, t, _ in back] == [(e, t) for e, t, _ in scored]
        np.testing.assert_allclose([s for _, _, s in back],
                                   [s for _, _, s in scored], rtol=1e-12)
