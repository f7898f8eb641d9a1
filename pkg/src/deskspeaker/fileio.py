"""On-disk formats.

All binary formats are little-endian. Frame-indexed matrices share one header
layout: 4-byte magic, u32 row count L, u32 column count D, f32 frame period in
seconds, followed by the payload row-major.

    AFS1  acoustic frames, L x D float32
    VPS1  voice posteriors, L x 1 float32
    FWT1  frame weights,    L x 1 float32 (renormalized to sum 1 on read)

Model files (GMM1, STA1, TVM1, PLD1, PRE1) store float64 tensors after a small
dimension header; EMB1 stores a self-describing named-tensor table in float32.
Vector sets travel as an AFS1 matrix (one vector per row) plus a text sidecar
with one id per line.
"""

from __future__ import annotations

import struct
import wave as _wave
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, FormatError

_FRAME_HEADER = struct.Struct("<4sIIf")


@dataclass
class Waveform:
    samples: np.ndarray  # float64, nominally in [-1, 1)
    sample_rate: int


@dataclass
class AcousticFrameSequence:
    """A sequence of acoustic feature frames, rows = frames."""

    frames: np.ndarray  # (L, D) float64
    frame_period: float = 0.01

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise EmptyInputError("frame sequence needs at least one frame")
        if self.frame_period <= 0:
            raise FormatError("frame period must be positive")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def _write_frame_matrix(path, magic: bytes, data: np.ndarray, frame_period: float):
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim == 1:
        data = data[:, None]
    with open(path, "wb") as f:
        f.write(_FRAME_HEADER.pack(magic, data.shape[0], data.shape[1], frame_period))
        f.write(data.tobytes())


def _read_frame_matrix(path, magic: bytes):
    with open(path, "rb") as f:
        head = f.read(_FRAME_HEADER.size)
        if len(head) < _FRAME_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        got, n_rows, n_cols, period = _FRAME_HEADER.unpack(head)
        if got != magic:
            raise FormatError(f"{path}: expected magic {magic!r}, found {got!r}")
        payload = np.fromfile(f, dtype="<f4", count=n_rows * n_cols)
    if payload.size != n_rows * n_cols:
        raise FormatError(f"{path}: truncated payload")
    return payload.reshape(n_rows, n_cols).astype(np.float64), float(period)


def write_features(path, seq: AcousticFrameSequence):
    _write_frame_matrix(path, b"AFS1", seq.frames, seq.frame_period)


def read_features(path) -> AcousticFrameSequence:
    data, period = _read_frame_matrix(path, b"AFS1")
    return AcousticFrameSequence(data, period)


def write_posteriors(path, q: np.ndarray, frame_period: float = 0.01):
    q = np.clip(np.asarray(q, dtype=np.float64), 0.0, 1.0)
    _write_frame_matrix(path, b"VPS1", q, frame_period)


def read_posteriors(path) -> np.ndarray:
    data, _ = _read_frame_matrix(path, b"VPS1")
    if data.shape[1] != 1:
        raise FormatError(f"{path}: posterior files are single-column")
    q = data[:, 0]
    if np.any(q < -1e-6) or np.any(q > 1 + 1e-6):
        raise FormatError(f"{path}: posteriors outside [0, 1]")
    return np.clip(q, 0.0, 1.0)


def write_frame_weights(path, w: np.ndarray, frame_period: float = 0.01):
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
        raise FormatError(f"{path}: frame weights must be non-negative "
                          "with positive total mass")
    _write_frame_matrix(path, b"FWT1", w, frame_period)


def read_frame_weights(path) -> np.ndarray:
    data, _ = _read_frame_matrix(path, b"FWT1")
    if data.shape[1] != 1:
        raise FormatError(f"{path}: weight files are single-column")
    w = data[:, 0]
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise FormatError(f"{path}: weights must be positive-mass")
    return w / total


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file; anything else is rejected."""
    with _wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise FormatError(f"{path}: only mono WAV is supported")
        if w.getsampwidth() != 2:
            raise FormatError(f"{path}: only 16-bit PCM WAV is supported")
        if w.getcomptype() != "NONE":
            raise FormatError(f"{path}: compressed WAV is not supported")
        n = w.getnframes()
        raw = w.readframes(n)
        rate = w.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, wav: Waveform):
    pcm = np.clip(np.asarray(wav.samples) * 32768.0, -32768, 32767).astype("<i2")
    with _wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(wav.sample_rate)
        w.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# float64 model containers

def _write_f64(f, arr):
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_f64(f, count, path):
    arr = np.fromfile(f, dtype="<f8", count=count)
    if arr.size != count:
        raise FormatError(f"{path}: truncated payload")
    return arr


def _check_magic(f, magic, path):
    got = f.read(4)
    if got != magic:
        raise FormatError(f"{path}: expected magic {magic!r}, found {got!r}")


def write_gmm(path, weights, means, variances):
    c, d = np.asarray(means).shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", b"GMM1", c, d))
        _write_f64(f, weights)
        _write_f64(f, means)
        _write_f64(f, variances)


def read_gmm(path):
    with open(path, "rb") as f:
        _check_magic(f, b"GMM1", path)
        c, d = struct.unpack("<II", f.read(8))
        weights = _read_f64(f, c, path)
        means = _read_f64(f, c * d, path).reshape(c, d)
        variances = _read_f64(f, c * d, path).reshape(c, d)
    return weights, means, variances


def write_stats(path, n, first_order):
    c, d = np.asarray(first_order).shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", b"STA1", c, d))
        _write_f64(f, n)
        _write_f64(f, first_order)


def read_stats(path):
    with open(path, "rb") as f:
        _check_magic(f, b"STA1", path)
        c, d = struct.unpack("<II", f.read(8))
        n = _read_f64(f, c, path)
        first_order = _read_f64(f, c * d, path).reshape(c, d)
    return n, first_order


def write_tvm(path, mean, t_matrix, sigma):
    cd, r = np.asarray(t_matrix).shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", b"TVM1", cd, r))
        _write_f64(f, mean)
        _write_f64(f, t_matrix)
        _write_f64(f, sigma)


def read_tvm(path):
    with open(path, "rb") as f:
        _check_magic(f, b"TVM1", path)
        cd, r = struct.unpack("<II", f.read(8))
        mean = _read_f64(f, cd, path)
        t_matrix = _read_f64(f, cd * r, path).reshape(cd, r)
        sigma = _read_f64(f, cd, path)
    return mean, t_matrix, sigma


def write_plda(path, mean, speaker_subspace, within_cov):
    e = mean.shape[0]
    s = speaker_subspace.shape[1]
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", b"PLD1", e, s))
        _write_f64(f, mean)
        _write_f64(f, speaker_subspace)
        _write_f64(f, within_cov)


def read_plda(path):
    with open(path, "rb") as f:
        _check_magic(f, b"PLD1", path)
        e, s = struct.unpack("<II", f.read(8))
        mean = _read_f64(f, e, path)
        subspace = _read_f64(f, e * s, path).reshape(e, s)
        within = _read_f64(f, e * e, path).reshape(e, e)
    return mean, subspace, within


def write_preprocessor(path, mean, whitener):
    e = mean.shape[0]
    with open(path, "wb") as f:
        f.write(struct.pack("<4sI", b"PRE1", e))
        _write_f64(f, mean)
        _write_f64(f, whitener)


def read_preprocessor(path):
    with open(path, "rb") as f:
        _check_magic(f, b"PRE1", path)
        (e,) = struct.unpack("<I", f.read(4))
        mean = _read_f64(f, e, path)
        whitener = _read_f64(f, e * e, path).reshape(e, e)
    return mean, whitener


# ---------------------------------------------------------------------------
# EMB1: named float32 tensor table plus integer metadata

def write_named_tensors(path, magic: bytes, meta: dict[str, int], tensors: dict[str, np.ndarray]):
    with open(path, "wb") as f:
        f.write(struct.pack("<4sI", magic, 1))
        f.write(struct.pack("<I", len(meta)))
        for key in sorted(meta):
            kb = key.encode()
            f.write(struct.pack("<H", len(kb)))
            f.write(kb)
            f.write(struct.pack("<q", int(meta[key])))
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode()
            # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
            arr = np.asarray(arr, dtype="<f4")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            f.write(arr.tobytes(order="C"))


def read_named_tensors(path, magic: bytes):
    with open(path, "rb") as f:
        _check_magic(f, magic, path)
        (version,) = struct.unpack("<I", f.read(4))
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        (n_meta,) = struct.unpack("<I", f.read(4))
        meta = {}
        for _ in range(n_meta):
            (klen,) = struct.unpack("<H", f.read(2))
            key = f.read(klen).decode()
            (val,) = struct.unpack("<q", f.read(8))
            meta[key] = val
        (n_tensors,) = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(n_tensors):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode()
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            arr = np.fromfile(f, dtype="<f4", count=count)
            if arr.size != count:
                raise FormatError(f"{path}: truncated tensor {name}")
            tensors[name] = arr.reshape(shape).astype(np.float64)
    return meta, tensors


# ---------------------------------------------------------------------------
# text sidecars: vector sets, trial lists, score files

def write_vector_set(path_prefix, ids, vectors: np.ndarray):
    """Vectors as an AFS1 matrix (one row per vector) + '<prefix>.ids' sidecar."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if len(ids) != vectors.shape[0]:
        raise FormatError("id/vector count mismatch")
    _write_frame_matrix(f"{path_prefix}.afs", b"AFS1", vectors, 0.0)
    with open(f"{path_prefix}.ids", "w") as f:
        for i in ids:
            f.write(f"{i}\n")


def read_vector_set(path_prefix):
    data, _ = _read_frame_matrix(f"{path_prefix}.afs", b"AFS1")
    with open(f"{path_prefix}.ids") as f:
        ids = [line.strip() for line in f if line.strip()]
    if len(ids) != data.shape[0]:
        raise FormatError(f"{path_prefix}: id sidecar disagrees with vector rows")
    return ids, data


def write_trial_list(path, trials):
    """trials: iterable of (enroll_id, test_id, is_target)."""
    with open(path, "w") as f:
        for enroll_id, test_id, is_target in trials:
            label = "target" if is_target else "nontarget"
            f.write(f"{enroll_id} {test_id} {label}\n")


def read_trial_list(path):
    trials = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[2] not in ("target", "nontarget"):
                raise FormatError(f"{path}: bad trial line {line!r}")
            trials.append((parts[0], parts[1], parts[2] == "target"))
    return trials


def write_scores(path, scored):
    """scored: iterable of (enroll_id, test_id, score)."""
    with open(path, "w") as f:
        for enroll_id, test_id, score in scored:
            f.write(f"{enroll_id} {test_id} {score:.12g}\n")


def read_scores(path):
    scored = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}: bad score line {line!r}")
            scored.append((parts[0], parts[1], float(parts[2])))
    return scored
