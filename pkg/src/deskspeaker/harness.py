"""End-to-end desk experiment: corpus -> features -> models -> scores -> report.

The pipeline is a fixed chain of stages, each writing its artifacts under one
subdirectory of the output root and stamping them with a fingerprint of the
configuration slice it depends on. Re-running skips stages whose stamp still
matches; deleting a stage directory forces just that stage (and nothing
upstream) to be rebuilt, reproducing identical bytes.

Systems compared (embedding route vs i-vector route, by pooling weights):

    S1  embedding, plain network, uniform pooling
    S2  embedding, attentive network, its own attention weights
    S3  embedding, plain network, weights imported from S2
    S4  embedding, attentive network, forced uniform pooling
    S5  i-vector, uniform frame weights
    S6  i-vector, frame weights imported from S2

Each system runs with and without soft VAD reweighting (config `soft_vad`).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .backend import (PldaModel, Preprocessor, apply_preprocess,
                      fit_preprocessor, plda_score_matrix, train_plda)
from .config import PipelineConfig, save_config
from .embednet import (EmbedNetConfig, EmbedNetParams, combine_weights,
                       export_attention_weights, extract_embedding,
                       load_embed_net, save_embed_net, train_embed_network)
from .errors import (DegenerateWeightsError, FormatError,
                     MissingAttentionError, StageDependencyError)
from .features import (SoftVadConfig, VadConfig, append_deltas, energy_vad,
                       sliding_cmn, soft_vad_posteriors)
from .fileio import AcousticFrameSequence
from .ivector import (SufficientStats, TotalVariabilityModel,
                      accumulate_stats, extract_ivector, train_tvm)
from .metrics import TrialScoreSet, compute_eer, compute_min_cprimary
from .synth import generate_corpus
from .ubm import DiagGmm, train_gmm

STAGES = ("synth", "features", "train-embed", "train-ubm", "train-tvm",
          "extract", "backend", "score", "report")

_STAGE_DIRS = {
    "synth": "corpus",
    "features": "features",
    "train-embed": "embed",
    "train-ubm": "ubm",
    "train-tvm": "tvm",
    "extract": "vectors",
    "backend": "backend",
    "score": "scores",
    "report": "report",
}

WEIGHT_SOURCE_SYSTEM = "S2"


@dataclass(frozen=True)
class SystemSpec:
    name: str
    kind: str     # "embed" | "ivector"
    net: str | None   # "att" | "nonatt" | None (i-vector systems)
    weights: str  # "uniform" | "internal" | "external"


SYSTEMS = {
    "S1": SystemSpec("S1", "embed", "nonatt", "uniform"),
    "S2": SystemSpec("S2", "embed", "att", "internal"),
    "S3": SystemSpec("S3", "embed", "nonatt", "external"),
    "S4": SystemSpec("S4", "embed", "att", "uniform"),
    "S5": SystemSpec("S5", "ivector", None, "uniform"),
    "S6": SystemSpec("S6", "ivector", None, "external"),
}

PARTITIONS = ("train", "enroll", "test")


def variant_name(system: str, vad: bool) -> str:
    return f"{system}-{'vad' if vad else 'novad'}"


def _nets_needed(systems) -> set:
    needed = set()
    for name in systems:
        spec = SYSTEMS[name]
        if spec.net is not None:
            needed.add(spec.net)
        if spec.weights == "external":
            needed.add("att")
    return needed


def _ivector_needed(systems) -> bool:
    return any(SYSTEMS[s].kind == "ivector" for s in systems)


# ---------------------------------------------------------------------------
# frame-weight plumbing shared by the extract stage and external callers

def expand_frame_weights(weights: np.ndarray, n_frames: int,
                         left_context: int, right_context: int) -> np.ndarray:
    """Spread valid-frame weights over the full frame axis of an utterance.

    A network with temporal context emits one weight per *valid* frame
    (n_frames - left - right of them); frame t of that sequence lines up with
    full frame t + left_context. The flanks take the nearest valid weight and
    the result is renormalized to sum to one.
    """
    w = np.asarray(weights, dtype=np.float64)
    n_valid = n_frames - left_context - right_context
    if n_valid <= 0:
        raise DegenerateWeightsError(
            f"no valid frames: {n_frames} frames with context "
            f"({left_context}, {right_context})")
    if w.shape != (n_valid,):
        raise DegenerateWeightsError(
            f"weight length {w.shape} does not match {n_valid} valid frames")
    full = np.empty(n_frames, dtype=np.float64)
    full[left_context:n_frames - right_context] = w
    if left_context:
        full[:left_context] = w[0]
    if right_context:
        full[n_frames - right_context:] = w[-1]
    total = full.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError("expanded weights have no mass")
    return full / total


def cross_apply_weights(source_params: EmbedNetParams, utterances,
                        out_dir, frame_period: float = 0.01) -> dict:
    """Export one weight file per utterance from an attentive network.

    utterances: iterable of (utt_id, frames). Weights cover the valid frames
    only; consumers align them with `expand_frame_weights`. Raises
    MissingAttentionError if the source network has no attention layer.
    """
    if source_params.attention is None:
        raise MissingAttentionError(
            "weight export needs an attentive source network")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for utt_id, frames in utterances:
        frames = getattr(frames, "frames", frames)
        alpha = export_attention_weights(frames, source_params)
        path = out_dir / f"{utt_id}.fwt"
        fileio.write_frame_weights(path, alpha, frame_period)
        paths[utt_id] = str(path)
    return paths


# ---------------------------------------------------------------------------
# fingerprints and stage bookkeeping

def _fingerprint(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _stage_fingerprints(cfg: PipelineConfig) -> dict:
    nets = sorted(_nets_needed(cfg.systems))
    local = {
        "synth": {**dataclasses.asdict(cfg.synth), "seed": cfg.seed},
        "features": dataclasses.asdict(cfg.features),
        "train-embed": {**dataclasses.asdict(cfg.embednet),
                        "nets": nets, "seed": cfg.seed},
        "train-ubm": {**dataclasses.asdict(cfg.ubm), "seed": cfg.seed},
        "train-tvm": {**dataclasses.asdict(cfg.tvm), "seed": cfg.seed},
        "extract": {"systems": sorted(cfg.systems), "soft_vad": cfg.soft_vad},
        "backend": {**dataclasses.asdict(cfg.backend), "seed": cfg.seed},
        "score": {},
        "report": {"p_targets": list(cfg.eval.p_targets)},
    }
    deps = {
        "synth": (),
        "features": ("synth",),
        "train-embed": ("features",),
        "train-ubm": ("features",),
        "train-tvm": ("features", "train-ubm"),
        "extract": ("features", "train-embed", "train-ubm", "train-tvm"),
        "backend": ("extract",),
        "score": ("extract", "backend"),
        "report": ("score",),
    }
    fps = {}
    for stage in STAGES:
        fps[stage] = _fingerprint({"config": local[stage],
                                   "upstream": [fps[d] for d in deps[stage]]})
    return fps


def _stage_dir(out, stage: str) -> Path:
    return Path(out) / _STAGE_DIRS[stage]


def _stamp_path(out, stage: str) -> Path:
    return _stage_dir(out, stage) / ".stamp.json"


def _is_fresh(out, stage: str, fps: dict) -> bool:
    stamp = _stamp_path(out, stage)
    if not stamp.exists():
        return False
    try:
        recorded = json.loads(stamp.read_text())
    except (ValueError, OSError):
        return False
    return recorded.get("fingerprint") == fps[stage]


def _write_stamp(out, stage: str, fps: dict):
    _stamp_path(out, stage).write_text(
        json.dumps({"stage": stage, "fingerprint": fps[stage]}) + "\n")


def _require_stage(out, stage: str, needed: str):
    if not _stamp_path(out, needed).exists():
        raise StageDependencyError(
            f"stage '{stage}' needs outputs of stage '{needed}' under "
            f"{_stage_dir(out, needed)}; run that stage first")


# ---------------------------------------------------------------------------
# manifest helpers

def _write_manifest(path, corpus):
    with open(path, "w") as f:
        for utt, spk, part in zip(corpus.utt_ids, corpus.speakers,
                                  corpus.partition):
            f.write(f"{utt}\t{spk}\t{part}\n")


def _read_manifest(path):
    rows = []
    with open(path) as f:
        for line in f:
            utt, spk, part = line.split()
            rows.append((utt, spk, part))
    if not rows:
        raise FormatError(f"{path}: empty manifest")
    return rows


# ---------------------------------------------------------------------------
# the stages

def _stage_synth(cfg: PipelineConfig, out: Path, echo):
    synth_cfg = dataclasses.replace(cfg.synth, seed=cfg.seed)
    corpus = generate_corpus(synth_cfg)
    d = _stage_dir(out, "synth")
    (d / "feats").mkdir(parents=True, exist_ok=True)
    (d / "voice").mkdir(exist_ok=True)
    for i, utt in enumerate(corpus.utt_ids):
        fileio.write_features(d / "feats" / f"{utt}.afs", corpus.features[i])
        fileio.write_posteriors(d / "voice" / f"{utt}.vps",
                                corpus.voice[i].astype(np.float64),
                                corpus.features[i].frame_period)
    _write_manifest(d / "manifest.tsv", corpus)
    if echo:
        parts = {p: len(corpus.indices(p)) for p in PARTITIONS}
        echo(f"  {len(corpus)} utterances "
             f"(train {parts['train']}, enroll {parts['enroll']}, "
             f"test {parts['test']})")


def _stage_features(cfg: PipelineConfig, out: Path, echo):
    _require_stage(out, "features", "synth")
    fcfg = cfg.features
    src = _stage_dir(out, "synth")
    d = _stage_dir(out, "features")
    for sub in ("feats", "q", "voice"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    soft_cfg = SoftVadConfig(slope=fcfg.soft_vad_slope,
                             offset=fcfg.soft_vad_offset,
                             smooth_radius=fcfg.soft_vad_smooth_radius)
    rows = _read_manifest(src / "manifest.tsv")
    for utt, _, _ in rows:
        seq = fileio.read_features(src / "feats" / f"{utt}.afs")
        voice = fileio.read_posteriors(src / "voice" / f"{utt}.vps")
        if fcfg.posterior_dir is not None:
            q = fileio.read_posteriors(Path(fcfg.posterior_dir) / f"{utt}.vps")
            if q.shape[0] != len(seq):
                raise FormatError(
                    f"external posteriors for {utt}: {q.shape[0]} frames, "
                    f"expected {len(seq)}")
        else:
            q = soft_vad_posteriors(seq, soft_cfg)
        processed = seq
        if fcfg.sliding_cmn:
            processed = sliding_cmn(processed, fcfg.cmn_window_s)
        if fcfg.append_deltas:
            processed = append_deltas(processed)
        if fcfg.apply_hard_vad:
            mask = energy_vad(seq, VadConfig(offset=fcfg.vad_offset))
            processed = AcousticFrameSequence(processed.frames[mask],
                                              processed.frame_period)
            q = q[mask]
            voice = voice[mask]
        fileio.write_features(d / "feats" / f"{utt}.afs", processed)
        fileio.write_posteriors(d / "q" / f"{utt}.vps", q, seq.frame_period)
        fileio.write_posteriors(d / "voice" / f"{utt}.vps", voice,
                                seq.frame_period)
    (d / "manifest.tsv").write_text((src / "manifest.tsv").read_text())
    if echo:
        echo(f"  processed {len(rows)} utterances "
             f"(cmn={fcfg.sliding_cmn}, deltas={fcfg.append_deltas}, "
             f"hard_vad={fcfg.apply_hard_vad})")


def _read_processed(out, utt: str) -> AcousticFrameSequence:
    return fileio.read_features(
        _stage_dir(out, "features") / "feats" / f"{utt}.afs")


def _train_rows(out, stage: str):
    _require_stage(out, stage, "features")
    rows = _read_manifest(_stage_dir(out, "features") / "manifest.tsv")
    return rows, [r for r in rows if r[2] == "train"]


def _stage_train_embed(cfg: PipelineConfig, out: Path, echo):
    _, train = _train_rows(out, "train-embed")
    utts = [_read_processed(out, utt).frames for utt, _, _ in train]
    speakers = sorted({spk for _, spk, _ in train})
    label_of = {spk: i for i, spk in enumerate(speakers)}
    labels = [label_of[spk] for _, spk, _ in train]
    d = _stage_dir(out, "train-embed")
    d.mkdir(parents=True, exist_ok=True)
    ecfg = cfg.embednet
    for i, kind in enumerate(sorted(_nets_needed(cfg.systems))):
        net_cfg = EmbedNetConfig(
            input_dim=utts[0].shape[1], n_speakers=len(speakers),
            hidden_dim=ecfg.hidden_dim, pool_dim=ecfg.pool_dim,
            embed_dim=ecfg.embed_dim, attention_dim=ecfg.attention_dim,
            attentive=(kind == "att"), epochs=ecfg.epochs, lr=ecfg.lr,
            momentum=ecfg.momentum, lr_decay=ecfg.lr_decay,
            decay_every=ecfg.decay_every, chunk_len=ecfg.chunk_len,
            batch_size=ecfg.batch_size, bn_momentum=ecfg.bn_momentum,
            seed=cfg.seed + 11 + i)
        t0 = time.monotonic()
        params = train_embed_network(utts, labels, net_cfg)
        save_embed_net(d / f"{kind}.emb1", params)
        if echo:
            loss = params.train_loss[-1] if params.train_loss is not None else float("nan")
            echo(f"  {kind}: {ecfg.epochs} epochs, final loss {loss:.4f} "
                 f"({time.monotonic() - t0:.1f}s)")


def _stage_train_ubm(cfg: PipelineConfig, out: Path, echo):
    _, train = _train_rows(out, "train-ubm")
    frames = np.vstack([_read_processed(out, utt).frames
                        for utt, _, _ in train])
    gmm = train_gmm(frames, cfg.ubm.n_components, cfg.ubm.n_iters,
                    seed=cfg.seed + 13)
    d = _stage_dir(out, "train-ubm")
    d.mkdir(parents=True, exist_ok=True)
    gmm.save(d / "ubm.gmm1")
    if echo:
        echo(f"  {cfg.ubm.n_components} components on {frames.shape[0]} "
             f"frames, final loglik/frame "
             f"{gmm.em_loglik[-1] / frames.shape[0]:.4f}")


def _stage_train_tvm(cfg: PipelineConfig, out: Path, echo):
    _, train = _train_rows(out, "train-tvm")
    _require_stage(out, "train-tvm", "train-ubm")
    gmm = DiagGmm.load(_stage_dir(out, "train-ubm") / "ubm.gmm1")
    d = _stage_dir(out, "train-tvm")
    (d / "stats").mkdir(parents=True, exist_ok=True)
    stats_list = []
    for utt, _, _ in train:
        stats = accumulate_stats(_read_processed(out, utt).frames, gmm)
        stats.save(d / "stats" / f"{utt}.sta")
        stats_list.append(stats)
    tvm = train_tvm(stats_list, gmm, cfg.tvm.rank, cfg.tvm.n_iters,
                    seed=cfg.seed + 14)
    tvm.save(d / "tvm.tvm1")
    if echo:
        echo(f"  rank {cfg.tvm.rank}, objective "
             f"{tvm.em_objective[0]:.3f} -> {tvm.em_objective[-1]:.3f}")


def _stage_extract(cfg: PipelineConfig, out: Path, echo):
    rows, _ = _train_rows(out, "extract")
    nets = {}
    for kind in _nets_needed(cfg.systems):
        _require_stage(out, "extract", "train-embed")
        nets[kind] = load_embed_net(
            _stage_dir(out, "train-embed") / f"{kind}.emb1")
    gmm = tvm = None
    if _ivector_needed(cfg.systems):
        _require_stage(out, "extract", "train-ubm")
        _require_stage(out, "extract", "train-tvm")
        gmm = DiagGmm.load(_stage_dir(out, "train-ubm") / "ubm.gmm1")
        tvm = TotalVariabilityModel.load(
            _stage_dir(out, "train-tvm") / "tvm.tvm1")

    d = _stage_dir(out, "extract")
    d.mkdir(parents=True, exist_ok=True)
    weights_dir = out / "weights"
    export_weights = "att" in nets
    if export_weights:
        weights_dir.mkdir(exist_ok=True)

    variants = [(s, vad) for s in cfg.systems for vad in cfg.vad_variants]
    collected = {variant_name(s, v): {p: ([], []) for p in PARTITIONS}
                 for s, v in variants}
    qdir = _stage_dir(out, "features") / "q"
    stats_cache_dir = _stage_dir(out, "train-tvm") / "stats"

    for utt, _, part in rows:
        seq = _read_processed(out, utt)
        frames = seq.frames
        n = frames.shape[0]
        q = fileio.read_posteriors(qdir / f"{utt}.vps")

        alpha = None
        if export_weights:
            alpha = export_attention_weights(frames, nets["att"])
            fileio.write_frame_weights(weights_dir / f"{utt}.fwt", alpha,
                                       seq.frame_period)

        for system, vad in variants:
            spec = SYSTEMS[system]
            if spec.kind == "embed":
                net = nets[spec.net]
                left, right = net.left_context, net.right_context
                n_valid = n - left - right
                q_valid = q[left:n - right]
                if spec.weights == "uniform":
                    base = np.full(n_valid, 1.0 / n_valid)
                elif spec.weights == "internal":
                    base = alpha
                else:  # external, read back through the exported file
                    base = fileio.read_frame_weights(weights_dir / f"{utt}.fwt")
                w = combine_weights(base, q_valid) if vad else (
                    "uniform" if spec.weights == "uniform" else base)
                vec = extract_embedding(frames, net, w)
            else:
                if spec.weights == "external":
                    src_net = nets["att"]
                    a = fileio.read_frame_weights(weights_dir / f"{utt}.fwt")
                    w_full = expand_frame_weights(
                        a, n, src_net.left_context, src_net.right_context)
                    w = combine_weights(w_full, q) if vad else w_full
                else:
                    w = combine_weights(np.full(n, 1.0 / n), q) if vad else None
                cache = stats_cache_dir / f"{utt}.sta"
                if w is None and part == "train" and cache.exists():
                    stats = SufficientStats.load(cache)
                else:
                    stats = accumulate_stats(frames, gmm, w)
                vec = extract_ivector(stats, tvm)
            ids, vecs = collected[variant_name(system, vad)][part]
            ids.append(utt)
            vecs.append(vec)

    for variant, by_part in collected.items():
        vdir = d / variant
        vdir.mkdir(exist_ok=True)
        for part, (ids, vecs) in by_part.items():
            fileio.write_vector_set(vdir / part, ids, np.array(vecs))
    if echo:
        echo(f"  {len(collected)} system variants x {len(rows)} utterances"
             + (", weights exported" if export_weights else ""))


def _variant_names(cfg: PipelineConfig):
    return [variant_name(s, v) for s in cfg.systems for v in cfg.vad_variants]


def _stage_backend(cfg: PipelineConfig, out: Path, echo):
    _require_stage(out, "backend", "extract")
    rows = _read_manifest(_stage_dir(out, "features") / "manifest.tsv")
    spk_of = {utt: spk for utt, spk, _ in rows}
    d = _stage_dir(out, "backend")
    d.mkdir(parents=True, exist_ok=True)
    for variant in _variant_names(cfg):
        system = variant.split("-")[0]
        ids, vecs = fileio.read_vector_set(
            _stage_dir(out, "extract") / variant / "train")
        prep = fit_preprocessor(vecs)
        proc = apply_preprocess(vecs, prep)
        dim = (cfg.backend.plda_dim_embed if SYSTEMS[system].kind == "embed"
               else cfg.backend.plda_dim_ivector)
        plda = train_plda(proc, [spk_of[u] for u in ids],
                          min(dim, vecs.shape[1]), cfg.backend.n_iters,
                          seed=cfg.seed + 15)
        prep.save(d / f"{variant}.pre1")
        plda.save(d / f"{variant}.pld1")
    if echo:
        echo(f"  fitted preprocessor + backend for "
             f"{len(_variant_names(cfg))} variants")


def _build_trials(rows):
    enroll = [(u, s) for u, s, p in rows if p == "enroll"]
    test = [(u, s) for u, s, p in rows if p == "test"]
    return [(e, t, se == st) for e, se in enroll for t, st in test]


def _stage_score(cfg: PipelineConfig, out: Path, echo):
    _require_stage(out, "score", "extract")
    _require_stage(out, "score", "backend")
    rows = _read_manifest(_stage_dir(out, "features") / "manifest.tsv")
    trials = _build_trials(rows)
    d = _stage_dir(out, "score")
    d.mkdir(parents=True, exist_ok=True)
    fileio.write_trial_list(d / "trials.txt", trials)
    for variant in _variant_names(cfg):
        vdir = _stage_dir(out, "extract") / variant
        e_ids, e_vecs = fileio.read_vector_set(vdir / "enroll")
        t_ids, t_vecs = fileio.read_vector_set(vdir / "test")
        prep = Preprocessor.load(_stage_dir(out, "backend") / f"{variant}.pre1")
        plda = PldaModel.load(_stage_dir(out, "backend") / f"{variant}.pld1")
        scores = plda_score_matrix(apply_preprocess(e_vecs, prep),
                                   apply_preprocess(t_vecs, prep), plda)
        e_pos = {u: i for i, u in enumerate(e_ids)}
        t_pos = {u: i for i, u in enumerate(t_ids)}
        fileio.write_scores(
            d / f"{variant}.txt",
            [(e, t, scores[e_pos[e], t_pos[t]]) for e, t, _ in trials])
    if echo:
        echo(f"  scored {len(trials)} trials per variant")


@dataclass
class SystemResult:
    system: str
    soft_vad: bool
    eer: float
    min_cprimary: float


@dataclass
class Report:
    results: list[SystemResult]

    def get(self, system: str, soft_vad: bool) -> SystemResult:
        for r in self.results:
            if r.system == system and r.soft_vad == soft_vad:
                return r
        raise KeyError(f"no result for {variant_name(system, soft_vad)}")

    def to_text(self) -> str:
        lines = [f"{'system':<8}{'soft_vad':<10}{'eer_pct':>9}"
                 f"{'min_cprimary':>14}"]
        for r in self.results:
            lines.append(f"{r.system:<8}{('on' if r.soft_vad else 'off'):<10}"
                         f"{100.0 * r.eer:>9.3f}{r.min_cprimary:>14.4f}")
        return "\n".join(lines) + "\n"


def _stage_report(cfg: PipelineConfig, out: Path, echo) -> Report:
    _require_stage(out, "report", "score")
    d = _stage_dir(out, "report")
    d.mkdir(parents=True, exist_ok=True)
    sdir = _stage_dir(out, "score")
    trials = fileio.read_trial_list(sdir / "trials.txt")
    truth = {(e, t): is_target for e, t, is_target in trials}
    results = []
    for system in cfg.systems:
        for vad in cfg.vad_variants:
            variant = variant_name(system, vad)
            scored = fileio.read_scores(sdir / f"{variant}.txt")
            scores = np.array([s for _, _, s in scored])
            targets = np.array([truth[(e, t)] for e, t, _ in scored])
            tset = TrialScoreSet(scores, targets)
            results.append(SystemResult(
                system, vad, compute_eer(tset),
                compute_min_cprimary(tset, cfg.eval.p_targets)))
    report = Report(results)
    (d / "report.txt").write_text(report.to_text())
    with open(d / "report.kv", "w") as f:
        for r in results:
            key = f"{r.system}.{'vad' if r.soft_vad else 'novad'}"
            f.write(f"{key}.eer={r.eer:.10f}\n")
            f.write(f"{key}.min_cprimary={r.min_cprimary:.10f}\n")
    if echo:
        for line in report.to_text().rstrip().split("\n"):
            echo(f"  {line}")
    return report


def load_report(out) -> Report:
    """Rebuild a Report from the key-value file a report stage wrote."""
    path = _stage_dir(out, "report") / "report.kv"
    table = {}
    with open(path) as f:
        for line in f:
            key, val = line.strip().split("=")
            system, vad, metric = key.split(".")
            table.setdefault((system, vad == "vad"), {})[metric] = float(val)
    results = [SystemResult(system, vad, m["eer"], m["min_cprimary"])
               for (system, vad), m in table.items()]
    return Report(results)


_STAGE_FUNCS = {
    "synth": _stage_synth,
    "features": _stage_features,
    "train-embed": _stage_train_embed,
    "train-ubm": _stage_train_ubm,
    "train-tvm": _stage_train_tvm,
    "extract": _stage_extract,
    "backend": _stage_backend,
    "score": _stage_score,
    "report": _stage_report,
}


def run_pipeline(cfg: PipelineConfig, stages=None, echo=None) -> Report | None:
    """Run the requested stages (default: all) and return the final Report.

    Stages whose fingerprint stamp already matches the configuration are
    skipped. Returns None when the report stage was not among the selected
    stages.
    """
    if stages is None:
        selected = list(STAGES)
    else:
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stages {unknown}; choose from {STAGES}")
        selected = [s for s in STAGES if s in set(stages)]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    fps = _stage_fingerprints(cfg)
    report = None
    for stage in selected:
        if _is_fresh(out, stage, fps) and stage != "report":
            if echo:
                echo(f"[{stage}] up to date")
            continue
        if echo:
            echo(f"[{stage}]")
        t0 = time.monotonic()
        result = _STAGE_FUNCS[stage](cfg, out, echo)
        _write_stamp(out, stage, fps)
        if echo:
            echo(f"[{stage}] done in {time.monotonic() - t0:.1f}s")
        if stage == "report":
            report = result
    return report
