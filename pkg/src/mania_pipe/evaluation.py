"""Experiment protocols: per-task and task-group training, same-task or whole-recording evaluation.

Pipeline order for one condition: cut segments, extract LLDs and
functionals, fit z-norm on train rows, run RFE on train rows, apply the
mask everywhere, train the CNN with dev early stopping, evaluate on dev.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import cut_segment, load_canonical
from .corpus import CorpusManifest, Split
from .errors import EmptyTable, InvalidConfig, ManiaPipeError
from .features import ExtractionConfig, FeatureTable, NormParams, utterance_features, znorm_apply, znorm_fit
from .functionals import FeatureVector
from .metrics import ConfusionMatrix, uar
from .nnet import CnnConfig, CnnModel, TrainConfig, TrainHistory, predict, train
from .registry import REGISTRY, ReferenceRegistry
from .selection import SelectionMask, apply_mask, rfe

SAME, WHOLE = "same", "whole"
TASK_GROUPS = ((1, 2, 3), (4, 5), (6, 7))


@dataclass(frozen=True)
class PipelineParams:
    extraction: ExtractionConfig = ExtractionConfig()
    C: float = 1.0
    svm_epochs: int = 200
    svm_batch_size: int = 16
    target_k: int = 100
    step_frac: float = 0.1
    cnn: CnnConfig = CnnConfig()
    train: TrainConfig = TrainConfig()
    seed: int = 0


@dataclass(frozen=True)
class ExperimentSpec:
    train_tasks: tuple
    eval_condition: str = SAME
    params: PipelineParams = PipelineParams()
    shuffle_labels: bool = False

    def __post_init__(self):
        tasks = tuple(sorted(set(int(t) for t in self.train_tasks)))
        if not tasks:
            raise InvalidConfig("train_tasks must not be empty")
        if any(not 1 <= t <= 7 for t in tasks):
            raise InvalidConfig(f"task indices must lie in 1..7, got {tasks}")
        if self.eval_condition not in (SAME, WHOLE):
            raise InvalidConfig(f"eval_condition must be 'same' or 'whole', got {self.eval_condition!r}")
        object.__setattr__(self, "train_tasks", tasks)

    @property
    def label(self) -> str:
        return "-".join(str(t) for t in self.train_tasks)


@dataclass
class ExperimentResult:
    uar: float
    confusion: ConfusionMatrix
    history: TrainHistory
    mask: SelectionMask
    norm: NormParams
    model: CnnModel = field(repr=False)
    eval_condition: str = SAME


# ---------------------------------------------------------------------------
# feature extraction over a manifest


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MANIA_PIPE_THREADS", "1")))
    except ValueError:
        return 1


def _recording_features(manifest: CorpusManifest, rec, cfg: ExtractionConfig) -> dict:
    buf = load_canonical(manifest.audio_file(rec))
    out = {(rec.id, None): utterance_features(buf, cfg, rec.id, None)}
    for seg in manifest.segments_for(rec.id):
        out[(rec.id, seg.task_index)] = utterance_features(cut_segment(buf, seg), cfg, rec.id, seg.task_index)
    return out


def extract_corpus_features(manifest: CorpusManifest, cfg: ExtractionConfig = ExtractionConfig(),
                            splits=(Split.TRAIN, Split.DEV), threads: int | None = None) -> dict:
    """Map (recording_id, task_index or None for the whole recording) -> FeatureVector."""
    recs = [r for r in manifest.recordings if r.split in splits]
    threads = threads or _threads()
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda r: _recording_features(manifest, r, cfg), recs))
        else:
            parts = [_recording_features(manifest, r, cfg) for r in recs]
    except ManiaPipeError as exc:
        raise exc.with_stage("extract")
    feats: dict = {}
    for p in parts:
        feats.update(p)
    return feats


def build_table(manifest: CorpusManifest, feats: dict, split: Split, tasks=None) -> FeatureTable:
    """Rows for ``split``: one per (recording, task) in ``tasks``, or one per whole recording if None."""
    rows: list[FeatureVector] = []
    labels = []
    for rec in manifest.by_split(split):
        keys = [(rec.id, None)] if tasks is None else [(rec.id, t) for t in sorted(tasks)]
        for k in keys:
            if k in feats:
                rows.append(feats[k])
                labels.append(rec.label.value)
    if not rows:
        what = "whole recordings" if tasks is None else f"tasks {sorted(tasks)}"
        raise EmptyTable(f"no {split.value} rows for {what}")
    return FeatureTable.from_vectors(rows, labels, split.value)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class _Fitted:
    norm: NormParams
    mask: SelectionMask
    model: CnnModel
    history: TrainHistory


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ManiaPipeError as exc:
        raise exc.with_stage(name)


def _fit(spec: ExperimentSpec, manifest: CorpusManifest, feats: dict,
         mask: SelectionMask | None = None) -> _Fitted:
    p = spec.params
    tr = _stage("table", build_table, manifest, feats, Split.TRAIN, spec.train_tasks)
    dv = _stage("table", build_table, manifest, feats, Split.DEV, spec.train_tasks)
    if spec.shuffle_labels:
        perm = np.random.default_rng([p.seed, 7]).permutation(len(tr))
        tr = FeatureTable(tr.X, [tr.labels[i] for i in perm], tr.names, tr.recording_ids,
                          tr.task_indices, tr.split_tag)
    norm = _stage("znorm", znorm_fit, tr)
    tr_n = znorm_apply(tr, norm)
    if mask is None:
        mask = _stage("rfe", rfe, tr_n, p.target_k, p.step_frac, p.C, p.seed, p.svm_epochs, p.svm_batch_size)
    tr_m = _stage("mask", apply_mask, tr_n, mask)
    dv_m = _stage("mask", apply_mask, znorm_apply(dv, norm), mask)
    ccfg = replace(p.cnn, input_dim=len(mask))
    tcfg = replace(p.train, seed=p.seed)
    model, hist = _stage("train", train, tr_m, dv_m, ccfg, tcfg)
    return _Fitted(norm, mask, model, hist)


def _evaluate(fitted: _Fitted, manifest, feats, tasks, condition: str):
    dv = build_table(manifest, feats, Split.DEV, tasks if condition == SAME else None)
    dv = apply_mask(znorm_apply(dv, fitted.norm), fitted.mask)
    pred = predict(fitted.model, dv)
    cm = ConfusionMatrix.from_labels(dv.y, pred)
    return uar(cm), cm


def run_experiment(spec: ExperimentSpec, manifest: CorpusManifest, features: dict | None = None,
                   mask: SelectionMask | None = None) -> ExperimentResult:
    feats = features if features is not None else extract_corpus_features(manifest, spec.params.extraction)
    fitted = _fit(spec, manifest, feats, mask)
    score, cm = _stage("eval", _evaluate, fitted, manifest, feats, spec.train_tasks, spec.eval_condition)
    return ExperimentResult(score, cm, fitted.history, fitted.mask, fitted.norm, fitted.model,
                            spec.eval_condition)


def matrix_conditions() -> list[tuple]:
    return [(t,) for t in range(1, 8)] + [tuple(g) for g in TASK_GROUPS]


def _global_mask(manifest, feats, p: PipelineParams) -> SelectionMask:
    tr = build_table(manifest, feats, Split.TRAIN, tuple(range(1, 8)))
    tr_n = znorm_apply(tr, znorm_fit(tr))
    return _stage("rfe", rfe, tr_n, p.target_k, p.step_frac, p.C, p.seed, p.svm_epochs, p.svm_batch_size)


def experiment_matrix(manifest: CorpusManifest, base: PipelineParams = PipelineParams(),
                      features: dict | None = None, registry: ReferenceRegistry = REGISTRY,
                      mask_scope: str = "condition", conditions=None) -> list[dict]:
    """One row per single task 1..7 and per task group, each scored on both dev conditions.

    ``mask_scope="global"`` fits one RFE mask on all training tasks and
    reuses it for every condition; the default fits one per condition.
    """
    if mask_scope not in ("condition", "global"):
        raise InvalidConfig(f"mask_scope must be 'condition' or 'global', got {mask_scope!r}")
    feats = features if features is not None else extract_corpus_features(manifest, base.extraction)
    shared = _global_mask(manifest, feats, base) if mask_scope == "global" else None
    rows = []
    for tasks in conditions or matrix_conditions():
        spec = ExperimentSpec(tasks, SAME, base)
        fitted = _fit(spec, manifest, feats, shared)
        u_same, cm_same = _stage("eval", _evaluate, fitted, manifest, feats, spec.train_tasks, SAME)
        u_whole, cm_whole = _stage("eval", _evaluate, fitted, manifest, feats, spec.train_tasks, WHOLE)
        rows.append({
            "condition": spec.label,
            "train_tasks": list(spec.train_tasks),
            "uar_same": u_same,
            "uar_whole": u_whole,
            "cm_same": cm_same.tolist(),
            "cm_whole": cm_whole.tolist(),
            "reference_same": registry.reference_for(spec.label, SAME),
            "reference_whole": registry.reference_for(spec.label, WHOLE),
            "seed": base.seed,
            "best_epoch": fitted.history.best_epoch,
            "stopped_epoch": fitted.history.stopped_epoch,
            "n_selected": len(fitted.mask),
            "mask_scope": mask_scope,
        })
    return rows
