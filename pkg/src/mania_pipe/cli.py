"""Command-line entry point: ``mania-pipe <stage> [flags]``.

Stages write into stage-named folders under ``--out``::

    synth/       manifest.json, wavs/
    segment/     manifest.json (authoritative spans), tone_proposals.jsonl, summary.json
    extract/     features_segments.csv, features_whole.csv
    select/tasks-<T>/   norm.json, mask.json, train.csv, dev.csv, dev_whole.csv
    train/tasks-<T>/    model.json, history.csv
    eval/tasks-<T>-<same|whole>/   eval.json
    experiment/  rows.json
    report/      report.txt, uar_by_task.svg, cm_*.svg, rows.json

Existing stage folders are never overwritten. Exit codes: 0 ok, 2 usage,
3 data/schema error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .audio import detect_marker_tones, load_canonical, propose_segments, write_proposals_jsonl
from .corpus import CorpusManifest, Split, SynthConfig, generate_synthetic_corpus, load_manifest, save_manifest
from .errors import DataError, InvalidConfig, ManiaPipeError, MissingFile, NumericFailure, SchemaViolation
from .evaluation import SAME, PipelineParams, build_table, experiment_matrix, extract_corpus_features
from .features import ExtractionConfig, FeatureTable, load_table, save_table, znorm_apply, znorm_fit
from .functionals import FunctionalSet
from .lld import FrameConfig, LldSet
from .metrics import ConfusionMatrix, uar
from .nnet import CnnConfig, TrainConfig, load_checkpoint, predict, save_checkpoint, train
from .registry import REGISTRY
from .report import render_report
from .selection import apply_mask, rfe

log = logging.getLogger("mania_pipe")


@dataclass
class RunConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    frame: FrameConfig = FrameConfig()
    lld: LldSet = LldSet()
    functionals: FunctionalSet = FunctionalSet()
    delta_window: int | None = 2
    C: float = 1.0
    svm_epochs: int = 200
    svm_batch_size: int = 16
    target_k: int = 100
    step_frac: float = 0.1
    cnn: CnnConfig = CnnConfig()
    train: TrainConfig = TrainConfig()
    tasks: tuple = (6, 7)
    eval_condition: str = SAME
    mask_scope: str = "condition"
    manifest: str | None = None

    def pipeline(self) -> PipelineParams:
        return PipelineParams(
            extraction=ExtractionConfig(self.frame, self.lld, self.functionals, self.delta_window),
            C=self.C, svm_epochs=self.svm_epochs, svm_batch_size=self.svm_batch_size,
            target_k=self.target_k, step_frac=self.step_frac, cnn=self.cnn, train=self.train,
            seed=self.seed)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, SynthConfig):
                v = v.to_dict()
            elif hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        d["synth"]["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        builders = {"synth": SynthConfig.from_dict, "frame": lambda x: FrameConfig(**x),
                    "lld": lambda x: LldSet(**x), "functionals": lambda x: FunctionalSet(**x),
                    "cnn": lambda x: CnnConfig(**x), "train": lambda x: TrainConfig(**x)}
        for key, build in builders.items():
            if key in kw and isinstance(kw[key], dict):
                try:
                    kw[key] = build(kw[key])
                except TypeError as exc:
                    raise InvalidConfig(f"config section '{key}': {exc}") from None
        if "tasks" in kw:
            kw["tasks"] = tuple(kw["tasks"])
        return cls(**kw)


def _parse_tasks(text: str) -> tuple:
    try:
        tasks = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--tasks expects comma-separated integers, got {text!r}")
    if not tasks or any(not 1 <= t <= 7 for t in tasks):
        raise argparse.ArgumentTypeError("--tasks needs task indices in 1..7")
    return tuple(sorted(set(tasks)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--tasks", type=_parse_tasks, help="training tasks, e.g. 6,7")
    common.add_argument("--eval-condition", choices=("same", "whole"))
    common.add_argument("--target-k", type=int)
    common.add_argument("--mask-scope", choices=("condition", "global"))
    common.add_argument("--manifest", type=Path, help="use this manifest instead of <out>/synth")
    common.add_argument("--out", type=Path, default=Path("run"), help="run directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mania-pipe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("synth", "generate the seeded synthetic corpus"),
        ("segment", "propose task spans from marker tones; copy authoritative spans"),
        ("extract", "extract utterance features for every segment and whole recording"),
        ("select", "fit z-norm and RFE on training rows of the chosen tasks"),
        ("train", "train the CNN on selected features with dev early stopping"),
        ("eval", "score the trained CNN on dev (same tasks or whole recordings)"),
        ("experiment", "run the full per-task and task-group matrix"),
        ("report", "render report.txt, SVG charts and rows.json"),
    ):
        sub.add_parser(name, parents=[common], help=helptext)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        if not args.config.is_file():
            raise MissingFile(f"config file not found: {args.config}")
        try:
            cfg = RunConfig.from_dict(json.loads(args.config.read_text()))
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{args.config}: invalid JSON ({exc})") from None
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tasks is not None:
        cfg.tasks = args.tasks
    if args.eval_condition is not None:
        cfg.eval_condition = args.eval_condition
    if args.target_k is not None:
        cfg.target_k = args.target_k
    if args.mask_scope is not None:
        cfg.mask_scope = args.mask_scope
    if args.manifest is not None:
        cfg.manifest = str(args.manifest)
    cfg.synth = replace(cfg.synth, seed=cfg.seed)
    return cfg


# ---------------------------------------------------------------------------
# run directory helpers


def _tag(tasks) -> str:
    return "tasks-" + "-".join(str(t) for t in tasks)


def _new_stage_dir(out: Path, *parts: str) -> Path:
    d = out.joinpath(*parts)
    if d.exists():
        raise DataError(f"stage output {d} already exists; run directories are append-only")
    d.mkdir(parents=True)
    return d


def _write_echo(out: Path, stage_dir: Path, cfg: RunConfig) -> None:
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    (stage_dir / "config.echo.json").write_text(text)
    top = out / "config.echo.json"
    if not top.exists():
        top.write_text(text)


def _need(path: Path, stage: str, producer: str) -> Path:
    if not path.exists():
        raise MissingFile(f"{stage}: required input {path} missing; run '{producer}' first").with_stage(stage)
    return path


def _manifest(out: Path, cfg: RunConfig, stage: str, prefer_segment: bool = False) -> CorpusManifest:
    if cfg.manifest:
        return load_manifest(cfg.manifest)
    if prefer_segment:
        return load_manifest(_need(out / "segment" / "manifest.json", stage, "segment"))
    return load_manifest(_need(out / "synth" / "manifest.json", stage, "synth"))


def _features_from_csv(out: Path, manifest: CorpusManifest, stage: str) -> dict:
    seg = load_table(_need(out / "extract" / "features_segments.csv", stage, "extract"))
    whole = load_table(_need(out / "extract" / "features_whole.csv", stage, "extract"))
    feats = {}
    for t in (seg, whole):
        for row in t.rows:
            feats[(row.recording_id, row.task_index)] = row
    return feats


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig, out: Path) -> None:
    d = _new_stage_dir(out, "synth")
    m = generate_synthetic_corpus(cfg.synth, d)
    _write_echo(out, d, cfg)
    log.info("synth: %d recordings, %d segments -> %s", len(m.recordings), len(m.segments), d)


def cmd_segment(cfg: RunConfig, out: Path) -> None:
    m = _manifest(out, cfg, "segment")
    d = _new_stage_dir(out, "segment")
    proposals = []
    agree = 0
    for rec in m.recordings:
        buf = load_canonical(m.audio_file(rec))
        events = detect_marker_tones(buf, cfg.synth.marker_tone_hz)
        props = propose_segments(events, buf.duration_s, rec.id)
        proposals.extend(props)
        truth = {s.task_index: s for s in m.segments_for(rec.id)}
        agree += sum(1 for p in props if p["task_index"] in truth
                     and abs(truth[p["task_index"]].start_s - p["start_s"]) <= 0.05)
    write_proposals_jsonl(d / "tone_proposals.jsonl", proposals)
    # manifest spans stay authoritative; proposals are for human review only
    copy = CorpusManifest(
        [replace(r, audio_path=str(m.audio_file(r).resolve())) for r in m.recordings],
        m.segments, m.schema_version)
    save_manifest(copy, d / "manifest.json")
    (d / "summary.json").write_text(json.dumps(
        {"proposals": len(proposals), "segments": len(m.segments), "agree_within_50ms": agree},
        indent=2, sort_keys=True) + "\n")
    _write_echo(out, d, cfg)


def cmd_extract(cfg: RunConfig, out: Path) -> None:
    m = _manifest(out, cfg, "extract", prefer_segment=not cfg.manifest)
    ext = cfg.pipeline().extraction
    feats = extract_corpus_features(m, ext, splits=tuple(Split))
    d = _new_stage_dir(out, "extract")
    label = {r.id: r.label.value for r in m.recordings}
    for name, whole in (("features_segments.csv", False), ("features_whole.csv", True)):
        keys = [k for k in feats if (k[1] is None) == whole]
        rows = [feats[k] for k in keys]
        save_table(FeatureTable.from_vectors(rows, [label[k[0]] for k in keys]), d / name)
    _write_echo(out, d, cfg)


def cmd_select(cfg: RunConfig, out: Path) -> None:
    m = _manifest(out, cfg, "select", prefer_segment=not cfg.manifest)
    feats = _features_from_csv(out, m, "select")
    p = cfg.pipeline()
    tr = build_table(m, feats, Split.TRAIN, cfg.tasks)
    dv = build_table(m, feats, Split.DEV, cfg.tasks)
    dw = build_table(m, feats, Split.DEV, None)
    norm = znorm_fit(tr)
    mask = rfe(znorm_apply(tr, norm), p.target_k, p.step_frac, p.C, p.seed, p.svm_epochs, p.svm_batch_size)
    d = _new_stage_dir(out, "select", _tag(cfg.tasks))
    norm.to_json(d / "norm.json")
    mask.to_json(d / "mask.json")
    for name, t in (("train.csv", tr), ("dev.csv", dv), ("dev_whole.csv", dw)):
        save_table(apply_mask(znorm_apply(t, norm), mask), d / name)
    _write_echo(out, d, cfg)


def cmd_train(cfg: RunConfig, out: Path) -> None:
    src = out / "select" / _tag(cfg.tasks)
    tr = load_table(_need(src / "train.csv", "train", "select"))
    dv = load_table(_need(src / "dev.csv", "train", "select"))
    p = cfg.pipeline()
    model, hist = train(tr, dv, replace(p.cnn, input_dim=tr.dim), replace(p.train, seed=p.seed))
    d = _new_stage_dir(out, "train", _tag(cfg.tasks))
    save_checkpoint(model, d / "model.json")
    hist.to_csv(d / "history.csv")
    _write_echo(out, d, cfg)


def cmd_eval(cfg: RunConfig, out: Path) -> None:
    tag = _tag(cfg.tasks)
    model = load_checkpoint(_need(out / "train" / tag / "model.json", "eval", "train"))
    name = "dev.csv" if cfg.eval_condition == SAME else "dev_whole.csv"
    dv = load_table(_need(out / "select" / tag / name, "eval", "select"))
    cm = ConfusionMatrix.from_labels(dv.y, predict(model, dv))
    d = _new_stage_dir(out, "eval", f"{tag}-{cfg.eval_condition}")
    (d / "eval.json").write_text(json.dumps(
        {"tasks": list(cfg.tasks), "eval_condition": cfg.eval_condition, "uar": uar(cm),
         "confusion": cm.tolist()}, indent=2, sort_keys=True) + "\n")
    _write_echo(out, d, cfg)


def cmd_experiment(cfg: RunConfig, out: Path) -> None:
    m = _manifest(out, cfg, "experiment")
    p = cfg.pipeline()
    if (out / "extract" / "features_segments.csv").exists():
        feats = _features_from_csv(out, m, "experiment")
    else:
        feats = extract_corpus_features(m, p.extraction)
    rows = experiment_matrix(m, p, feats, REGISTRY, cfg.mask_scope)
    for r in rows:
        for key in ("uar_same", "uar_whole"):
            if not np.isfinite(r[key]):
                raise NumericFailure(f"non-finite {key} for condition {r['condition']}").with_stage("experiment")
    d = _new_stage_dir(out, "experiment")
    (d / "rows.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    _write_echo(out, d, cfg)


def cmd_report(cfg: RunConfig, out: Path) -> None:
    src = _need(out / "experiment" / "rows.json", "report", "experiment")
    rows = json.loads(src.read_text())
    d = _new_stage_dir(out, "report")
    render_report(rows, REGISTRY, d)
    _write_echo(out, d, cfg)


COMMANDS = {
    "synth": cmd_synth, "segment": cmd_segment, "extract": cmd_extract, "select": cmd_select,
    "train": cmd_train, "eval": cmd_eval, "experiment": cmd_experiment, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.out)
    except NumericFailure as exc:
        print(f"mania-pipe {args.command}: numeric failure: {exc.with_stage(args.command)}", file=sys.stderr)
        return 4
    except (DataError, ManiaPipeError) as exc:
        print(f"mania-pipe {args.command}: {exc.with_stage(args.command)}", file=sys.stderr)
        return 3
    except (TypeError, ValueError) as exc:
        print(f"mania-pipe {args.command}: [{args.command}] invalid configuration: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
