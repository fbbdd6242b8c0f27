"""Command-line entry point wiring the pipeline stages.

Subcommands: extract, reconstruct, build, train, evaluate, report,
toy-demo.  Exit codes: 0 success, 1 domain error (empty corpus, single
class, ...), 2 usage/config error.  Every dispatched run writes
run_metadata.json under the output directory, success or not.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .core import Generator, Source
from .dataset import (
    CorpusGroup,
    CorpusSpec,
    generate_toy_pairs,
    ingest,
    load_image,
    load_pairs,
    save_image,
    write_pairs_dataset,
)
from .errors import (
    ConfigError,
    EmptyCorpus,
    EmptyDataset,
    EmptyReport,
    ExtractionFailed,
    IrisTwinError,
    NoIrisFound,
    SingleClassError,
    TooOccluded,
)
from .extraction import ExtractionConfig, extract_pair, load_roi_overrides
from .manifest import read_manifest, validate_manifest
from .reconstruction import InpaintConfig, reconstruct_iris
from .verifier import (
    EvalReport,
    LossConfig,
    Optimizer,
    evaluate_dataset,
    load_checkpoint,
    save_checkpoint,
    select_threshold,
    train,
)

DOMAIN_ERRORS = (
    EmptyCorpus,
    EmptyDataset,
    EmptyReport,
    SingleClassError,
    NoIrisFound,
    ExtractionFailed,
    TooOccluded,
)


class Command(str, Enum):
    EXTRACT = "extract"
    RECONSTRUCT = "reconstruct"
    BUILD = "build"
    TRAIN = "train"
    EVALUATE = "evaluate"
    REPORT = "report"
    TOY_DEMO = "toy-demo"


@dataclass
class RunConfig:
    command: Command
    config_path: str | None = None
    overrides: list[str] = field(default_factory=list)
    output_dir: str = "out"
    seed: int = 0
    deterministic: bool = False


# --------------------------------------------------------------------------
# configuration handling


def _parse_override(kv: str) -> tuple[str, object]:
    if "=" not in kv:
        raise ConfigError(f"override {kv!r} is not key=value")
    key, raw = kv.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config(cfg: RunConfig) -> dict:
    conf: dict = {}
    if cfg.config_path:
        path = Path(cfg.config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            conf = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(conf, dict):
            raise ConfigError("config file must hold a JSON object")
    for kv in cfg.overrides:
        key, value = _parse_override(kv)
        node = conf
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return conf


def _build_dataclass(cls, section: dict, name: str, coerce=None):
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(section) - fields
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    kwargs = dict(section)
    if coerce:
        kwargs = coerce(kwargs)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} section: {exc}") from exc


def extraction_config(conf: dict) -> ExtractionConfig:
    section = dict(conf.get("extraction", {}))
    overrides_path = section.pop("roi_overrides_file", None)

    def coerce(kw):
        for key in ("eye_roi_left", "eye_roi_right"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        if "contour_arcs" in kw:
            kw["contour_arcs"] = tuple(tuple(float(v) for v in arc) for arc in kw["contour_arcs"])
        return kw

    cfg = _build_dataclass(ExtractionConfig, section, "extraction", coerce)
    if overrides_path:
        cfg = ExtractionConfig(
            **{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
               "roi_overrides": load_roi_overrides(overrides_path)}
        )
    return cfg


def inpaint_config(conf: dict) -> InpaintConfig:
    return _build_dataclass(InpaintConfig, dict(conf.get("inpaint", {})), "inpaint")


def loss_config(conf: dict) -> LossConfig:
    def coerce(kw):
        if "optimizer" in kw:
            kw["optimizer"] = Optimizer(kw["optimizer"])
        return kw

    return _build_dataclass(LossConfig, dict(conf.get("loss", {})), "loss", coerce)


def corpus_spec(conf: dict) -> CorpusSpec:
    section = conf.get("corpus")
    if not section:
        raise ConfigError("this command needs a 'corpus' config section")
    try:
        groups = tuple(
            CorpusGroup(
                source=Source(g["source"]),
                generator=Generator(g["generator"]),
                pattern=str(g["pattern"]),
            )
            for g in section["groups"]
        )
        return CorpusSpec(
            root=str(section["root"]),
            groups=groups,
            split=tuple(float(x) for x in section.get("split", (0.7, 0.15, 0.15))),
            split_seed=int(section.get("split_seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad corpus section: {exc}") from exc


# --------------------------------------------------------------------------
# report rendering

REPORT_COLUMNS = (
    "Model",
    "Training Parameters",
    "Training Loss",
    "Training Accuracy",
    "Computation Time (mins)",
    "Testing Loss",
    "Testing Accuracy",
    "Similarity (Avrg)",
)


def _fmt4(x: float) -> str:
    if not np.isfinite(x):
        return "n/a"
    return f"{x:.4f}"


def _fmt_minutes(x: float) -> str:
    """Up to 4 decimals with trailing zeros trimmed, keeping at least 2."""
    if not np.isfinite(x):
        return "n/a"
    whole, dec = f"{x:.4f}".split(".")
    dec = dec.rstrip("0").ljust(2, "0")
    return f"{whole}.{dec}"


def report_cells(row: EvalReport) -> list[str]:
    return [
        row.model_name,
        f"{row.train_params:,}",
        _fmt4(row.train_loss),
        _fmt4(row.train_accuracy),
        _fmt_minutes(row.compute_minutes),
        _fmt4(row.test_loss),
        _fmt4(row.test_accuracy),
        _fmt4(row.mean_similarity),
    ]


def render_report(rows: list[EvalReport]) -> str:
    """Aligned plain-text table mirroring the standard comparison columns;
    rows render in input order."""
    if not rows:
        raise EmptyReport("no rows to render")
    table = [list(REPORT_COLUMNS)] + [report_cells(r) for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(REPORT_COLUMNS))]
    out_lines = []
    for k, line in enumerate(table):
        cells = [
            line[0].ljust(widths[0]),
            *[c.rjust(w) for c, w in zip(line[1:], widths[1:])],
        ]
        out_lines.append("  ".join(cells).rstrip())
        if k == 0:
            out_lines.append("  ".join("-" * w for w in widths))
    return "\n".join(out_lines) + "\n"


# --------------------------------------------------------------------------
# command handlers


def _toy_section(conf: dict) -> dict:
    defaults = {
        "n_real": 200,
        "n_gan": 200,
        "n_val": 60,
        "n_test": 100,
        "asymmetry": 0.5,
        "noise": 0.02,
        "size": 64,
    }
    section = dict(conf.get("toy", {}))
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown toy keys: {sorted(unknown)}")
    defaults.update(section)
    return defaults


def cmd_toy_demo(cfg: RunConfig, conf: dict, out: Path) -> dict:
    toy = _toy_section(conf)
    lcfg = loss_config(conf)
    seed = cfg.seed
    train_pairs = generate_toy_pairs(
        toy["n_real"], toy["n_gan"], toy["asymmetry"], toy["noise"], seed, size=toy["size"]
    )
    val_pairs = generate_toy_pairs(
        toy["n_val"], toy["n_val"], toy["asymmetry"], toy["noise"], seed + 1, size=toy["size"]
    )
    test_pairs = generate_toy_pairs(
        toy["n_test"], toy["n_test"], toy["asymmetry"], toy["noise"], seed + 2, size=toy["size"]
    )

    # face ids repeat across the three generated corpora; disambiguate
    renamed = []
    for plist, split in ((train_pairs, "train"), (val_pairs, "val"), (test_pairs, "test")):
        for pair, label in plist:
            renamed.append((_rename_pair(pair, f"{split}_{pair.face_id}"), label, split))
    write_pairs_dataset(
        [(p, l) for p, l, _ in renamed],
        out / "dataset",
        split_of={p.face_id: s for p, _, s in renamed}.get,
        split_seed=seed,
    )

    t0 = time.perf_counter()
    state, history = train(train_pairs, lcfg, seed)
    train_minutes = (time.perf_counter() - t0) / 60.0
    save_checkpoint(state, out / "checkpoint.json")
    (out / "history.json").write_text(
        json.dumps(
            [
                {
                    "epoch": h.epoch,
                    "mean_loss": h.mean_loss,
                    "accuracy": h.accuracy,
                    "threshold": h.threshold,
                }
                for h in history
            ],
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    tau = select_threshold(state, val_pairs)
    report = evaluate_dataset(
        state,
        test_pairs,
        tau,
        cfg=lcfg,
        model_name="smallconv",
        train_loss=history[-1].mean_loss if history else float("nan"),
        train_accuracy=history[-1].accuracy if history else float("nan"),
        train_minutes=0.0 if cfg.deterministic else train_minutes,
    )
    table = render_report([report])
    (out / "report.json").write_text(
        json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    (out / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return {"threshold": tau, "test_accuracy": report.test_accuracy}


def _rename_pair(pair, face_id):
    from .core import IrisPair

    return IrisPair(
        face_id=face_id,
        left=pair.left,
        right=pair.right,
        source=pair.source,
        generator=pair.generator,
        provenance_path=pair.provenance_path,
    )


def cmd_build(cfg: RunConfig, conf: dict, out: Path) -> dict:
    spec = corpus_spec(conf)
    manifest = ingest(spec, extraction_config(conf), inpaint_config(conf), out / "dataset")
    violations = validate_manifest(manifest, out / "dataset")
    print(f"built dataset with {len(manifest.entries)} entries under {out / 'dataset'}")
    return {"entries": len(manifest.entries), "violations": len(violations)}


def cmd_extract(cfg: RunConfig, conf: dict, out: Path) -> dict:
    spec = corpus_spec(conf)
    ext_cfg = extraction_config(conf)
    in_root = Path(spec.root)
    records, failures = [], []
    for group in spec.groups:
        for path in sorted(in_root.glob(group.pattern)):
            meta = {
                "face_id": path.stem,
                "source": group.source,
                "generator": group.generator,
                "provenance": str(path),
            }
            try:
                pair = extract_pair(load_image(path), ext_cfg, meta)
            except ExtractionFailed as exc:
                failures.append({"face_id": path.stem, "reason": str(exc)})
                continue
            for side, crop in (("left", pair.left), ("right", pair.right)):
                rel = f"{pair.source.value}/{pair.generator.value}/{side}/{pair.face_id}.png"
                save_image(crop.image, out / "extracted" / rel)
                records.append(
                    {
                        "face_id": pair.face_id,
                        "side": side,
                        "path": rel,
                        "source": pair.source.value,
                        "generator": pair.generator.value,
                        "circle": {"cx": crop.circle.cx, "cy": crop.circle.cy, "r": crop.circle.r},
                        "edge_padded": crop.edge_padded,
                    }
                )
    doc = {"records": records, "failures": failures}
    (out / "extraction.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if not records:
        raise EmptyCorpus("extraction produced no crops")
    print(f"extracted {len(records)} crops ({len(failures)} failures)")
    return {"crops": len(records), "failures": len(failures)}


def cmd_reconstruct(cfg: RunConfig, conf: dict, out: Path) -> dict:
    section = conf.get("reconstruct", {})
    src = section.get("input")
    if not src:
        raise ConfigError("reconstruct needs config key reconstruct.input "
                          "(an extract output directory)")
    src = Path(src)
    doc_path = src / "extraction.json"
    if not doc_path.is_file():
        raise ConfigError(f"no extraction.json under {src}")
    doc = json.loads(doc_path.read_text(encoding="utf-8"))
    icfg = inpaint_config(conf)
    from .core import IrisCrop

    stats, n_filled, n_rejected = [], 0, 0
    for rec in doc["records"]:
        crop = IrisCrop(
            image=load_image(src / "extracted" / rec["path"]),
            circle=_circle_from_record(rec["circle"]),
        )
        try:
            fixed = reconstruct_iris(crop, icfg)
        except TooOccluded as exc:
            n_rejected += 1
            stats.append({"face_id": rec["face_id"], "side": rec["side"], "rejected": str(exc)})
            continue
        save_image(fixed.image, out / "reconstructed" / rec["path"])
        n_filled += int(fixed.reconstructed)
        stats.append(
            {
                "face_id": rec["face_id"],
                "side": rec["side"],
                "path": rec["path"],
                "occlusion_fraction": fixed.occlusion_fraction,
                "reconstructed": fixed.reconstructed,
                "fill_converged": fixed.fill_converged,
            }
        )
    (out / "reconstruction.json").write_text(json.dumps({"stats": stats}, indent=2) + "\n",
                                             encoding="utf-8")
    print(f"reconstructed {n_filled} crops, rejected {n_rejected}")
    return {"filled": n_filled, "rejected": n_rejected}


def _circle_from_record(d):
    from .core import CircleParams

    return CircleParams(cx=float(d["cx"]), cy=float(d["cy"]), r=float(d["r"]))


def _dataset_root(conf: dict) -> Path:
    section = conf.get("dataset", {})
    root = section.get("root")
    if not root:
        raise ConfigError("this command needs config key dataset.root")
    root = Path(root)
    if not (root / "manifest").is_file():
        raise ConfigError(f"no manifest under {root}")
    return root


def cmd_train(cfg: RunConfig, conf: dict, out: Path) -> dict:
    root = _dataset_root(conf)
    manifest = read_manifest(root)
    pairs = load_pairs(manifest, root, split="train")
    if not pairs:
        raise EmptyCorpus("train split is empty")
    lcfg = loss_config(conf)
    t0 = time.perf_counter()
    state, history = train(pairs, lcfg, cfg.seed)
    minutes = (time.perf_counter() - t0) / 60.0
    save_checkpoint(state, out / "checkpoint.json")
    (out / "history.json").write_text(
        json.dumps([h.__dict__ for h in history], indent=2) + "\n", encoding="utf-8"
    )
    (out / "train_meta.json").write_text(
        json.dumps({"train_minutes": 0.0 if cfg.deterministic else minutes,
                    "pairs": len(pairs)}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"trained on {len(pairs)} pairs; checkpoint at {out / 'checkpoint.json'}")
    return {"pairs": len(pairs), "epochs": lcfg.epochs}


def cmd_evaluate(cfg: RunConfig, conf: dict, out: Path) -> dict:
    root = _dataset_root(conf)
    manifest = read_manifest(root)
    if not manifest.entries:
        raise EmptyCorpus("manifest has no entries")
    section = conf.get("evaluate", {})
    ckpt = section.get("checkpoint")
    if not ckpt:
        raise ConfigError("evaluate needs config key evaluate.checkpoint")
    state = load_checkpoint(ckpt)
    lcfg = loss_config(conf)
    test_pairs = load_pairs(manifest, root, split=section.get("split", "test"))
    if not test_pairs:
        raise EmptyCorpus("evaluation split is empty")
    if "threshold" in section:
        tau = float(section["threshold"])
    else:
        val_pairs = load_pairs(manifest, root, split="val")
        if not val_pairs:
            raise EmptyCorpus("no val split to pick a threshold from "
                              "(or set evaluate.threshold)")
        tau = select_threshold(state, val_pairs)
    report = evaluate_dataset(
        state,
        test_pairs,
        tau,
        cfg=lcfg,
        model_name=str(section.get("model_name", "smallconv")),
        train_minutes=0.0 if cfg.deterministic else None,
    )
    table = render_report([report])
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n",
                                     encoding="utf-8")
    (out / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return {"threshold": tau, "test_accuracy": report.test_accuracy}


def cmd_report(cfg: RunConfig, conf: dict, out: Path) -> dict:
    section = conf.get("report", {})
    inputs = section.get("inputs", [])
    rows = []
    for path in inputs:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        rows.append(EvalReport.from_json(doc))
    table = render_report(rows)  # raises EmptyReport on no rows
    (out / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return {"rows": len(rows)}


HANDLERS = {
    Command.TOY_DEMO: cmd_toy_demo,
    Command.BUILD: cmd_build,
    Command.EXTRACT: cmd_extract,
    Command.RECONSTRUCT: cmd_reconstruct,
    Command.TRAIN: cmd_train,
    Command.EVALUATE: cmd_evaluate,
    Command.REPORT: cmd_report,
}


# --------------------------------------------------------------------------
# run wrapper


def run(cfg: RunConfig) -> int:
    """Dispatch one command; always leaves run_metadata.json in output_dir."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": cfg.command.value,
        "config_path": cfg.config_path,
        "overrides": list(cfg.overrides),
        "seed": cfg.seed,
        "deterministic": cfg.deterministic,
        "versions": {
            "iristwin": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "kernel_backend": _kernels.BACKEND,
        },
        "status": "started",
        "partial_outputs": False,
    }
    code = 0
    try:
        conf = load_config(cfg)
        meta["config"] = conf
        meta["result"] = HANDLERS[cfg.command](cfg, conf, out)
        meta["status"] = "ok"
    except ConfigError as exc:
        meta["status"] = "config-error"
        meta["error"] = str(exc)
        print(f"error: {exc}", file=sys.stderr)
        code = 2
    except DOMAIN_ERRORS as exc:
        meta["status"] = "domain-error"
        meta["error"] = f"{type(exc).__name__}: {exc}"
        meta["partial_outputs"] = True
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 1
    except IrisTwinError as exc:
        meta["status"] = "error"
        meta["error"] = f"{type(exc).__name__}: {exc}"
        meta["partial_outputs"] = True
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 1
    finally:
        meta["wall_clock_seconds"] = time.perf_counter() - t0
        (out / "run_metadata.json").write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iristwin",
        description="Iris extraction, reconstruction and Siamese left/right "
        "similarity scoring for GAN-face forensics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in Command:
        p = sub.add_parser(cmd.value, help=f"{cmd.value} stage")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key config override (value parsed as JSON when possible)",
        )
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="single-worker bit-exact mode; wall-clock report fields pinned to 0",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=Command(args.command),
        config_path=args.config,
        overrides=args.overrides,
        output_dir=args.out,
        seed=args.seed,
        deterministic=args.deterministic,
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
