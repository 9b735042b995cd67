"""Command-line interface.

Subcommands: gen-data, train, eval, export-embeddings.  Every run writes a
manifest recording the command line, resolved configuration, seed, input
hashes, and artifact paths.  Exit codes: 0 success, 1 runtime or numeric
failure, 2 usage or parse failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .data import (
    BenchmarkSpec,
    CsvFormatError,
    GenerationError,
    generate_benchmark,
    load_csv,
    save_csv,
)
from .evaluation import METRICS, evaluate
from .expansion import ExpansionDivergedError
from .geometry import DegenerateVectorError
from .trainer import (
    ABLATIONS,
    CheckpointError,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
    train,
)

_ABLATION_ALIASES = {"c4": "c4_only", "c3e": "c3e_only"}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        TrainingDivergedError,
        ExpansionDivergedError,
        DegenerateVectorError,
        GenerationError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (
        CheckpointError,
        CsvFormatError,
        json.JSONDecodeError,
        FileNotFoundError,
        IsADirectoryError,
        NotADirectoryError,
        ValueError,
        KeyError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ArithmeticError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="centerpolar",
        description="Expansion-and-constraint metric learning on labeled vector data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic benchmark from a spec")
    p.add_argument("--spec", required=True, help="benchmark spec JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an encoder on a generated dataset")
    p.add_argument("--data", required=True, help="dataset directory (from gen-data)")
    p.add_argument("--config", help="training config JSON file")
    p.add_argument("--ablation", choices=sorted(set(ABLATIONS) | set(_ABLATION_ALIASES)))
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--dump-trajectories", metavar="DIR", help="write expansion trajectories CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--lr-theta", type=float)
    p.add_argument("--step-size", type=float, help="expansion step size")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test domains")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory with test CSVs")
    p.add_argument("--out", required=True, help="output report JSON file")
    p.add_argument("--metric", choices=METRICS, default="euclidean")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-embeddings", help="embed a dataset CSV with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset CSV file")
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def cmd_gen_data(args) -> int:
    spec_path = Path(args.spec)
    spec = BenchmarkSpec.from_json(spec_path.read_text())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    train_set, tests = generate_benchmark(spec)
    artifacts = {}
    train_path = out_dir / "train.csv"
    save_csv(train_set, train_path)
    artifacts["train"] = str(train_path)
    for name, ds in tests.items():
        path = out_dir / f"test_{name}.csv"
        save_csv(ds, path)
        artifacts[f"test_{name}"] = str(path)
    _write_manifest(
        out_dir / "manifest.json",
        command="gen-data",
        resolved_config=spec.to_dict(),
        seed=spec.seed,
        artifacts=artifacts,
        inputs=[spec_path],
        started=started,
    )
    print(
        f"train: {len(train_set)} samples, {len(train_set.classes())} classes "
        f"({train_path})"
    )
    for name, ds in tests.items():
        print(f"test {name}: {len(ds)} samples, {len(ds.classes())} classes")
    return 0


def _resolve_train_config(args) -> tuple[TrainConfig, list[Path]]:
    inputs = []
    cfg_dict = {}
    if args.config:
        cfg_path = Path(args.config)
        cfg_dict = json.loads(cfg_path.read_text())
        if not isinstance(cfg_dict, dict):
            raise ValueError("training config JSON must be an object")
        inputs.append(cfg_path)
    config = TrainConfig.from_dict(cfg_dict)
    # CLI flags override JSON config fields override defaults
    updates = {}
    if args.ablation:
        updates["ablation"] = _ABLATION_ALIASES.get(args.ablation, args.ablation)
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.embed_dim is not None:
        updates["embed_dim"] = args.embed_dim
    if args.lr_theta is not None:
        updates["lr_theta"] = args.lr_theta
    if updates or args.step_size is not None:
        d = config.to_dict()
        d.update(updates)
        if args.step_size is not None:
            d["expansion"]["step_size"] = args.step_size
        d["loss"] = d["loss"]
        config = TrainConfig.from_dict(d)
    return config, inputs


def _load_data_dir(data_dir: Path):
    train_path = data_dir / "train.csv"
    if not train_path.exists():
        raise FileNotFoundError(f"no train.csv in {data_dir}")
    train_set = load_csv(train_path)
    tests = {}
    test_paths = sorted(data_dir.glob("test_*.csv"))
    for path in test_paths:
        ds = load_csv(path)
        for s in ds.samples:
            tests.setdefault(s.domain_tag, []).append(s)
    from .data import DataSet  # local import to avoid cycle noise at module top

    tests = {name: DataSet(samples) for name, samples in tests.items()}
    return train_set, tests, [train_path] + test_paths


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    train_set, tests, data_paths = _load_data_dir(data_dir)
    config, config_inputs = _resolve_train_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    sink = [] if args.dump_trajectories else None
    report = train(train_set, config, tests=tests or None, trajectory_sink=sink)
    checkpoint_path = out_dir / "checkpoint.json"
    save_checkpoint(checkpoint_path, report.model, config, config.total_epochs)
    report_path = out_dir / "report.json"
    _write_json(report.to_dict(), report_path)
    artifacts = {"checkpoint": str(checkpoint_path), "report": str(report_path)}
    if sink is not None:
        dump_dir = Path(args.dump_trajectories)
        dump_dir.mkdir(parents=True, exist_ok=True)
        traj_path = dump_dir / "trajectories.csv"
        with open(traj_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "iter", "d_geo", "d_euclid", "loss"])
            for sid, it, dg, de, lv in sink:
                writer.writerow([sid, it, f"{dg:.17g}", f"{de:.17g}", f"{lv:.17g}"])
        artifacts["trajectories"] = str(traj_path)
    _write_manifest(
        out_dir / "manifest.json",
        command="train",
        resolved_config=config.to_dict(),
        seed=config.seed,
        artifacts=artifacts,
        inputs=data_paths + config_inputs,
        started=started,
        extra={"call_counts": report.call_counts},
    )
    if report.epoch_losses:
        print(f"trained {config.total_epochs} epochs, final loss {report.epoch_losses[-1]:.6f}")
    else:
        print("trained 0 epochs (initial model echoed)")
    print(f"checkpoint: {checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    model, _config, _epoch = load_checkpoint(ckpt_path)
    data_dir = Path(args.data)
    _train_set, tests, data_paths = _load_data_dir(data_dir)
    if not tests:
        raise FileNotFoundError(f"no test_*.csv files in {data_dir}")
    started = _now()
    report = evaluate(model, tests, metric=args.metric)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_json(report.to_dict(), out_path)
    _write_manifest(
        Path(str(out_path) + ".manifest.json"),
        command="eval",
        resolved_config={"metric": args.metric},
        seed=None,
        artifacts={"report": str(out_path)},
        inputs=[ckpt_path] + data_paths,
        started=started,
    )
    sys.stdout.write(report.to_text())
    return 0


def cmd_export_embeddings(args) -> int:
    ckpt_path = Path(args.checkpoint)
    model, _config, _epoch = load_checkpoint(ckpt_path)
    data_path = Path(args.data)
    ds = load_csv(data_path)
    started = _now()
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "label", "domain"] + [f"e{i}" for i in range(model.embed_dim)]
        )
        if len(ds):
            E = model.embed_many(ds.features_matrix())
            for s, row in zip(ds.samples, E):
                writer.writerow(
                    [s.id, s.class_id, s.domain_tag] + [f"{v:.17g}" for v in row]
                )
    _write_manifest(
        Path(str(out_path) + ".manifest.json"),
        command="export-embeddings",
        resolved_config={"embed_dim": model.embed_dim},
        seed=None,
        artifacts={"embeddings": str(out_path)},
        inputs=[ckpt_path, data_path],
        started=started,
    )
    print(f"wrote {len(ds)} embeddings to {out_path}")
    return 0


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(
    path: Path,
    command: str,
    resolved_config,
    seed,
    artifacts: dict,
    inputs: list,
    started: str,
    extra: dict | None = None,
) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv,
        "resolved_config": resolved_config,
        "seed": seed,
        "artifacts": artifacts,
        "input_sha256": {str(p): _sha256(Path(p)) for p in inputs},
        "started_at": started,
        "finished_at": _now(),
    }
    if extra:
        manifest.update(extra)
    _write_json(manifest, path)


if __name__ == "__main__":
    sys.exit(main())
