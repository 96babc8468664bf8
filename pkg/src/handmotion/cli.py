"""Command-line surface for the pipeline.

Subcommands: synth (generate a synthetic corpus), prep (convert dataset
files to .skq), train, embed (sequences -> .dsc descriptors), eval
(linear or knn reports), stream (per-frame stdin/stdout classification),
bench (kernel backends + streaming latency).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels
from .classify import (
    DEFAULT_KS,
    ReferenceSet,
    classify_sequence_linear,
    evaluate_knn,
    inference_features,
    knn_classify,
    reference_set_from_sequences,
    sequence_descriptors,
)
from .config import RunConfig, load_run_config, split_dataset, write_default_config
from .errors import DataError, HandMotionError, NumericalError
from .features import FEATURE_DIM, FeatureStream
from .model import MotionModel
from .skeleton import (
    ColumnLayout,
    HandSkeleton,
    JointMap,
    MotionSequence,
    bundled_joint_map,
    load_frames_txt,
    load_skq,
    save_skq,
    simplify,
)
from .synth import FAMILIES, GestureSpec, generate
from .train import fit

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _resolve_joint_map(name: str | None) -> JointMap | None:
    if not name:
        return None
    path = Path(name)
    if path.exists():
        return JointMap.from_json(path)
    return bundled_joint_map(name)


def _load_corpus(directory) -> list[MotionSequence]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    paths = sorted(directory.rglob("*.skq"))
    if not paths:
        raise DataError(f"no .skq files under {directory}")
    return [load_skq(p) for p in paths]


def _write_manifest(out_dir: Path, sequences: list[MotionSequence], errors: list[str]) -> None:
    counts: dict[str, int] = {}
    for seq in sequences:
        counts[seq.label or ""] = counts.get(seq.label or "", 0) + 1
    manifest = {"sequences": len(sequences), "labels": counts, "errors": errors}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    families = args.families.split(",") if args.families else list(FAMILIES[:6])
    sequences = []
    for i, family in enumerate(families):
        spec = GestureSpec(
            family=family.strip(),
            duration_range=(args.duration_min, args.duration_max),
            noise_sigma=args.noise,
            seed=args.seed * 1009 + i,
            idle_tail=(0, args.idle_tail_max),
        )
        sequences.extend(generate(spec, args.per_family))
    for i, seq in enumerate(sequences):
        save_skq(out_dir / f"{seq.label}_{i:04d}.skq", seq)
    _write_manifest(out_dir, sequences, [])
    print(f"wrote {len(sequences)} sequences to {out_dir}")
    return EXIT_OK


def cmd_prep(args) -> int:
    in_dir = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    joint_map = _resolve_joint_map(args.joint_map)
    layout = ColumnLayout.from_json(args.layout) if args.layout else None
    if args.format == "txt" and layout is None:
        raise DataError("--layout is required for txt input")
    paths = sorted(in_dir.rglob("*.skq" if args.format == "skq" else "*.txt"))
    sequences, errors = [], []
    for path in paths:
        try:
            if args.format == "skq":
                seq = load_skq(path)
            else:
                label = path.parent.name if args.label_from == "parent" else path.stem
                seq = load_frames_txt(path, layout, label=label)
            if joint_map is not None:
                seq = MotionSequence(
                    tuple(simplify(f, joint_map) for f in seq.frames),
                    label=seq.label,
                    source_id=str(path.relative_to(in_dir)),
                )
            sequences.append(seq)
            save_skq(out_dir / f"{len(sequences) - 1:05d}_{seq.label or 'unlabeled'}.skq", seq)
        except (DataError, ValueError) as exc:
            errors.append(f"{path}: {exc}")
    _write_manifest(out_dir, sequences, errors)
    if not paths:
        print("warning: no input files found", file=sys.stderr)
        return EXIT_OK
    for line in errors:
        print(f"error: {line}", file=sys.stderr)
    print(f"converted {len(sequences)}/{len(paths)} files into {out_dir}")
    return EXIT_DATA if errors else EXIT_OK


def cmd_train(args) -> int:
    config = load_run_config(args.config)
    dataset = _load_corpus(args.dataset or config.dataset)
    train_set, _ = split_dataset(dataset, config.split)
    joint_map = config.resolve_joint_map()
    checkpoint = Path(args.out or config.checkpoint or "model.hmdl")
    log_path = args.log or (str(checkpoint) + ".log")
    model, log = fit(
        train_set,
        config.train,
        tcn_config=config.tcn,
        summ_config=config.summarizer,
        joint_map=joint_map,
        log_path=log_path,
        dump_path=str(checkpoint) + ".dump.json",
    )
    model.save(checkpoint)
    final = log[-1] if log else {"loss": float("nan")}
    print(f"trained {config.train.regime} model for {len(log)} epochs -> {checkpoint}")
    if log:
        print(f"final epoch loss {final['loss']:.6f}" + (
            f", accuracy {final['accuracy']:.3f}" if "accuracy" in final else ""
        ))
    return EXIT_OK


def cmd_embed(args) -> int:
    model = MotionModel.load(args.checkpoint)
    joint_map = _resolve_joint_map(args.joint_map)
    sequences = _load_corpus(args.input)
    refs = reference_set_from_sequences(
        model,
        sequences,
        joint_map,
        per_frame=args.per_frame,
        augment_multiplier=args.augment,
        rng=np.random.default_rng(args.seed),
        skip_stride=args.skip_stride,
    )
    refs.save_dsc(args.out)
    print(f"wrote {len(refs)} descriptors to {args.out}")
    return EXIT_OK


def _format_table(rows: list[tuple], header: tuple) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    out = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    for row in rows:
        out.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    return "\n".join(out)


def cmd_eval(args) -> int:
    model = MotionModel.load(args.checkpoint)
    joint_map = _resolve_joint_map(args.joint_map)
    targets = _load_corpus(args.targets)
    if args.mode == "linear":
        correct = 0
        for seq in targets:
            label, _ = classify_sequence_linear(model, seq, joint_map).top()
            correct += label == seq.label
        accuracy = correct / len(targets)
        print(_format_table([("linear", f"{accuracy:.4f}")], ("mode", "accuracy")))
        return EXIT_OK
    if args.refs.endswith(".dsc"):
        refs = ReferenceSet.load_dsc(args.refs)
    else:
        ref_seqs = _load_corpus(args.refs)
        refs = reference_set_from_sequences(
            model,
            ref_seqs,
            joint_map,
            per_frame=args.per_frame,
            augment_multiplier=args.augment,
            rng=np.random.default_rng(args.seed),
        )
    if args.max_references and len(refs) > args.max_references:
        refs = refs.subsample(args.max_references, np.random.default_rng(args.seed))
    ks = tuple(int(k) for k in args.ks.split(","))
    best, table = evaluate_knn(model, refs, targets, joint_map, ks, per_frame=args.per_frame)
    rows = [(k, f"{table[k]:.4f}" + (" *" if k == best else "")) for k in ks]
    print(_format_table(rows, ("k", "accuracy")))
    print(f"best k = {best} (accuracy {table[best]:.4f}, {len(refs)} references)")
    return EXIT_OK


def cmd_stream(args) -> int:
    model = MotionModel.load(args.checkpoint)
    refs = ReferenceSet.load_dsc(args.refs)
    joint_map = _resolve_joint_map(args.joint_map)
    state = model.new_stream_state()
    extractor = FeatureStream()
    per_frame_probs = []
    raw_index = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        values = np.array(line.split(), dtype=np.float64)
        if values.size % 3 != 0:
            raise DataError(f"stdin line {raw_index}: expected 3*J floats, got {values.size}")
        if raw_index % args.skip_stride == 0:
            skeleton = HandSkeleton(values.reshape(-1, 3), format_id="stream")
            if skeleton.n_joints != 7:
                if joint_map is None:
                    raise DataError("non-7-joint stream needs --joint-map")
                skeleton = simplify(skeleton, joint_map)
            features = extractor.step(skeleton)
            descriptor = model.stream_step(state, features)
            probs = knn_classify(descriptor, refs, args.k)
            per_frame_probs.append(probs)
            label, p = probs.top()
            print(f"{raw_index}\t{label}\t{p:.6f}")
        raw_index += 1
    if args.video and per_frame_probs:
        mean = np.mean([p.probs for p in per_frame_probs], axis=0)
        mean /= mean.sum()
        i = int(np.argmax(mean))
        print(f"video\t{per_frame_probs[0].labels[i]}\t{mean[i]:.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .tcn import TcnConfig

    print(f"active kernel backend: {_kernels.BACKEND_NAME} (extension built: {_kernels.HAVE_EXT})")
    rng = np.random.default_rng(0)
    # kernel comparison on the default conv shape
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal((args.frames, 256)).astype(dtype)
        w = rng.standard_normal((4, 256, 256)).astype(dtype) * 0.05
        b = np.zeros(256, dtype=dtype)
        for name, backend in [("numpy", _kernels.numpy_backend)] + (
            [("cython", _kernels.backend)] if _kernels.HAVE_EXT else []
        ):
            start = time.perf_counter()
            for _ in range(args.repeats):
                backend.conv_forward(x, w, b, 2)
            elapsed = (time.perf_counter() - start) / args.repeats
            print(
                f"conv_forward[{np.dtype(dtype).name:8s}] {name:7s}"
                f" {elapsed * 1e3:8.3f} ms / {args.frames}-frame call"
            )
    # end-to-end streaming latency at the default architecture
    model = MotionModel.init(TcnConfig(), seed=0, dtype=np.float64).astype(np.float32)
    refs = ReferenceSet(
        rng.standard_normal((args.references, 256)),
        [f"c{i % 12}" for i in range(args.references)],
    )
    state = model.new_stream_state()
    frames = rng.standard_normal((args.frames, FEATURE_DIM)).astype(np.float32)
    times = []
    for frame in frames:
        start = time.perf_counter()
        descriptor = model.stream_step(state, frame)
        knn_classify(descriptor, refs, args.k)
        times.append(time.perf_counter() - start)
    times_ms = np.array(times) * 1e3
    print(
        f"stream_step + knn ({args.references} refs, k={args.k}): "
        f"mean {times_ms.mean():.3f} ms, p99 {np.percentile(times_ms, 99):.3f} ms"
    )
    return EXIT_OK


def cmd_init_config(args) -> int:
    write_default_config(args.out)
    print(f"wrote config template to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="handmotion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled .skq corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--families", default="", help="comma list; default: 6 stock families")
    p.add_argument("--per-family", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-min", type=int, default=36)
    p.add_argument("--duration-max", type=int, default=90)
    p.add_argument("--idle-tail-max", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="convert dataset files into canonical .skq")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("skq", "txt"), default="txt")
    p.add_argument("--layout", default="", help="ColumnLayout json for txt input")
    p.add_argument("--joint-map", default="", help="simplify to 7 joints during prep")
    p.add_argument("--label-from", choices=("parent", "stem"), default="parent")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train a model per a run-config file")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", default="", help="override [paths] dataset")
    p.add_argument("--out", default="", help="override checkpoint path")
    p.add_argument("--log", default="")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a corpus into .dsc descriptors")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--joint-map", default="")
    p.add_argument("--per-frame", action="store_true")
    p.add_argument("--augment", type=int, default=1, help="reference multiplier")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-stride", type=int, default=3)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="evaluate linear or knn classification")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--mode", choices=("linear", "knn"), default="linear")
    p.add_argument("--refs", default="", help=".dsc file or reference corpus dir")
    p.add_argument("--joint-map", default="")
    p.add_argument("--ks", default=",".join(str(k) for k in DEFAULT_KS))
    p.add_argument("--per-frame", action="store_true")
    p.add_argument("--augment", type=int, default=1)
    p.add_argument("--max-references", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="per-frame classification over stdin")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--joint-map", default="")
    p.add_argument("--skip-stride", type=int, default=3)
    p.add_argument("--video", action="store_true")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("bench", help="kernel backend and latency benchmark")
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--references", type=int, default=575)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("init-config", help="write a config template")
    p.add_argument("--out", default="run.cfg")
    p.set_defaults(func=cmd_init_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HandMotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
