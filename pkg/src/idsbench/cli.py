"""Command-line entry point: ``idsbench bench|category|train|classify|report``.

Exit status: 0 success, 1 runtime failure, 2 bad flags, 3 dataset or model
input problems. Output files are written to temporaries and renamed into
place only once every file of a run is complete.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from .dataset import (
    CategoryMap,
    DatasetError,
    LabeledDataset,
    Strata,
    file_digest,
    load_dataset,
    stratified_sample,
    uniform_sample,
    write_dataset,
)
from .evaluation import (
    InfeasibleSweepError,
    SweepConfig,
    plot_tables,
    read_report_csv,
    run_category_experiment,
    run_sweep,
    write_report_csv,
)
from .models import ALGORITHMS, TrainParams, algorithm_of, load_model, normalize_algorithm, train_model
from .rforest import ALL, AUTO, ForestConfig
from .svm import Kernel, SVMTrainConfig
from .textformat import ModelFormatError

log = logging.getLogger("idsbench")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

ENV_DATASET = "IDSBENCH_DATASET"
ENV_OUT_DIR = "IDSBENCH_OUT_DIR"
ENV_CATEGORY_MAP = "IDSBENCH_CATEGORY_MAP"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# -- flag parsing helpers ---------------------------------------------------------

def parse_counts(spec: str) -> list[int]:
    """Parse ``lo:hi:step`` ranges and comma lists, e.g. ``500:5500:500`` or ``100,2000``."""
    counts: list[int] = []
    try:
        for part in spec.split(","):
            part = part.strip()
            if not part:
                continue
            if ":" in part:
                lo, hi, step = (int(x) for x in part.split(":"))
                if step <= 0 or hi < lo:
                    raise UsageError(f"bad count range {part!r}")
                counts.extend(range(lo, hi + 1, step))
            else:
                counts.append(int(part))
    except ValueError:
        raise UsageError(f"bad --counts value {spec!r}") from None
    if not counts:
        raise UsageError("--counts is empty")
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise UsageError(f"--counts must be strictly increasing, got {counts}")
    if counts[0] < 2:
        raise UsageError("--counts values must be >= 2")
    return counts


def parse_algos(spec: str) -> list[str]:
    try:
        algos = [normalize_algorithm(a) for a in spec.split(",") if a.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not algos:
        raise UsageError("--algos is empty")
    return list(dict.fromkeys(algos))


def parse_features(spec: str) -> int | str:
    spec = spec.strip().lower()
    if spec in (AUTO, ALL):
        return spec
    try:
        k = int(spec)
    except ValueError:
        raise UsageError(f"--features must be an integer, 'auto' or 'all', got {spec!r}") from None
    if k < 1:
        raise UsageError("--features must be >= 1")
    return k


def train_params(args) -> TrainParams:
    if args.smoothing < 0:
        raise UsageError("--smoothing must be >= 0")
    if args.bins < 2:
        raise UsageError("--bins must be >= 2")
    if args.C <= 0 or args.svm_tol <= 0 or args.max_passes < 1 or args.trees < 1:
        raise UsageError("--C, --svm-tol must be > 0; --max-passes, --trees must be >= 1")
    kernel = Kernel.linear() if args.kernel == "linear" else Kernel.rbf(args.gamma)
    return TrainParams(
        nb_smoothing=args.smoothing,
        nb_bins=args.bins,
        svm=SVMTrainConfig(C=args.C, kernel=kernel, tolerance=args.svm_tol,
                           max_passes=args.max_passes, seed=args.seed or 0),
        forest=ForestConfig(number_of_trees=args.trees, number_of_features=parse_features(args.features),
                            bootstrap=not args.no_bootstrap, seed=args.seed or 0),
    )


# -- file handling ------------------------------------------------------------------

class AtomicOutputs:
    """Collect output files as temporaries; rename them all on success."""

    def __init__(self):
        self._pending: list[tuple[str, Path]] = []

    def write(self, path: str | os.PathLike, text: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self._pending.append((tmp, path))
        return path

    def pending(self) -> list[str]:
        return [str(p) for _, p in self._pending]

    def commit(self) -> list[str]:
        for tmp, final in self._pending:
            os.replace(tmp, final)
        done = [str(p) for _, p in self._pending]
        self._pending = []
        return done

    def discard(self) -> None:
        for tmp, _ in self._pending:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
        self._pending = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.discard()
        return False


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _category_map(args) -> CategoryMap:
    path = getattr(args, "category_map", None) or os.environ.get(ENV_CATEGORY_MAP)
    if not path:
        return CategoryMap.default()
    try:
        return CategoryMap.load(path)
    except OSError as exc:
        raise InputError(f"cannot read category map {path}: {exc.strerror}") from None


def _resolve_dataset(args) -> str:
    path = args.dataset or os.environ.get(ENV_DATASET)
    if not path:
        raise UsageError("--dataset is required (or set IDSBENCH_DATASET)")
    return path


def _load(path: str, cmap: CategoryMap, schema=None) -> LabeledDataset:
    try:
        if schema is None:
            return load_dataset(path, category_map=cmap)
        return load_dataset(path, schema=schema, category_map=cmap)
    except FileNotFoundError:
        raise InputError(f"dataset not found: {path}") from None
    except IsADirectoryError:
        raise InputError(f"dataset path is a directory: {path}") from None
    except UnicodeDecodeError as exc:
        raise InputError(f"dataset {path} is not UTF-8: {exc}") from None


def _manifest(command: str, argv: Sequence[str], args, dataset_path: str | None,
              started: str, outputs: Sequence[str], notes: dict | None = None) -> str:
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "from_manifest")}
    doc = {
        "command": command,
        "argv": list(argv),
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "dataset": None if dataset_path is None else {
            "path": os.path.abspath(dataset_path), "sha256": file_digest(dataset_path)},
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": list(outputs),
    }
    if notes:
        doc["notes"] = notes
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(ENV_OUT_DIR) or "results")


# -- subcommands ----------------------------------------------------------------------

def cmd_bench(args, argv) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for bench")
    if not args.counts:
        raise UsageError("--counts is required for bench")
    counts = parse_counts(args.counts)
    algos = parse_algos(args.algos)
    if not 0 < args.train_fraction < 1:
        raise UsageError("--train-fraction must lie in (0, 1)")
    if args.subsample is not None and not 0 < args.subsample <= 1:
        raise UsageError("--subsample must lie in (0, 1]")
    params = train_params(args)
    jobs = max(1, args.jobs)
    if args.timing_strict and jobs > 1:
        log.warning("--timing-strict: running cells sequentially despite --jobs %d", jobs)
        jobs = 1

    started = _now()
    path = _resolve_dataset(args)
    cmap = _category_map(args)
    d = _load(path, cmap)
    if args.subsample is not None and args.subsample < 1:
        target = round(args.subsample * len(d))
        if args.uniform_subsample:
            d = uniform_sample(d, target, seed=args.seed)
        else:
            d = stratified_sample(d, target, Strata.BINARY_CLASS, seed=args.seed)
        log.info("subsampled dataset to %d records", len(d))

    cfg = SweepConfig(tuple(counts), tuple(algos), args.train_fraction, args.seed, params)
    log.info("running %d cells", len(counts) * len(algos))
    rows = run_sweep(d, cfg, jobs=jobs)

    out = _out_dir(args)
    name = args.name
    digest = file_digest(path)
    with AtomicOutputs() as files:
        buf = io.StringIO()
        write_report_csv(rows, buf)
        files.write(out / f"{name}.csv", buf.getvalue())
        meta = [
            "# idsbench benchmark report",
            f"# seed: {args.seed}",
            f"# train_fraction: {args.train_fraction}",
            "# split: stratified by binary class",
            "# sampling: stratified by binary class, drawn independently per connection count",
            f"# subsample: {args.subsample if args.subsample is not None else 'none'}",
            f"# algorithms: {','.join(algos)}",
            f"# connections: {','.join(map(str, counts))}",
            f"# dataset: {os.path.abspath(path)}",
            f"# dataset_sha256: {digest}",
            f"# records: {len(d)}",
            f"# version: {__version__}",
        ]
        files.write(out / f"{name}.meta", "\n".join(meta) + "\n")
        for metric, table in plot_tables(rows).items():
            files.write(out / f"{name}_{metric}.dat", table)
        outputs = files.pending()
        manifest_path = out / f"{name}.manifest.json"
        files.write(manifest_path, _manifest("bench", argv, args, path, started,
                                             outputs + [str(manifest_path)]))
        written = files.commit()
    for p in written:
        print(p)
    return EXIT_OK


def cmd_category(args, argv) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for category")
    if args.per_category is None or args.per_category < 1:
        raise UsageError("--per-category must be >= 1")
    algos = parse_algos(args.algos)
    if not 0 < args.train_fraction < 1:
        raise UsageError("--train-fraction must lie in (0, 1)")
    params = train_params(args)
    started = _now()
    path = _resolve_dataset(args)
    d = _load(path, _category_map(args))
    report = run_category_experiment(d, args.per_category, args.include_normal, args.seed,
                                     algos, args.train_fraction, params)
    out = _out_dir(args)
    notes = {
        "instances": report.total_instances,
        "include_normal": report.include_normal,
        "train_size": report.train_size,
        "background_normals": report.background_normals,
        "protocol": ("per-category quota sample split per category into train/test; "
                     "normal background records added to training when normal is not a quota category"),
    }
    with AtomicOutputs() as files:
        csv_path = files.write(out / f"{args.name}.csv", report.to_csv())
        manifest_path = out / f"{args.name}.manifest.json"
        files.write(manifest_path, _manifest("category", argv, args, path, started,
                                             [str(csv_path), str(manifest_path)], notes))
        written = files.commit()
    sys.stdout.write(report.to_csv())
    for p in written:
        print(p, file=sys.stderr)
    return EXIT_OK


def cmd_train(args, argv) -> int:
    algo = parse_algos(args.algo)
    if len(algo) != 1:
        raise UsageError("--algo takes exactly one algorithm")
    params = train_params(args)
    started = _now()
    path = _resolve_dataset(args)
    d = _load(path, _category_map(args))
    if len(d) == 0:
        raise InputError(f"dataset {path} has no records")
    model = train_model(algo[0], d, params, jobs=max(1, args.jobs))
    out = Path(args.output)
    with AtomicOutputs() as files:
        files.write(out, model.dumps())
        mpath = out.with_name(out.name + ".manifest.json")
        files.write(mpath, _manifest("train", argv, args, path, started, [str(out), str(mpath)]))
        files.commit()
    print(out)
    return EXIT_OK


def cmd_classify(args, argv) -> int:
    started = _now()
    try:
        model = load_model(args.model)
    except FileNotFoundError:
        raise InputError(f"model not found: {args.model}") from None
    d = _load(args.input, _category_map(args), schema=model.schema)
    preds = model.predict_dataset(d)
    detail_keys = list(model.decision_details(d.records[0]).keys()) if len(d) else []
    lines = [",".join(["index", "label", "prediction", *detail_keys])]
    correct = 0
    for i, (rec, pred) in enumerate(zip(d.records, preds)):
        details = model.decision_details(rec) if detail_keys else {}
        cells = [str(i), rec.raw_label, pred.value] + [repr(float(details[k])) for k in detail_keys]
        lines.append(",".join(cells))
        correct += pred is rec.binary_class
    text = "\n".join(lines) + "\n"
    if len(d):
        log.info("%s: %d/%d records match their labels (%.2f%%)", algorithm_of(model), correct, len(d),
                 100.0 * correct / len(d))
    if args.output:
        out = Path(args.output)
        with AtomicOutputs() as files:
            files.write(out, text)
            mpath = out.with_name(out.name + ".manifest.json")
            files.write(mpath, _manifest("classify", argv, args, args.input, started, [str(out), str(mpath)]))
            files.commit()
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args, argv) -> int:
    try:
        with open(args.input, encoding="utf-8") as fh:
            rows = read_report_csv(fh)
    except FileNotFoundError:
        raise InputError(f"report not found: {args.input}") from None
    except ValueError as exc:
        raise InputError(f"{args.input}: {exc}") from None
    if args.out_dir:
        out = Path(args.out_dir)
        stem = Path(args.input).stem
        with AtomicOutputs() as files:
            for metric, table in plot_tables(rows).items():
                files.write(out / f"{stem}_{metric}.dat", table)
            files.commit()
    header = f"{'algorithm':<9} {'conns':>6} {'TPR':>8} {'FPR':>8} {'FNR':>8} {'acc':>8} {'train_s':>8} {'class_s':>8}"
    print(header)

    def cell(v):
        return f"{v:8.3f}" if v is not None else f"{'-':>8}"
    for r in rows:
        print(f"{r.algorithm:<9} {r.connections:>6} {cell(r.tpr)} {cell(r.fpr)} {cell(r.fnr)} "
              f"{cell(r.accuracy)} {r.train_time:8.3f} {r.classify_time:8.3f}")
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    from .synthetic import synthetic_dataset
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    d = synthetic_dataset(args.n, seed=args.seed)
    buf = io.StringIO()
    write_dataset(d, buf)
    with AtomicOutputs() as files:
        files.write(args.output, buf.getvalue())
        files.commit()
    print(args.output)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _classifier_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("classifier parameters")
    g.add_argument("--smoothing", type=float, default=1.0, help="NB add-alpha smoothing (default 1)")
    g.add_argument("--bins", type=int, default=10, help="NB equal-frequency bins per numeric attribute")
    g.add_argument("--C", type=float, default=1.0, help="SVM soft-margin penalty")
    g.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    g.add_argument("--gamma", type=float, default=None, help="RBF gamma (default 1/dimension)")
    g.add_argument("--svm-tol", type=float, default=1e-3, help="SMO KKT tolerance")
    g.add_argument("--max-passes", type=int, default=10, help="SMO clean passes before stopping")
    g.add_argument("--trees", type=int, default=10, help="RF number of trees")
    g.add_argument("--features", default=AUTO, help="RF features per node: integer, 'auto' or 'all'")
    g.add_argument("--no-bootstrap", action="store_true", help="RF: grow every tree on the full data")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="idsbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    clf = _classifier_flags()

    b = sub.add_parser("bench", parents=[clf], help="TPR/FPR/FNR/accuracy/time versus connection count")
    b.add_argument("--dataset")
    b.add_argument("--counts", help="e.g. 500:5500:500 or 1000,2000")
    b.add_argument("--algos", default="nb,dt,svm,rf")
    b.add_argument("--seed", type=int)
    b.add_argument("--train-fraction", type=float, default=0.66)
    b.add_argument("--subsample", type=float, default=None,
                   help="first draw this fraction of the dataset (e.g. 0.2)")
    b.add_argument("--uniform-subsample", action="store_true",
                   help="draw --subsample uniformly instead of stratified")
    b.add_argument("--out-dir")
    b.add_argument("--name", default="report", help="output file stem")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--timing-strict", action="store_true")
    b.add_argument("--category-map")
    b.add_argument("--from-manifest", help="re-run with the flags recorded in a manifest")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("category", parents=[clf], help="per-attack-category accuracy")
    c.add_argument("--dataset")
    c.add_argument("--per-category", type=int)
    c.add_argument("--include-normal", action="store_true")
    c.add_argument("--seed", type=int)
    c.add_argument("--algos", default="nb,dt,svm,rf")
    c.add_argument("--train-fraction", type=float, default=0.66)
    c.add_argument("--out-dir")
    c.add_argument("--name", default="category")
    c.add_argument("--category-map")
    c.add_argument("--from-manifest", help="re-run with the flags recorded in a manifest")
    c.set_defaults(func=cmd_category)

    t = sub.add_parser("train", parents=[clf], help="train one classifier and save it")
    t.add_argument("--dataset")
    t.add_argument("--algo", required=True)
    t.add_argument("--output", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--category-map")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("classify", help="classify records with a saved model")
    k.add_argument("--model", required=True)
    k.add_argument("--input", required=True)
    k.add_argument("--output")
    k.add_argument("--category-map")
    k.set_defaults(func=cmd_classify)

    r = sub.add_parser("report", help="print a report CSV and regenerate its plot data")
    r.add_argument("--input", required=True)
    r.add_argument("--out-dir")
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic NSL-KDD-format dataset")
    s.add_argument("--n", type=int, default=6000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth)
    return parser


def _replay_argv(command: str, argv: list[str], manifest_path: str, out_dir: str | None) -> list[str]:
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {manifest_path} is not valid JSON: {exc}") from None
    if doc.get("command") != command:
        raise UsageError(f"manifest records command {doc.get('command')!r}, not {command!r}")
    recorded = doc.get("dataset") or {}
    if recorded.get("path") and os.path.exists(recorded["path"]):
        if file_digest(recorded["path"]) != recorded.get("sha256"):
            raise InputError(f"dataset {recorded['path']} changed since the manifest was written")
    new_argv = list(doc["argv"])
    if recorded.get("path"):
        # the recorded absolute path wins over a relative one in argv
        new_argv += ["--dataset", recorded["path"]]
    if out_dir is not None:
        new_argv += ["--out-dir", out_dir]
    return new_argv


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if getattr(args, "from_manifest", None):
            new_argv = _replay_argv(args.command, argv, args.from_manifest, args.out_dir)
            args = parser.parse_args(new_argv)
            argv = new_argv
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, DatasetError, ModelFormatError, InfeasibleSweepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
