"""Command-line pipeline: ingest, train, eval, query, inspect.

Configuration is a flat key=value file plus command-line overrides, with
precedence CLI > file > defaults.  Exit codes: 0 ok, 1 runtime failure,
2 usage or input error, 3 corrupt artifact.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields

from . import bundle as bundle_io
from . import corpus as corpus_mod
from . import evaluation, modelfile, retrieval
from .corpus import IngestParams
from .model import ModelConfig
from .tex import RawDocument
from .training import TrainingDiverged, train_model

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CORRUPT = 3


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every pipeline knob with its default; only corpus_dir has none."""

    corpus_dir: str | None = None
    bundle_dir: str = "bundle"
    model_path: str = "model.eqv"
    report_path: str = "eval_report.tsv"
    mode: str = "equation"  # word | equation | unit
    seed: int = 0
    # model / optimizer
    k: int = 25
    word_window: int = 4
    eq_window: int = 16
    eq_context_window: int = 16
    unit_window: int = 4
    n_negatives: int = 10
    learning_rate: float = 0.1
    max_epochs: int = 20
    init_scale: float = 0.0  # 0 means the dimension-scaled default
    negative_sampling: str = "unigram"
    unit_joint: bool = True
    unit_context_mean: bool = False
    pseudo_likelihood: str = "bernoulli"
    word2eq_vectors: str = "rho"
    # ingestion
    min_tf: int = 10
    min_len: int = 4
    top_stop: int = 25
    abbrev_top: int = 50
    unit_min_count: int = 1
    symbol_window: int = 1
    heldout_per_equation: int = 2
    heldout_window: int = 4
    singleton_sample: int = 0
    workers: int = 1
    # evaluation grid
    eval_modes: str = "word,equation,unit"
    eval_dims: str = "25"
    eval_word_windows: str = "4,8,16"
    eval_eq_windows: str = "8,16"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            k=self.k,
            word_window=self.word_window,
            eq_window=self.eq_window,
            eq_context_window=self.eq_context_window,
            unit_window=self.unit_window,
            n_negatives=self.n_negatives,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            init_scale=self.init_scale or None,
            seed=self.seed,
            negative_sampling=self.negative_sampling,
            unit_joint=self.unit_joint,
            unit_context_mean=self.unit_context_mean,
            pseudo_likelihood=self.pseudo_likelihood,
            word2eq_vectors=self.word2eq_vectors,
        ).validate()

    def ingest_params(self) -> IngestParams:
        return IngestParams(
            min_tf=self.min_tf,
            min_len=self.min_len,
            top_stop=self.top_stop,
            abbrev_top=self.abbrev_top,
            unit_min_count=self.unit_min_count,
            symbol_window=self.symbol_window,
            heldout_per_equation=self.heldout_per_equation,
            heldout_window=self.heldout_window,
            n_negatives=self.n_negatives,
            singleton_sample=self.singleton_sample,
            seed=self.seed,
            workers=self.workers,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    t = _FIELD_TYPES.get(key)
    if t is None:
        raise UsageError(f"unknown config key {key!r}")
    if t in ("int", int):
        return int(value)
    if t in ("float", float):
        return float(value)
    if t in ("bool", bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"bad boolean for {key}: {value!r}")
    return value


def parse_config_file(path: str) -> dict:
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = _coerce(key, value)
    return values


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        values.update(parse_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), value.strip())
    for key in ("corpus_dir", "bundle_dir", "model_path", "report_path", "mode", "seed", "workers"):
        v = getattr(args, _ARG_ALIASES.get(key, key), None)
        if v is not None:
            values[key] = v
    if getattr(args, "parallel", False):
        values["workers"] = os.cpu_count() or 1
    return dataclasses.replace(RunConfig(), **values)


_ARG_ALIASES = {
    "corpus_dir": "corpus",
    "bundle_dir": "bundle",
    "model_path": "model",
    "report_path": "report",
}


# --- commands -------------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = build_config(args)
    if not cfg.corpus_dir:
        raise UsageError("ingest requires --corpus")
    if not os.path.isdir(cfg.corpus_dir):
        print(f"error: corpus directory not found: {cfg.corpus_dir}", file=sys.stderr)
        return EXIT_USAGE
    docs = []
    for name in sorted(os.listdir(cfg.corpus_dir)):
        if not name.endswith(".tex"):
            continue
        path = os.path.join(cfg.corpus_dir, name)
        try:
            with open(path, encoding="utf-8", errors="replace") as f:
                text = f.read()
            docs.append(RawDocument(name[: -len(".tex")], text))
        except (OSError, ValueError) as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
    if not docs:
        print("error: no readable .tex documents", file=sys.stderr)
        return EXIT_RUNTIME
    data = corpus_mod.ingest_corpus(docs, cfg.ingest_params())
    bundle_io.save_bundle(data, cfg.bundle_dir)
    print("documents\twords\tequations\tunits")
    s = data.stats
    print(f"{s['documents']}\t{s['words']}\t{s['equations']}\t{s['units']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    if not os.path.isdir(cfg.bundle_dir):
        print(f"error: bundle not found: {cfg.bundle_dir}", file=sys.stderr)
        return EXIT_USAGE
    data = bundle_io.load_bundle(cfg.bundle_dir)
    mconfig = cfg.model_config()
    t0 = time.perf_counter()
    try:
        model, records = train_model(data, mconfig, cfg.mode)
    except TrainingDiverged as exc:
        print(f"error: {exc}; retaining last good snapshot", file=sys.stderr)
        if exc.model is not None:
            modelfile.save_model(exc.model, cfg.model_path)
            _write_trace(cfg.model_path, exc.records)
        return EXIT_RUNTIME
    modelfile.save_model(model, cfg.model_path)
    _write_trace(cfg.model_path, records)
    passes = {}
    for r in records:
        passes[r.pass_name] = r.epoch
    epochs = ", ".join(f"{p}={e}" for p, e in passes.items())
    print(
        f"trained mode={cfg.mode} k={mconfig.k} epochs[{epochs}] "
        f"in {time.perf_counter() - t0:.1f}s -> {cfg.model_path}"
    )
    return EXIT_OK


def _write_trace(model_path: str, records):
    with open(model_path + ".trace.jsonl", "w") as f:
        for r in records:
            f.write(
                json.dumps(
                    {
                        "pass": r.pass_name,
                        "epoch": r.epoch,
                        "validation_predictive_ll": r.validation_score,
                        "seconds": round(r.seconds, 3),
                    }
                )
                + "\n"
            )


def cmd_eval(args) -> int:
    cfg = build_config(args)
    if not os.path.isdir(cfg.bundle_dir):
        print(f"error: bundle not found: {cfg.bundle_dir}", file=sys.stderr)
        return EXIT_USAGE
    data = bundle_io.load_bundle(cfg.bundle_dir)
    modes = [m.strip() for m in cfg.eval_modes.split(",") if m.strip()]
    dims = [int(d) for d in cfg.eval_dims.split(",") if d.strip()]
    wws = tuple(int(w) for w in cfg.eval_word_windows.split(",") if w.strip())
    ews = tuple(int(e) for e in cfg.eval_eq_windows.split(",") if e.strip())
    base = cfg.model_config()
    lines = [
        "# eqvec-eval 1\tconfig="
        + json.dumps(dataclasses.asdict(base), sort_keys=True)
    ]
    lines.append("mode\tk\tword_window\teq_window\tvalid_pseudo_ll\ttest_pseudo_ll\tepochs\tselected")
    for mode in modes:
        for k in dims:
            rows, best = evaluation.grid_select(
                data, dataclasses.replace(base, k=k), mode, wws, ews
            )
            for r in rows:
                lines.append(
                    f"{r.mode}\t{r.k}\t{r.word_window}\t{r.eq_window}\t"
                    f"{r.valid_pseudo_ll:.6f}\t{r.test_pseudo_ll:.6f}\t"
                    f"{r.epochs_run}\t{int(r.selected)}"
                )
    report = "\n".join(lines) + "\n"
    with open(cfg.report_path, "w") as f:
        f.write(report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_query(args) -> int:
    cfg = build_config(args)
    data = bundle_io.load_bundle(cfg.bundle_dir)
    model = modelfile.load_model(cfg.model_path, eq_units=data.eq_units)
    k = args.k
    if args.query_kind == "eq2eq":
        ranking = retrieval.nearest_equations(
            model, args.id, k, metric=args.metric or "euclidean"
        )
        surface = lambda i: data.registry.records[i].latex
    elif args.query_kind == "eq2word":
        ranking = retrieval.nearest_words(model, args.id, k, metric=args.metric or "cosine")
        surface = lambda i: data.word_vocab.forms[i]
    else:
        words = [w.strip() for w in args.words.split(",") if w.strip()]
        ranking = retrieval.equations_for_words(
            model, data.word_vocab, words, k,
            metric=args.metric or "cosine", vectors=args.vectors,
        )
        surface = lambda i: data.registry.records[i].latex
    print("rank\tid\tscore\tsurface")
    for rank, (idx, score) in enumerate(ranking.hits, 1):
        print(f"{rank}\t{idx}\t{score:.6f}\t{surface(idx)}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    header = modelfile.read_header(args.model)
    print(modelfile.format_header(header))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--seed", type=int, default=None)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqvec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="build a corpus bundle from .tex articles")
    pi.add_argument("--corpus", help="directory of .tex files, one article each")
    pi.add_argument("--bundle", help="output bundle directory")
    pi.add_argument("--workers", type=int, default=None)
    pi.add_argument("--parallel", action="store_true", help="use all cores for ingestion")
    _add_common(pi)
    pi.set_defaults(fn=cmd_ingest)

    pt = sub.add_parser("train", help="fit a model on a corpus bundle")
    pt.add_argument("--bundle", help="bundle directory")
    pt.add_argument("--model", help="output model path")
    pt.add_argument("--mode", choices=("word", "equation", "unit"), default=None)
    _add_common(pt)
    pt.set_defaults(fn=cmd_train)

    pe = sub.add_parser("eval", help="grid-train and report held-out scores")
    pe.add_argument("--bundle", help="bundle directory")
    pe.add_argument("--report", help="output TSV path")
    _add_common(pe)
    pe.set_defaults(fn=cmd_eval)

    pq = sub.add_parser("query", help="similarity queries over a fitted model")
    qsub = pq.add_subparsers(dest="query_kind", required=True)
    for kind, help_text in (
        ("eq2eq", "equations nearest an equation"),
        ("eq2word", "words nearest an equation"),
        ("word2eq", "equations nearest a bag of words"),
    ):
        qp = qsub.add_parser(kind, help=help_text)
        if kind == "word2eq":
            qp.add_argument("--words", required=True, help="comma-separated query words")
            qp.add_argument("--vectors", choices=("rho", "alpha"), default=None)
        else:
            qp.add_argument("--id", type=int, required=True, help="equation id")
            qp.set_defaults(vectors=None)
        qp.add_argument("-k", type=int, default=5)
        qp.add_argument("--metric", choices=("cosine", "euclidean"), default=None)
        qp.add_argument("--model", help="model path")
        qp.add_argument("--bundle", help="bundle directory")
        _add_common(qp)
        qp.set_defaults(fn=cmd_query)

    pn = sub.add_parser("inspect", help="print a model file header")
    pn.add_argument("model", help="model path")
    pn.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (modelfile.ModelFileError, bundle_io.BundleFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
