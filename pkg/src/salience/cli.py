"""Command-line entry point wiring the modules into reproducible runs.

Every command writes a ``manifest`` file into the output directory with
the resolved configuration, input/output digests, the seed, and timing.
Reports use fixed file names: ``metrics.txt`` (human-readable) and
``metrics.json-lines`` (one JSON record per line). Identical manifest
inputs produce byte-identical metrics files.

The backend is chosen by ``--backend`` or the SALIENCE_BACKEND environment
variable: ``uniform``, ``reference``, or ``remote:<address>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .backend import Backend, RemoteBackend, build_reference_backend, build_uniform_backend, serve_backend
from .core import Dataset, PredicateRegistry, SplitAssignment, load_dataset, validate_dataset, write_dataset
from .datatools import (
    adversarial_candidates,
    agreement_report,
    cue_audit,
    fleiss_kappa,
    regression_fit,
    spearman_rho,
    split_concept,
    split_random,
    write_candidates,
)
from .errors import ConfigError, DataError, SalienceError
from .evaluation import PreferencePair, classification_metrics, ppref_precision, select_threshold
from .scoring import ScoreConfig, score_batch
from .seeding import seed_for
from .templates import PromptLayout, TemplateRegistry
from .training import ModelArtifact, TrainConfig, train

EXIT_CODES = {
    "config": 2,
    "data": 3,
    "template": 3,
    "backend": 4,
    "remote": 4,
    "scoring": 5,
    "training": 5,
    "eval": 5,
    "internal": 1,
}
SWEEP_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class RunContext:
    """Collects manifest fields over the course of one command."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.command = " ".join(sys.argv[1:]) if len(sys.argv) > 1 else args.command
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.config: dict = {}
        self.config_sources: dict[str, str] = {}

    def add_input(self, path: str | Path | None) -> None:
        if path is None:
            return
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = _sha256(p)

    def write_text(self, name: str, text: str) -> Path:
        p = self.out / name
        p.write_text(text, encoding="utf-8")
        self.outputs[name] = _sha256(p)
        return p

    def write_lines(self, name: str, records: list[dict]) -> Path:
        text = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
        return self.write_text(name, text)

    def register_output(self, name: str) -> None:
        p = self.out / name
        if p.is_file():
            self.outputs[name] = _sha256(p)
        elif p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.is_file():
                    self.outputs[str(child.relative_to(self.out))] = _sha256(child)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "seed": getattr(self.args, "seed", None),
            "config": self.config,
            "config_sources": self.config_sources,
            "input_digests": self.inputs,
            "output_digests": self.outputs,
            "duration_seconds": round(time.time() - self.started, 3),
        }
        (self.out / "manifest").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    return obj


def _resolve(ctx: RunContext, field: str, flag_value, file_config: dict, default):
    """Flag > config file > default; the winning source is recorded."""
    if flag_value is not None:
        ctx.config_sources[field] = "flag"
        value = flag_value
    elif field in file_config:
        ctx.config_sources[field] = "file"
        value = file_config[field]
    else:
        ctx.config_sources[field] = "default"
        value = default
    ctx.config[field] = value
    return value


def _make_backend(args: argparse.Namespace, ctx: RunContext) -> Backend:
    choice = args.backend or os.environ.get("SALIENCE_BACKEND", "uniform")
    ctx.config["backend"] = choice
    if choice == "uniform":
        return build_uniform_backend(args.vocab_size, args.embedding_dim)
    if choice == "reference":
        if not args.corpus:
            raise ConfigError("the reference backend needs --corpus <file> (one sentence per line)")
        ctx.add_input(args.corpus)
        corpus = [
            line for line in Path(args.corpus).read_text(encoding="utf-8").splitlines() if line.strip()
        ]
        return build_reference_backend(
            seed=seed_for(args.seed, "backend"),
            d=args.embedding_dim,
            layers=args.layers,
            corpus=corpus,
            steps=args.backend_steps,
        )
    if choice.startswith("remote:"):
        return RemoteBackend(choice.split(":", 1)[1])
    raise ConfigError(f"unknown backend {choice!r}; use uniform, reference, or remote:<address>")


def _make_templates(args: argparse.Namespace, ctx: RunContext) -> TemplateRegistry:
    registry = TemplateRegistry()
    if getattr(args, "template_file", None):
        ctx.add_input(args.template_file)
        registry.load_file(args.template_file)
    return registry


def _score_config(args: argparse.Namespace, ctx: RunContext, file_config: dict) -> ScoreConfig:
    sub = file_config.get("score_config", {})
    return ScoreConfig(
        alpha=_resolve(ctx, "alpha", args.alpha, sub, 0.66),
        mode=_resolve(ctx, "mode", args.mode, sub, "normalized"),
        denominator=_resolve(ctx, "denominator", args.denominator, sub, "paper"),
        clamp_epsilon=_resolve(ctx, "clamp_epsilon", args.clamp_epsilon, sub, 1e-6),
        lambda_value=_resolve(ctx, "lambda_value", args.lambda_value, sub, 0.5),
    )


_SCORE_FIELDS = ("alpha", "mode", "denominator", "clamp_epsilon", "lambda_value")


def _score_override(ctx: RunContext, config: ScoreConfig, model) -> ScoreConfig | None:
    """With a model, its stored scoring config applies unless the user set
    any scoring field explicitly (flag or config file)."""
    if model is None:
        return config
    explicit = any(ctx.config_sources.get(f) in ("flag", "file") for f in _SCORE_FIELDS)
    return config if explicit else None


def _train_config(args: argparse.Namespace, ctx: RunContext) -> TrainConfig:
    file_config = _load_config_file(args.config)
    if args.config:
        ctx.add_input(args.config)
    layout_raw = _resolve(ctx, "layout", args.layout, file_config, "3,4,5")
    layout = PromptLayout(*(int(x) for x in str(layout_raw).split(",")))
    return TrainConfig(
        loss_mode=_resolve(ctx, "loss_mode", args.loss_mode, file_config, "simplified"),
        learning_rate=_resolve(ctx, "learning_rate", args.learning_rate, file_config, 1e-5),
        batch_size=_resolve(ctx, "batch_size", args.batch_size, file_config, 8),
        gamma=_resolve(ctx, "gamma", args.gamma, file_config, 0.1),
        lambda_init=_resolve(ctx, "lambda_init", args.lambda_init, file_config, 0.5),
        epochs=_resolve(ctx, "epochs", args.epochs, file_config, 10),
        seed=seed_for(args.seed, "train"),
        train_fraction=_resolve(ctx, "train_fraction", args.train_fraction, file_config, 1.0),
        layout=layout,
        score_config=_score_config(args, ctx, file_config),
        hidden_size=_resolve(ctx, "hidden_size", args.hidden_size, file_config, None),
        threshold_method=_resolve(ctx, "threshold_method", args.threshold_method, file_config, "sweep"),
    )


def _echo_record(rec, score, label=None) -> dict:
    out = rec.to_record()
    out["necessity"] = score.necessity
    out["sufficiency"] = score.sufficiency
    out["salience"] = score.salience
    if label is not None:
        out["label"] = label
    return out


def _score_dataset(backend, dataset: Dataset, model, config, templates):
    result = score_batch(backend, dataset.triples(), model=model, config=config, templates=templates)
    if result.failures:
        lines = "; ".join(f"#{i} [{cat}] {msg}" for i, cat, msg in result.failures[:5])
        raise DataError(f"{len(result.failures)} triples failed to score: {lines}")
    return result.scores


# -- subcommands ---------------------------------------------------------------


def cmd_split(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    dataset = load_dataset(args.data, schema=args.schema)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if args.mode == "random":
        assignment = split_random(dataset, ratios, seed_for(args.seed, "split"))
    else:
        assignment = split_concept(dataset, ratios, seed_for(args.seed, "split"), args.strictness)
    ctx.config.update(
        {"mode": args.mode, "ratios": list(ratios), "strictness": args.strictness, "schema": args.schema}
    )
    ctx.write_text("assignment.json-lines", assignment.to_lines())
    parts = assignment.apply(dataset)
    for name, part in parts.items():
        write_dataset(part, ctx.out / f"{name}.json-lines")
        ctx.register_output(f"{name}.json-lines")
    sizes = assignment.sizes()
    ctx.write_text(
        "metrics.txt",
        "\n".join([f"{'split':<8}{'count':>8}"] + [f"{k:<8}{v:>8}" for k, v in sizes.items()]) + "\n",
    )
    ctx.write_lines("metrics.json-lines", [{"split": k, "count": v} for k, v in sizes.items()])
    ctx.finish()
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    dataset = load_dataset(args.data, schema=args.schema)
    report = validate_dataset(dataset)
    ctx.write_lines("metrics.json-lines", [report.to_dict()])
    lines = [
        f"records      {report.n_records}",
        f"duplicates   {report.duplicate_count}",
        f"entities     {report.n_entities}",
        f"predicates   {report.n_predicates}",
        f"pos_fraction {report.positive_fraction}",
        f"violations   {len(report.violations)}",
    ]
    ctx.write_text("metrics.txt", "\n".join(lines) + "\n")
    ctx.finish()
    print("\n".join(lines))
    return 0


def cmd_audit_cues(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    dataset = load_dataset(args.data, schema=args.schema)
    report = cue_audit(dataset, (args.ngram_min, args.ngram_max))
    report.write(ctx.out / "cues.json-lines")
    ctx.register_output("cues.json-lines")
    top = report.entries[:20]
    lines = [f"{'coverage':>10}  {'applicability':>13}  cue"] + [
        f"{e.coverage:>10.6f}  {e.applicability:>13d}  {e.cue}" for e in top
    ]
    ctx.write_text("metrics.txt", "\n".join(lines) + "\n")
    ctx.write_lines("metrics.json-lines", [e.to_record() for e in top])
    ctx.config.update({"ngram_range": [args.ngram_min, args.ngram_max]})
    ctx.finish()
    print(f"max coverage: {report.max_coverage():.6f} over {len(report.entries)} cues")
    return 0


def cmd_adversarial(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    ctx.add_input(args.pool)
    dataset = load_dataset(args.data, schema=args.schema)
    pool = [w for w in Path(args.pool).read_text(encoding="utf-8").splitlines() if w.strip()]
    report = cue_audit(dataset, (args.ngram_min, args.ngram_max))
    candidates = adversarial_candidates(
        dataset, report, args.top_percent, pool, seed_for(args.seed, "adversarial")
    )
    write_candidates(candidates, ctx.out / "candidates.json-lines")
    ctx.register_output("candidates.json-lines")
    ctx.write_text("metrics.txt", f"candidates {len(candidates)}\n")
    ctx.write_lines("metrics.json-lines", [{"candidates": len(candidates)}])
    ctx.config.update({"top_percent": args.top_percent})
    ctx.finish()
    print(f"proposed {len(candidates)} adversarial candidates (status=proposed; confirm before use)")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.train)
    ctx.add_input(args.dev)
    config = _train_config(args, ctx)
    backend = _make_backend(args, ctx)
    templates = _make_templates(args, ctx)
    schema = "original" if config.loss_mode == "original" else "simplified"
    train_set = load_dataset(args.train, schema=schema)
    dev_set = load_dataset(args.dev, schema="simplified")
    artifact = train(config, train_set, dev_set, backend, templates)
    artifact.save(ctx.out / "model")
    ctx.register_output("model")
    final = artifact.training_log[-1].get("final_dev") if artifact.training_log else None
    lines = [f"threshold  {artifact.threshold:.6f}", f"lambda     {artifact.lambda_value:.6f}"]
    if final:
        lines += [f"dev_f1     {final['f1']:.6f}", f"dev_auc    {final['auc']:.6f}"]
    ctx.write_text("metrics.txt", "\n".join(lines) + "\n")
    ctx.write_lines("metrics.json-lines", [e for e in artifact.training_log])
    ctx.finish()
    print("\n".join(lines))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    file_config = _load_config_file(args.config)
    config = _score_config(args, ctx, file_config)
    backend = _make_backend(args, ctx)
    templates = _make_templates(args, ctx)
    dataset = load_dataset(args.data, schema=args.schema)
    model = None
    threshold = args.threshold
    if args.model:
        model = ModelArtifact.load(args.model)
        for f in ("manifest.json", "weights.npz"):
            ctx.add_input(Path(args.model) / f)
        if threshold is None:
            threshold = model.threshold
    scores = _score_dataset(backend, dataset, model, _score_override(ctx, config, model), templates)
    records = []
    for rec, score in zip(dataset.records, scores):
        label = None if threshold is None else int(score.salience >= threshold)
        records.append(_echo_record(rec, score, label))
    ctx.write_lines("metrics.json-lines", records)
    shown = [f"{r['subject']} | {r['predicate']} | {r['object']} -> {r['salience']:.6f}" for r in records[:10]]
    ctx.write_text("metrics.txt", "\n".join([f"scored {len(records)} triples"] + shown) + "\n")
    ctx.finish()
    print(f"scored {len(records)} triples -> {ctx.out / 'metrics.json-lines'}")
    return 0


def cmd_threshold(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    file_config = _load_config_file(args.config)
    config = _score_config(args, ctx, file_config)
    backend = _make_backend(args, ctx)
    templates = _make_templates(args, ctx)
    dataset = load_dataset(args.data, schema="simplified")
    model = ModelArtifact.load(args.model) if args.model else None
    scores = _score_dataset(backend, dataset, model, _score_override(ctx, config, model), templates)
    values = [s.salience for s in scores]
    labels = [r.salient for r in dataset.records]
    theta = select_threshold(values, labels, method=args.method)
    report = classification_metrics(values, labels, theta)
    ctx.config.update({"method": args.method})
    ctx.write_text("metrics.txt", report.format_table() + "\n")
    ctx.write_lines("metrics.json-lines", [report.to_dict()])
    ctx.finish()
    print(report.format_table())
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    file_config = _load_config_file(args.config)
    config = _score_config(args, ctx, file_config)
    backend = _make_backend(args, ctx)
    templates = _make_templates(args, ctx)
    dataset = load_dataset(args.data, schema="simplified")
    model = None
    threshold = args.threshold
    if args.model:
        model = ModelArtifact.load(args.model)
        for f in ("manifest.json", "weights.npz"):
            ctx.add_input(Path(args.model) / f)
        if threshold is None:
            threshold = model.threshold
    scores = _score_dataset(backend, dataset, model, _score_override(ctx, config, model), templates)
    values = [s.salience for s in scores]
    labels = [r.salient for r in dataset.records]
    if threshold is None:
        threshold = select_threshold(values, labels)
        print("warning: no threshold given; selected one on the evaluation set itself", file=sys.stderr)
    report = classification_metrics(values, labels, threshold)
    per_instance = [
        _echo_record(rec, score, int(score.salience >= threshold))
        for rec, score in zip(dataset.records, scores)
    ]
    ctx.write_text("metrics.txt", report.format_table() + "\n")
    ctx.write_lines("metrics.json-lines", [report.to_dict()] + per_instance)
    ctx.finish()
    print(report.format_table())
    return 0


def cmd_ppref(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.pairs)
    file_config = _load_config_file(args.config)
    config = _score_config(args, ctx, file_config)
    backend = _make_backend(args, ctx)
    templates = _make_templates(args, ctx)
    registry = PredicateRegistry()
    pairs = []
    with Path(args.pairs).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                from .core import AnnotatedTriple

                better = AnnotatedTriple.from_record(obj["better"], registry).triple
                worse = AnnotatedTriple.from_record(obj["worse"], registry).triple
                pairs.append(PreferencePair(better, worse, obj.get("dimension", "salience")))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{args.pairs}:{lineno}: bad preference pair ({exc})") from exc
    model = ModelArtifact.load(args.model) if args.model else None
    triples = sorted({p.better for p in pairs} | {p.worse for p in pairs}, key=lambda t: t.key())
    result = score_batch(backend, triples, model=model, config=_score_override(ctx, config, model), templates=templates)
    table = {t.key(): s for t, s in zip(triples, result.scores) if s is not None}
    report = ppref_precision(table, pairs)
    lines = [
        f"ppref      {report.precision:.6f}",
        f"pairs      {report.pairs_evaluated}",
        f"excluded   {len(report.excluded)}",
    ]
    ctx.write_text("metrics.txt", "\n".join(lines) + "\n")
    ctx.write_lines(
        "metrics.json-lines",
        [{"ppref": report.precision, "pairs": report.pairs_evaluated, "excluded": len(report.excluded)}],
    )
    ctx.finish()
    print("\n".join(lines))
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.data)
    if args.what == "regression":
        dataset = load_dataset(args.data, schema="original")
        report = regression_fit(dataset)
        lines = [
            f"coef_sufficiency {report.coef_sufficiency:.6f}",
            f"coef_necessity   {report.coef_necessity:.6f}",
            f"intercept        {report.intercept:.6f}",
            f"r_squared        {report.r_squared:.6f}",
            f"f_pvalue         {report.f_pvalue:.6g}",
        ]
        ctx.write_lines("metrics.json-lines", [report.to_dict()])
    elif args.what == "kappa":
        dataset = load_dataset(args.data, schema="unlabeled")
        report = agreement_report(dataset)
        lines = [f"kappa_{dim} {value:.6f}" for dim, value in report.fleiss_kappa.items()]
        ctx.write_lines("metrics.json-lines", [{"fleiss_kappa": report.fleiss_kappa}])
    else:  # spearman
        xs, ys = [], []
        with Path(args.data).open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    xs.append(float(obj["x"]))
                    ys.append(float(obj["y"]))
        rho = spearman_rho(xs, ys)
        lines = [f"spearman_rho {rho:.6f}"]
        ctx.write_lines("metrics.json-lines", [{"spearman_rho": rho, "n": len(xs)}])
    ctx.write_text("metrics.txt", "\n".join(lines) + "\n")
    ctx.finish()
    print("\n".join(lines))
    return 0


def cmd_sweep_fraction(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    ctx.add_input(args.train)
    ctx.add_input(args.dev)
    ctx.add_input(args.test)
    base_config = _train_config(args, ctx)
    backend = _make_backend(args, ctx)
    templates = _make_templates(args, ctx)
    schema = "original" if base_config.loss_mode == "original" else "simplified"
    train_set = load_dataset(args.train, schema=schema)
    dev_set = load_dataset(args.dev, schema="simplified")
    test_set = load_dataset(args.test, schema="simplified")
    rows = []
    from dataclasses import replace as dc_replace

    for fraction in SWEEP_FRACTIONS:
        config = dc_replace(base_config, train_fraction=fraction)
        artifact = train(config, train_set, dev_set, backend, templates)
        scores = _score_dataset(backend, test_set, artifact, None, templates)
        values = [s.salience for s in scores]
        labels = [r.salient for r in test_set.records]
        report = classification_metrics(values, labels, artifact.threshold)
        rows.append(
            {"fraction": fraction, "f1": report.f1, "accuracy": report.accuracy, "auc": report.auc}
        )
    header = f"{'fraction':>9} {'f1':>9} {'accuracy':>9} {'auc':>9}"
    lines = [header] + [
        f"{r['fraction']:>9.1f} {r['f1']:>9.4f} {r['accuracy']:>9.4f} {r['auc']:>9.4f}" for r in rows
    ]
    ctx.write_text("metrics.txt", "\n".join(lines) + "\n")
    ctx.write_lines("metrics.json-lines", rows)
    ctx.finish()
    print("\n".join(lines))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    ctx = RunContext(args)
    backend = _make_backend(args, ctx)
    server = serve_backend(backend, host=args.host, port=args.port)
    ctx.write_text("metrics.txt", f"serving {backend.fingerprint()} at {server.endpoint}\n")
    ctx.finish()
    print(f"serving backend at {server.endpoint} (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", default=None, help="uniform | reference | remote:<address>")
    p.add_argument("--vocab-size", type=int, default=100, help="uniform backend vocabulary size")
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--layers", type=int, default=2, help="reference backend depth")
    p.add_argument("--backend-steps", type=int, default=500, help="reference backend pretraining steps")
    p.add_argument("--corpus", default=None, help="corpus file for the reference backend")
    p.add_argument("--template-file", default=None, help="predicate<TAB>pattern overrides")


def _add_score_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--mode", choices=("raw", "normalized"), default=None)
    p.add_argument("--denominator", choices=("paper", "standard"), default=None)
    p.add_argument("--clamp-epsilon", type=float, default=None)
    p.add_argument("--lambda-value", type=float, default=None)
    p.add_argument("--config", default=None, help="JSON config file (flags win)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss-mode", choices=("simplified", "original"), default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lambda-init", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--layout", default=None, help="prompt slots as pre,mid,post (default 3,4,5)")
    p.add_argument("--hidden-size", type=int, default=None)
    p.add_argument("--threshold-method", choices=("sweep", "bisection"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="salience", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("split", help="partition a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default="simplified")
    p.add_argument("--mode", choices=("random", "concept"), default="random")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--strictness", choices=("subject", "entity"), default="subject")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("validate", help="report duplicates and label distribution")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default="unlabeled")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("audit-cues", help="lexical cue applicability/coverage audit")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default="simplified")
    p.add_argument("--ngram-min", type=int, default=1)
    p.add_argument("--ngram-max", type=int, default=2)
    p.set_defaults(func=cmd_audit_cues)

    p = sub.add_parser("adversarial", help="propose label-inverting rewrites for top cues")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default="simplified")
    p.add_argument("--pool", required=True, help="file of replacement strings, one per line")
    p.add_argument("--top-percent", type=float, default=1.0)
    p.add_argument("--ngram-min", type=int, default=1)
    p.add_argument("--ngram-max", type=int, default=2)
    p.set_defaults(func=cmd_adversarial)

    p = sub.add_parser("train", help="fit prompt parameters and the mixing weight")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    _add_backend_flags(p)
    _add_score_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score triples (trained model or unsupervised)")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default="unlabeled")
    p.add_argument("--model", default=None, help="model artifact directory")
    p.add_argument("--threshold", type=float, default=None)
    _add_backend_flags(p)
    _add_score_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("threshold", help="select a decision threshold on labeled data")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--method", choices=("sweep", "bisection"), default="sweep")
    _add_backend_flags(p)
    _add_score_flags(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("eval", help="classification metrics on labeled data")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--threshold", type=float, default=None)
    _add_backend_flags(p)
    _add_score_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ppref", help="pairwise preference precision")
    common(p)
    p.add_argument("--pairs", required=True, help="JSON-lines of {better, worse, dimension}")
    p.add_argument("--model", default=None)
    _add_backend_flags(p)
    _add_score_flags(p)
    p.set_defaults(func=cmd_ppref)

    p = sub.add_parser("analyze", help="regression | kappa | spearman")
    common(p)
    p.add_argument("what", choices=("regression", "kappa", "spearman"))
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep-fraction", help="train at fractions 0.2..1.0 and tabulate metrics")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    _add_backend_flags(p)
    _add_score_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep_fraction)

    p = sub.add_parser("serve", help="serve a backend over the wire protocol")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8753)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SalienceError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
