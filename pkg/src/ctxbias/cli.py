"""Command-line pipeline: train -> cluster -> bias-table -> make-lattices
-> decode -> eval, plus the bundled corpus generator.

Every command is deterministic for fixed inputs and seeds.  Artifacts
that depend on the vocabulary carry its checksum and loading refuses
mismatches; a manifest.json in each output directory records the sha256
of every written file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from ctxbias import bias, clustering, corpus, datagen, decode_sim, evaluation, ngram_lm
from ctxbias.errors import ConfigError

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _update_manifest(out_dir: Path, entries: dict[str, Path], config: dict) -> None:
    manifest_path = out_dir / "manifest.json"
    manifest = {}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    artifacts = manifest.setdefault("artifacts", {})
    for name, path in entries.items():
        artifacts[name] = {"path": str(path), "sha256": _sha256(path)}
    manifest.setdefault("configs", []).append(config)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def _load_vocab(path: Path) -> corpus.Vocabulary:
    with open(path, encoding="utf-8") as f:
        return corpus.read_vocab_tsv(f)


def cmd_gen_corpus(args) -> int:
    cfg = datagen.DeskCorpusConfig(
        train_sentences=args.train_sentences,
        test_utterances=args.test_utterances,
        seed=args.seed,
    )
    desk = datagen.generate_desk_corpus(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_path = out / "train.txt"
    refs_path = out / "test_refs.txt"
    train_path.write_text("\n".join(desk.train_lines) + "\n", encoding="utf-8")
    refs_path.write_text(
        "\n".join(" ".join(r) for r in desk.test_refs) + "\n", encoding="utf-8"
    )
    _update_manifest(
        out,
        {"train_corpus": train_path, "test_refs": refs_path},
        {"command": "gen-corpus", "seed": args.seed},
    )
    print(
        f"wrote {len(desk.train_lines)} training sentences, "
        f"{len(desk.test_refs)} test utterances "
        f"(recommended vocab size {desk.vocab_size})"
    )
    return 0


def cmd_train(args) -> int:
    corpus_path = Path(args.corpus)
    lines = _read_lines(corpus_path)
    vocab = corpus.build_vocab(corpus.iter_sentences(lines), args.max_vocab)
    counts = corpus.count_ngrams(corpus.iter_sentences(lines), vocab, args.order)
    model = ngram_lm.train_lm(counts, vocab, ngram_lm.TrainConfig(order=args.order))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab_path = out / "vocab.tsv"
    arpa_path = out / "lm.arpa"
    with open(vocab_path, "w", encoding="utf-8") as f:
        corpus.write_vocab_tsv(vocab, f)
    with open(arpa_path, "w", encoding="utf-8") as f:
        ngram_lm.write_arpa(model, f)
    _update_manifest(
        out,
        {"vocab": vocab_path, "arpa": arpa_path},
        {"command": "train", "order": args.order, "max_vocab": args.max_vocab,
         "corpus_sha256": _sha256(corpus_path)},
    )
    print(
        f"vocabulary: {len(vocab)} words; "
        f"n-grams: {len(counts.counts)}; LM entries: {len(model.logp)}"
    )
    return 0


def _cluster_artifacts(args):
    lines = _read_lines(Path(args.corpus))
    vocab = _load_vocab(Path(args.vocab))
    counts = corpus.count_ngrams(corpus.iter_sentences(lines), vocab, 2)
    assignment = clustering.brown_cluster(counts, vocab, args.classes)
    return vocab, assignment


def cmd_cluster(args) -> int:
    vocab, assignment = _cluster_artifacts(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    class_map_path = out / "class_map.tsv"
    with open(class_map_path, "w", encoding="utf-8") as f:
        clustering.write_class_map_tsv(assignment, vocab, f)
    _update_manifest(
        out,
        {"class_map": class_map_path},
        {"command": "cluster", "classes": args.classes},
    )
    print(f"clustered {len(assignment.class_of)} words into {args.classes} classes")
    return 0


def cmd_bias_table(args) -> int:
    vocab, assignment = _cluster_artifacts(args)
    table = bias.build_bias_table(assignment, vocab)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    class_map_path = out / "class_map.tsv"
    table_path = out / "bias_table.tsv"
    with open(class_map_path, "w", encoding="utf-8") as f:
        clustering.write_class_map_tsv(assignment, vocab, f)
    with open(table_path, "w", encoding="utf-8") as f:
        bias.write_bias_table_tsv(table, vocab, f)
    # The class LM itself is never persisted; the table is all decoding needs.
    _update_manifest(
        out,
        {"class_map": class_map_path, "bias_table": table_path},
        {"command": "bias-table", "classes": args.classes},
    )
    print(f"bias table: {len(table.base_bias)} entries, {args.classes} classes")
    return 0


def _noise_from_args(args, vocab) -> decode_sim.NoiseConfig:
    rare_rank = datagen.rare_rank_for(vocab.counts, args.rare_max_count)
    return decode_sim.NoiseConfig(
        confusers=args.confusers,
        gamma=args.gamma,
        truth_drop=args.truth_drop,
        d_max=args.d_max,
        seed=args.seed,
        rare_rank=rare_rank,
    )


def cmd_make_lattices(args) -> int:
    vocab = _load_vocab(Path(args.vocab))
    refs = [tuple(line.split()) for line in _read_lines(Path(args.refs)) if line.strip()]
    noise = _noise_from_args(args, vocab)
    lattices = [decode_sim.make_lattice(r, vocab, noise) for r in refs]
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        decode_sim.write_lattices_jsonl(lattices, f)
    _update_manifest(
        out_path.parent,
        {"lattices": out_path},
        {"command": "make-lattices", "gamma": args.gamma, "confusers": args.confusers,
         "truth_drop": args.truth_drop, "seed": args.seed},
    )
    print(f"wrote {len(lattices)} lattices")
    return 0


def cmd_decode(args) -> int:
    vocab = _load_vocab(Path(args.vocab))
    with open(args.arpa, encoding="utf-8") as f:
        model = ngram_lm.read_arpa(f, vocab)
    with open(args.lattices, encoding="utf-8") as f:
        noise = decode_sim.NoiseConfig(gamma=args.gamma, d_max=args.d_max)
        lattices = decode_sim.read_lattices_jsonl(f, noise)

    phrases: list[str] = []
    if args.context:
        phrases = [l for l in _read_lines(Path(args.context)) if l.strip()]
    if phrases and not args.bias_table:
        raise ConfigError("--context requires --bias-table")

    if args.bias_table:
        with open(args.bias_table, encoding="utf-8") as f:
            table = bias.read_bias_table_tsv(f, vocab)
        ctx = bias.compile_context(phrases, vocab, args.scheme)
        cfg = bias.BiasConfig(lam=getattr(args, "lambda"), alpha=args.alpha)
        scorer = decode_sim.Scorer(model, table, ctx, cfg)
        lattices = [decode_sim.inject_context_arcs(lat, ctx) for lat in lattices]
    else:
        scorer = decode_sim.PlainScorer(model)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for lat in lattices:
            hyp = decode_sim.beam_decode(lat, scorer, args.beam)
            f.write(
                json.dumps({"tokens": list(hyp.tokens), "score": hyp.total_score})
                + "\n"
            )
    _update_manifest(
        out_path.parent,
        {"hypotheses": out_path},
        {"command": "decode", "scheme": args.scheme,
         "lambda": getattr(args, "lambda"), "alpha": args.alpha, "beam": args.beam},
    )
    print(f"decoded {len(lattices)} utterances")
    return 0


def cmd_eval(args) -> int:
    with open(args.config, "rb") as f:
        raw = tomllib.load(f)
    paths = raw.get("paths", {})
    exp = raw.get("experiment", {})
    noise_cfg = raw.get("noise", {})
    base = Path(args.config).parent

    def p(key: str) -> Path:
        if key not in paths:
            raise ConfigError(f"missing [paths].{key} in experiment config")
        path = base / paths[key]
        if not path.exists():
            raise ConfigError(f"[paths].{key} = {path} does not exist")
        return path

    vocab = _load_vocab(p("vocab"))
    with open(p("arpa"), encoding="utf-8") as f:
        model = ngram_lm.read_arpa(f, vocab)
    with open(p("bias_table"), encoding="utf-8") as f:
        table = bias.read_bias_table_tsv(f, vocab)
    lines = _read_lines(p("corpus"))
    counts = corpus.count_ngrams(corpus.iter_sentences(lines), vocab, 1)
    refs = tuple(
        tuple(line.split()) for line in _read_lines(p("test_refs")) if line.strip()
    )
    rare_rank = datagen.rare_rank_for(vocab.counts, noise_cfg.get("rare_max_count", 5))
    noise = decode_sim.NoiseConfig(
        confusers=noise_cfg.get("confusers", 4),
        gamma=noise_cfg.get("gamma", 2.0),
        truth_drop=noise_cfg.get("truth_drop", 0.3),
        d_max=noise_cfg.get("d_max", 2),
        seed=noise_cfg.get("seed", 0),
        rare_rank=rare_rank,
    )
    art = evaluation.Artifacts(
        vocab=vocab, model=model, counts=counts, bias_table=table,
        test_refs=refs, noise=noise,
    )
    cfg = evaluation.ExperimentConfig(
        condition=exp.get("condition", "baseline"),
        scheme=exp.get("scheme", "expansion"),
        lambdas=tuple(exp.get("lambdas", [1.0])),
        alphas=tuple(exp.get("alphas", [0.0])),
        num_distractors=exp.get("num_distractors", 0),
        adversarial_pool=exp.get("adversarial_pool", 100),
        adversarial_n=exp.get("adversarial_n", 50),
        subset=exp.get("subset", "with-error"),
        beam=exp.get("beam", 8),
        max_phrase_len=exp.get("max_phrase_len", 3),
        seed=exp.get("seed", 0),
    )
    report = evaluation.run_experiment(art, cfg)

    out_dir = base / paths.get("out_dir", "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    csv_path = out_dir / "grid.csv"
    heatmap_path = out_dir / "grid.png"
    curves_path = out_dir / "curves.png"
    with open(report_path, "w", encoding="utf-8") as f:
        evaluation.write_report_json(report, f)
    from ctxbias import plots

    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        plots.write_grid_csv(report, f)
    plots.render_grid_figure(report, str(heatmap_path))
    plots.render_lambda_curves(report, str(curves_path))
    _update_manifest(
        out_dir,
        {"report": report_path, "grid_csv": csv_path,
         "grid_png": heatmap_path, "curves_png": curves_path},
        {"command": "eval", "experiment": exp},
    )
    print(
        f"condition={report.condition} scheme={report.scheme} "
        f"baseline_wer={report.baseline.wer:.4f} "
        f"best_wer={min(c.aggregate.wer for c in report.cells):.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxbias",
        description="Contextual biasing pipeline: train, cluster, bias, decode, eval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="generate the synthetic desk corpus")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--train-sentences", type=int, default=50_000)
    g.add_argument("--test-utterances", type=int, default=500)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(func=cmd_gen_corpus)

    t = sub.add_parser("train", help="build vocabulary and back-off LM")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--order", type=int, default=4)
    t.add_argument("--max-vocab", type=int, default=400_000)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("cluster", help="Brown-cluster the vocabulary")
    c.add_argument("--corpus", required=True)
    c.add_argument("--vocab", required=True)
    c.add_argument("--classes", type=int, required=True)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_cluster)

    b = sub.add_parser("bias-table", help="cluster and freeze the bias table")
    b.add_argument("--corpus", required=True)
    b.add_argument("--vocab", required=True)
    b.add_argument("--classes", type=int, required=True)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_bias_table)

    m = sub.add_parser("make-lattices", help="simulate the acoustic channel")
    m.add_argument("--refs", required=True)
    m.add_argument("--vocab", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--gamma", type=float, default=2.0)
    m.add_argument("--confusers", type=int, default=4)
    m.add_argument("--truth-drop", type=float, default=0.3)
    m.add_argument("--d-max", type=int, default=2)
    m.add_argument("--rare-max-count", type=int, default=5)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_make_lattices)

    d = sub.add_parser("decode", help="beam-decode lattices with optional context")
    d.add_argument("--lattices", required=True)
    d.add_argument("--vocab", required=True)
    d.add_argument("--arpa", required=True)
    d.add_argument("--bias-table")
    d.add_argument("--context", help="context phrase file, one phrase per line")
    d.add_argument("--scheme", choices=list(bias.SCHEMES), default=bias.EXPANSION)
    d.add_argument("--lambda", dest="lambda", type=float, default=1.0)
    d.add_argument("--alpha", type=float, default=0.0)
    d.add_argument("--beam", type=int, default=8)
    d.add_argument("--gamma", type=float, default=2.0)
    d.add_argument("--d-max", type=int, default=2)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="run one evaluation protocol from a config file")
    e.add_argument("--config", required=True, help="TOML experiment descriptor")
    e.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        print(f"ctxbias: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
