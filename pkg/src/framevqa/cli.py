"""Command-line pipeline: templates, realize, stats, train, predict, evaluate, consistency, report."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import consistency as cons
from . import metrics, model, stats, taxonomy, templates
from .frames import load_frameset
from .realize import Dataset, build_dataset, iter_annotations, load_splits

log = logging.getLogger("framevqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# argument dests that name files which must exist before anything runs
INPUT_ARGS = ("schema", "lexicon", "annotations", "splits", "dataset", "features", "checkpoint",
              "predictions", "compare", "taxonomy", "synonyms", "train", "data", "index")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- output helpers

def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _kv_table(rows, headers=("metric", "value")) -> str:
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def _kv_csv(rows, headers=("metric", "value")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    w.writerows(rows)
    return buf.getvalue()


def _emit(args, payload: dict, table: str, csv_text: str | None = None):
    if getattr(args, "json", None):
        Path(args.json).write_text(_dump_json(payload), encoding="utf-8")
    fmt = getattr(args, "format", "table")
    if fmt == "json":
        sys.stdout.write(_dump_json(payload))
    elif fmt == "csv":
        sys.stdout.write(csv_text if csv_text is not None else table)
    else:
        sys.stdout.write(table)


def _fmt_pct(x: float) -> str:
    return f"{x:.2f}"


# ---------------------------------------------------------------- loaders

def _lexicon(args):
    if getattr(args, "lexicon", None):
        return templates.load_lexicon(args.lexicon, templates.DEFAULT_LEXICON)
    return dict(templates.DEFAULT_LEXICON)


def _feature_store(args, config_seed: int, d_img: int):
    if getattr(args, "features", None):
        return model.FeatureStore.load_jsonl(args.features)
    return model.FeatureStore(dim=d_img, synthetic_seed=config_seed)


def _taxonomy(args):
    if getattr(args, "taxonomy", None):
        return taxonomy.load_taxonomy(args.taxonomy, getattr(args, "synonyms", None))
    return None


def _realize(args) -> Dataset:
    frames = load_frameset(args.schema)
    tpl = templates.generate_all(frames, _lexicon(args), args.max_context)
    ds = build_dataset(iter_annotations(args.annotations), tpl, frames, load_splits(args.splits),
                       dedup=not getattr(args, "no_dedup", False))
    log.info("realized %d samples (%d duplicates removed)", len(ds.samples), ds.duplicates_removed)
    return ds


def _train_config(args, single_task: bool | None = None) -> model.TrainConfig:
    return model.TrainConfig(
        batch_size=args.batch, epochs=args.epochs, seed=args.seed,
        d_w=args.d_w, d_h=args.d_h, d_img=args.d_img, loss_mode=args.mode, lr=args.lr,
        single_task=args.single_task if single_task is None else single_task,
    )


# ---------------------------------------------------------------- subcommands

def cmd_templates(args):
    frames = load_frameset(args.schema)
    tpl = templates.generate_all(frames, _lexicon(args), args.max_context)
    flat = [t for ts in tpl.values() for t in ts]
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        templates.write_templates(flat, out)
    finally:
        if args.out:
            out.close()
    n_verbs = len(tpl)
    print(f"templates: {len(flat)} over {n_verbs} verbs ({len(flat) / n_verbs:.2f} per verb); "
          f"distinct surfaces: {templates.distinct_surface_count(flat)}", file=sys.stderr)


def cmd_realize(args):
    ds = _realize(args)
    with open(args.out, "w", encoding="utf-8") as fh:
        ds.write_jsonl(fh)
    counts = {s: len(ds.split(s)) for s in ("train", "dev", "test")}
    print(f"samples: {len(ds.samples)} {counts}; duplicates removed: {ds.duplicates_removed}", file=sys.stderr)


def cmd_stats(args):
    ds = Dataset.read_jsonl(args.dataset)
    report = stats.compute_stats(ds.samples, args.split)
    _emit(args, report.to_json(args.top), stats.format_table(report, args.top) + "\n", stats.to_csv(report))


def cmd_train(args):
    ds = Dataset.read_jsonl(args.dataset)
    config = _train_config(args)
    feats = _feature_store(args, config.seed, config.d_img)
    if feats.dim != config.d_img:
        config.d_img = feats.dim
    m, history = model.train(ds, config, feats, on_epoch=lambda r: log.info("epoch %(epoch)d loss %(loss).4f "
                                                                            "answer %(answer_acc).2f element %(element_acc).2f", r))
    model.save_checkpoint(m, args.out)
    if args.history:
        Path(args.history).write_text(_dump_json(history), encoding="utf-8")
    last = history[-1]
    _emit(args, {"config": asdict(config), "final": last},
          _kv_table([(k, f"{v:.4f}" if isinstance(v, float) else v) for k, v in last.items()]))


def cmd_predict(args):
    ds = Dataset.read_jsonl(args.dataset)
    samples = ds.split(args.split)
    if args.baseline:
        train = ds.split("train")
        if args.baseline == "prior":
            answer = model.prior_baseline(train)
            preds = model.baseline_predictions(samples, lambda s: answer)
        else:
            fallback = model.prior_baseline(train)
            per_verb = model.per_verb_prior(train)
            preds = model.baseline_predictions(samples, lambda s: per_verb.get(s.verb_id, fallback))
    else:
        if not args.checkpoint:
            raise UsageError("predict: --checkpoint or --baseline is required")
        m = model.load_checkpoint(args.checkpoint)
        feats = _feature_store(args, m.config.seed, m.config.d_img)
        preds = model.predict(samples, m, None, feats)
    with open(args.out, "w", encoding="utf-8") as fh:
        metrics.write_predictions(preds, fh)
    print(f"predictions: {len(preds)} for split {args.split}", file=sys.stderr)


def evaluate_predictions(gold, preds, tax, threshold, mode, compare=None, breakdowns=()):
    pairs = metrics.align(preds, gold)
    result = {
        "n": len(gold),
        "accuracy": metrics.accuracy(preds, gold),
        "wups_threshold": threshold,
        "wups_mode": mode,
        "wups": taxonomy.wups([g.answer for _, g in pairs], [p.predicted_answer for p, _ in pairs], tax, threshold, mode),
    }
    for key in breakdowns:
        result[f"by_{key}"] = metrics.breakdown(preds, gold, key)
    if compare is not None:
        base = metrics.correct_counts(compare, gold)
        ours = metrics.correct_counts(preds, gold)
        table = (base, ours)
        result["comparison"] = {
            "table": [list(base), list(ours)],
            "chi_square_yates": metrics.chi_square_2x2(table, yates=True),
            "chi_square": metrics.chi_square_2x2(table, yates=False),
            "critical_value_p01": metrics.CHI2_CRITICAL_1DOF_001,
            "baseline_accuracy": metrics.accuracy(compare, gold),
        }
        for key in breakdowns:
            if key in ("verb", "element"):
                result["comparison"][f"difference_histogram_{key}"] = metrics.difference_histogram(
                    metrics.breakdown(compare, gold, key), result[f"by_{key}"])
    return result


def _evaluate_table(result) -> str:
    t = result["wups_threshold"]
    label = f"WUPS at {t:g} (%)" if t is not None else "WUPS (%)"
    out = _kv_table([("predictions", _fmt_pct(result["accuracy"]), _fmt_pct(result["wups"]))],
                    ("", "Accuracy (%)", label))
    for key in ("wh", "verb", "element"):
        if f"by_{key}" in result:
            out += "\n" + _kv_table([(g, _fmt_pct(a)) for g, a in result[f"by_{key}"].items()], (key, "accuracy"))
    comp = result.get("comparison")
    if comp:
        (a, b), (c, d) = comp["table"]
        out += "\n" + _kv_table([("baseline", a, b), ("predictions", c, d)], ("", "Correct", "Incorrect"))
        out += (f"chi-square (Yates) {comp['chi_square_yates']:.4f}; uncorrected {comp['chi_square']:.4f}; "
                f"critical value at p=0.01: {comp['critical_value_p01']}\n")
        for key in ("verb", "element"):
            hist = comp.get(f"difference_histogram_{key}")
            if hist:
                out += "\n" + _kv_table([(k, v) for k, v in hist.items() if v], ("difference", key))
    return out


def cmd_evaluate(args):
    ds = Dataset.read_jsonl(args.dataset)
    gold = ds.split(args.split)
    preds = metrics.read_predictions(args.predictions)
    compare = metrics.read_predictions(args.compare) if args.compare else None
    breakdowns = [k for k in (args.breakdown or "").split(",") if k]
    for k in breakdowns:
        if k not in metrics.GROUP_KEYS:
            raise UsageError(f"evaluate: unknown breakdown key {k!r}")
    result = evaluate_predictions(gold, preds, _taxonomy(args), args.wups_threshold, args.wups_mode,
                                  compare, breakdowns)
    rows = [("accuracy", result["accuracy"]), ("wups", result["wups"])]
    _emit(args, result, _evaluate_table(result), _kv_csv(rows))


def cmd_consistency(args):
    ds = Dataset.read_jsonl(args.train)
    idx = cons.build_index(ds.split("train"))
    if args.export_index:
        with open(args.export_index, "w", encoding="utf-8") as fh:
            cons.write_index(idx, fh)
    payload = {"pairs": len(idx.pairs), "answers": len(idx.per_answer)}
    rows = [("pairs", len(idx.pairs)), ("answers", len(idx.per_answer))]
    if args.predictions:
        preds = metrics.read_predictions(args.predictions)
        fallback = {s.sample_id: s.frame_element for s in ds.samples}
        payload["consistency_rate"] = cons.consistency_rate(preds, idx, fallback)
        payload["element_source"] = "predicted" if all(p.predicted_element for p in preds) else "template target"
        rows.append(("consistency (%)", _fmt_pct(payload["consistency_rate"])))
    if args.answers:
        counts = {a: cons.distinct_element_count(a, idx) for a in args.answers.split(",")}
        payload["distinct_elements"] = counts
        rows += [(f"distinct elements: {a}", n) for a, n in counts.items()]
    _emit(args, payload, _kv_table(rows), _kv_csv(rows))


def cmd_report(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = _realize(args)
    with open(out_dir / "dataset.jsonl", "w", encoding="utf-8") as fh:
        ds.write_jsonl(fh)
    train, test = ds.split("train"), ds.split(args.split)
    if not test:
        raise ValueError(f"split {args.split!r} is empty")
    train_stats = stats.compute_stats(train)
    (out_dir / "stats.json").write_text(_dump_json(train_stats.to_json(10)), encoding="utf-8")

    tax = _taxonomy(args)
    idx = cons.build_index(train)
    fallback = {s.sample_id: s.frame_element for s in ds.samples}
    systems = {}
    prior = model.prior_baseline(train)
    per_verb = model.per_verb_prior(train)
    systems["prior"] = model.baseline_predictions(test, lambda s: prior)
    systems["per verb prior"] = model.baseline_predictions(test, lambda s: per_verb.get(s.verb_id, prior))
    for name, single in (("single-task", True), ("multi-task", False)):
        config = _train_config(args, single_task=single)
        feats = _feature_store(args, config.seed, config.d_img)
        config.d_img = feats.dim
        m, history = model.train(ds, config, feats)
        (out_dir / f"history_{name}.json").write_text(_dump_json(history), encoding="utf-8")
        systems[name] = model.predict(test, m, None, feats)

    rows, payload = [], {"systems": {}, "prior_answer": prior}
    for name, preds in systems.items():
        slug = name.replace(" ", "_")
        with open(out_dir / f"predictions_{slug}.jsonl", "w", encoding="utf-8") as fh:
            metrics.write_predictions(preds, fh)
        acc = metrics.accuracy(preds, test)
        w = taxonomy.wups([g.answer for g in test], [p.predicted_answer for p in preds], tax,
                          args.wups_threshold, args.wups_mode)
        rate = cons.consistency_rate(preds, idx, fallback)
        payload["systems"][name] = {"accuracy": acc, "wups": w, "consistency": rate}
        rows.append((name, _fmt_pct(acc), _fmt_pct(w), _fmt_pct(rate)))
    table = (metrics.correct_counts(systems["single-task"], test), metrics.correct_counts(systems["multi-task"], test))
    try:
        chi = metrics.chi_square_2x2(table, yates=True)
    except metrics.DegenerateTable:
        chi = None
    payload["chi_square"] = {"table": [list(r) for r in table], "yates": chi,
                             "critical_value_p01": metrics.CHI2_CRITICAL_1DOF_001}
    text = _kv_table(rows, ("", "Accuracy (%)", f"WUPS at {args.wups_threshold:g} (%)", "Consistency (%)"))
    text += "\n" + _kv_table([("single-task", *table[0]), ("multi-task", *table[1])], ("", "Correct", "Incorrect"))
    text += f"chi-square (Yates): {'n/a' if chi is None else f'{chi:.4f}'}\n"
    (out_dir / "report.json").write_text(_dump_json(payload), encoding="utf-8")
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    _emit(args, payload, text, _kv_csv(rows, ("system", "accuracy", "wups", "consistency")))


def cmd_convert_wordnet(args):
    with open(args.data, encoding="utf-8") as fh:
        data_lines = fh.readlines()
    index_lines = None
    if args.index:
        with open(args.index, encoding="utf-8") as fh:
            index_lines = fh.readlines()
    edges, synonyms = taxonomy.parse_wordnet_data(data_lines, index_lines)
    with open(args.edges, "w", encoding="utf-8") as fh:
        fh.writelines(f"{c}\t{p}\n" for c, p in edges)
    with open(args.synonyms_out, "w", encoding="utf-8") as fh:
        fh.writelines(f"{s}\t{n}\n" for s, n in sorted(synonyms.items()))
    print(f"edges: {len(edges)}; synonyms: {len(synonyms)}", file=sys.stderr)


# ---------------------------------------------------------------- parser

def _add_format(p):
    p.add_argument("--format", choices=("table", "json", "csv"), default="table", help="stdout format")
    p.add_argument("--json", metavar="PATH", help="also write the JSON report here")


def _add_realize_inputs(p):
    p.add_argument("--schema", required=True, help="verb schema JSON")
    p.add_argument("--lexicon", help="element -> wh-word JSON (defaults built in)")
    p.add_argument("--annotations", required=True, help="annotation JSON-lines")
    p.add_argument("--splits", required=True, help="image split JSON-lines")
    p.add_argument("--max-context", type=int, default=None, help="largest context subset per template")


def _add_train_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--features", help="image feature JSON-lines (header record holds dim)")
    g.add_argument("--synthetic-features", action="store_true", help="hash-derived stand-in features (default)")
    p.add_argument("--mode", choices=("sum", "average"), default="sum", help="loss combination")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--d-w", type=int, default=32)
    p.add_argument("--d-h", type=int, default=64)
    p.add_argument("--d-img", type=int, default=64)


def _add_wups(p):
    p.add_argument("--taxonomy", help="TSV edge list child<TAB>parent")
    p.add_argument("--synonyms", help="TSV surface<TAB>node")
    p.add_argument("--wups-threshold", type=float, default=0.9)
    p.add_argument("--wups-mode", choices=("binary", "downweight"), default="binary")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="framevqa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("templates", help="generate question templates")
    p.add_argument("--schema", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--max-context", type=int, default=None)
    p.add_argument("--out", help="JSON-lines output (default stdout)")
    p.set_defaults(func=cmd_templates)

    p = sub.add_parser("realize", help="build the QA dataset")
    _add_realize_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-dedup", action="store_true", help="keep duplicate (image, question, answer) triples")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("stats", help="dataset distributions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--top", type=int, default=10)
    _add_format(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the two-head classifier")
    p.add_argument("--dataset", required=True)
    _add_train_flags(p)
    p.add_argument("--single-task", action="store_true", help="disable the frame-element head")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-epoch history JSON")
    _add_format(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict answers for a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", choices=("prior", "per-verb"))
    p.add_argument("--features")
    p.add_argument("--synthetic-features", action="store_true")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy, WUPS, breakdowns, chi-square")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--compare", help="baseline predictions for the 2x2 chi-square test")
    p.add_argument("--split", default="test")
    p.add_argument("--breakdown", help="comma list of wh,verb,element")
    _add_wups(p)
    _add_format(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("consistency", help="answer / frame-element consistency")
    p.add_argument("--train", required=True, help="dataset JSON-lines; its train split builds the index")
    p.add_argument("--predictions")
    p.add_argument("--export-index", help="write {answer: [elements]} JSON")
    p.add_argument("--answers", help="comma list of answers to count distinct elements for")
    _add_format(p)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("report", help="realize, train both models, evaluate and check consistency")
    _add_realize_inputs(p)
    _add_train_flags(p)
    _add_wups(p)
    p.add_argument("--split", default="test")
    p.add_argument("--out-dir", required=True)
    _add_format(p)
    p.set_defaults(func=cmd_report, single_task=False)

    p = sub.add_parser("convert-wordnet", help="WordNet data.noun -> edge list + synonyms TSV")
    p.add_argument("--data", required=True)
    p.add_argument("--index")
    p.add_argument("--edges", required=True)
    p.add_argument("--synonyms-out", required=True)
    p.set_defaults(func=cmd_convert_wordnet)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    for name in INPUT_ARGS:
        path = getattr(args, name, None)
        if isinstance(path, str) and not Path(path).is_file():
            print(f"error: --{name.replace('_', '-')}: no such file {path}", file=sys.stderr)
            return EXIT_DATA
    try:
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
