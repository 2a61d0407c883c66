"""Command-line entry points.

Every command reads and writes the line-delimited JSON formats of
:mod:`gedkit.dataio`. Seeded commands write byte-identical files on reruns;
wall-clock times are only written when ``--record-time`` asks for them.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import dataio as D
from . import segcn as S
from .bipartite import bipartite_ged
from .graph import make_pair
from .matching import CandidateSet
from .metrics import NDIST, SIM, compute_metrics
from .model import GedModel, ModelConfig
from .refine import k_sweep, mata_star
from .search import SearchTimeout, astar_ged
from .trainer import Prediction, TrainConfig, evaluate_model, train

METHODS = ("exact", "beam", "hungarian", "vj", "mata")

GLOBAL_DEFAULTS = {
    "seed": 0,
    "timeout": 60.0,
    "k": 4,
    "beam_width": 5,
    "epsilon": None,
    "checkpoint": None,
    "format": "text",
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    def d(name):
        return argparse.SUPPRESS if suppress else GLOBAL_DEFAULTS[name]

    p.add_argument("--seed", type=int, default=d("seed"), help="random seed (default 0)")
    p.add_argument("--timeout", type=float, default=d("timeout"), help="per-pair search budget in seconds (default 60)")
    p.add_argument("--k", type=int, default=d("k"), help="candidates per source node (default 4)")
    p.add_argument("--beam-width", type=int, default=d("beam_width"), help="beam width (default 5)")
    p.add_argument("--epsilon", type=float, default=d("epsilon"), help="Sinkhorn entropy (default 0.05, or the checkpoint's)")
    p.add_argument("--checkpoint", default=d("checkpoint"), help="model checkpoint path")
    p.add_argument("--format", choices=("text", "json"), default=d("format"), help="stdout format")


def _emit(args, obj: dict, text: str | None = None) -> None:
    if args.format == "json" or text is None:
        print(json.dumps(obj, sort_keys=True))
    else:
        print(text)


def _load_model(args) -> GedModel:
    if not args.checkpoint:
        raise SystemExit("error: --checkpoint is required")
    model = GedModel.load(args.checkpoint)
    if args.epsilon is not None:
        model.cfg.epsilon = args.epsilon
    return model


def _selected(ds: D.Dataset, split: str | None) -> list[D.PairRecord]:
    return list(ds.pairs) if split in (None, "all") else ds.split(split)


# commands


def cmd_gen(args) -> None:
    num_pairs = args.pairs if args.pairs is not None else args.count * (args.count - 1) // 2
    ds = D.make_dataset(args.count, (args.min_nodes, args.max_nodes), args.density, args.labels, num_pairs, args.seed)
    ds.save(args.graphs_out, args.pairs_out)
    _emit(args, {"graphs": len(ds.graphs), "pairs": len(ds.pairs)}, f"wrote {len(ds.graphs)} graphs and {len(ds.pairs)} pairs")


def cmd_label(args) -> None:
    ds = D.Dataset.load(args.graphs, args.pairs)
    extra = {}
    if args.predictions:
        cands = {(p.g1, p.g2): p.candidates for p in map(Prediction.from_json, _lines(args.predictions))}

        # candidates are keyed by the pair file's (g1, g2) order
        def mata(pair):
            key = (pair.g2.id, pair.g1.id) if pair.swapped else (pair.g1.id, pair.g2.id)
            cand = cands.get(key)
            if cand is None:
                raise SearchTimeout("no candidates for this pair")
            return mata_star(pair, cand, timeout=args.timeout)

        extra["mata"] = mata
    labels = D.build_ground_truth(
        ds,
        args.exact_budget_nodes,
        time_budget=args.timeout,
        beam_width=args.beam_width,
        extra_methods=extra,
        previous=ds.pairs,
        workers=args.workers,
    )
    D.write_pairs(args.out, labels)
    counts = {}
    for r in labels:
        counts[r.tag] = counts.get(r.tag, 0) + 1
    _emit(args, {"pairs": len(labels), "producers": counts}, f"labelled {len(labels)} pairs: {counts}")


def cmd_train(args) -> None:
    ds = D.Dataset.load(args.graphs, args.pairs)
    if args.skip_inexact:
        kept = [r for r in ds.pairs if r.label is not None and (r.split != "train" or r.label.producer == D.EXACT)]
        logging.getLogger(__name__).info("training on %d of %d pairs", len(kept), len(ds.pairs))
        ds = D.Dataset(ds.graphs, kept)
    labels = sorted({lab for g in ds.graphs.values() for lab in g.nodes})
    if args.labels:
        labels = D.label_alphabet(args.labels)
    seg = S.SegcnConfig(labels=tuple(labels), hidden=args.hidden, layers=args.layers, walk_steps=args.walk_steps)
    mcfg = ModelConfig(seg, k=args.k, seed=args.seed)
    if args.epsilon is not None:
        mcfg.epsilon = args.epsilon
    tcfg = TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        seed=args.seed,
        val_interval=args.val_interval,
        pairs_per_epoch=args.pairs_per_epoch,
        max_val_pairs=args.max_val_pairs,
    )
    out = args.checkpoint or "model.json"
    try:
        res = train(ds, mcfg, tcfg, log_path=args.log)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    res.model.save(out)
    summary = {"checkpoint": out, "epochs": len(res.log), "best_epoch": res.best_epoch}
    _emit(args, summary, f"saved {out} (best epoch {res.best_epoch} of {len(res.log)})")


def cmd_infer(args) -> None:
    ds = D.Dataset.load(args.graphs, args.pairs)
    model = _load_model(args)
    preds = evaluate_model(model, ds, _selected(ds, args.split), args.k)
    Path(args.out).write_text("".join(json.dumps(p.to_json()) + "\n" for p in preds), encoding="utf-8")
    _emit(args, {"predictions": len(preds)}, f"wrote {len(preds)} predictions to {args.out}")


def _lines(path) -> list[dict]:
    return [json.loads(x) for x in Path(path).read_text(encoding="utf-8").splitlines() if x.strip()]


def _candidates_for(args, pair, model_cache: dict):
    """Candidate set for ``pair`` from ``--candidates`` or the checkpoint."""
    if args.candidates:
        table = model_cache.get("table")
        if table is None:
            table = {(o["g1"], o["g2"]): CandidateSet.from_json(o) for o in _lines(args.candidates)}
            model_cache["table"] = table
        key = (pair.g2.id, pair.g1.id) if pair.swapped else (pair.g1.id, pair.g2.id)
        cand = table.get(key) or table.get((pair.g1.id, pair.g2.id))
        if cand is None:
            raise SystemExit(f"error: no candidates for pair {key}")
        return cand
    model = model_cache.get("model")
    if model is None:
        model = model_cache["model"] = _load_model(args)
    return model.predict([pair], min(args.k, pair.n2))[0][1]


def _solve(args, pair, cache: dict):
    if args.method == "exact":
        return astar_ged(pair, timeout=args.timeout)
    if args.method == "beam":
        return astar_ged(pair, beam_width=args.beam_width, timeout=args.timeout)
    if args.method in ("hungarian", "vj"):
        return bipartite_ged(pair, args.method)
    cand = _candidates_for(args, pair, cache)
    return mata_star(pair, cand, min(args.k, cand.k), timeout=args.timeout)


def _result_json(g1_id, g2_id, pair, res, method, with_path: bool) -> dict:
    out = {
        "g1": g1_id,
        "g2": g2_id,
        "method": method,
        "ged": res.distance,
        "sim": res.normalized_similarity,
        "source": pair.g1.id,
        "matching": list(map(int, res.matching.assigned)),
        "expanded_states": res.expanded_states,
        "timed_out": res.timed_out,
    }
    if with_path:
        out["edit_path"] = [list(op) for op in res.edit_path(pair)]
    return out


def cmd_ged(args) -> None:
    graphs = {g.id: g for g in D.read_graphs(args.graphs)}
    cache: dict = {}
    if args.g1 is not None or args.g2 is not None:
        if args.g1 not in graphs or args.g2 not in graphs:
            raise SystemExit("error: --g1/--g2 must name graphs in --graphs")
        pair = make_pair(graphs[args.g1], graphs[args.g2])
        try:
            res = _solve(args, pair, cache)
        except SearchTimeout as exc:
            raise SystemExit(f"error: {exc}")
        out = _result_json(args.g1, args.g2, pair, res, args.method, True)
        text = f"{args.method}: ged={res.distance} sim={res.normalized_similarity:.6f}\nedit path ({len(out['edit_path'])} ops):"
        text += "".join(f"\n  {' '.join(map(str, op))}" for op in out["edit_path"])
        if args.out:
            Path(args.out).write_text(json.dumps(out, sort_keys=True) + "\n", encoding="utf-8")
        _emit(args, out, text)
        return
    if not args.pairs or not args.out:
        raise SystemExit("error: give --g1 and --g2, or --pairs and --out")
    ds = D.Dataset(graphs, D.read_pairs(args.pairs))
    lines = []
    failed = 0
    for r in _selected(ds, args.split):
        pair = ds.pair(r)
        start = time.perf_counter()
        try:
            res = _solve(args, pair, cache)
        except SearchTimeout:
            failed += 1
            lines.append({"g1": r.g1, "g2": r.g2, "method": args.method, "ged": None, "timed_out": True})
            continue
        obj = _result_json(r.g1, r.g2, pair, res, args.method, False)
        if args.record_time:
            obj["time"] = time.perf_counter() - start
        lines.append(obj)
    Path(args.out).write_text("".join(json.dumps(o, sort_keys=True) + "\n" for o in lines), encoding="utf-8")
    _emit(args, {"pairs": len(lines), "failed": failed}, f"solved {len(lines) - failed} of {len(lines)} pairs with {args.method}")


def cmd_sweep(args) -> None:
    graphs = {g.id: g for g in D.read_graphs(args.graphs)}
    pair = make_pair(graphs[args.g1], graphs[args.g2])
    ks = [int(x) for x in args.k_values.split(",")] if args.k_values else list(range(1, pair.n2 + 1))
    cache: dict = {}
    saved_k = args.k
    args.k = max(ks)
    cand = _candidates_for(args, pair, cache)
    args.k = saved_k
    points = k_sweep(pair, cand, ks, timeout=args.timeout)
    out = {"g1": args.g1, "g2": args.g2, "sweep": [{"k": p.k, "ged": p.distance, "expanded_states": p.expanded_states, "time": p.elapsed} for p in points]}
    text = "k  ged  expanded  time(s)\n" + "\n".join(f"{p.k:<2} {p.distance:<4} {p.expanded_states:<9} {p.elapsed:.4f}" for p in points)
    _emit(args, out, text)


def cmd_metrics(args) -> None:
    ds = D.Dataset.load(args.graphs, args.labels)
    truth = {(r.g1, r.g2): r for r in ds.pairs if r.label is not None}
    preds, true, sizes, queries, times = [], [], [], [], []
    missing = 0
    for obj in _lines(args.predictions):
        key = (obj["g1"], obj["g2"])
        rec = truth.get(key)
        if rec is None or obj.get("ged") is None:
            missing += 1
            continue
        pair = ds.pair(rec)
        preds.append(float(obj["ged"]))
        true.append(rec.label.ged)
        sizes.append((pair.n1, pair.n2))
        queries.append(obj["g1"] if args.query_by == "g1" else key)
        if "time" in obj:
            times.append(float(obj["time"]))
    report = compute_metrics(preds, true, sizes, queries, times if len(times) == len(preds) else None, args.error_scale)
    out = report.to_dict()
    out["unmatched_predictions"] = missing
    _emit(args, out, report.table())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gedkit", description="Graph edit distance toolkit")
    _add_globals(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_globals(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = command("gen", cmd_gen, "generate random graphs and pairs")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--min-nodes", type=int, default=4)
    p.add_argument("--max-nodes", type=int, default=8)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--labels", type=int, default=3, help="label alphabet size")
    p.add_argument("--pairs", type=int, default=None, help="number of pairs (default: all)")
    p.add_argument("--graphs-out", required=True)
    p.add_argument("--pairs-out", required=True)

    p = command("label", cmd_label, "build ground-truth labels")
    p.add_argument("--graphs", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exact-budget-nodes", type=int, default=10)
    p.add_argument("--predictions", help="candidate file from `infer`; adds MATA* to the best-of-methods pool")
    p.add_argument("--workers", type=int, default=1)

    p = command("train", cmd_train, "train the matching model")
    p.add_argument("--graphs", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--log", help="training log path (JSON lines)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--val-interval", type=int, default=1)
    p.add_argument("--pairs-per-epoch", type=int, default=None)
    p.add_argument("--max-val-pairs", type=int, default=None)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--walk-steps", type=int, default=16)
    p.add_argument("--labels", type=int, default=None, help="alphabet size (default: labels seen in the graphs)")
    p.add_argument("--skip-inexact", action="store_true", help="drop training pairs without an exact label")

    p = command("infer", cmd_infer, "emit candidates and predicted similarities")
    p.add_argument("--graphs", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--split", default="test", help="train|val|test|all (default test)")
    p.add_argument("--out", required=True)

    p = command("ged", cmd_ged, "solve one pair, or every pair of a split")
    p.add_argument("--graphs", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--g1")
    p.add_argument("--g2")
    p.add_argument("--pairs", help="pair file for batch mode")
    p.add_argument("--split", default="all")
    p.add_argument("--candidates", help="candidate file for --method mata (instead of --checkpoint)")
    p.add_argument("--out")
    p.add_argument("--record-time", action="store_true", help="add per-pair wall-clock time to batch output")

    p = command("sweep", cmd_sweep, "refinement distance as a function of k")
    p.add_argument("--graphs", required=True)
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--k-values", help="comma-separated (default 1..|V2|)")
    p.add_argument("--candidates")

    p = command("metrics", cmd_metrics, "score predictions against labels")
    p.add_argument("--graphs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--error-scale", choices=(SIM, NDIST), default=SIM)
    p.add_argument("--query-by", choices=("g1", "both"), default="both")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.k < 1 or args.beam_width < 1 or args.timeout <= 0:
        print("error: --k, --beam-width and --timeout must be positive", file=sys.stderr)
        return 2
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
