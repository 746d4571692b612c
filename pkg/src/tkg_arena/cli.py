"""Command-line interface: ingest, serve, rollout, filter, eval, bench.

Exit codes: 0 success, 2 usage errors (argparse), 3 input/validation
errors (one-line diagnostic on stderr), 4 runtime failures.  TKG_ARENA_PORT,
TKG_ARENA_STORE, and TKG_ARENA_SCORER provide defaults for serve.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import statistics
import sys
import time
from pathlib import Path

from .environment import EpisodeConfig
from .evaluation import (
    EvalError,
    ReportFormat,
    evaluate,
    load_predictions,
    load_samples,
    render_report,
)
from .pipeline import PipelineError, export_sft, filter_trajectories
from .policies import RandomPolicy, ReplayPolicy, RolloutError, load_replay_turns, run_rollout
from .protocol import trajectory_from_dict
from .retriever import RetrievalError, ScorerSpec, retrieve_topk
from .rewards import RewardConfig
from .service import ArenaService, serve
from .store import FactFormat, FactStore, LoadError, WindowMode, load_facts, load_store, save_store
from .temporal import TimeInterval, TimeStamp

EXIT_OK = 0
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _fail(message: str, code: int = EXIT_DATA) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_store_file(path: str) -> FactStore:
    return load_store(path)


def cmd_ingest(args: argparse.Namespace) -> int:
    fact_format = FactFormat.QUAD_TSV if args.format == "quad" else FactFormat.QUINT_TSV
    try:
        store = load_facts(args.facts, fact_format)
    except (LoadError, OSError) as exc:
        return _fail(str(exc))
    try:
        save_store(store, args.out)
    except OSError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    print(f"ingested {len(store)} facts -> {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        store = _load_store_file(args.store)
        samples = {}
        if args.samples:
            samples = {s.qid: s for s in load_samples(args.samples)}
        scorer = ScorerSpec.parse(args.scorer)
    except (LoadError, EvalError, ValueError, OSError) as exc:
        return _fail(str(exc))
    config = EpisodeConfig(scorer=scorer, reward_config=RewardConfig())
    service = ArenaService(store, samples=samples, episode_config=config, ttl=args.ttl)
    server = serve(service, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(
        f"serving {len(store)} facts on http://{host}:{port}/v1 (scorer={args.scorer})",
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _parse_policy(text: str, store: FactStore, seed: int):
    if text == "random":
        return RandomPolicy(store, seed=seed)
    if text.startswith("replay:"):
        return ReplayPolicy(load_replay_turns(text[len("replay:"):]))
    raise RolloutError(f"unknown policy {text!r} (expected replay:PATH or random)")


def cmd_rollout(args: argparse.Namespace) -> int:
    from .environment import transcript_to_dict

    try:
        store = _load_store_file(args.store)
        samples = load_samples(args.samples)
        policy = _parse_policy(args.policy, store, args.seed)
        scorer = ScorerSpec.parse(args.scorer)
        config = EpisodeConfig(scorer=scorer)
        episodes = run_rollout(store, samples, policy, config)
    except (LoadError, EvalError, RolloutError, ValueError, OSError) as exc:
        return _fail(str(exc))
    except RetrievalError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            for episode in episodes:
                fh.write(json.dumps(transcript_to_dict(episode), ensure_ascii=False) + "\n")
    except OSError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    mean_reward = (
        sum(e.reward.r_all for e in episodes) / len(episodes) if episodes else 0.0
    )
    answered = sum(1 for e in episodes if e.status.value == "answered")
    print(
        f"rolled out {len(episodes)} episodes ({answered} answered, "
        f"mean r_all {mean_reward:.4f}) -> {args.out}"
    )
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    try:
        gold = {s.qid: s for s in load_samples(args.gold)}
        episodes = []
        with open(args.episodes, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    episodes.append(trajectory_from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise PipelineError(f"{args.episodes}: line {line_no}: {exc}") from exc
        kept, stats = filter_trajectories(episodes, gold)
        written = export_sft(kept, args.out, gold)
    except (PipelineError, EvalError, LoadError, OSError) as exc:
        return _fail(str(exc))
    print(f"kept {written}/{stats.total} episodes -> {args.out}")
    print(f"rejected: format {stats.rejected_format}, answer {stats.rejected_answer}")
    for qtype in sorted(stats.per_type):
        row = stats.per_type[qtype]
        print(
            f"  {qtype}: total {row['total']}, kept {row['kept']}, "
            f"rejected_format {row['rejected_format']}, rejected_answer {row['rejected_answer']}"
        )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        predictions = load_predictions(args.predictions)
        samples = load_samples(args.samples)
        report = evaluate(predictions, samples)
    except (EvalError, OSError) as exc:
        return _fail(str(exc))
    fmt = ReportFormat.TSV if args.format == "tsv" else ReportFormat.MARKDOWN
    rendered = render_report(report, fmt)
    if args.out:
        try:
            Path(args.out).write_text(rendered, encoding="utf-8")
        except OSError as exc:
            return _fail(str(exc), EXIT_RUNTIME)
    else:
        sys.stdout.write(rendered)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        store = _load_store_file(args.store)
    except (LoadError, OSError) as exc:
        return _fail(str(exc))
    if len(store) == 0:
        return _fail("store is empty, nothing to benchmark")
    rng = random.Random(args.seed)
    policy = RandomPolicy(store, seed=args.seed)
    scorer = ScorerSpec()
    modes = [None, *WindowMode]
    years = sorted({f.interval.start.year for f in store.facts[:5000]})

    def random_constraint():
        mode = rng.choice(modes)
        if mode is None:
            return None
        year = rng.choice(years)
        if rng.random() < 0.5:
            window = TimeStamp(year).interval()
        else:
            month = rng.randint(1, 12)
            window = TimeStamp(year, month).interval()
        if mode is WindowMode.CONTAINED:
            window = TimeInterval.spanning(TimeStamp(year), TimeStamp(min(year + 3, 9999)))
        return mode, window

    queries = [(policy.random_query(), random_constraint()) for _ in range(args.queries)]
    for query, constraint in queries[: min(10, len(queries))]:  # warm-up
        retrieve_topk(store, scorer, query, constraint, args.k)
    timings = []
    for query, constraint in queries:
        t0 = time.perf_counter()
        retrieve_topk(store, scorer, query, constraint, args.k)
        timings.append((time.perf_counter() - t0) * 1000.0)
    timings.sort()
    p50 = statistics.median(timings)
    p95 = timings[min(len(timings) - 1, int(0.95 * len(timings)))]
    print(
        f"bench: {len(store)} facts, {args.queries} queries, top-{args.k}: "
        f"p50 {p50:.2f} ms, p95 {p95:.2f} ms, max {timings[-1]:.2f} ms"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tkg-arena",
        description="Temporal knowledge-graph interaction environment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a fact TSV and write a store file")
    p.add_argument("--facts", required=True)
    p.add_argument("--format", choices=["quad", "quint"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--store", default=os.environ.get("TKG_ARENA_STORE"), required=False)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=int(os.environ.get("TKG_ARENA_PORT", "8080")))
    p.add_argument("--scorer", default=os.environ.get("TKG_ARENA_SCORER", "lexical"))
    p.add_argument("--samples", default=None)
    p.add_argument("--ttl", type=float, default=600.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rollout", help="run built-in policies over samples")
    p.add_argument("--store", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--policy", required=True, help="replay:PATH or random")
    p.add_argument("--out", required=True)
    p.add_argument("--scorer", default="lexical")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("filter", help="rejection-sample episodes into SFT data")
    p.add_argument("--episodes", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="Hits@1 report for a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--format", choices=["tsv", "markdown"], default="tsv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time constrained top-k retrieval")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve" and not args.store:
        parser.error("serve requires --store or TKG_ARENA_STORE")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
