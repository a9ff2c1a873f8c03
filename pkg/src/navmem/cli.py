"""Command-line entry point: ``navmem <subcommand> ...``.

Exit codes: 0 ok, 2 bad arguments / unparsable input, 3 file I/O, 4 domain
error (unreachable target, infeasible params, ...), 5 harness neutrality.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .embedding import HttpEmbedder
from .env_sim import (
    Explorer, ExploreParams, SceneConfig, generate_scene, load_scene, read_stream,
    save_scene, write_stream,
)
from .instruction import HttpInstructionParser, InstructionSyntaxError, TaskGraph, parse
from .memory import MemoryParams, build_memory, memory_from_dict, save_memory
from .planner import UnreachableTargetError, route, structured_guide
from .retrieval import PRESETS, Mode, Query, retrieve

EXIT_OK, EXIT_PARSE, EXIT_IO, EXIT_DOMAIN, EXIT_HARNESS = 0, 2, 3, 4, 5

EMBEDDING_URL_ENV = "NAVMEM_EMBEDDING_URL"
PARSER_URL_ENV = "NAVMEM_PARSER_URL"

log = logging.getLogger("navmem")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_PARSE, f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers

def _read_json(path: str, stage: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_IO, f"{stage}: cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{stage}: {path} is not valid JSON: {exc}") from exc


def _write(path: str | None, text: str, stage: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{stage}: cannot write {path}: {exc.strerror or exc}") from exc


def _memory_params(a) -> MemoryParams:
    return MemoryParams(delta_spatial=a.delta_spatial, omega=a.omega, alpha=a.alpha,
                        tau=a.tau, embedding_dim=a.embedding_dim)


def _query_kw(a) -> dict:
    return dict(K=a.K, hops=a.hops, sigma=a.sigma, eta=a.eta, beam_width=a.beam_width)


def _parse_instruction(text: str) -> TaskGraph:
    url = os.environ.get(PARSER_URL_ENV)
    return HttpInstructionParser(url)(text) if url else parse(text)


def _instruction_text(a) -> str:
    if getattr(a, "instruction_file", None):
        try:
            return Path(a.instruction_file).read_text().strip()
        except OSError as exc:
            raise CliError(EXIT_IO, f"instruction: cannot read {a.instruction_file}: "
                                    f"{exc.strerror or exc}") from exc
    return a.instruction


def _load_memory(path: str):
    return memory_from_dict(_read_json(path, "load memory"))


# -------------------------------------------------------------- subcommands

def cmd_gen_scene(a) -> int:
    cfg = SceneConfig(width=a.width, height=a.height, n_objects=a.objects,
                      n_obstacles=a.obstacles)
    scene = generate_scene(cfg, a.seed)
    if a.out in (None, "-"):
        _write(None, json.dumps(scene.to_dict(), indent=2), "gen-scene")
    else:
        try:
            save_scene(scene, a.out)
        except OSError as exc:
            raise CliError(EXIT_IO, f"gen-scene: cannot write {a.out}: {exc}") from exc
    return EXIT_OK


def cmd_explore(a) -> int:
    try:
        scene = load_scene(a.scene)
    except OSError as exc:
        raise CliError(EXIT_IO, f"explore: cannot read scene {a.scene}: {exc}") from exc
    try:
        start = tuple(float(v) for v in a.start.split(","))
    except ValueError:
        start = ()
    if len(start) != 2:
        raise CliError(EXIT_PARSE, f"explore: --start must be 'x,y', got {a.start!r}")
    params = ExploreParams(sensor_range=a.sensor_range, max_steps=a.max_steps)
    trace = Explorer(scene, params).run(start)
    if trace.budget_exhausted:
        log.warning("explore: step budget exhausted before all frontiers were cleared")
    try:
        write_stream(trace.records, a.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"explore: cannot write {a.out}: {exc}") from exc
    return EXIT_OK


def cmd_build_memory(a) -> int:
    try:
        stream = read_stream(a.stream)
    except OSError as exc:
        raise CliError(EXIT_IO, f"build-memory: cannot read stream {a.stream}: {exc}") from exc
    params = _memory_params(a)
    url = os.environ.get(EMBEDDING_URL_ENV)
    embedder = HttpEmbedder(url, params.embedding_dim) if url else None
    mem = build_memory(stream, params, embedder=embedder)
    try:
        save_memory(mem, a.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"build-memory: cannot write {a.out}: {exc}") from exc
    return EXIT_OK


def _queries(a) -> list[tuple[int | None, Query]]:
    kw = _query_kw(a)
    mode = Mode(a.mode)
    if a.query_file:
        doc = _read_json(a.query_file, "query")
        docs = doc if isinstance(doc, list) else [doc]
        out = []
        for d in docs:
            merged = {**kw, "mode": mode, **d}
            out.append((None, Query.from_dict(merged)))
        return out
    if a.target:
        return [(None, Query(a.target, a.anchor, tuple(a.context or ()), mode=mode, **kw))]
    text = _instruction_text(a)
    if not text:
        raise CliError(EXIT_PARSE, "query: give --instruction, --instruction-file, "
                                   "--query-file or --target")
    graph = _parse_instruction(text)
    return [(t.id, Query(t.target_text, t.anchor_text, t.context_texts, mode=mode, **kw))
            for t in graph.tasks]


def cmd_query(a) -> int:
    mem = _load_memory(a.memory)
    results = []
    for tid, q in _queries(a):
        ranking = retrieve(q, mem, PRESETS[a.preset] if a.preset else None)
        results.append({
            "task_id": tid,
            "query": {"target": q.target_text, "anchor": q.anchor_text,
                      "context": list(q.context_texts), "mode": q.mode.value},
            **ranking.to_dict(),
        })
    _write(a.out, json.dumps({"results": results}, indent=2), "query")
    return EXIT_OK


def cmd_plan(a) -> int:
    mem = _load_memory(a.memory)
    notes: dict[int, str] = {}
    precedence: list[tuple[int, int]] = []
    if a.targets:
        try:
            targets = [int(t) for t in a.targets.split(",")]
        except ValueError as exc:
            raise CliError(EXIT_PARSE, f"plan: bad --targets {a.targets!r}") from exc
    else:
        text = _instruction_text(a)
        if not text:
            raise CliError(EXIT_PARSE, "plan: give --targets or --instruction")
        graph = _parse_instruction(text)
        picks = {}
        for t in graph.tasks:
            ranking = retrieve(Query(t.target_text, t.anchor_text, t.context_texts,
                                     **_query_kw(a)), mem)
            if ranking.top1() is None:
                raise CliError(EXIT_DOMAIN, f"plan: no node found for task {t.id} "
                                            f"({t.target_text!r}): {ranking.diagnostic}")
            picks[t.id] = ranking.top1()
            notes.setdefault(picks[t.id], f"matches {t.target_text!r}" + (
                f" near {t.anchor_text!r}" if t.anchor_text else ""))
        targets = list(dict.fromkeys(picks[t] for t in graph.semantic_sequence))
        precedence = sorted({(picks[x], picks[y]) for x, y in graph.temporal_edges
                             if picks[x] != picks[y]})
    plan = route(mem.map, targets, a.lam, a.start, precedence, use_graph=not a.straight_line)
    doc = plan.to_dict()
    doc["guide"] = structured_guide(plan, mem.map, notes)
    _write(a.out, json.dumps(doc, indent=2), "plan")
    return EXIT_OK


def _bench_params(a) -> bench.BenchParams:
    return bench.BenchParams(n_cases=a.cases, mean_nodes=a.mean_nodes,
                             decoys_per_task=a.decoys)


def _emit_records(records, a, stage) -> None:
    rows = [r.to_dict() for r in records]
    if a.out_dir:
        out = Path(a.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CliError(EXIT_IO, f"{stage}: cannot create {out}: {exc}") from exc
        try:
            bench.export_results(records, out / f"{stage}.csv")
            bench.export_results(records, out / f"{stage}.json")
        except OSError as exc:
            raise CliError(EXIT_IO, f"{stage}: cannot write results in {out}: {exc}") from exc
    _write(None, json.dumps({"records": rows}, indent=2), stage)


def _suite(a, stage):
    if a.suite:
        try:
            return bench.read_suite(a.suite)
        except OSError as exc:
            raise CliError(EXIT_IO, f"{stage}: cannot read suite {a.suite}: {exc}") from exc
    suite = bench.generate_benchmark(_bench_params(a), a.seed)
    if a.out_dir:
        Path(a.out_dir).mkdir(parents=True, exist_ok=True)
        bench.write_suite(suite, Path(a.out_dir) / "suite.jsonl")
    return suite


def cmd_bench(a) -> int:
    suite = _suite(a, "bench")
    mem = bench.MemoryCache(_memory_params(a))
    qkw = _query_kw(a)
    records = bench.run_retrieval_bench(suite, a.retrievers.split(","), a.repeats,
                                        memories=mem, query_kw=qkw)
    planners = [bench.PlannerConfig(f"lam{lam:g}", lam) for lam in a.lams]
    records += bench.run_navigation_bench(suite, planners, "full", memories=mem, query_kw=qkw)
    records += bench.run_navigation_bench(suite, [bench.PlannerConfig(lam=a.lams[0])],
                                          "oracle", memories=mem)
    _emit_records(records, a, "bench")
    if not bench.harness_neutral(suite, mem):
        log.error("bench: oracle config did not score 1.0/1.0; harness is not neutral")
        return EXIT_HARNESS
    return EXIT_OK


def cmd_ablate(a) -> int:
    suite = _suite(a, "ablate")
    mem = bench.MemoryCache(_memory_params(a))
    records = bench.run_ablations(suite, memories=mem,
                                  planner=bench.PlannerConfig(lam=a.lams[0]))
    _emit_records(records, a, "ablate")
    return EXIT_OK


def cmd_export(a) -> int:
    try:
        records = bench.read_results(a.results)
    except OSError as exc:
        raise CliError(EXIT_IO, f"export: cannot read {a.results}: {exc}") from exc
    try:
        bench.export_results(records, a.out, a.format)
    except OSError as exc:
        raise CliError(EXIT_IO, f"export: cannot write {a.out}: {exc}") from exc
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_memory_flags(p):
    d = MemoryParams()
    g = p.add_argument_group("memory")
    g.add_argument("--delta-spatial", type=float, default=d.delta_spatial)
    g.add_argument("--omega", type=float, default=d.omega)
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--tau", type=float, default=d.tau)
    g.add_argument("--embedding-dim", type=int, default=d.embedding_dim)


def _add_query_flags(p):
    g = p.add_argument_group("retrieval")
    g.add_argument("-K", "--K", dest="K", type=int, default=10)
    g.add_argument("--hops", type=int, default=1)
    g.add_argument("--sigma", type=float, default=2.0)
    g.add_argument("--eta", type=float, default=0.3)
    g.add_argument("--beam-width", type=int, default=4)


def _add_instruction_flags(p):
    p.add_argument("--instruction", help="instruction text in the mini-grammar")
    p.add_argument("--instruction-file", help="file holding the instruction text")


def _add_bench_flags(p):
    p.add_argument("--suite", help="read cases from a JSONL suite instead of generating")
    p.add_argument("--cases", type=int, default=14)
    p.add_argument("--mean-nodes", type=float, default=80.0)
    p.add_argument("--decoys", type=int, default=2, help="decoys per task")
    p.add_argument("--lams", type=float, nargs="+", default=[1.0])
    p.add_argument("--out-dir", help="write suite.jsonl and CSV/JSON results here")
    _add_memory_flags(p)
    _add_query_flags(p)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of flag values; explicit flags win")
    common.add_argument("--seed", type=int, default=0, help="the only source of randomness")
    common.add_argument("-v", "--verbose", action="count", default=0)
    p = _Parser(prog="navmem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    s = add("gen-scene", help="generate a random scene")
    s.add_argument("--width", type=float, default=20.0)
    s.add_argument("--height", type=float, default=20.0)
    s.add_argument("--objects", type=int, default=8)
    s.add_argument("--obstacles", type=int, default=3)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_gen_scene)

    s = add("explore", help="explore a scene and write the observation stream")
    s.add_argument("--scene", required=True)
    s.add_argument("--start", required=True, help="x,y")
    s.add_argument("--sensor-range", type=float, default=ExploreParams().sensor_range)
    s.add_argument("--max-steps", type=int, default=ExploreParams().max_steps)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_explore)

    s = add("build-memory", help="build and freeze the memory from a stream")
    s.add_argument("--stream", required=True)
    s.add_argument("--out", required=True)
    _add_memory_flags(s)
    s.set_defaults(func=cmd_build_memory)

    s = add("query", help="ranked retrieval, JSON on stdout")
    s.add_argument("--memory", required=True)
    _add_instruction_flags(s)
    s.add_argument("--query-file", help="JSON query object or list of them")
    s.add_argument("--target")
    s.add_argument("--anchor")
    s.add_argument("--context", nargs="*")
    s.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.BOOSTED.value)
    s.add_argument("--config-preset", dest="preset", choices=sorted(PRESETS))
    s.add_argument("--out", default="-")
    _add_query_flags(s)
    s.set_defaults(func=cmd_query)

    s = add("plan", help="retrieve targets and plan a visiting order")
    s.add_argument("--memory", required=True)
    _add_instruction_flags(s)
    s.add_argument("--targets", help="comma-separated node ids in instruction order")
    s.add_argument("--lam", type=float, default=1.0)
    s.add_argument("--start", type=int)
    s.add_argument("--straight-line", action="store_true",
                   help="ignore edges: straight-line costs and direct hops")
    s.add_argument("--out", default="-")
    _add_query_flags(s)
    s.set_defaults(func=cmd_plan)

    s = add("bench", help="retrieval and navigation benchmark")
    _add_bench_flags(s)
    s.add_argument("--retrievers", default=",".join(bench.DEFAULT_RETRIEVERS))
    s.add_argument("--repeats", type=int, default=5)
    s.set_defaults(func=cmd_bench)

    s = add("ablate", help="ablation table on the decoy suite")
    _add_bench_flags(s)
    s.set_defaults(func=cmd_ablate)

    s = add("export", help="convert a results file between CSV and JSON")
    s.add_argument("--results", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=["csv", "json"])
    s.set_defaults(func=cmd_export)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    first = parser.parse_args(argv)
    if not first.config:
        return first
    cfg = _read_json(first.config, "config")
    if not isinstance(cfg, dict):
        raise CliError(EXIT_PARSE, f"config: {first.config} must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[first.command]
    known = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise CliError(EXIT_PARSE, f"config: unknown key(s) {', '.join(unknown)} "
                                   f"in {first.config}")
    # config values become defaults, so anything given on the command line wins
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"navmem: {exc}", file=sys.stderr)
        return exc.code
    except InstructionSyntaxError as exc:
        print(f"navmem: instruction parse failed: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnreachableTargetError as exc:
        print(f"navmem: plan failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"navmem: I/O error on {exc.filename or '?'}: {exc.strerror or exc}",
              file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"navmem: {argv[0] if argv else 'navmem'} failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
