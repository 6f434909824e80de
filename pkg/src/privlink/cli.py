"""Command-line entry points: partitioning, protocol runs, benchmarks, defense grids.

Every command is deterministic given its seed and writes machine-readable
CSV/JSON; a JSON config file may supply any flag, with explicit flags
taking precedence.  Plotting is left to external tooling.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import defense, graphs, protocol, similarity
from .protocol import PairQuery, run_pairs
from .transport import SocketChannel

TOPOLOGIES = ("all-vs-all", "one-vs-all", "one-vs-one")


def _load_graph(path: str) -> graphs.Graph:
    return graphs.load_edge_list(Path(path).read_text())


def _write_scores(path: str, reports) -> None:
    lines = [similarity.CSV_HEADER]
    lines.extend(r.csv_row() for r in reports)
    Path(path).write_text("\n".join(lines) + "\n")


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _queries_for(args, n: int):
    if args.topology == "one-vs-one":
        if args.x is None or args.y is None:
            raise SystemExit("error: one-vs-one requires --x and --y")
        return "explicit", [PairQuery(args.x, args.y)], 0
    if args.topology == "one-vs-all":
        if args.x is None:
            raise SystemExit("error: one-vs-all requires --x")
        return "one-vs-all", None, args.x
    return "all-vs-all", None, 0


def cmd_partition(args) -> int:
    g = _load_graph(args.input)
    if args.ppt is not None:
        part = graphs.partition_by_ppt(g, args.ppt, args.seed)
    else:
        if args.q1 is None or args.q2 is None:
            raise SystemExit("error: provide either --ppt or both --q1 and --q2")
        part = graphs.partition(g, args.q1, args.q2, args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "g1.txt").write_text(graphs.dump_edge_list(part.g1))
    (outdir / "g2.txt").write_text(graphs.dump_edge_list(part.g2))
    _write_json(str(outdir / "manifest.json"), {
        "command": "partition", "input": args.input, "seed": part.seed,
        "q1": part.q1, "q2": part.q2, "ppt": part.ppt,
        "n": g.n, "source_edges": g.num_edges,
        "g1_edges": part.g1.num_edges, "g2_edges": part.g2.num_edges,
        "shared_edges": len(part.g1.edges & part.g2.edges),
        "expected_split": [part.q1, part.q2 - part.q1, 1 - part.q2],
    })
    return 0


def cmd_predict(args) -> int:
    g1, g2 = _load_graph(args.g1), _load_graph(args.g2)
    topology, queries, anchor = _queries_for(args, g1.n)
    t0 = time.perf_counter()
    reports, t1, t2 = run_pairs(g1, g2, queries, mode=args.mode, topology=topology,
                                anchor=anchor, seed=args.seed)
    elapsed = time.perf_counter() - t0
    _write_scores(args.out, reports)
    if args.transcript:
        _write_json(args.transcript, {
            "mode": args.mode, "topology": topology, "elapsed_s": elapsed,
            "party1": asdict(t1), "party2": asdict(t2),
        })
    return 0


def cmd_oracle(args) -> int:
    g1, g2 = _load_graph(args.g1), _load_graph(args.g2)
    union = graphs.union_graph(g1, g2)
    reports = [similarity.oracle_scores(union, x, y)
               for x in range(union.n) for y in range(x + 1, union.n)]
    _write_scores(args.out, reports)
    return 0


def cmd_defend(args) -> int:
    source = _load_graph(args.input)
    thresholds = [float(t) for t in args.thresholds.split(",")]
    if args.metric == "cn":
        thresholds = [int(t) for t in thresholds]
    seeds = [int(s) for s in args.seeds.split(",")]

    def one_seed(seed):
        return defense.defense_experiment(source, args.ppt, args.r1, args.r2,
                                          args.metric, thresholds, [seed],
                                          attack_mode=args.attack_mode)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            chunks = list(pool.map(one_seed, seeds))
    else:
        chunks = [one_seed(s) for s in seeds]
    rows = [row for chunk in chunks for row in chunk]
    lines = [defense.EXPERIMENT_CSV_HEADER]
    lines.extend(defense.experiment_row_csv(r) for r in rows)
    Path(args.out).write_text("\n".join(lines) + "\n")
    if args.manifest:
        _write_json(args.manifest, {
            "command": "defend", "input": args.input, "ppt": args.ppt,
            "r1": args.r1, "r2": args.r2, "metric": args.metric,
            "attack_mode": args.attack_mode,
            "thresholds": thresholds, "seeds": seeds, "rows": len(rows),
        })
    return 0


def _parse_hostport(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_party1(args) -> int:
    g1 = _load_graph(args.graph)
    topology, queries, anchor = _queries_for(args, g1.n)
    host, port = _parse_hostport(args.connect)
    t_init = time.perf_counter()
    sock = socket.create_connection((host, port), timeout=60)
    channel = SocketChannel(sock)
    session = protocol.InitiatorSession(g1, seed=args.seed)
    t_online = time.perf_counter()
    if topology == "explicit":
        qlist = queries
    elif topology == "one-vs-all":
        qlist = [PairQuery(anchor, y) for y in range(g1.n) if y != anchor]
    else:
        qlist = protocol.all_pairs(g1.n)
    reports = session.run_batch(channel, qlist, cached=(args.mode == "cached"),
                                topology=topology, anchor=anchor)
    done = time.perf_counter()
    session.transcript.merge_channel(channel)
    channel.close()
    _write_scores(args.out, reports)
    if args.transcript:
        _write_json(args.transcript, {
            "role": "party1", "mode": args.mode, "topology": topology,
            "init_s": t_online - t_init, "online_s": done - t_online,
            "transcript": asdict(session.transcript),
        })
    return 0


def cmd_party2(args) -> int:
    g2 = _load_graph(args.graph)
    host, port = _parse_hostport(args.listen)
    server = socket.create_server((host, port))
    server.settimeout(120)
    conn, _ = server.accept()
    channel = SocketChannel(conn)
    session = protocol.ResponderSession(g2, seed=args.seed)
    t0 = time.perf_counter()
    reports = session.serve_batch(channel)
    elapsed = time.perf_counter() - t0
    session.transcript.merge_channel(channel)
    channel.close()
    server.close()
    _write_scores(args.out, reports)
    if args.transcript:
        _write_json(args.transcript, {
            "role": "party2", "online_s": elapsed,
            "transcript": asdict(session.transcript),
        })
    return 0


def cmd_bench(args) -> int:
    g1, g2 = _load_graph(args.g1), _load_graph(args.g2)
    rng_anchor = 0
    results = {}
    for topology in ("one-vs-one", "one-vs-all", "all-vs-all"):
        if topology == "one-vs-one":
            queries, topo, anchor = [PairQuery(0, 1 % g1.n)], "explicit", 0
        elif topology == "one-vs-all":
            queries, topo, anchor = None, "one-vs-all", rng_anchor
        else:
            queries, topo, anchor = None, "all-vs-all", 0
        t0 = time.perf_counter()
        _, t1, t2 = run_pairs(g1, g2, queries, mode=args.mode, topology=topo,
                              anchor=anchor, seed=args.seed)
        elapsed = time.perf_counter() - t0
        results[topology] = {
            "elapsed_s": elapsed, "party1": asdict(t1), "party2": asdict(t2),
        }
    _write_json(args.out, {"mode": args.mode, "results": results})
    return 0


def _add_common_predict_flags(p):
    p.add_argument("--topology", choices=TOPOLOGIES, default=None)
    p.add_argument("--x", type=int, default=None)
    p.add_argument("--y", type=int, default=None)
    p.add_argument("--mode", choices=("fresh", "cached"), default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privlink",
                                     description="Private two-party link prediction toolkit")
    parser.add_argument("--config", default=None, help="JSON file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="split an edge list between two parties")
    p.add_argument("--input", required=True)
    p.add_argument("--q1", type=float, default=None)
    p.add_argument("--q2", type=float, default=None)
    p.add_argument("--ppt", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("predict", help="run the private protocol in-process (loopback)")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    _add_common_predict_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--transcript", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("oracle", help="plaintext union-graph scores for all pairs")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("defend", help="poisoning + sanitization experiment grid")
    p.add_argument("--input", required=True)
    p.add_argument("--ppt", type=float, default=None)
    p.add_argument("--r1", type=float, default=None)
    p.add_argument("--r2", type=float, default=None)
    p.add_argument("--metric", choices=("cn", "jaccard", "cosine"), default=None)
    p.add_argument("--thresholds", default=None, help="comma-separated sweep")
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--attack-mode", choices=("add-only", "add-and-remove"), default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("party1", help="initiator role over a stream socket")
    p.add_argument("--graph", required=True)
    p.add_argument("--connect", required=True, help="host:port of party2")
    _add_common_predict_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--transcript", default=None)
    p.set_defaults(func=cmd_party1)

    p = sub.add_parser("party2", help="responder role over a stream socket")
    p.add_argument("--graph", required=True)
    p.add_argument("--listen", required=True, help="host:port to listen on")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--transcript", default=None)
    p.set_defaults(func=cmd_party2)

    p = sub.add_parser("bench", help="run all three topologies and report transcripts")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--mode", choices=("fresh", "cached"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


_FALLBACK_DEFAULTS = {
    "topology": "all-vs-all", "mode": "cached", "seed": 0,
    "ppt": 0.5, "r1": 0.0, "r2": 0.5, "metric": "jaccard",
    "thresholds": "0.01,0.02,0.05,0.1,0.2", "seeds": "0,1,2",
    "attack_mode": "add-only", "jobs": 1,
}


def _apply_config(args: argparse.Namespace) -> None:
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise SystemExit("error: config file must contain a JSON object")
    for key, value in vars(args).items():
        if value is None and key in config:
            setattr(args, key, config[key])
    for key, value in _FALLBACK_DEFAULTS.items():
        if getattr(args, key, "sentinel") is None:
            setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
