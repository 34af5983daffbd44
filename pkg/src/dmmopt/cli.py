"""Command-line front end.

The CLI is a thin client of the HTTP service: by default it mounts the
FastAPI app in-process (no server needed), and with ``--server URL`` it
talks to a running instance instead. Every file-writing command drops a
``*.manifest.json`` next to its outputs with the inputs, seed, and
config snapshot needed to reproduce the run.

Exit codes: 0 success, 1 usage error, 2 input error, 3 simulation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import httpx

from . import __version__

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_SIMULATION = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1
    def error(self, message):
        raise _UsageError(message)


class _Client:
    """HTTP access to the service, in-process unless --server is given."""

    def __init__(self, server: Optional[str]):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            code = EXIT_SIMULATION if resp.status_code == 409 else EXIT_INPUT
            raise _ServiceError(code, str(detail))
        return resp.json()

    def close(self):
        self._client.close()


class _ServiceError(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _ServiceError(EXIT_INPUT, f"cannot read {what} {path!r}: {exc}") from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_manifest(out_path: Path, command: str, args: argparse.Namespace,
                    outputs: list[str], config: Optional[dict] = None) -> Path:
    manifest = {
        "tool": "dmmopt",
        "version": __version__,
        "command": command,
        "trace": getattr(args, "trace", None),
        "seed": getattr(args, "seed", None),
        "config": config,
        "outputs": outputs,
    }
    path = out_path.with_suffix(".manifest.json")
    _write(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _render_table(rows: list[tuple], headers: tuple[str, ...]) -> str:
    cols = [headers] + [tuple(str(c) for c in row) for row in rows]
    widths = [max(len(r[i]) for r in cols) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(cols):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _emit(args, text_table: str, csv_text: str, json_obj) -> None:
    fmt = getattr(args, "format", "table")
    if fmt == "table":
        out = text_table
    elif fmt == "csv":
        out = csv_text
    else:
        out = json.dumps(json_obj, indent=2) + "\n"
    sys.stdout.write(out)
    if getattr(args, "out", None):
        path = Path(args.out)
        _write(path, csv_text if fmt == "csv" else json.dumps(json_obj, indent=2) + "\n")
        _write_manifest(path, args.command, args, [str(path)])


def cmd_stats(client: _Client, args) -> int:
    data = client.post("/trace/stats", {"trace": _read_text(args.trace, "trace")})
    for d in data["diagnostics"]:
        sys.stderr.write(f"warning: {d}\n")
    keys = ("objects", "total_memory", "max_in_use", "average_size", "memory_ops")
    row = tuple(
        f"{data[k]:.2f}" if k == "average_size" else str(data[k]) for k in keys
    )
    csv_text = ",".join(keys) + "\n" + ",".join(row) + "\n"
    _emit(args, _render_table([row], keys), csv_text, {k: data[k] for k in keys})
    return EXIT_OK


def cmd_grammar(client: _Client, args) -> int:
    data = client.post("/grammar/generate", {"trace": _read_text(args.trace, "trace")})
    if args.out:
        path = Path(args.out)
        _write(path, data["grammar"])
        _write_manifest(path, "grammar", args, [str(path)])
    else:
        sys.stdout.write(data["grammar"])
    return EXIT_OK


def _load_spec_payload(args) -> dict:
    if bool(args.dmm) == bool(args.spec):
        raise _UsageError("provide exactly one of --dmm or --spec")
    if args.dmm:
        return {"dmm": args.dmm}
    return {"spec": json.loads(_read_text(args.spec, "spec file"))}


def cmd_simulate(client: _Client, args) -> int:
    payload = _load_spec_payload(args) | {
        "trace": _read_text(args.trace, "trace"), "page_size": args.page_size}
    data = client.post("/simulate", payload)
    m = data["metrics"]
    keys = tuple(m.keys())
    csv_text = ",".join(keys) + "\n" + ",".join(str(m[k]) for k in keys) + "\n"
    table = _render_table([(k, m[k]) for k in keys], ("metric", "value"))
    _emit(args, table, csv_text, data)
    return EXIT_OK


def cmd_evolve(client: _Client, args) -> int:
    payload: dict = {"trace": _read_text(args.trace, "trace")}
    config = None
    if args.config:
        config = json.loads(_read_text(args.config, "config file"))
        payload["config"] = config
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.grammar:
        payload["grammar"] = _read_text(args.grammar, "grammar file")
    data = client.post("/evolve", payload)

    out = Path(args.out) if args.out else Path("best_dmm.json")
    history_path = out.with_name(out.stem + "_history.csv")
    spec_json = json.dumps({"allocators": data["best_spec"]["allocators"]}, indent=2) + "\n"
    _write(out, spec_json)
    history_csv = "generation,best,mean\n" + "".join(
        f"{g},{b!r},{m!r}\n" for g, b, m in data["history"]
    )
    _write(history_path, history_csv)
    manifest = _write_manifest(out, "evolve", args, [str(out), str(history_path)],
                               config=data["config"])
    sys.stdout.write(
        f"best fitness {data['best_fitness']:.6f} "
        f"(T_KNG={data['t_kng']}, M_LEA={data['m_lea']}, "
        f"{data['evaluations']} evaluations, "
        f"{data['distinct_simulations']} distinct simulations)\n"
        f"wrote {out}, {history_path}, {manifest}\n"
    )
    return EXIT_OK


def cmd_compare(client: _Client, args) -> int:
    entries = []
    for name in (args.dmm.split(",") if args.dmm else []):
        entries.append({"name": name, "preset": name})
    for path in args.spec or []:
        entries.append({
            "name": Path(path).stem,
            "spec": json.loads(_read_text(path, "spec file")),
        })
    if not entries:
        raise _UsageError("nothing to compare; use --dmm and/or --spec")
    payload = {"trace": _read_text(args.trace, "trace"), "specs": entries}
    data = client.post("/compare", payload)
    headers = ("name", "F", "T/T_KNG", "M/M_LEA")
    rows = [
        (r["name"], f"{r['fitness']:.6f}", f"{r['time_ratio']:.6f}",
         f"{r['memory_ratio']:.6f}")
        for r in data["rows"]
    ]
    csv_text = "name,fitness,time_ratio,memory_ratio\n" + "".join(
        f"{r['name']},{r['fitness']!r},{r['time_ratio']!r},{r['memory_ratio']!r}\n"
        for r in data["rows"]
    )
    _emit(args, _render_table(rows, headers), csv_text, data)
    return EXIT_OK


def cmd_describe(client: _Client, args) -> int:
    payload = _load_spec_payload(args) | {"trace": _read_text(args.trace, "trace")}
    data = client.post("/describe", payload)
    headers = ("allocator", "class", "split", "coalesce", "range", "ds",
               "mechanism", "policy")
    rows = [
        (r["allocator"], r["class"], r["split"], r["coalesce"],
         f"({r['range_lo']}, {r['range_hi']}]", r["ds"], r["mechanism"],
         r["policy"])
        for r in data["rows"]
    ]
    csv_text = "allocator,class,split,coalesce,range_lo,range_hi,capacity,ds,mechanism,policy\n"
    csv_text += "".join(
        f"{r['allocator']},{r['class']},{r['split']},{r['coalesce']},"
        f"{r['range_lo']},{r['range_hi']},{r['capacity']},{r['ds']},"
        f"{r['mechanism']},{r['policy']}\n"
        for r in data["rows"]
    )
    _emit(args, _render_table(rows, headers), csv_text, data)
    return EXIT_OK


def cmd_synth(client: _Client, args) -> int:
    weights = {}
    for part in args.sizes.split(","):
        size, _, weight = part.partition(":")
        weights[int(size)] = float(weight) if weight else 1.0
    data = client.post("/trace/synth", {
        "size_weights": weights,
        "event_count": args.events,
        "seed": args.seed or 0,
        "lifetime_scale": args.lifetime_scale,
        "drain": args.drain,
    })
    if args.out:
        path = Path(args.out)
        _write(path, data["trace"])
        _write_manifest(path, "synth", args, [str(path)])
    else:
        sys.stdout.write(data["trace"])
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("dmmopt.service:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="dmmopt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dmmopt {__version__}")
    parser.add_argument("--server", help="base URL of a running service; default in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("stats", cmd_stats, help="workload statistics of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out")

    p = add("grammar", cmd_grammar, help="generate the specialized grammar file")
    p.add_argument("--trace", required=True)
    p.add_argument("--out")

    p = add("simulate", cmd_simulate, help="replay a trace against one DMM")
    p.add_argument("--trace", required=True)
    p.add_argument("--dmm", help="preset: kng|lea|fib|s10|exa")
    p.add_argument("--spec", help="DMM spec JSON file")
    p.add_argument("--page-size", type=int, default=4096, dest="page_size")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out")

    p = add("evolve", cmd_evolve, help="search for an optimized DMM")
    p.add_argument("--trace", required=True)
    p.add_argument("--config", help="GEA config JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--grammar", help="BNF grammar file (default: generated)")
    p.add_argument("--out", help="best-spec output path (default best_dmm.json)")

    p = add("compare", cmd_compare, help="normalized comparison of several DMMs")
    p.add_argument("--trace", required=True)
    p.add_argument("--dmm", help="comma-separated preset names")
    p.add_argument("--spec", action="append", help="DMM spec JSON file (repeatable)")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out")

    p = add("describe", cmd_describe, help="render a DMM's expanded class map")
    p.add_argument("--trace", required=True,
                   help="supplies observed sizes for exact-fit classes")
    p.add_argument("--dmm", help="preset: kng|lea|fib|s10|exa")
    p.add_argument("--spec", help="DMM spec JSON file")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out")

    p = add("synth", cmd_synth, help="generate a synthetic trace")
    p.add_argument("--sizes", required=True, help="size:weight pairs, e.g. 8:1,4096:1")
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lifetime-scale", type=float, default=32.0, dest="lifetime_scale")
    p.add_argument("--drain", action="store_true")
    p.add_argument("--out")

    p = add("serve", cmd_serve, help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    if args.command == "serve":
        return cmd_serve(args)
    client = _Client(args.server)
    try:
        return args.fn(client, args)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except _ServiceError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"error: invalid JSON input: {exc}\n")
        return EXIT_INPUT
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
