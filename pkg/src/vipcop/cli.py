"""Command-line client for the optimization service.

Every command builds a request model and hands it to the service layer:
in-process by default, or over HTTP when --server is given. Exit codes:
0 ok, 1 runtime or partial failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import urllib.error
import urllib.request

from pydantic import ValidationError

from .config import ConfigError, load_config
from .engine import EngineError
from .evaluators import EvaluationError
from .service import app as service
from .service.schemas import (
    BaselineRequest,
    BenchRequest,
    OptimizeRequest,
    ReportRequest,
)
from .tables import DataError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--dataset", help="CSV dataset path")
    parser.add_argument("--label", help="label column name or index")
    parser.add_argument("--setting", help="original | da_sample | da_feature | dn_s1 | dn_s2 | dn_f")
    parser.add_argument("--budget-samples", type=int, dest="budget_samples")
    parser.add_argument("--budget-features", type=int, dest="budget_features")
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--metric", choices=["bacc", "auroc"])
    parser.add_argument("--evaluator", choices=["knn", "oracle", "bridge"])
    parser.add_argument("--bridge-cmd", dest="bridge_cmd", help="bridge command line")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="results directory")

def _label_value(raw: str | None):
    if raw is None:
        return None
    return int(raw) if raw.lstrip("-").isdigit() else raw

def _overrides_from_flags(args: argparse.Namespace) -> dict:
    overrides: dict = {
        "dataset": getattr(args, "dataset", None),
        "label": _label_value(getattr(args, "label", None)),
        "setting": getattr(args, "setting", None),
        "out": getattr(args, "out", None),
        "budget": {
            "samples": getattr(args, "budget_samples", None),
            "features": getattr(args, "budget_features", None),
        },
        "engine": {
            "rounds": getattr(args, "rounds", None),
            "eta": getattr(args, "eta", None),
            "batch": getattr(args, "batch", None),
            "learning_rate": getattr(args, "lr", None),
            "metric": getattr(args, "metric", None),
        },
        "evaluator": {
            "kind": getattr(args, "evaluator", None),
            "bridge_cmd": shlex.split(args.bridge_cmd)
            if getattr(args, "bridge_cmd", None)
            else None,
        },
    }
    env_seed = os.environ.get("VIPCOP_SEED")
    if env_seed is not None:
        overrides["seed"] = int(env_seed)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed  # explicit flag beats the environment
    return overrides

def _build_config(args: argparse.Namespace):
    return load_config(args.config, _overrides_from_flags(args))

def _post(server: str, endpoint: str, payload: dict) -> dict:
    request = urllib.request.Request(
        server.rstrip("/") + endpoint,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(request) as response:
        return json.loads(response.read().decode("utf-8"))

class _RemoteError(RuntimeError):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status

def _call(server: str | None, endpoint: str, handler, request_model):
    """Dispatch to the in-process service layer or a remote server."""
    if server is None:
        return handler(request_model).model_dump()
    try:
        return _post(server, endpoint, request_model.model_dump())
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", errors="replace")
        raise _RemoteError(exc.code, detail) from exc

def cmd_optimize(args: argparse.Namespace) -> int:
    config = _build_config(args)
    payload = _call(
        args.server, "/optimize", service.api_optimize, OptimizeRequest(config=config)
    )
    row = payload["row"]
    print(
        f"optimize {row['dataset']}/{row['setting']}: "
        f"test bacc={row['score']:.4f} context={row['context_size']} "
        f"elapsed={row['wall_time']:.1f}s -> {payload['out_dir']}"
    )
    return EXIT_OK

def cmd_baseline(args: argparse.Namespace) -> int:
    config = _build_config(args)
    payload = _call(
        args.server,
        "/baseline",
        service.api_baseline,
        BaselineRequest(config=config, method=args.method),
    )
    for row in payload["rows"]:
        print(
            f"baseline {row['method']} {row['dataset']}/{row['setting']}: "
            f"test bacc={row['score']:.4f} context={row['context_size']} "
            f"elapsed={row['wall_time']:.1f}s"
        )
    return EXIT_OK

def cmd_bench(args: argparse.Namespace) -> int:
    request = BenchRequest(
        config_dir=args.configs,
        jobs=args.jobs,
        force=args.force,
        out=args.out,
        permutations=args.permutations,
    )
    payload = _call(args.server, "/bench", service.api_bench, request)
    print(
        f"bench: {len(payload['rows'])} rows, {len(payload['failures'])} failures "
        f"-> {payload['out_dir']}"
    )
    for failure in payload["failures"]:
        print(f"  failed: {failure}", file=sys.stderr)
    return EXIT_RUNTIME if payload["failures"] else EXIT_OK

def cmd_report(args: argparse.Namespace) -> int:
    request = ReportRequest(results_dir=args.results, permutations=args.permutations)
    payload = _call(args.server, "/report", service.api_report, request)
    stats = payload["stats"]
    ordered = sorted(stats["average_ranks"].items(), key=lambda kv: kv[1])
    ranks = ", ".join(f"{m}={r:.2f}" for m, r in ordered)
    print(
        f"report: {payload['row_count']} rows over {len(stats['datasets'])} cells; "
        f"ranks: {ranks}; CD={stats['critical_difference']}"
    )
    return EXIT_OK

def cmd_serve(args: argparse.Namespace) -> int:
    try:
        import uvicorn
    except ImportError:
        print("serve requires uvicorn (pip install vipcop[server])", file=sys.stderr)
        return EXIT_USAGE
    uvicorn.run(service.create_app(), host=args.host, port=args.port)
    return EXIT_OK

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vipcop",
        description="Context optimization for black-box tabular in-context learners",
    )
    parser.add_argument("--server", help="base URL of a running service; default in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run the context optimizer on one dataset")
    _add_config_flags(p_opt)
    p_opt.set_defaults(func=cmd_optimize)

    p_base = sub.add_parser("baseline", help="run a comparison method")
    _add_config_flags(p_base)
    p_base.add_argument(
        "--method",
        default="all",
        help="h1|h2|h3|o1|o2, a full method name, or 'all'",
    )
    p_base.set_defaults(func=cmd_baseline)

    p_bench = sub.add_parser("bench", help="engine + baselines over a config directory")
    p_bench.add_argument("--configs", required=True, help="directory of TOML configs")
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--force", action="store_true", help="recompute existing rows")
    p_bench.add_argument("--out", help="override results directory")
    p_bench.add_argument("--permutations", type=int, default=100_000)
    p_bench.set_defaults(func=cmd_bench)

    p_rep = sub.add_parser("report", help="regenerate stats from persisted rows")
    p_rep.add_argument("--results", required=True, help="results directory")
    p_rep.add_argument("--permutations", type=int, default=100_000)
    p_rep.set_defaults(func=cmd_report)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)
    p_serve.set_defaults(func=cmd_serve)
    return parser

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RemoteError as exc:
        print(f"server error ({exc.status}): {exc}", file=sys.stderr)
        return EXIT_USAGE if exc.status == 400 else EXIT_RUNTIME
    except (DataError, EngineError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

if __name__ == "__main__":
    sys.exit(main())
