"""HTTP service wrapping the optimization engine and benchmark harness.

The handler functions are plain functions over the request/response
models; the FastAPI routes are thin wrappers, and the CLI calls the same
handlers in-process when no server address is given.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigError, load_config
from ..engine import EngineError
from ..evaluators import EvaluationError
from ..runner import (
    build_stats_bundle,
    collect_time_performance,
    load_report_rows,
    run_baseline_experiment,
    run_bench,
    run_optimize_experiment,
    write_stats_outputs,
)
from ..tables import DataError
from .schemas import (
    BaselineRequest,
    BaselineResponse,
    BenchRequest,
    BenchResponse,
    HealthResponse,
    OptimizeRequest,
    OptimizeResponse,
    ReportRequest,
    ReportResponse,
)


def api_health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def api_optimize(request: OptimizeRequest) -> OptimizeResponse:
    row, runs, out_dir = run_optimize_experiment(request.config)
    return OptimizeResponse(row=row, runs=runs, out_dir=out_dir)


def api_baseline(request: BaselineRequest) -> BaselineResponse:
    try:
        rows, out_dir = run_baseline_experiment(request.config, request.method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return BaselineResponse(rows=rows, out_dir=out_dir)


def api_bench(request: BenchRequest) -> BenchResponse:
    configs = list(request.configs)
    if request.config_dir:
        directory = Path(request.config_dir)
        if not directory.is_dir():
            raise ConfigError(f"config directory not found: {directory}")
        paths = sorted(directory.glob("*.toml"))
        if not paths:
            raise ConfigError(f"no .toml configs in {directory}")
        configs.extend(load_config(path) for path in paths)
    rows, failures, stats, out_dir = run_bench(
        configs,
        jobs=request.jobs,
        force=request.force,
        out=request.out,
        permutations=request.permutations,
    )
    return BenchResponse(rows=rows, failures=failures, stats=stats, out_dir=out_dir)


def api_report(request: ReportRequest) -> ReportResponse:
    directory = Path(request.results_dir)
    rows = load_report_rows(directory) if directory.is_dir() else []
    if not rows:
        raise ConfigError(f"no results under {directory}")
    stats = build_stats_bundle(rows, permutations=request.permutations)
    if stats is None:
        raise ConfigError("results cover fewer than 2 methods on any complete cell")
    write_stats_outputs(directory, stats)
    time_performance = collect_time_performance(directory)
    if time_performance:
        import csv

        with (directory / "time_performance.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(time_performance[0]))
            writer.writeheader()
            writer.writerows(time_performance)
    return ReportResponse(
        stats=stats,
        row_count=len(rows),
        time_performance=time_performance,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="vipcop", version=__version__)

    def guard(handler, request):
        try:
            return handler(request)
        except (ConfigError, DataError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (EngineError, EvaluationError) as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    @app.get("/health", response_model=HealthResponse)
    def health():
        return api_health()

    @app.post("/optimize", response_model=OptimizeResponse)
    def optimize_route(request: OptimizeRequest):
        return guard(api_optimize, request)

    @app.post("/baseline", response_model=BaselineResponse)
    def baseline_route(request: BaselineRequest):
        return guard(api_baseline, request)

    @app.post("/bench", response_model=BenchResponse)
    def bench_route(request: BenchRequest):
        return guard(api_bench, request)

    @app.post("/report", response_model=ReportResponse)
    def report_route(request: ReportRequest):
        return guard(api_report, request)

    return app
