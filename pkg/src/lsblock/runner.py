"""Experiment orchestration: one run, a t scan, or a re-check of stored artifacts."""

from __future__ import annotations

import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from . import __version__
from . import artifacts as art
from .config import RunConfig, validate
from .diagonalizer import AlgorithmError, RunResult, run
from .models import build_initial_data, initial_table
from .verification import ScanPoint, ScanReport, VerificationReport, verify

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ALGORITHM = 1
EXIT_CONFIG = 2
EXIT_CHECKS = 3


@dataclass
class Outcome:
    exit_code: int
    report: Optional[VerificationReport] = None
    error: Optional[str] = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _step_check_counts(report: VerificationReport, result: RunResult) -> dict[int, tuple[int, int]]:
    index = {tuple(map(tuple, r.step.to_json())): r.index for r in result.records}
    counts: dict[int, list[int]] = {}
    for c in report.checks:
        step = c.context.get("step")
        if step is None:
            continue
        i = index.get(tuple(map(tuple, step)))
        if i is None:
            continue
        entry = counts.setdefault(i, [0, 0])
        entry[0] += int(c.passed)
        entry[1] += 1
    return {i: (p, n) for i, (p, n) in counts.items()}


def _manifest(config: RunConfig, started: str, **fields) -> dict:
    return {
        "tool": "lsblock",
        "version": __version__,
        "step_schema_version": art.STEP_SCHEMA_VERSION,
        "config_hash": config.hash(),
        "config": config.to_json(),
        "started": started,
        **fields,
    }


def run_experiment(config: RunConfig, out_dir: Optional[str] = None, debug_dump: Optional[bool] = None) -> Outcome:
    """Run, verify and persist one coupling; the exit code is in the outcome."""
    out = out_dir or config["output.directory"]
    debug = config["output.debug_dump"] if debug_dump is None else debug_dump
    os.makedirs(out, exist_ok=True)
    started = _now()
    clock = time.perf_counter()
    lattice, data = config.lattice, build_initial_data(config.model, config.lattice.d)
    art.write_json(os.path.join(out, art.MANIFEST), _manifest(config, started, status="running"))

    def on_step(partial: RunResult) -> None:
        art.write_steps(out, partial.records)
        if debug:
            art.dump_table(out, partial.final, len(partial.tables) - 1)

    if debug:
        art.dump_table(out, initial_table(lattice, data, config["t"]), 0)
    try:
        result = run(lattice, data, config["t"], config.series, on_step=on_step)
    except AlgorithmError as exc:
        art.write_steps(out, exc.partial)
        art.write_json(
            os.path.join(out, art.MANIFEST),
            _manifest(
                config,
                started,
                status="failed",
                error=f"{type(exc).__name__}: {exc}",
                finished=_now(),
                wall_time=time.perf_counter() - clock,
                steps_completed=len(exc.partial),
                exit_code=EXIT_ALGORITHM,
            ),
        )
        return Outcome(EXIT_ALGORITHM, error=str(exc))
    run_time = time.perf_counter() - clock

    report = verify(result, config["checks"], **config.verify_options)
    art.write_json(os.path.join(out, art.VERIFICATION), report.to_json())
    art.write_csv(
        os.path.join(out, art.GAP_CSV), art.GAP_COLUMNS, art.gap_rows(result.records, _step_check_counts(report, result))
    )
    art.write_csv(os.path.join(out, art.NORM_CSV), art.NORM_COLUMNS, art.norm_rows(result.records))
    point = ScanPoint(result.t, report.passed, _failed(report), None, report)
    art.write_csv(os.path.join(out, art.SCAN_CSV), art.SCAN_COLUMNS, scan_rows([point]))
    if config["output.keep_tables"]:
        art.save_state(os.path.join(out, art.STATE), result)
    code = EXIT_OK if report.passed else EXIT_CHECKS
    art.write_json(
        os.path.join(out, art.MANIFEST),
        _manifest(
            config,
            started,
            status="completed",
            finished=_now(),
            wall_time=time.perf_counter() - clock,
            run_wall_time=run_time,
            step_wall_times=[r.wall_time for r in result.records],
            step_index=[
                {"index": r.index, "step": r.step.to_json(), "line": i + 1} for i, r in enumerate(result.records)
            ],
            verification_summary=report.summary(),
            exit_code=code,
        ),
    )
    return Outcome(code, report)


def _failed(report: VerificationReport) -> dict[str, int]:
    failed: dict[str, int] = {}
    for c in report.checks:
        if not c.passed:
            failed[c.name] = failed.get(c.name, 0) + 1
    return dict(sorted(failed.items()))


def scan_rows(points: list[ScanPoint]) -> list[dict]:
    return [
        {
            "t": repr(p.t),
            "passed": int(p.passed),
            "failed_checks": sum(p.failed_checks.values()),
            "first_failed_check": next(iter(p.failed_checks), ""),
            "error": p.error or "",
        }
        for p in sorted(points, key=lambda p: p.t)
    ]


def _point_dir(out: str, t: float) -> str:
    return os.path.join(out, f"t_{t!r}")


def _scan_job(args) -> tuple[float, int, Optional[dict], Optional[str]]:
    values, out, debug = args
    config = validate(values, fill=False)
    outcome = run_experiment(config, out, debug)
    failed = _failed(outcome.report) if outcome.report else {"algorithm_error": 1}
    return config["t"], outcome.exit_code, failed, outcome.error


def scan_experiment(config: RunConfig, out_dir: Optional[str] = None, debug_dump: Optional[bool] = None) -> Outcome:
    """Run every grid value into its own subdirectory and summarize the frontier."""
    out = out_dir or config["output.directory"]
    grid = sorted(config["t_grid"] if config["t_grid"] is not None else [config["t"]])
    jobs = [(config.with_updates(t=t).values, _point_dir(out, t), debug_dump) for t in grid]
    if config["scan.workers"] > 1:
        with ProcessPoolExecutor(max_workers=config["scan.workers"]) as pool:
            results = list(pool.map(_scan_job, jobs))
    else:
        results = [_scan_job(job) for job in jobs]
    points = [
        ScanPoint(t, code == EXIT_OK, failed or {}, error) for t, code, failed, error in results
    ]
    scan = ScanReport(points)
    os.makedirs(out, exist_ok=True)
    art.write_json(os.path.join(out, "scan.json"), {"config_hash": config.hash(), **scan.to_json()})
    art.write_csv(os.path.join(out, art.SCAN_CSV), art.SCAN_COLUMNS, scan_rows(points))
    if not scan.monotone:
        log.error("scan frontier is not monotone in t")
    return Outcome(EXIT_OK if all(p.passed for p in points) else EXIT_CHECKS)


def verify_artifacts(run_dir: str, report_path: Optional[str] = None) -> tuple[Outcome, bool]:
    """Re-run the checks on a stored run; returns the outcome and whether the
    report is identical to the stored one."""
    with open(os.path.join(run_dir, art.MANIFEST)) as fh:
        manifest = json.load(fh)
    config = validate(manifest["config"])
    result = art.load_state(os.path.join(run_dir, art.STATE))
    report = verify(result, config["checks"], **config.verify_options)
    text = art.dumps(report.to_json())
    target = report_path or os.path.join(run_dir, "recheck", art.VERIFICATION)
    art.atomic_write(target, text)
    stored = os.path.join(run_dir, art.VERIFICATION)
    identical = os.path.exists(stored) and open(stored).read() == text
    return Outcome(EXIT_OK if report.passed else EXIT_CHECKS, report), identical


def print_summary(report: VerificationReport, stream=None) -> None:
    stream = stream or sys.stdout
    s = report.summary()
    for name, counts in s["by_name"].items():
        mark = "PASS" if counts["passed"] == counts["total"] else "FAIL"
        print(f"{mark} {name} {counts['passed']}/{counts['total']}", file=stream)
    print(f"{s['passed']}/{s['total']} checks passed", file=stream)
