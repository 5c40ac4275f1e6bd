"""Benchmark harness: datasets, execution accuracy, efficiency score.

Execution accuracy (EX) compares what the predicted and gold queries
actually return.  Comparison is order-insensitive unless the gold query
itself orders its result at the top level, in which case row order is
part of the answer.  A gold query that fails to run excludes the task
from aggregates instead of silently counting against the prediction.

The efficiency score rewards a correct prediction by how its runtime
compares to gold, in fixed tiers of the ratio gold_time/pred_time; an
incorrect prediction scores zero.  Timings are medians over repeated
runs because single SQLite timings are noisy.  The tier table is
embedded in every report so numbers stay interpretable later.
"""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import BenchError, SqlSyntaxError
from .pipeline import Deps, PipelineConfig, PipelineResult, run_pipeline
from .refine import answer_key, execute_sql
from .sql_ast import parse_select

REPORT_FORMAT = "t2s-report"
REPORT_VERSION = 1

# (minimum gold_time/pred_time ratio, reward); first match wins.
RVES_TIERS: tuple[tuple[float, float], ...] = (
    (2.0, 1.25),
    (1.0, 1.0),
    (0.5, 0.75),
    (0.25, 0.5),
    (0.0, 0.25),
)

DEFAULT_RVES_REPEATS = 5


@dataclass(frozen=True)
class Task:
    question_id: str
    db_id: str
    question: str
    gold_sql: str
    evidence: str = ""
    difficulty: str = "unknown"


def load_dataset(path: str | Path) -> list[Task]:
    """Read a task list; both benchmark spellings of the SQL key work.

    Accepts entries with `SQL` + `evidence` or with `query`; order is
    preserved.  A malformed entry fails loudly with its index.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise BenchError(f"cannot parse dataset {path}: {exc}") from exc
    if not isinstance(data, list):
        raise BenchError(f"dataset {path} must be a JSON list")
    tasks: list[Task] = []
    for index, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise BenchError(f"dataset entry {index} is not an object")
        gold = entry.get("SQL") or entry.get("query")
        question = entry.get("question")
        db_id = entry.get("db_id")
        if not gold or not question or not db_id:
            raise BenchError(
                f"dataset entry {index} lacks question, db_id, or SQL/query"
            )
        tasks.append(
            Task(
                question_id=str(entry.get("question_id", index)),
                db_id=str(db_id),
                question=str(question),
                gold_sql=str(gold),
                evidence=str(entry.get("evidence") or ""),
                difficulty=str(entry.get("difficulty") or "unknown"),
            )
        )
    return tasks


def gold_has_order_by(sql: str) -> bool:
    """Does the gold query order its final result?"""
    try:
        statement = parse_select(sql)
    except SqlSyntaxError:
        return "ORDER BY" in sql.upper()
    return bool(statement.order_by)


@dataclass
class ExResult:
    match: bool
    ordered: bool = False
    gold_failed: bool = False
    pred_status: str = ""
    gold_rows: int = 0
    pred_rows: int = 0


def eval_ex(
    db_path: str | Path,
    pred_sql: str,
    gold_sql: str,
    timeout_s: float = 30.0,
) -> ExResult:
    """Execute both queries and compare their answers."""
    gold = execute_sql(db_path, gold_sql, timeout_s=timeout_s)
    if gold.status != "Rows":
        return ExResult(match=False, gold_failed=True)
    pred = execute_sql(db_path, pred_sql, timeout_s=timeout_s)
    if pred.status != "Rows":
        return ExResult(
            match=False,
            gold_failed=False,
            pred_status=pred.status,
            gold_rows=len(gold.rows),
        )
    ordered = gold_has_order_by(gold_sql)
    match = answer_key(pred.rows, ordered=ordered) == answer_key(
        gold.rows, ordered=ordered
    )
    return ExResult(
        match=match,
        ordered=ordered,
        pred_status="Rows",
        gold_rows=len(gold.rows),
        pred_rows=len(pred.rows),
    )


def _median_time(db_path, sql: str, repeats: int, timeout_s: float) -> Optional[float]:
    timings = []
    for _ in range(max(1, repeats)):
        outcome = execute_sql(db_path, sql, timeout_s=timeout_s)
        if outcome.status != "Rows":
            return None
        timings.append(outcome.elapsed)
    return statistics.median(timings)


def rves_reward(time_ratio: float) -> float:
    for minimum, reward in RVES_TIERS:
        if time_ratio >= minimum:
            return reward
    return RVES_TIERS[-1][1]


def eval_rves(
    db_path: str | Path,
    pred_sql: str,
    gold_sql: str,
    ex_match: bool,
    repeats: int = DEFAULT_RVES_REPEATS,
    timeout_s: float = 30.0,
) -> float:
    """Timing-tiered reward; zero whenever the answer is wrong."""
    if not ex_match:
        return 0.0
    gold_time = _median_time(db_path, gold_sql, repeats, timeout_s)
    pred_time = _median_time(db_path, pred_sql, repeats, timeout_s)
    if gold_time is None or pred_time is None:
        return 0.0
    if pred_time <= 0.0:
        return RVES_TIERS[0][1]
    return rves_reward(gold_time / pred_time)


# -- full runs ------------------------------------------------------------


def run_bench(
    tasks: Sequence[Task],
    deps_by_db: dict[str, Deps],
    config: Optional[PipelineConfig] = None,
    with_rves: bool = True,
    rves_repeats: int = DEFAULT_RVES_REPEATS,
    jobs: int = 1,
    out_path: Optional[str | Path] = None,
) -> dict:
    """Run the pipeline over a task list and score it into a report.

    The report carries no timestamps, so identical runs produce
    identical documents up to measured timings.
    """
    config = config or PipelineConfig()
    for task in tasks:
        if task.db_id not in deps_by_db:
            raise BenchError(f"no database registered for db_id {task.db_id!r}")

    def solve(task: Task) -> PipelineResult:
        return run_pipeline(
            task.question,
            deps_by_db[task.db_id],
            config,
            evidence=task.evidence,
            question_id=task.question_id,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(solve, tasks))
    else:
        results = [solve(task) for task in tasks]

    task_entries = []
    for task, result in zip(tasks, results):
        db_path = deps_by_db[task.db_id].db_path
        ex = eval_ex(db_path, result.sql, task.gold_sql, timeout_s=config.execution_timeout_s)
        entry = {
            "question_id": task.question_id,
            "db_id": task.db_id,
            "difficulty": task.difficulty,
            "question": task.question,
            "sql": result.sql,
            "status": result.status,
            "gold_failed": ex.gold_failed,
            "ex": bool(ex.match),
            "ordered_comparison": ex.ordered,
            "winner_index": result.winner_index,
            "n_candidates": len(result.candidates),
            "trace_stages": list(result.trace.keys()),
        }
        if with_rves:
            entry["rves"] = eval_rves(
                db_path,
                result.sql,
                task.gold_sql,
                ex.match,
                repeats=rves_repeats,
                timeout_s=config.execution_timeout_s,
            )
        task_entries.append(entry)

    scored = [e for e in task_entries if not e["gold_failed"]]

    def aggregate(entries: list[dict]) -> dict:
        n = len(entries)
        out = {
            "n": n,
            "ex": round(sum(e["ex"] for e in entries) / n, 6) if n else 0.0,
        }
        if with_rves:
            out["rves"] = (
                round(sum(e["rves"] for e in entries) / n, 6) if n else 0.0
            )
        return out

    by_difficulty = {}
    for difficulty in sorted({e["difficulty"] for e in scored}):
        by_difficulty[difficulty] = aggregate(
            [e for e in scored if e["difficulty"] == difficulty]
        )
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "config": {
            "k_f": config.k_f,
            "n_candidates": config.n_candidates,
            "threshold": config.threshold,
            "top_k": config.top_k,
            "correction_max_rounds": config.correction_max_rounds,
            "execution_timeout_s": config.execution_timeout_s,
            "timing_repeats": config.timing_repeats,
            "ablations": {
                name: getattr(config, name)
                for name in (
                    "no_extraction",
                    "no_value_retrieval",
                    "no_column_filtering",
                    "no_info_alignment",
                    "no_fewshot",
                    "no_cot",
                    "no_alignments",
                    "no_correction",
                    "no_vote",
                )
            },
        },
        "rves_tiers": [list(tier) for tier in RVES_TIERS] if with_rves else None,
        "tasks": task_entries,
        "aggregates": {
            "overall": aggregate(scored),
            "by_difficulty": by_difficulty,
            "gold_failures": len(task_entries) - len(scored),
        },
    }
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as handle:
            json.dump(report, handle, indent=2)
            handle.write("\n")
    return report
