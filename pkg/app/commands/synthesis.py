import argparse
import os
from typing import List
import logging

from app.commands.common import add_param_flags, params_from_args, read_code, read_task
from app.core.config import settings
from app.core.errors import MalformedDecisions
from app.core.utils import dumps
from app.models.dsl import inline_code
from app.models.mcts import run_pool
from app.models.pipeline import objective_diagnostics, run_pipeline
from app.models.symexec import parse_preinit, run_symbolic
from app.models.task import render_ascii, task_to_document

logger = logging.getLogger(__name__)


def parse_decisions(text: str) -> List[int]:
    try:
        return [int(part) for part in text.replace(" ", "").split(",") if part != ""]
    except ValueError:
        raise MalformedDecisions(f"Decision string must be comma-separated integers, got '{text}'")


def symrun_command(args: argparse.Namespace):
    code = read_code(args.code, args.dialect)
    params = params_from_args(args)
    pre_init = parse_preinit(params.preinit, params.n)
    outcome = run_symbolic(code, parse_decisions(args.decisions), params, pre_init=pre_init)
    payload = {
        "status": outcome.status,
        "decisions": outcome.decisions,
        "config": None,
        "trace": outcome.trace.to_json(),
        "task": None,
        "grid": None,
    }
    if outcome.config is not None:
        payload["config"] = {"row": outcome.config.row, "col": outcome.config.col, "dir": outcome.config.dir.label}
    if outcome.emitted:
        payload["task"] = task_to_document(outcome.task)
        payload["grid"] = render_ascii(outcome.task)
    return payload


def synthesize_command(args: argparse.Namespace):
    ref_task = read_task(args.ref_task)
    ref_code = read_code(args.ref_code, ref_task.dialect.value)
    code = read_code(args.code, ref_task.dialect.value) if args.code else ref_code
    params = params_from_args(args)
    params = params.model_copy(update={"n": ref_task.n})
    results, stats = run_pool(code, ref_task, ref_code, params, params.runs_per_code, params.seed)
    logger.info(f"{len(results)} tasks for {inline_code(code)}")

    payload = {
        "code": inline_code(code),
        "tasks": [
            {
                "task": task_to_document(r.task),
                "scores": r.scores.model_dump(),
                "decisions": r.decisions,
                "grid": render_ascii(r.task),
            }
            for r in results
        ],
        "stats": [s.model_dump() for s in stats],
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for i, r in enumerate(results):
            with open(os.path.join(args.out, f"task_{i}.json"), "w", encoding="utf-8") as fh:
                fh.write(dumps(task_to_document(r.task), indent=2))
        with open(os.path.join(args.out, "stats.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps(payload["stats"], indent=2))
    return payload


def pipeline_command(args: argparse.Namespace):
    ref_task = read_task(args.ref_task)
    ref_code = read_code(args.ref_code, ref_task.dialect.value)
    params = params_from_args(args)
    report = run_pipeline(ref_task, ref_code, params, args.out or settings.OUTPUT_DIR)
    return {"perStageCounts": report.perStageCounts, "pruned": len(report.pruned), "timing": report.timing}


def diagnostics_command(args: argparse.Namespace):
    task = read_task(args.task)
    code = read_code(args.code, task.dialect.value)
    ref_task = read_task(args.ref_task) if args.ref_task else None
    ref_code = read_code(args.ref_code, task.dialect.value) if args.ref_code else None
    params = params_from_args(args)
    return objective_diagnostics(task, code, params, ref_task, ref_code, args.budget).model_dump()


def register(subparsers) -> None:
    parser = subparsers.add_parser("symrun", help="symbolically execute a code along a decision string")
    parser.add_argument("code")
    parser.add_argument("--decisions", required=True, help="comma-separated, e.g. 19,1,1,0")
    parser.add_argument("--dialect", default="auto", choices=["auto", "hoc", "karel"])
    add_param_flags(parser, "n", "unroll_cap", "preinit")
    parser.set_defaults(handler=symrun_command)

    parser = subparsers.add_parser("synthesize", help="run MCTS for one code against a reference task")
    parser.add_argument("ref_task")
    parser.add_argument("ref_code")
    parser.add_argument("--code", help="code to synthesize for (defaults to the reference code)")
    parser.add_argument("--out", help="directory for task files and stats")
    add_param_flags(parser, "mcts_iterations", "runs_per_code", "seed", "unroll_cap",
                    "distractor_budget", "preinit", "exploration_constant")
    parser.set_defaults(handler=synthesize_command)

    parser = subparsers.add_parser("pipeline", help="mutate, synthesize and write a task corpus")
    parser.add_argument("ref_task")
    parser.add_argument("ref_code")
    parser.add_argument("--out", help="output directory")
    add_param_flags(parser, "delta_size", "delta_iter", "mcts_iterations", "runs_per_code", "seed",
                    "unroll_cap", "workers", "distractor_budget", "preinit", "exploration_constant")
    parser.set_defaults(handler=pipeline_command)

    parser = subparsers.add_parser("diagnostics", help="bounded minimality and structure checks")
    parser.add_argument("task")
    parser.add_argument("code")
    parser.add_argument("--ref-task")
    parser.add_argument("--ref-code")
    parser.add_argument("--budget", type=int, default=200_000, help="maximum candidate codes examined")
    add_param_flags(parser, "delta_mini", "delta_size", "unroll_cap")
    parser.set_defaults(handler=diagnostics_command)
