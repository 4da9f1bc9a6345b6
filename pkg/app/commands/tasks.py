import argparse
import logging

from app.commands.common import add_param_flags, params_from_args, read_code, read_pool, read_task
from app.models.interpreter import execute, find_shortcut
from app.models.scoring import rescore
from app.models.task import render_ascii

logger = logging.getLogger(__name__)


def render_command(args: argparse.Namespace):
    return render_ascii(read_task(args.task))


def run_command(args: argparse.Namespace):
    task = read_task(args.task)
    code = read_code(args.code, task.dialect.value)
    params = params_from_args(args)
    trace = execute(code, task, params.unroll_cap)
    return trace.to_json()


def shortcut_command(args: argparse.Namespace):
    task = read_task(args.task)
    params = params_from_args(args)
    result = find_shortcut(task, args.max_len, params.shortcut_state_cap)
    return {
        "status": result.status,
        "actions": [a.value for a in result.actions] if result.actions is not None else None,
        "explored": result.explored,
    }


def score_command(args: argparse.Namespace):
    task = read_task(args.task)
    code = read_code(args.code, task.dialect.value)
    ref_task = read_task(args.ref)
    params = params_from_args(args)
    pool = read_pool(args.pool) if args.pool else None
    decisions = [int(d) for d in args.decisions.split(",")] if args.decisions else []
    return rescore(task, code, ref_task, params, pool, decisions).model_dump()


def register(subparsers) -> None:
    parser = subparsers.add_parser("render", help="draw a task as ASCII")
    parser.add_argument("task")
    parser.set_defaults(handler=render_command)

    parser = subparsers.add_parser("run", help="execute a code on a task and print the trace")
    parser.add_argument("task")
    parser.add_argument("code")
    add_param_flags(parser, "unroll_cap")
    parser.set_defaults(handler=run_command)

    parser = subparsers.add_parser("shortcut", help="search for a short pure-action solution")
    parser.add_argument("task")
    parser.add_argument("--max-len", type=int, required=True)
    parser.set_defaults(handler=shortcut_command)

    parser = subparsers.add_parser("score", help="score a task against a reference task")
    parser.add_argument("task")
    parser.add_argument("code")
    parser.add_argument("--ref", required=True, help="reference task file")
    parser.add_argument("--pool", help="tasks.jsonl of previously generated tasks")
    parser.add_argument("--decisions", help="decision string of the task, e.g. 7,1,1,0")
    add_param_flags(parser, "unroll_cap")
    parser.set_defaults(handler=score_command)
