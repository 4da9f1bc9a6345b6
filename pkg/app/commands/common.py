import argparse
import json
import sys
from typing import Any, List, Optional, Tuple
import logging

from app.core.config import SynthesisParams, load_config_file
from app.core.utils import dumps
from app.models.code import CodeAst
from app.models.dsl import parse_code_auto
from app.models.task import TaskSpec, load_task

logger = logging.getLogger(__name__)


def read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def read_task(path: str) -> TaskSpec:
    with open(path, "rb") as fh:
        return load_task(fh.read())


def read_code(path: str, dialect: Optional[str] = None) -> CodeAst:
    return parse_code_auto(read_text(path), dialect)


def read_pool(path: str) -> List[Tuple[TaskSpec, List[int]]]:
    """Pool entries from a tasks.jsonl file"""
    pool = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            pool.append((load_task(json.dumps(record["task"]).encode("utf-8")), list(record.get("decisions", []))))
    return pool


def add_param_flags(parser: argparse.ArgumentParser, *names: str) -> None:
    """Optional overrides for SynthesisParams fields; unset flags leave lower layers alone"""
    flags = {
        "delta_size": ("--delta-size", int, "maximum number of inserted blocks"),
        "delta_iter": ("--delta-iter", int, "maximum change of a Repeat count"),
        "n": ("--n", int, "grid side length"),
        "mcts_iterations": ("--iterations", int, "MCTS iterations per run"),
        "runs_per_code": ("--runs", int, "tasks to synthesize per code"),
        "seed": ("--seed", int, "random seed"),
        "unroll_cap": ("--unroll-cap", int, "maximum loop iterations per loop entry"),
        "workers": ("--workers", int, "parallel worker processes"),
        "distractor_budget": ("--distractors", int, "cells opened by distractor paths"),
        "preinit": ("--preinit", str, "grid pre-initialization: none, border or scatter:p:seed"),
        "delta_mini": ("--delta-mini", int, "minimality slack"),
        "exploration_constant": ("--exploration", float, "UCT exploration constant"),
    }
    for name in names:
        flag, kind, help_text = flags[name]
        parser.add_argument(flag, dest=name, type=kind, default=None, help=help_text)


def params_from_args(args: argparse.Namespace) -> SynthesisParams:
    """Settings < --config file < command-line flags"""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in SynthesisParams.model_fields:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    return SynthesisParams.from_settings(**values)


def emit(payload: Any, stream=None) -> None:
    stream = stream if stream is not None else sys.stdout
    if isinstance(payload, str):
        stream.write(payload if payload.endswith("\n") else payload + "\n")
    else:
        stream.write(dumps(payload, indent=2) + "\n")
