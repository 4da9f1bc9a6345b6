import numpy as np
from typing import List, Optional, Sequence, Tuple
import logging

from app.core.config import SynthesisParams
from app.core.errors import TaskValidationError
from app.models.code import CodeAst, Dialect, code_size, has_loop
from app.models.interpreter import Trace, execute, find_shortcut
from app.models.task import BLOCKED, TaskSpec
from app.schemas.scoring import ScoreBreakdown

logger = logging.getLogger(__name__)

PoolEntry = Tuple[TaskSpec, Sequence[int]]

# Cell labels compared by the grid dissimilarity term
LABEL_FREE = 0
LABEL_BLOCKED = 1
LABEL_GOAL = 2
LABEL_MARKER = 3


def _ratio(count: int, scale: float) -> float:
    return min(1.0, count / scale)


def f_qual(trace: Trace, n: int, dialect: Dialect) -> float:
    """Normalized richness of the executed trace; 0 for a crashed run"""
    if n <= 0:
        raise TaskValidationError("n", f"grid size must be positive, got {n}")
    if trace.crashed:
        return 0.0
    c = trace.counts
    base = 0.25 * (
        _ratio(c.moves, 2 * n)
        + _ratio(c.turns, n)
        + _ratio(c.segments, n / 2)
        + _ratio(c.long_segments, n / 3)
    )
    if Dialect(dialect) == Dialect.HOC:
        return base
    markers = 0.5 * (_ratio(c.pick_markers, n) + _ratio(c.put_markers, n))
    return 0.75 * base + 0.25 * markers


def cell_labels(task: TaskSpec) -> np.ndarray:
    labels = np.full((task.n, task.n), LABEL_FREE, dtype=np.int8)
    labels[task.premarkers > 0] = LABEL_MARKER
    labels[task.walls == BLOCKED] = LABEL_BLOCKED
    if task.goal is not None:
        labels[task.goal] = LABEL_GOAL
    return labels


def _visual_terms(task_a: TaskSpec, task_b: TaskSpec) -> Tuple[float, float, float]:
    if task_a.n != task_b.n:
        raise TaskValidationError("n", f"cannot compare a {task_a.n}x{task_a.n} grid with a {task_b.n}x{task_b.n} grid")
    n = task_a.n
    loc = float(task_a.start.cell != task_b.start.cell)
    direction = float(task_a.start.dir != task_b.start.dir)
    hamming = int((cell_labels(task_a) != cell_labels(task_b)).sum())
    grid = min(1.0, hamming * 2.0 / (n * n))
    return loc, direction, grid


def f_diss(task_a: TaskSpec, task_b: TaskSpec) -> float:
    """Visual dissimilarity: start cell, start direction and grid cells"""
    loc, direction, grid = _visual_terms(task_a, task_b)
    return (loc + direction + grid) / 3.0


def f_cov(trace: Trace) -> int:
    return int(trace.full_coverage)


def f_nocrash(trace: Trace) -> int:
    return int(not trace.crashed and not trace.depth_exceeded)


def f_nocut(task: TaskSpec, code: CodeAst, state_cap: int = 1_000_000) -> int:
    """1 only when no action sequence shorter than the code solves the task"""
    result = find_shortcut(task, code_size(code) - 1, state_cap)
    if result.status == "indeterminate":
        logger.warning("Shortcut search indeterminate; treating the task as having a shortcut")
    return int(result.status == "none")


def path_distance(a: Sequence[int], b: Sequence[int]) -> float:
    """Levenshtein distance between decision strings over the longer length"""
    a, b = list(a), list(b)
    longer = max(len(a), len(b))
    if longer == 0:
        return 0.0
    prev = np.arange(len(b) + 1)
    for i, x in enumerate(a, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return float(prev[-1]) / longer


def f_diversity(task: TaskSpec, decisions: Sequence[int], pool: Sequence[PoolEntry]) -> float:
    if not pool:
        return 1.0
    key = task.visual_key()
    best = 1.0
    for other, other_decisions in pool:
        if other.visual_key() == key:
            return 0.0
        loc, direction, grid = _visual_terms(task, other)
        best = min(best, 0.25 * (loc + direction + grid + path_distance(decisions, other_decisions)))
    return best


def f_score(task: TaskSpec, code: CodeAst, trace: Trace, ref_task: TaskSpec, params: SynthesisParams,
            pool: Optional[Sequence[PoolEntry]] = None, decisions: Optional[Sequence[int]] = None) -> ScoreBreakdown:
    """
    Indicator-gated average of coverage, quality and dissimilarity
    (plus diversity when a pool is given).
    """
    cov = f_cov(trace)
    nocrash = f_nocrash(trace)
    qual = f_qual(trace, task.n, task.dialect) if nocrash else 0.0
    diss = f_diss(task, ref_task)
    nocut = f_nocut(task, code, params.shortcut_state_cap) if nocrash else 0
    indicator = qual >= params.qual_threshold(has_loop(code)) and nocrash == 1 and nocut == 1

    diversity = None
    parts = [cov, qual, diss]
    if pool is not None:
        diversity = f_diversity(task, decisions or [], pool)
        parts.append(diversity)
    score = sum(parts) / len(parts) if indicator else 0.0
    return ScoreBreakdown(
        fCov=cov,
        fQual=qual,
        fDiss=diss,
        fNocrash=nocrash,
        fNocut=nocut,
        fDiversity=diversity,
        fScore=score,
        featureCounts=trace.counts.to_json(),
    )


def qualifies(scores: ScoreBreakdown, params: SynthesisParams, pool_mode: bool = False) -> bool:
    """Selection filter for a returned task"""
    ok = scores.fScore > 0 and scores.fCov == 1 and scores.fDiss >= params.delta_diss
    if pool_mode:
        ok = ok and (scores.fDiversity or 0.0) > 0
    return ok


def rescore(task: TaskSpec, code: CodeAst, ref_task: TaskSpec, params: SynthesisParams,
            pool: Optional[List[PoolEntry]] = None, decisions: Optional[Sequence[int]] = None) -> ScoreBreakdown:
    """Score a task from scratch by executing the code on it"""
    trace = execute(code, task, params.unroll_cap)
    return f_score(task, code, trace, ref_task, params, pool, decisions)
