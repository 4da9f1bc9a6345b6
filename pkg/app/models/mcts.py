import math
import time
import numpy as np
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple
import logging

from app.core.config import SynthesisParams
from app.core.utils import derive_seed
from app.models.code import CodeAst, has_loop, struct_equal
from app.models.interpreter import execute
from app.models.scoring import PoolEntry, f_diss, f_diversity, f_qual, f_score, qualifies, rescore
from app.models.symexec import (
    N_CONFIGS, RolloutDecisions, SymOutcome, apply_distractors, parse_preinit, run_symbolic,
)
from app.models.task import TaskSpec
from app.schemas.scoring import RunStats, ScoreBreakdown, TimelinePoint

logger = logging.getLogger(__name__)


class SearchNode:
    """Node of the decision tree, keyed by its decision prefix"""

    def __init__(self, prefix: Tuple[int, ...], parent: Optional["SearchNode"] = None):
        self.prefix = prefix
        self.parent = parent
        self.children: Dict[int, "SearchNode"] = {}
        self.visit_count = 0
        self.total_reward = 0.0
        self.terminal: Optional[SymOutcome] = None

    @property
    def options(self) -> int:
        return N_CONFIGS if not self.prefix else 2

    @property
    def fully_expanded(self) -> bool:
        return len(self.children) == self.options

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.visit_count if self.visit_count else 0.0

    def next_unexpanded(self) -> int:
        for decision in range(self.options):
            if decision not in self.children:
                return decision
        raise ValueError("node is fully expanded")

    def best_child(self, exploration: float) -> "SearchNode":
        best, best_value = None, float("-inf")
        log_n = math.log(self.visit_count) if self.visit_count else 0.0
        for decision in sorted(self.children):
            child = self.children[decision]
            value = child.mean_reward + exploration * math.sqrt(log_n / child.visit_count)
            if value > best_value:
                best, best_value = child, value
        return best

    def update(self, reward: float) -> None:
        self.total_reward += reward
        self.visit_count += 1


@dataclass
class SynthesisResult:
    task: TaskSpec
    scores: ScoreBreakdown
    decisions: List[int]
    stats: RunStats
    code: Optional[CodeAst] = None


@dataclass
class _Evaluation:
    reward: float
    outcome: SymOutcome


class MctsSearch:
    """
    UCT over decision strings for one code. The root chooses among the 20
    initial configurations; every other node between branch outcomes 0 and 1.
    """

    def __init__(self, code: CodeAst, ref_task: TaskSpec, params: SynthesisParams, seed: int,
                 pool: Optional[Sequence[PoolEntry]] = None, ref_code: Optional[CodeAst] = None):
        self.code = code
        self.ref_task = ref_task
        self.params = params
        self.seed = seed
        self.pool = list(pool) if pool is not None else None
        self.rng = np.random.default_rng(seed)
        self.root = SearchNode(())
        self.pre_init = parse_preinit(params.preinit, params.n)
        self.qual_threshold = params.qual_threshold(has_loop(code))
        self.cache: Dict[Tuple[int, ...], _Evaluation] = {}
        self.rejected: Set[Tuple[int, ...]] = set()
        self.status_counts: Dict[str, int] = {}
        self.timeline: List[TimelinePoint] = []
        self.best: Optional[Tuple[TaskSpec, ScoreBreakdown, List[int]]] = None
        self.stats: Optional[RunStats] = None
        if ref_code is not None and not struct_equal(code, ref_code):
            logger.warning("Synthesizing for a code whose structure differs from the reference code")

    def _select(self) -> SearchNode:
        node = self.root
        while node.terminal is None and node.fully_expanded:
            node = node.best_child(self.params.exploration_constant)
        return node

    def _expand(self, node: SearchNode) -> SearchNode:
        if node.terminal is not None:
            return node
        decision = node.next_unexpanded()
        child = SearchNode(node.prefix + (decision,), node)
        node.children[decision] = child
        return child

    def _rollout(self, node: SearchNode) -> _Evaluation:
        if node.terminal is not None:
            return self.cache[tuple(node.terminal.decisions)]
        provider = RolloutDecisions(node.prefix, self.rng)
        outcome = run_symbolic(
            self.code, (), self.params, pre_init=self.pre_init, store=self.ref_task.store, provider=provider,
        )
        if len(outcome.decisions) == len(node.prefix):
            node.terminal = outcome
        key = tuple(outcome.decisions)
        cached = self.cache.get(key)
        if cached is None:
            cached = _Evaluation(self._reward(outcome), outcome)
            self.cache[key] = cached
        return cached

    def _reward(self, outcome: SymOutcome) -> float:
        if not outcome.emitted:
            return 0.0
        task, trace = outcome.task, outcome.trace
        parts = [
            float(trace.full_coverage),
            f_qual(trace, task.n, task.dialect),
            f_diss(task, self.ref_task),
        ]
        if self.pool is not None:
            parts.append(f_diversity(task, outcome.decisions, self.pool))
        return sum(parts) / len(parts)

    def _consider(self, evaluation: _Evaluation, iteration: int) -> None:
        outcome = evaluation.outcome
        if not outcome.emitted:
            return
        best_score = self.best[1].fScore if self.best is not None else 0.0
        if evaluation.reward <= best_score:
            return
        key = tuple(outcome.decisions)
        if key in self.rejected:
            return
        trace = outcome.trace
        # cheap filters before the shortcut search
        if not trace.full_coverage or f_qual(trace, outcome.task.n, outcome.task.dialect) < self.qual_threshold:
            return
        if f_diss(outcome.task, self.ref_task) < self.params.delta_diss:
            return
        replay = execute(self.code, outcome.task, self.params.effective_unroll_cap)
        scores = f_score(outcome.task, self.code, replay, self.ref_task, self.params, self.pool, outcome.decisions)
        if qualifies(scores, self.params, pool_mode=self.pool is not None) and scores.fScore > best_score:
            self.best = (outcome.task, scores, list(outcome.decisions))
            self.timeline.append(TimelinePoint(iteration=iteration, fScore=scores.fScore))
            logger.debug(f"Iteration {iteration}: best fScore {scores.fScore:.4f}")
        elif not qualifies(scores, self.params, pool_mode=self.pool is not None):
            self.rejected.add(key)

    def run(self) -> Optional[SynthesisResult]:
        start = time.perf_counter()
        iterations = self.params.mcts_iterations
        for iteration in range(1, iterations + 1):
            node = self._expand(self._select())
            evaluation = self._rollout(node)
            status = evaluation.outcome.status
            self.status_counts[status] = self.status_counts.get(status, 0) + 1
            self._consider(evaluation, iteration)
            while node is not None:
                node.update(evaluation.reward)
                node = node.parent

        self.stats = RunStats(
            iterations=iterations,
            uniqueTraces=len(self.cache),
            bestScoreTimeline=self.timeline,
            elapsed=time.perf_counter() - start,
            statusCounts=dict(sorted(self.status_counts.items())),
        )
        if self.best is None:
            logger.info(f"No qualifying task after {iterations} iterations (seed {self.seed})")
            return None
        task, scores, decisions = self.best
        task, scores = self._with_distractors(task, scores, decisions)
        return SynthesisResult(task, scores, decisions, self.stats, self.code)

    def _with_distractors(self, task: TaskSpec, scores: ScoreBreakdown,
                          decisions: List[int]) -> Tuple[TaskSpec, ScoreBreakdown]:
        budget = self.params.distractor_budget
        if budget <= 0:
            return task, scores
        opened = apply_distractors(
            task, self.code, derive_seed(self.seed, "distractors"), budget,
            self.params.effective_unroll_cap, self.params.shortcut_state_cap,
        )
        rescored = rescore(opened, self.code, self.ref_task, self.params, self.pool, decisions)
        if qualifies(rescored, self.params, pool_mode=self.pool is not None):
            return opened, rescored
        logger.warning("Distractors broke the selection filter; keeping the plain task")
        return task, scores


def synthesize_task(code: CodeAst, ref_task: TaskSpec, ref_code: Optional[CodeAst], params: SynthesisParams,
                    pool: Optional[Sequence[PoolEntry]] = None, seed: Optional[int] = None) -> Optional[SynthesisResult]:
    """Best qualifying task for `code`, or None"""
    seed = params.seed if seed is None else seed
    return MctsSearch(code, ref_task, params, seed, pool, ref_code).run()


def run_pool(code: CodeAst, ref_task: TaskSpec, ref_code: Optional[CodeAst], params: SynthesisParams,
             k: int, seed: Optional[int] = None) -> Tuple[List[SynthesisResult], List[RunStats]]:
    """
    Sequential runs, each scored for diversity against the tasks found so far.
    The first run scores against an empty pool so every member shares one scale.
    """
    if k < 1:
        raise ValueError(f"pool size must be at least 1, got {k}")
    seed = params.seed if seed is None else seed
    results: List[SynthesisResult] = []
    stats: List[RunStats] = []
    for i in range(k):
        run_seed = seed if i == 0 else derive_seed(seed, "run", i)
        pool = [(r.task, r.decisions) for r in results]
        search = MctsSearch(code, ref_task, params, run_seed, pool, ref_code)
        result = search.run()
        stats.append(search.stats)
        if result is None:
            break
        results.append(result)
    return results, stats


def synthesize_pool(code: CodeAst, ref_task: TaskSpec, ref_code: Optional[CodeAst], params: SynthesisParams,
                    k: int, seed: Optional[int] = None) -> List[SynthesisResult]:
    return run_pool(code, ref_task, ref_code, params, k, seed)[0]
