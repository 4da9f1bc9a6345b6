import os
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, Iterator, List, Optional, Tuple
import logging

from app.core.config import SynthesisParams
from app.core.errors import ReferenceMismatchError
from app.core.utils import derive_seed, dumps, write_jsonl
from app.models.code import (
    ActionStmt, CodeAst, DIALECT_ACTIONS, DIALECT_CONDITIONS, If, IfElse, MAX_ITER, MIN_ITER,
    Repeat, RepeatUntil, Stmt, While, code_size, struct_equal, validate_code,
)
from app.models.dsl import code_from_json, code_to_json, inline_code
from app.models.interpreter import execute, find_shortcut
from app.models.mcts import run_pool
from app.models.mutation import build_sketch, enumerate_mutations, stage_counts
from app.models.task import TaskSpec, is_conceptually_similar, load_task, save_task, task_to_document
from app.schemas.records import (
    DiagnosticsReport, ObjectiveResult, PerTaskEntry, PipelineReport, PrunedCode, StageCountsDocument, TaskRecord,
)

logger = logging.getLogger(__name__)

REASON_ALL_CRASH = "all-crash"
REASON_FILTER = "filter"


def code_id(index: int) -> str:
    return f"c{index:04d}"


def _synthesize_code(item: Tuple[str, dict, bytes, dict, dict, int]) -> Dict[str, Any]:
    """Worker: run the pool for one mutated code; returns plain JSON-ready values"""
    cid, code_doc, ref_task_bytes, ref_code_doc, params_doc, seed = item
    code = code_from_json(code_doc)
    ref_task = load_task(ref_task_bytes)
    ref_code = code_from_json(ref_code_doc)
    params = SynthesisParams(**params_doc)
    logger.info(f"Synthesizing {cid}: {inline_code(code)}")
    results, stats = run_pool(code, ref_task, ref_code, params, params.runs_per_code, seed)

    tasks = []
    for i, result in enumerate(results):
        run_seed = seed if i == 0 else derive_seed(seed, "run", i)
        tasks.append({
            "task": task_to_document(result.task),
            "scores": result.scores.model_dump(),
            "decisions": list(result.decisions),
            "seed": run_seed,
        })
    reason = None
    if not tasks:
        emitted = sum(s.statusCounts.get("taskEmitted", 0) for s in stats)
        reason = REASON_FILTER if emitted else REASON_ALL_CRASH
        logger.warning(f"Pruned {cid} ({reason})")
    return {
        "codeId": cid,
        "code": inline_code(code),
        "tasks": tasks,
        "reason": reason,
        "elapsed": sum(s.elapsed for s in stats),
    }


def _work_items(codes: List[CodeAst], ref_task: TaskSpec, ref_code: CodeAst,
                params: SynthesisParams) -> Iterator[Tuple[str, dict, bytes, dict, dict, int]]:
    ref_bytes = save_task(ref_task)
    ref_doc = code_to_json(ref_code)
    params_doc = params.model_dump()
    for index, code in enumerate(codes):
        cid = code_id(index)
        yield cid, code_to_json(code), ref_bytes, ref_doc, params_doc, derive_seed(params.seed, cid)


def run_pipeline(ref_task: TaskSpec, ref_code: CodeAst, params: SynthesisParams,
                 output_dir: str) -> PipelineReport:
    """
    Mutate the reference code, synthesize a pool of tasks per mutated code and
    write tasks.jsonl, one JSON file per task and report.json into output_dir.
    """
    started = time.perf_counter()
    reference = execute(ref_code, ref_task, params.unroll_cap)
    if not reference.solved:
        raise ReferenceMismatchError("Reference code does not solve the reference task")
    if params.n != ref_task.n:
        logger.info(f"Using the reference grid size n={ref_task.n} instead of {params.n}")
        params = params.model_copy(update={"n": ref_task.n})

    sketch = build_sketch(ref_code, params.delta_size, params.delta_iter)
    counts = stage_counts(sketch)
    codes = [c for c in enumerate_mutations(sketch, "all") if c != ref_code]
    mutated = time.perf_counter()
    logger.info(f"{len(codes)} mutated codes to synthesize (stage counts {counts.to_json()})")

    items = list(_work_items(codes, ref_task, ref_code, params))
    if params.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=params.workers) as executor:
            outcomes = list(executor.map(_synthesize_code, items))
    else:
        outcomes = [_synthesize_code(item) for item in items]
    outcomes.sort(key=lambda o: o["codeId"])
    synthesized = time.perf_counter()

    tasks_dir = os.path.join(output_dir, "tasks")
    os.makedirs(tasks_dir, exist_ok=True)
    records: List[TaskRecord] = []
    per_task: List[PerTaskEntry] = []
    pruned: List[PrunedCode] = []
    for outcome in outcomes:
        if outcome["reason"] is not None:
            pruned.append(PrunedCode(codeId=outcome["codeId"], code=outcome["code"], reason=outcome["reason"]))
            continue
        for i, entry in enumerate(outcome["tasks"]):
            name = f"{outcome['codeId']}_{i}.json"
            with open(os.path.join(tasks_dir, name), "w", encoding="utf-8") as fh:
                fh.write(dumps(entry["task"], indent=2))
            records.append(TaskRecord(codeId=outcome["codeId"], code=outcome["code"], **entry))
            per_task.append(PerTaskEntry(
                codeId=outcome["codeId"], taskFile=os.path.join("tasks", name), scores=entry["scores"],
                seed=entry["seed"], decisions=entry["decisions"],
            ))

    written = write_jsonl(os.path.join(output_dir, "tasks.jsonl"), (r.model_dump() for r in records))
    report = PipelineReport(
        reference={"code": inline_code(ref_code), "size": code_size(ref_code), "n": ref_task.n},
        perStageCounts={
            "mutationsD0": counts.count_d0,
            "mutationsD01": counts.count_d01,
            "mutationsAll": counts.count_all,
            "candidateCodes": len(codes),
            "validCodes": len(outcomes) - len(pruned),
            "emittedTasks": written,
            "prunedCodes": len(pruned),
        },
        mutationCounts=StageCountsDocument(**counts.to_json()),
        perTask=per_task,
        pruned=pruned,
        timing={
            "mutation": round(mutated - started, 4),
            "synthesis": round(synthesized - mutated, 4),
            "total": round(time.perf_counter() - started, 4),
        },
    )
    with open(os.path.join(output_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps(report.model_dump(), indent=2))
    logger.info(f"✅ Wrote {written} tasks to {output_dir} ({len(pruned)} codes pruned)")
    return report


class _CodeSpace:
    """Codes over a store, in increasing size, with constructs only at the top level"""

    def __init__(self, task: TaskSpec, budget: int):
        dialect = task.dialect
        self.dialect = dialect
        self.actions = [a for a in DIALECT_ACTIONS[dialect] if a.value in task.store]
        self.constructs = [b for b in ("Repeat", "While", "RepeatUntil", "If", "IfElse") if b in task.store]
        self.conditions = DIALECT_CONDITIONS[dialect]
        self.budget = budget
        self.explored = 0
        self.exhausted = True

    def _inner(self, size: int) -> Iterator[Tuple[Stmt, ...]]:
        """Action-only bodies of exactly `size` blocks"""
        if size == 0:
            yield ()
            return
        for action in self.actions:
            for rest in self._inner(size - 1):
                yield (ActionStmt(action),) + rest

    def _constructs(self, inner_size: int) -> Iterator[Tuple[Stmt, int]]:
        for kind in self.constructs:
            if kind == "IfElse":
                for then_size in range(1, inner_size):
                    for cond in self.conditions:
                        for then_body in self._inner(then_size):
                            for else_body in self._inner(inner_size - then_size):
                                yield IfElse(cond, then_body, else_body), 1 + inner_size
                continue
            for body in self._inner(inner_size):
                if kind == "Repeat":
                    for times in range(MIN_ITER, MAX_ITER + 1):
                        yield Repeat(times, body), 1 + inner_size
                elif kind == "RepeatUntil":
                    yield RepeatUntil(body), 1 + inner_size
                else:
                    for cond in self.conditions:
                        yield (While(cond, body) if kind == "While" else If(cond, body)), 1 + inner_size

    def _bodies(self, size: int) -> Iterator[Tuple[Stmt, ...]]:
        if size == 0:
            yield ()
            return
        for action in self.actions:
            for rest in self._bodies(size - 1):
                yield (ActionStmt(action),) + rest
        for inner_size in range(1, size):
            for stmt, used in self._constructs(inner_size):
                for rest in self._bodies(size - used):
                    yield (stmt,) + rest

    def codes(self, max_size: int) -> Iterator[CodeAst]:
        for size in range(1, max_size + 1):
            for body in self._bodies(size):
                if self.explored >= self.budget:
                    self.exhausted = False
                    return
                self.explored += 1
                code = CodeAst(body, self.dialect)
                try:
                    yield validate_code(code)
                except ValueError:
                    continue

    def depth_restricted(self, max_size: int) -> bool:
        """Whether nested constructs could have produced codes this search skips"""
        return bool(self.constructs) and max_size > 2


def objective_diagnostics(task: TaskSpec, code: CodeAst, params: SynthesisParams,
                          ref_task: Optional[TaskSpec] = None, ref_code: Optional[CodeAst] = None,
                          node_budget: int = 200_000) -> DiagnosticsReport:
    """
    Bounded checks of minimality (no solution with fewer than maxBlocks - delta_mini
    blocks) and structure (every solution within maxBlocks shares the code's
    nesting). Never claims proven unless the search covered the whole space.
    """
    t_size = task.max_blocks
    limit = t_size - params.delta_mini

    minimality: Optional[ObjectiveResult] = None
    shortcut = find_shortcut(task, limit - 1, params.shortcut_state_cap)
    if shortcut.found:
        actions = " ".join(a.value for a in shortcut.actions)
        minimality = ObjectiveResult(status="refuted", detail="action sequence shorter than the block budget",
                                     explored=shortcut.explored, counterexample=actions)

    space = _CodeSpace(task, node_budget)
    structure: Optional[ObjectiveResult] = None
    for candidate in space.codes(t_size):
        if minimality is not None and structure is not None:
            break
        if not execute(candidate, task, params.unroll_cap).solved:
            continue
        size = code_size(candidate)
        if minimality is None and size < limit:
            minimality = ObjectiveResult(status="refuted", detail=f"solution with {size} blocks",
                                         explored=space.explored, counterexample=inline_code(candidate))
        if structure is None and not struct_equal(candidate, code):
            structure = ObjectiveResult(status="refuted", detail="solution with a different nesting structure",
                                        explored=space.explored, counterexample=inline_code(candidate))

    def settled(max_size: int, what: str, uses_shortcut: bool) -> ObjectiveResult:
        covered = space.exhausted and not (uses_shortcut and shortcut.status == "indeterminate")
        if covered and not space.depth_restricted(max_size):
            return ObjectiveResult(status="proven", detail=f"no {what} up to {max_size} blocks", explored=space.explored)
        reason = "search budget exhausted" if not covered else "nested constructs were not searched"
        return ObjectiveResult(status="indeterminate", detail=reason, explored=space.explored)

    if minimality is None:
        minimality = settled(limit - 1, "shorter solution", True)
    if structure is None:
        structure = settled(t_size, "differently nested solution", False)

    similar = None
    if ref_task is not None and ref_code is not None:
        similar = is_conceptually_similar(task, code, ref_task, ref_code, params.delta_size)
    return DiagnosticsReport(
        taskSize=t_size,
        deltaMini=params.delta_mini,
        minimality=minimality,
        structure=structure,
        conceptuallySimilar=similar,
    )
