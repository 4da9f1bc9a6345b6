import itertools
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union
import logging

from app.core.errors import ConfigError, ConstraintStructureError
from app.models.code import (
    Action, ActionStmt, CodeAst, Condition, DIALECT_ACTIONS, DIALECT_CONDITIONS, Dialect,
    If, IfElse, MAX_ITER, MIN_ITER, NEGATION, Repeat, RepeatUntil, Stmt, While,
    code_size, struct_equal,
)

logger = logging.getLogger(__name__)

# φ: an insertion slot left empty
PHI = None

ORIGINAL = "original"
INSERTION = "insertion"

STAGE_D0 = "d0"
STAGE_D01 = "d01"
STAGE_ALL = "all"
STAGE_ALIASES = {
    "d0": STAGE_D0, "Δ0": STAGE_D0, "Δ0-only": STAGE_D0,
    "d01": STAGE_D01, "Δ0+Δ1": STAGE_D01,
    "all": STAGE_ALL,
}

L, R, M = Action.TURN_LEFT, Action.TURN_RIGHT, Action.MOVE
PI, PU = Action.PICK_MARKER, Action.PUT_MARKER

HOC_ELIMINATIONS: Tuple[Tuple[Action, ...], ...] = ((L, R), (R, L), (L, L, L), (R, R, R))
KAREL_ELIMINATIONS: Tuple[Tuple[Action, ...], ...] = HOC_ELIMINATIONS + (
    # no net marker change, or a double pick/put crash
    (PI, PU), (PU, PI), (PI, PI), (PU, PU),
    # same output without the turns
    (L, PI, R), (R, PI, L), (L, PU, R), (R, PU, L),
    # same output without the marker actions
    (PI, L, PU), (PU, L, PI), (PI, R, PU), (PU, R, PI),
    # crash on the second marker action
    (PI, L, PI), (PI, R, PI), (PU, L, PU), (PU, R, PU),
)


def elimination_sequences(dialect: Dialect) -> Tuple[Tuple[Action, ...], ...]:
    return KAREL_ELIMINATIONS if dialect == Dialect.KAREL else HOC_ELIMINATIONS


@dataclass(frozen=True)
class Slot:
    kind: str
    ref_value: Optional[Action]
    domain: Tuple[Optional[Action], ...]
    site: int = -1
    # position inside its insertion block, and whether the block packs toward the originals
    block_pos: int = 0
    packs_right: bool = False


@dataclass(frozen=True)
class ActionSeq:
    index: int
    slots: Tuple[Slot, ...]
    boundary: bool = False
    capacities: Tuple[int, ...] = ()
    # program boundary next to a run whose outer block already covers its insertions
    shadowed: bool = False

    @property
    def originals(self) -> Tuple[Slot, ...]:
        return tuple(s for s in self.slots if s.kind == ORIGINAL)

    @property
    def reference(self) -> Tuple[Action, ...]:
        return tuple(s.ref_value for s in self.originals)


@dataclass(frozen=True)
class CondVar:
    index: int
    ref_value: Condition
    domain: Tuple[Condition, ...]


@dataclass(frozen=True)
class IterVar:
    index: int
    ref_value: int
    domain: Tuple[int, ...]


# Skeleton nodes: the code's construct shape with holes for every variable
@dataclass(frozen=True)
class SeqHole:
    seq: int
    shadowed: bool = False


@dataclass(frozen=True)
class RepeatHole:
    iter_var: int
    body: tuple


@dataclass(frozen=True)
class WhileHole:
    cond_var: int
    body: tuple


@dataclass(frozen=True)
class UntilHole:
    body: tuple


@dataclass(frozen=True)
class IfHole:
    cond_var: int
    body: tuple


@dataclass(frozen=True)
class IfElseHole:
    cond_var: int
    then_body: tuple
    else_body: tuple


SkeletonNode = Union[SeqHole, RepeatHole, WhileHole, UntilHole, IfHole, IfElseHole]


@dataclass(frozen=True)
class RepeatContext:
    """A Repeat whose body is one action sequence, with its neighbouring sequences"""
    iter_var: int
    body_seq: int
    prev_seq: Optional[int]
    next_seq: Optional[int]


@dataclass(frozen=True)
class CondContext:
    """Leading action sequence of a conditional body; negated for an else branch"""
    cond_var: int
    seq: Optional[int]
    negated: bool = False


@dataclass(frozen=True)
class Sketch:
    origin: CodeAst
    skeleton: Tuple[SkeletonNode, ...]
    seqs: Tuple[ActionSeq, ...]
    conds: Tuple[CondVar, ...]
    iters: Tuple[IterVar, ...]
    delta_size: int
    delta_iter: int
    repeat_contexts: Tuple[RepeatContext, ...] = ()
    cond_contexts: Tuple[CondContext, ...] = ()

    @property
    def dialect(self) -> Dialect:
        return self.origin.dialect

    @property
    def slot_count(self) -> int:
        return sum(len(s.slots) for s in self.seqs)


def original_domain(action: Action) -> Tuple[Action, ...]:
    if action == Action.MOVE:
        return (Action.MOVE,)
    if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        return (Action.TURN_LEFT, Action.TURN_RIGHT)
    return (Action.PUT_MARKER, Action.PICK_MARKER)


def condition_group(cond: Condition, dialect: Dialect) -> Tuple[Condition, ...]:
    if dialect == Dialect.HOC:
        if cond == Condition.PATH_AHEAD:
            return (Condition.PATH_AHEAD,)
        return (Condition.PATH_LEFT, Condition.PATH_RIGHT)
    if cond in (Condition.PATH_AHEAD, Condition.NO_PATH_AHEAD):
        return (Condition.PATH_AHEAD, Condition.NO_PATH_AHEAD)
    if cond in (Condition.MARKER, Condition.NO_MARKER):
        return (Condition.MARKER, Condition.NO_MARKER)
    return (Condition.PATH_LEFT, Condition.NO_PATH_LEFT, Condition.PATH_RIGHT, Condition.NO_PATH_RIGHT)


def iter_domain(ref: int, delta_iter: int) -> Tuple[int, ...]:
    return tuple(range(max(MIN_ITER, ref - delta_iter), min(MAX_ITER, ref + delta_iter) + 1))


def _groups(body: Tuple[Stmt, ...]) -> List[Tuple[str, object]]:
    """Split a body into maximal action runs and single constructs"""
    groups: List[Tuple[str, object]] = []
    for stmt in body:
        if isinstance(stmt, ActionStmt):
            if groups and groups[-1][0] == "run":
                groups[-1][1].append(stmt.action)
            else:
                groups.append(("run", [stmt.action]))
        else:
            groups.append(("stmt", stmt))
    return groups


class _SketchBuilder:
    def __init__(self, code: CodeAst, delta_size: int, delta_iter: int):
        self.code = code
        self.d = delta_size
        self.delta_iter = delta_iter
        self.insert_domain: Tuple[Optional[Action], ...] = (PHI,) + DIALECT_ACTIONS[code.dialect]
        self.seqs: List[ActionSeq] = []
        self.conds: List[CondVar] = []
        self.iters: List[IterVar] = []
        self.repeat_ctx: List[RepeatContext] = []
        self.cond_ctx: List[CondContext] = []

    def _insertions(self, count: int, site: int, packs_right: bool) -> List[Slot]:
        return [Slot(INSERTION, PHI, self.insert_domain, site, pos, packs_right) for pos in range(count)]

    def boundary(self, shadowed: bool = False) -> Optional[SeqHole]:
        if self.d == 0:
            return None
        seq = ActionSeq(len(self.seqs), tuple(self._insertions(self.d, 0, False)), True, (self.d,), shadowed)
        self.seqs.append(seq)
        return SeqHole(seq.index, shadowed)

    def run(self, actions: List[Action]) -> SeqHole:
        m = len(actions)
        slots = self._insertions(self.d, 0, True)
        for j, action in enumerate(actions):
            slots.append(Slot(ORIGINAL, action, original_domain(action)))
            if j < m - 1:
                slots.extend(self._insertions(1, j + 1, False))
        slots.extend(self._insertions(self.d, m, False))
        seq = ActionSeq(len(self.seqs), tuple(slots), False, (self.d,) + (1,) * (m - 1) + (self.d,))
        self.seqs.append(seq)
        return SeqHole(seq.index)

    def body(self, stmts: Tuple[Stmt, ...], top_level: bool) -> tuple:
        groups = _groups(stmts)
        if top_level and len(groups) == 1 and groups[0][0] == "run":
            return self.straight_line(groups[0][1])
        nodes: List[SkeletonNode] = []
        if top_level and (not groups or groups[0][0] == "stmt"):
            hole = self.boundary()
            if hole is not None:
                nodes.append(hole)
        for kind, item in groups:
            nodes.append(self.run(item) if kind == "run" else self.construct(item))
        if top_level and groups and groups[-1][0] == "stmt" and not isinstance(groups[-1][1], RepeatUntil):
            hole = self.boundary()
            if hole is not None:
                nodes.append(hole)

        for i, node in enumerate(nodes):
            if isinstance(node, RepeatHole) and len(node.body) == 1 and isinstance(node.body[0], SeqHole):
                prev = nodes[i - 1].seq if i > 0 and isinstance(nodes[i - 1], SeqHole) else None
                nxt = nodes[i + 1].seq if i + 1 < len(nodes) and isinstance(nodes[i + 1], SeqHole) else None
                self.repeat_ctx.append(RepeatContext(node.iter_var, node.body[0].seq, prev, nxt))
        return tuple(nodes)

    def straight_line(self, actions: List[Action]) -> tuple:
        """Start boundary, the run, end boundary"""
        start = self.boundary(shadowed=True)
        run = self.run(actions)
        end = self.boundary(shadowed=True)
        return tuple(node for node in (start, run, end) if node is not None)

    def _cond_var(self, cond: Condition) -> int:
        var = CondVar(len(self.conds), cond, condition_group(cond, self.code.dialect))
        self.conds.append(var)
        return var.index

    @staticmethod
    def _leading_seq(nodes: tuple) -> Optional[int]:
        return nodes[0].seq if nodes and isinstance(nodes[0], SeqHole) else None

    def construct(self, stmt: Stmt) -> SkeletonNode:
        if isinstance(stmt, Repeat):
            var = IterVar(len(self.iters), stmt.times, iter_domain(stmt.times, self.delta_iter))
            self.iters.append(var)
            return RepeatHole(var.index, self.body(stmt.body, False))
        if isinstance(stmt, RepeatUntil):
            return UntilHole(self.body(stmt.body, False))
        index = self._cond_var(stmt.cond)
        if isinstance(stmt, IfElse):
            then_nodes = self.body(stmt.then_body, False)
            else_nodes = self.body(stmt.else_body, False)
            self.cond_ctx.append(CondContext(index, self._leading_seq(then_nodes)))
            self.cond_ctx.append(CondContext(index, self._leading_seq(else_nodes), negated=True))
            return IfElseHole(index, then_nodes, else_nodes)
        nodes = self.body(stmt.body, False)
        self.cond_ctx.append(CondContext(index, self._leading_seq(nodes)))
        if isinstance(stmt, While):
            return WhileHole(index, nodes)
        return IfHole(index, nodes)


def build_sketch(code: CodeAst, delta_size: int = 2, delta_iter: int = 1) -> Sketch:
    """Abstract a code into action sequences, condition and iteration variables"""
    builder = _SketchBuilder(code, delta_size, delta_iter)
    skeleton = builder.body(code.body, top_level=True)
    return Sketch(
        origin=code,
        skeleton=skeleton,
        seqs=tuple(builder.seqs),
        conds=tuple(builder.conds),
        iters=tuple(builder.iters),
        delta_size=delta_size,
        delta_iter=delta_iter,
        repeat_contexts=tuple(builder.repeat_ctx),
        cond_contexts=tuple(builder.cond_ctx),
    )


def instantiate(sketch: Sketch, runs: Sequence[Sequence[Optional[Action]]],
                cond_values: Sequence[Condition], iter_values: Sequence[int]) -> CodeAst:
    """Fill the skeleton; φ entries in a run are skipped"""
    def build(nodes) -> Tuple[Stmt, ...]:
        out: List[Stmt] = []
        for node in nodes:
            if isinstance(node, SeqHole):
                out.extend(ActionStmt(a) for a in runs[node.seq] if a is not PHI)
            elif isinstance(node, RepeatHole):
                out.append(Repeat(iter_values[node.iter_var], build(node.body)))
            elif isinstance(node, WhileHole):
                out.append(While(cond_values[node.cond_var], build(node.body)))
            elif isinstance(node, UntilHole):
                out.append(RepeatUntil(build(node.body)))
            elif isinstance(node, IfHole):
                out.append(If(cond_values[node.cond_var], build(node.body)))
            else:
                out.append(IfElse(cond_values[node.cond_var], build(node.then_body), build(node.else_body)))
        return tuple(out)

    return CodeAst(build(sketch.skeleton), sketch.dialect)


def _first_of(actions: Sequence[Action], target: Action, blockers: Tuple[Action, ...]) -> bool:
    for a in actions:
        if a == target:
            return True
        if a in blockers:
            return False
    return False


def _first_marker_is(actions: Sequence[Action], wanted: Action) -> bool:
    for a in actions:
        if a in (Action.PICK_MARKER, Action.PUT_MARKER):
            return a == wanted
    return True


def body_rule_ok(cond: Condition, actions: Sequence[Action]) -> bool:
    """Whether a conditional body is meaningful for the condition guarding it"""
    if cond == Condition.PATH_LEFT:
        return _first_of(actions, Action.TURN_LEFT, (Action.MOVE, Action.TURN_RIGHT))
    if cond == Condition.PATH_RIGHT:
        return _first_of(actions, Action.TURN_RIGHT, (Action.MOVE, Action.TURN_LEFT))
    if cond == Condition.PATH_AHEAD:
        return _first_of(actions, Action.MOVE, (Action.TURN_LEFT, Action.TURN_RIGHT))
    if cond == Condition.NO_PATH_AHEAD:
        turned = False
        for a in actions:
            if a in (Action.TURN_LEFT, Action.TURN_RIGHT):
                turned = True
            elif a == Action.MOVE and not turned:
                return False
        return True
    if cond == Condition.MARKER:
        return _first_marker_is(actions, Action.PICK_MARKER)
    if cond == Condition.NO_MARKER:
        return _first_marker_is(actions, Action.PUT_MARKER)
    # noPathLeft / noPathRight carry no rule
    return True


def contains_elimination(run: Sequence[Action], eliminations) -> bool:
    run = tuple(run)
    for elim in eliminations:
        k = len(elim)
        for i in range(len(run) - k + 1):
            if run[i:i + k] == elim:
                return True
    return False


def _ends_with_elimination(run: List[Action], eliminations) -> bool:
    for elim in eliminations:
        k = len(elim)
        if len(run) >= k and tuple(run[-k:]) == elim:
            return True
    return False


def repeat_context_ok(ctx: RepeatContext, runs: Sequence[Tuple[Action, ...]]) -> bool:
    body = tuple(runs[ctx.body_seq])
    if not body:
        return True
    k = len(body)
    if ctx.prev_seq is not None:
        prev = tuple(runs[ctx.prev_seq])
        if len(prev) >= k and prev[-k:] == body:
            return False
    if ctx.next_seq is not None:
        nxt = tuple(runs[ctx.next_seq])
        if len(nxt) >= k and nxt[:k] == body:
            return False
    return True


def cond_context_ok(ctx: CondContext, runs: Sequence[Tuple[Action, ...]],
                    cond_values: Sequence[Condition]) -> bool:
    if ctx.seq is None:
        return True
    cond = cond_values[ctx.cond_var]
    if ctx.negated:
        cond = NEGATION.get(cond, cond)
    return body_rule_ok(cond, runs[ctx.seq])


def _normalize_stage(stage: str) -> str:
    try:
        return STAGE_ALIASES[stage]
    except KeyError:
        raise ConfigError(f"Unknown constraint stage '{stage}' (use d0, d01 or all)")


class _Enumerator:
    """Backtracking over slots, then conditions, then iteration counts"""

    def __init__(self, sketch: Sketch, stage: str):
        self.sketch = sketch
        self.stage = stage
        dialect = sketch.dialect
        self.budget = sketch.delta_size
        self.exclusive = stage != STAGE_D0
        self.full = stage == STAGE_ALL
        self.eliminations = elimination_sequences(dialect)
        self.slot_domains = [
            [
                (PHI,) if seq.shadowed
                else DIALECT_ACTIONS[dialect] if (stage == STAGE_D0 and slot.kind == ORIGINAL)
                else slot.domain
                for slot in seq.slots
            ]
            for seq in sketch.seqs
        ]
        if self.full:
            self.cond_domains = [c.domain for c in sketch.conds]
            self.iter_domains = [i.domain for i in sketch.iters]
        else:
            self.cond_domains = [DIALECT_CONDITIONS[dialect] for _ in sketch.conds]
            self.iter_domains = [tuple(range(MIN_ITER, MAX_ITER + 1)) for _ in sketch.iters]

    def _seq_runs(self, seq_i: int, used: int, active: Optional[int]) -> Iterator[Tuple[Tuple[Action, ...], int, Optional[int]]]:
        seq = self.sketch.seqs[seq_i]
        domains = self.slot_domains[seq_i]
        values: List[Optional[Action]] = []
        run: List[Action] = []

        def rec(k: int, used: int, site: Optional[int]):
            if k == len(seq.slots):
                yield tuple(run), used, (seq_i if site is not None else active)
                return
            slot = seq.slots[k]
            for value in domains[k]:
                if slot.kind == INSERTION:
                    in_block = slot.block_pos > 0
                    if value is PHI:
                        # leading blocks keep their actions adjacent to the first original
                        if in_block and slot.packs_right and values[-1] is not PHI:
                            continue
                    else:
                        if used >= self.budget:
                            continue
                        if in_block and not slot.packs_right and values[-1] is PHI:
                            continue
                        if self.exclusive:
                            if active is not None and active != seq_i:
                                continue
                            if site is not None and site != slot.site:
                                continue
                if value is not PHI:
                    run.append(value)
                    if self.full and _ends_with_elimination(run, self.eliminations):
                        run.pop()
                        continue
                values.append(value)
                inserted = slot.kind == INSERTION and value is not PHI
                yield from rec(
                    k + 1,
                    used + (1 if inserted else 0),
                    slot.site if inserted else site,
                )
                values.pop()
                if value is not PHI:
                    run.pop()

        yield from rec(0, used, None)

    def _assign_seqs(self, seq_i: int, runs: List[Tuple[Action, ...]], used: int, active: Optional[int]):
        if seq_i == len(self.sketch.seqs):
            yield list(runs)
            return
        for run, used2, active2 in self._seq_runs(seq_i, used, active):
            runs.append(run)
            yield from self._assign_seqs(seq_i + 1, runs, used2, active2)
            runs.pop()

    def codes(self) -> List[CodeAst]:
        results: List[CodeAst] = []
        seen = set()
        for runs in self._assign_seqs(0, [], 0, None):
            if self.full and not all(repeat_context_ok(ctx, runs) for ctx in self.sketch.repeat_contexts):
                continue
            for cond_values in itertools.product(*self.cond_domains):
                if self.full and not all(
                    cond_context_ok(ctx, runs, cond_values) for ctx in self.sketch.cond_contexts
                ):
                    continue
                for iter_values in itertools.product(*self.iter_domains):
                    code = instantiate(self.sketch, runs, cond_values, iter_values)
                    if code not in seen:
                        seen.add(code)
                        results.append(code)
        return results


def enumerate_mutations(sketch: Sketch, stage: str = STAGE_ALL) -> List[CodeAst]:
    """All distinct codes the sketch admits under a constraint stage (d0, d01 or all)"""
    stage = _normalize_stage(stage)
    start = time.perf_counter()
    codes = _Enumerator(sketch, stage).codes()
    logger.info(f"Enumerated {len(codes)} codes at stage {stage} in {time.perf_counter() - start:.2f}s")
    return codes


@dataclass
class ConstraintReport:
    results: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.results.values())

    def fail(self, name: str, detail: str) -> None:
        self.results[name] = False
        self.details.setdefault(name, detail)

    def to_json(self) -> dict:
        return {"passed": self.passed, "results": dict(self.results), "details": dict(self.details)}


CONSTRAINT_NAMES = ("size", "actionEdits", "iterBounds", "repeatContext", "condGroups", "nestedRules", "elimination")


@dataclass
class _Match:
    runs: Dict[int, Tuple[Action, ...]] = field(default_factory=dict)
    conds: Dict[int, Condition] = field(default_factory=dict)
    iters: Dict[int, int] = field(default_factory=dict)
    stray: bool = False


def _mismatch(detail: str) -> ConstraintStructureError:
    return ConstraintStructureError(f"Code does not follow the sketch structure: {detail}")


def _match(nodes: tuple, stmts: Tuple[Stmt, ...], acc: _Match) -> None:
    j = 0
    for node in nodes:
        if isinstance(node, SeqHole):
            if node.shadowed:
                acc.runs[node.seq] = ()
                continue
            run = []
            while j < len(stmts) and isinstance(stmts[j], ActionStmt):
                run.append(stmts[j].action)
                j += 1
            acc.runs[node.seq] = tuple(run)
            continue
        while j < len(stmts) and isinstance(stmts[j], ActionStmt):
            acc.stray = True
            j += 1
        if j >= len(stmts):
            raise _mismatch("missing construct")
        stmt = stmts[j]
        j += 1
        if isinstance(node, RepeatHole) and isinstance(stmt, Repeat):
            acc.iters[node.iter_var] = stmt.times
            _match(node.body, stmt.body, acc)
        elif isinstance(node, WhileHole) and isinstance(stmt, While):
            acc.conds[node.cond_var] = stmt.cond
            _match(node.body, stmt.body, acc)
        elif isinstance(node, UntilHole) and isinstance(stmt, RepeatUntil):
            _match(node.body, stmt.body, acc)
        elif isinstance(node, IfHole) and isinstance(stmt, If):
            acc.conds[node.cond_var] = stmt.cond
            _match(node.body, stmt.body, acc)
        elif isinstance(node, IfElseHole) and isinstance(stmt, IfElse):
            acc.conds[node.cond_var] = stmt.cond
            _match(node.then_body, stmt.then_body, acc)
            _match(node.else_body, stmt.else_body, acc)
        else:
            raise _mismatch(f"unexpected {stmt.kind}")
    for stmt in stmts[j:]:
        if not isinstance(stmt, ActionStmt):
            raise _mismatch(f"unexpected {stmt.kind}")
        acc.stray = True


def _originals_fit(run: Sequence[Action], originals: Tuple[Slot, ...]) -> bool:
    return len(run) == len(originals) and all(a in s.domain for a, s in zip(run, originals))


def seq_fit(seq: ActionSeq, run: Tuple[Action, ...], delta_size: int) -> Tuple[bool, bool]:
    """(run fits the sequence with one insertion site, run has insertions)"""
    if seq.boundary:
        return len(run) <= len(seq.slots), len(run) > 0
    originals = seq.originals
    m, e = len(originals), len(run) - len(originals)
    if e < 0:
        return False, False
    if e == 0:
        return _originals_fit(run, originals), False
    if e <= delta_size and (_originals_fit(run[e:], originals) or _originals_fit(run[:m], originals)):
        return True, True
    if e == 1:
        for j in range(m - 1):
            if _originals_fit(run[:j + 1] + run[j + 2:], originals):
                return True, True
    return False, True


def check_constraints(code: CodeAst, sketch: Sketch) -> ConstraintReport:
    """Evaluate each constraint family directly on a code against a sketch"""
    if code.dialect != sketch.dialect or not struct_equal(code, sketch.origin):
        raise ConstraintStructureError("Code structure differs from the sketch origin")
    acc = _Match()
    _match(sketch.skeleton, code.body, acc)
    report = ConstraintReport({name: True for name in CONSTRAINT_NAMES})
    runs = [acc.runs.get(seq.index, ()) for seq in sketch.seqs]

    limit = code_size(sketch.origin) + sketch.delta_size
    if code_size(code) > limit:
        report.fail("size", f"size {code_size(code)} exceeds {limit}")

    if acc.stray:
        report.fail("actionEdits", "actions outside every action sequence")
    with_insertions = []
    for seq, run in zip(sketch.seqs, runs):
        fits, inserted = seq_fit(seq, run, sketch.delta_size)
        if not fits:
            report.fail("actionEdits", f"sequence {seq.index} cannot be formed from its slots")
        if inserted:
            with_insertions.append(seq.index)
    if len(with_insertions) > 1:
        report.fail("actionEdits", f"insertions in several sequences {with_insertions}")

    for var in sketch.iters:
        if acc.iters.get(var.index) not in var.domain:
            report.fail("iterBounds", f"Repeat({acc.iters.get(var.index)}) outside {var.domain}")

    for ctx in sketch.repeat_contexts:
        if not repeat_context_ok(ctx, runs):
            report.fail("repeatContext", f"Repeat body {ctx.body_seq} duplicates a neighbouring run")

    cond_values = [acc.conds.get(var.index) for var in sketch.conds]
    for var, value in zip(sketch.conds, cond_values):
        if value not in var.domain:
            report.fail("condGroups", f"condition {value.value if value else value} outside its group")

    for ctx in sketch.cond_contexts:
        if cond_values[ctx.cond_var] is not None and not cond_context_ok(ctx, runs, cond_values):
            report.fail("nestedRules", f"body of condition {ctx.cond_var} violates its rule")

    eliminations = elimination_sequences(sketch.dialect)
    for seq, run in zip(sketch.seqs, runs):
        if contains_elimination(run, eliminations):
            report.fail("elimination", f"sequence {seq.index} contains an elimination sequence")
    return report


@dataclass
class StageCounts:
    count_d0: int
    count_d01: int
    count_all: int
    elapsed: float

    def to_json(self) -> dict:
        return {
            "countD0": self.count_d0,
            "countD01": self.count_d01,
            "countAll": self.count_all,
            "elapsed": round(self.elapsed, 4),
        }


def _product(values) -> int:
    out = 1
    for v in values:
        out *= v
    return out


def _free_runs(seq: ActionSeq, extra: int, alphabet_size: int) -> int:
    """Distinct runs with `extra` inserted actions when originals are unconstrained"""
    if seq.shadowed:
        return int(extra == 0)
    if seq.boundary:
        return alphabet_size ** extra if extra <= len(seq.slots) else 0
    return alphabet_size ** (len(seq.originals) + extra)


def _single_site_runs(seq: ActionSeq, extra: int, alphabet: Tuple[Action, ...]) -> int:
    """Distinct runs with `extra` inserted actions at one site, originals in their domains"""
    if seq.shadowed:
        return int(extra == 0)
    domains = [s.domain for s in seq.originals]
    if extra == 0:
        return _product(len(d) for d in domains)
    if seq.boundary:
        return len(alphabet) ** extra if extra <= len(seq.slots) else 0
    m = len(domains)
    runs = set()
    for site, capacity in enumerate(seq.capacities):
        if capacity < extra:
            continue
        for word in itertools.product(alphabet, repeat=extra):
            for originals in itertools.product(*domains):
                runs.add(originals[:site] + word + originals[site:] if 0 < site < m
                         else (word + originals if site == 0 else originals + word))
    return len(runs)


def stage_counts(sketch: Sketch) -> StageCounts:
    start = time.perf_counter()
    dialect = sketch.dialect
    alphabet = DIALECT_ACTIONS[dialect]
    d = sketch.delta_size
    free_vars = (len(DIALECT_CONDITIONS[dialect]) ** len(sketch.conds)) * ((MAX_ITER - MIN_ITER + 1) ** len(sketch.iters))

    # size budget only: distribute at most d insertions over the sequences
    ways = [1] + [0] * d
    for seq in sketch.seqs:
        f = [_free_runs(seq, e, len(alphabet)) for e in range(d + 1)]
        ways = [sum(ways[i] * f[t - i] for i in range(t + 1)) for t in range(d + 1)]
    count_d0 = sum(ways) * free_vars

    # plus action edits: one site in one sequence
    base = [_single_site_runs(seq, 0, alphabet) for seq in sketch.seqs]
    total = _product(base)
    for i, seq in enumerate(sketch.seqs):
        others = _product(b for j, b in enumerate(base) if j != i)
        total += others * sum(_single_site_runs(seq, e, alphabet) for e in range(1, d + 1))
    count_d01 = total * free_vars

    count_all = len(_Enumerator(sketch, STAGE_ALL).codes())
    return StageCounts(count_d0, count_d01, count_all, time.perf_counter() - start)
