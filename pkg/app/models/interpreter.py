import numpy as np
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple
import logging

from app.core.errors import DialectError, TaskValidationError
from app.models.code import (
    Action, ActionStmt, CodeAst, Condition, DIALECT_ACTIONS, Dialect, If, IfElse, Path,
    Repeat, RepeatUntil, Stmt, While, node_ids, walk,
)
from app.models.task import AgentPose, BLOCKED, Cell, Direction, TaskSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceCounts:
    moves: int = 0
    turns: int = 0
    segments: int = 0
    long_segments: int = 0
    pick_markers: int = 0
    put_markers: int = 0

    def to_json(self) -> dict:
        return {
            "moves": self.moves,
            "turns": self.turns,
            "segments": self.segments,
            "longSegments": self.long_segments,
            "pickMarkers": self.pick_markers,
            "putMarkers": self.put_markers,
        }


@dataclass
class Trace:
    solved: bool
    crashed: bool
    steps: List[str]
    counts: TraceCounts
    covered_nodes: FrozenSet[int]
    final_pose: AgentPose
    final_markers: np.ndarray
    depth_exceeded: bool = False
    # (node id, outcome) for every condition evaluated, in execution order
    branches: List[Tuple[int, bool]] = field(default_factory=list)
    total_nodes: int = 0

    @property
    def full_coverage(self) -> bool:
        return len(self.covered_nodes) == self.total_nodes

    def to_json(self) -> dict:
        return {
            "solved": self.solved,
            "crashed": self.crashed,
            "depthExceeded": self.depth_exceeded,
            "steps": list(self.steps),
            "counts": self.counts.to_json(),
            "coveredNodes": sorted(self.covered_nodes),
            "totalNodes": self.total_nodes,
            "finalPose": {"row": self.final_pose.row, "col": self.final_pose.col,
                          "dir": self.final_pose.dir.label},
            "finalMarkers": [[int(r), int(c)] for r, c in zip(*np.nonzero(self.final_markers))],
            "branches": [[node, outcome] for node, outcome in self.branches],
        }


class TraceRecorder:
    """Accumulates action counts, move runs and coverage during one run"""

    def __init__(self):
        self.steps: List[str] = []
        self.moves = 0
        self.turns = 0
        self.picks = 0
        self.puts = 0
        self.segments = 0
        self.long_segments = 0
        self._run = 0
        self.covered: Set[Path] = set()
        self.entered: Set[Tuple[Path, int]] = set()
        self.branches: List[Tuple[Path, bool]] = []

    def action(self, action: Action) -> None:
        self.steps.append(action.value)
        if action == Action.MOVE:
            self.moves += 1
            self._run += 1
            return
        self.close_run()
        if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
            self.turns += 1
        elif action == Action.PICK_MARKER:
            self.picks += 1
        else:
            self.puts += 1

    def close_run(self) -> None:
        if self._run >= 3:
            self.segments += 1
        if self._run >= 5:
            self.long_segments += 1
        self._run = 0

    def cover(self, path: Path) -> None:
        self.covered.add(path)

    def enter(self, path: Path, branch: int) -> None:
        self.entered.add((path, branch))

    def branch(self, path: Path, outcome: bool) -> None:
        self.branches.append((path, outcome))

    def counts(self) -> TraceCounts:
        self.close_run()
        return TraceCounts(self.moves, self.turns, self.segments, self.long_segments, self.picks, self.puts)

    def covered_ids(self, code: CodeAst) -> FrozenSet[int]:
        ids = node_ids(code)
        covered = set()
        for path, stmt in walk(code.body):
            if isinstance(stmt, If):
                hit = (path, 0) in self.entered
            elif isinstance(stmt, IfElse):
                hit = (path, 0) in self.entered and (path, 1) in self.entered
            else:
                hit = path in self.covered
            if hit:
                covered.add(ids[path])
        return frozenset(covered)

    def branch_ids(self, code: CodeAst) -> List[Tuple[int, bool]]:
        ids = node_ids(code)
        return [(ids[path], outcome) for path, outcome in self.branches]


class Crash(Exception):
    pass


class DepthExceeded(Exception):
    pass


class Machine:
    """
    Control flow shared by concrete and symbolic execution.
    Subclasses supply the world: movement, markers and condition tests.
    """

    def __init__(self, code: CodeAst, unroll_cap: int):
        self.code = code
        self.unroll_cap = unroll_cap
        self.recorder = TraceRecorder()

    # world hooks
    def do_move(self) -> None:
        raise NotImplementedError

    def do_turn(self, action: Action) -> None:
        raise NotImplementedError

    def do_marker(self, action: Action) -> None:
        raise NotImplementedError

    def test(self, cond: Condition, path: Path) -> bool:
        raise NotImplementedError

    def at_goal(self, path: Path) -> bool:
        raise NotImplementedError

    def _act(self, action: Action) -> None:
        if action == Action.MOVE:
            self.do_move()
        elif action in (Action.TURN_LEFT, Action.TURN_RIGHT):
            self.do_turn(action)
        else:
            self.do_marker(action)
        self.recorder.action(action)

    def _tick(self, iteration: int) -> None:
        if iteration > self.unroll_cap:
            raise DepthExceeded()

    def _branch(self, outcome: bool, path: Path) -> bool:
        self.recorder.branch(path, outcome)
        return outcome

    def exec_body(self, body: Tuple[Stmt, ...], prefix: Path) -> None:
        for i, stmt in enumerate(body):
            path = prefix + (i,)
            if isinstance(stmt, ActionStmt):
                self._act(stmt.action)
                self.recorder.cover(path)
            elif isinstance(stmt, Repeat):
                self.recorder.cover(path)
                for k in range(1, stmt.times + 1):
                    self._tick(k)
                    self.exec_body(stmt.body, path + (0,))
            elif isinstance(stmt, While):
                self.recorder.cover(path)
                k = 0
                while self._branch(self.test(stmt.cond, path), path):
                    k += 1
                    self._tick(k)
                    self.exec_body(stmt.body, path + (0,))
            elif isinstance(stmt, RepeatUntil):
                self.recorder.cover(path)
                k = 0
                while not self._branch(self.at_goal(path), path):
                    k += 1
                    self._tick(k)
                    self.exec_body(stmt.body, path + (0,))
            elif isinstance(stmt, If):
                if self._branch(self.test(stmt.cond, path), path):
                    self.recorder.enter(path, 0)
                    self.exec_body(stmt.body, path + (0,))
            elif isinstance(stmt, IfElse):
                if self._branch(self.test(stmt.cond, path), path):
                    self.recorder.enter(path, 0)
                    self.exec_body(stmt.then_body, path + (0,))
                else:
                    self.recorder.enter(path, 1)
                    self.exec_body(stmt.else_body, path + (1,))


class ConcreteMachine(Machine):
    def __init__(self, code: CodeAst, task: TaskSpec, unroll_cap: int):
        super().__init__(code, unroll_cap)
        self.task = task
        self.n = task.n
        self.blocked = task.walls.tolist()
        self.row, self.col, self.dir = task.start.row, task.start.col, task.start.dir
        self.markers: Set[Cell] = set(task.marker_cells())

    def _free(self, d: Direction) -> bool:
        dr, dc = d.delta
        r, c = self.row + dr, self.col + dc
        return 0 <= r < self.n and 0 <= c < self.n and self.blocked[r][c] != BLOCKED

    def do_move(self) -> None:
        if not self._free(self.dir):
            raise Crash()
        dr, dc = self.dir.delta
        self.row += dr
        self.col += dc

    def do_turn(self, action: Action) -> None:
        self.dir = self.dir.left() if action == Action.TURN_LEFT else self.dir.right()

    def do_marker(self, action: Action) -> None:
        cell = (self.row, self.col)
        if action == Action.PUT_MARKER:
            if cell in self.markers:
                raise Crash()
            self.markers.add(cell)
        else:
            if cell not in self.markers:
                raise Crash()
            self.markers.discard(cell)

    def test(self, cond: Condition, path: Path) -> bool:
        return evaluate_condition(cond, self._free, self.dir, (self.row, self.col) in self.markers)

    def at_goal(self, path: Path) -> bool:
        return (self.row, self.col) == self.task.goal


def evaluate_condition(cond: Condition, free, facing: Direction, has_marker: bool) -> bool:
    if cond in (Condition.PATH_AHEAD, Condition.NO_PATH_AHEAD):
        value = free(facing)
        return value if cond == Condition.PATH_AHEAD else not value
    if cond in (Condition.PATH_LEFT, Condition.NO_PATH_LEFT):
        value = free(facing.left())
        return value if cond == Condition.PATH_LEFT else not value
    if cond in (Condition.PATH_RIGHT, Condition.NO_PATH_RIGHT):
        value = free(facing.right())
        return value if cond == Condition.PATH_RIGHT else not value
    if cond == Condition.MARKER:
        return has_marker
    if cond == Condition.NO_MARKER:
        return not has_marker
    raise DialectError(f"Condition '{cond.value}' cannot be tested here", cond.value)


def _markers_grid(n: int, cells) -> np.ndarray:
    grid = np.zeros((n, n), dtype=np.uint8)
    for r, c in cells:
        grid[r, c] = 1
    return grid


def execute(code: CodeAst, task: TaskSpec, unroll_cap: Optional[int] = None) -> Trace:
    """Run a code on a fully materialized task"""
    if code.dialect != task.dialect:
        raise DialectError(f"Code dialect {code.dialect.value} does not match task dialect {task.dialect.value}")
    if not task.materialized:
        raise TaskValidationError("walls", "cannot execute on a grid with unknown cells")
    cap = unroll_cap if unroll_cap is not None else 2 * task.n
    machine = ConcreteMachine(code, task, cap)
    crashed = depth_exceeded = False
    try:
        machine.exec_body(code.body, ())
    except Crash:
        crashed = True
    except DepthExceeded:
        depth_exceeded = True

    ok = not crashed and not depth_exceeded
    if task.dialect == Dialect.HOC:
        solved = ok and (machine.row, machine.col) == task.goal
    else:
        solved = ok and machine.markers == set(task.marker_cells(post=True))
    rec = machine.recorder
    return Trace(
        solved=solved,
        crashed=crashed,
        steps=rec.steps,
        counts=rec.counts(),
        covered_nodes=rec.covered_ids(code),
        final_pose=AgentPose(machine.row, machine.col, machine.dir),
        final_markers=_markers_grid(task.n, machine.markers),
        depth_exceeded=depth_exceeded,
        branches=rec.branch_ids(code),
        total_nodes=len(node_ids(code)),
    )


@dataclass
class ShortcutResult:
    status: str  # found | none | indeterminate
    actions: Optional[List[Action]] = None
    explored: int = 0

    @property
    def found(self) -> bool:
        return self.status == "found"


def _apply(task: TaskSpec, blocked, state, action: Action):
    """Successor of a (row, col, dir, markers) state, or None on crash"""
    r, c, d, markers = state
    n = task.n
    if action == Action.MOVE:
        dr, dc = DIRS[d]
        r, c = r + dr, c + dc
        if not (0 <= r < n and 0 <= c < n) or blocked[r][c] == BLOCKED:
            return None
        return (r, c, d, markers)
    if action == Action.TURN_LEFT:
        return (r, c, (d + 3) % 4, markers)
    if action == Action.TURN_RIGHT:
        return (r, c, (d + 1) % 4, markers)
    cell = (r, c)
    if action == Action.PUT_MARKER:
        if cell in markers:
            return None
        return (r, c, d, markers | {cell})
    if cell not in markers:
        return None
    return (r, c, d, markers - {cell})


DIRS = [Direction(d).delta for d in range(4)]


def _is_solved(task: TaskSpec, state, target: Optional[FrozenSet[Cell]]) -> bool:
    if task.dialect == Dialect.HOC:
        return (state[0], state[1]) == task.goal
    return state[3] == target


def find_shortcut(task: TaskSpec, max_len: int, state_cap: int = 1_000_000) -> ShortcutResult:
    """
    Shortest pure-action sequence of length <= max_len that solves the task.
    Breadth-first over (pose, markers) states; exceeding state_cap is
    reported as indeterminate rather than none.
    """
    if not task.materialized:
        raise TaskValidationError("walls", "cannot search a grid with unknown cells")
    if max_len < 0:
        return ShortcutResult("none")
    blocked = task.walls.tolist()
    actions = DIALECT_ACTIONS[task.dialect]
    target = frozenset(task.marker_cells(post=True)) if task.dialect == Dialect.KAREL else None
    start = (task.start.row, task.start.col, int(task.start.dir), frozenset(task.marker_cells()))
    if _is_solved(task, start, target):
        return ShortcutResult("found", [], 1)

    parents: Dict[tuple, Tuple[tuple, Action]] = {start: None}
    frontier = deque([(start, 0)])
    while frontier:
        state, depth = frontier.popleft()
        if depth >= max_len:
            continue
        for action in actions:
            nxt = _apply(task, blocked, state, action)
            if nxt is None or nxt in parents:
                continue
            parents[nxt] = (state, action)
            if _is_solved(task, nxt, target):
                return ShortcutResult("found", _unwind(parents, nxt), len(parents))
            if len(parents) > state_cap:
                logger.warning(f"Shortcut search hit the state cap ({state_cap})")
                return ShortcutResult("indeterminate", None, len(parents))
            frontier.append((nxt, depth + 1))
    return ShortcutResult("none", None, len(parents))


def _unwind(parents, state) -> List[Action]:
    path = []
    while parents[state] is not None:
        state, action = parents[state]
        path.append(action)
    return list(reversed(path))


def run_actions(task: TaskSpec, actions: List[Action]) -> bool:
    """True iff the raw action sequence solves the task without crashing"""
    blocked = task.walls.tolist()
    target = frozenset(task.marker_cells(post=True)) if task.dialect == Dialect.KAREL else None
    state = (task.start.row, task.start.col, int(task.start.dir), frozenset(task.marker_cells()))
    for action in actions:
        state = _apply(task, blocked, state, action)
        if state is None:
            return False
    return _is_solved(task, state, target)
