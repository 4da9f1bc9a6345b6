import numpy as np
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Set
import logging

from app.core.config import SynthesisParams
from app.core.errors import ConfigError, DecisionsExhausted, MalformedDecisions
from app.models.code import (
    Action, CodeAst, Condition, Dialect, Path, RepeatUntil, code_size, node_ids, walk,
)
from app.models.interpreter import (
    Crash, DepthExceeded, Machine, Trace, TraceCounts, evaluate_condition, execute, find_shortcut,
)
from app.models.task import (
    AgentPose, BLOCKED, Cell, Direction, FREE, TaskSpec, UNKNOWN, default_store,
)

logger = logging.getLogger(__name__)

TASK_EMITTED = "taskEmitted"
CRASHED = "crashed"
DEPTH_EXCEEDED = "depthExceeded"
CONTRADICTION = "contradiction"

N_CONFIGS = 20


def config_locations(n: int) -> List[Cell]:
    """Four corners then the centre"""
    return [(0, 0), (0, n - 1), (n - 1, 0), (n - 1, n - 1), (n // 2, n // 2)]


def initial_config(index: int, n: int) -> AgentPose:
    if not 0 <= index < N_CONFIGS:
        raise MalformedDecisions(f"Initial configuration {index} outside 0..{N_CONFIGS - 1}")
    row, col = config_locations(n)[index // 4]
    return AgentPose(row, col, Direction(index % 4))


class DecisionProvider:
    """Supplies the initial configuration and every branch choice of one run"""

    def __init__(self):
        self.taken: List[int] = []

    def choose(self, description: str, options: int) -> int:
        raise NotImplementedError

    def config(self) -> int:
        value = self.choose("initial configuration", N_CONFIGS)
        self.taken.append(value)
        return value

    def branch(self, description: str) -> bool:
        value = self.choose(description, 2)
        self.taken.append(value)
        return bool(value)


class StrictDecisions(DecisionProvider):
    """Replays a fixed decision string; running out raises DecisionsExhausted"""

    def __init__(self, decisions: Sequence[int]):
        super().__init__()
        decisions = list(decisions)
        if not decisions:
            raise DecisionsExhausted("initial configuration", 0)
        if not 0 <= decisions[0] < N_CONFIGS:
            raise MalformedDecisions(f"First decision must be a configuration in 0..{N_CONFIGS - 1}, got {decisions[0]}")
        for i, d in enumerate(decisions[1:], start=1):
            if d not in (0, 1):
                raise MalformedDecisions(f"Branch decision at position {i} must be 0 or 1, got {d}")
        self.decisions = decisions

    def choose(self, description: str, options: int) -> int:
        index = len(self.taken)
        if index >= len(self.decisions):
            raise DecisionsExhausted(description, index)
        return self.decisions[index]


class RolloutDecisions(DecisionProvider):
    """Follows a prefix, then completes the string uniformly at random"""

    def __init__(self, prefix: Sequence[int], rng: np.random.Generator):
        super().__init__()
        self.prefix = list(prefix)
        self.rng = rng

    def choose(self, description: str, options: int) -> int:
        index = len(self.taken)
        if index < len(self.prefix):
            return self.prefix[index]
        return int(self.rng.integers(options))


class Contradiction(Exception):
    pass


class SymbolicMachine(Machine):
    """Executes over a grid whose cells materialize as the run observes them"""

    def __init__(self, code: CodeAst, n: int, unroll_cap: int, provider: DecisionProvider,
                 pre_init: Optional[np.ndarray] = None):
        super().__init__(code, unroll_cap)
        self.n = n
        self.provider = provider
        self.ids = node_ids(code)
        if pre_init is None:
            self.walls = [[UNKNOWN] * n for _ in range(n)]
        else:
            self.walls = np.asarray(pre_init, dtype=np.int8).tolist()
        self.goal: Optional[Cell] = None
        self.not_goal: Set[Cell] = set()
        # materialized pregrid markers and current marker state
        self.pre_markers: Dict[Cell, int] = {}
        self.cur_markers: Dict[Cell, int] = {}
        self.start = initial_config(provider.config(), n)
        self.row, self.col, self.dir = self.start.row, self.start.col, self.start.dir
        if self.walls[self.row][self.col] == BLOCKED:
            raise Contradiction()
        self.walls[self.row][self.col] = FREE

    def _describe(self, path: Path, what: str) -> str:
        return f"node {self.ids[path]} {what} at ({self.row}, {self.col})"

    def _free(self, d: Direction, path: Path = None, cond: Condition = None) -> bool:
        dr, dc = d.delta
        r, c = self.row + dr, self.col + dc
        if not (0 <= r < self.n and 0 <= c < self.n):
            return False
        state = self.walls[r][c]
        if state != UNKNOWN:
            return state == FREE
        # the decision is the condition's outcome; translate it back to the cell
        outcome = self.provider.branch(self._describe(path, cond.value))
        negated = cond in (Condition.NO_PATH_AHEAD, Condition.NO_PATH_LEFT, Condition.NO_PATH_RIGHT)
        free = outcome != negated
        self.walls[r][c] = FREE if free else BLOCKED
        return free

    def _marker_here(self, path: Path, cond: Condition) -> bool:
        cell = (self.row, self.col)
        if cell in self.cur_markers:
            return bool(self.cur_markers[cell])
        if cell in self.pre_markers:
            return bool(self.pre_markers[cell])
        outcome = self.provider.branch(self._describe(path, cond.value))
        present = outcome if cond == Condition.MARKER else not outcome
        self.pre_markers[cell] = int(present)
        return present

    def do_move(self) -> None:
        dr, dc = self.dir.delta
        r, c = self.row + dr, self.col + dc
        if not (0 <= r < self.n and 0 <= c < self.n) or self.walls[r][c] == BLOCKED:
            raise Crash()
        self.walls[r][c] = FREE
        self.row, self.col = r, c

    def do_turn(self, action: Action) -> None:
        self.dir = self.dir.left() if action == Action.TURN_LEFT else self.dir.right()

    def do_marker(self, action: Action) -> None:
        cell = (self.row, self.col)
        if cell in self.cur_markers:
            present = bool(self.cur_markers[cell])
        elif cell in self.pre_markers:
            present = bool(self.pre_markers[cell])
        else:
            # first touch decides the pregrid so the action succeeds
            present = action == Action.PICK_MARKER
            self.pre_markers[cell] = int(present)
        if action == Action.PUT_MARKER:
            if present:
                raise Crash()
            self.cur_markers[cell] = 1
        else:
            if not present:
                raise Crash()
            self.cur_markers[cell] = 0

    def test(self, cond: Condition, path: Path) -> bool:
        if cond in (Condition.MARKER, Condition.NO_MARKER):
            present = self._marker_here(path, cond)
            return present if cond == Condition.MARKER else not present
        return evaluate_condition(cond, lambda d: self._free(d, path, cond), self.dir, False)

    def at_goal(self, path: Path) -> bool:
        cell = (self.row, self.col)
        if cell in self.not_goal:
            return False
        # 1 unrolls the loop once more, 0 declares this cell the goal
        if self.provider.branch(self._describe(path, "goal")):
            self.not_goal.add(cell)
            return False
        self.goal = cell
        return True

    def markers_grid(self, post: bool) -> np.ndarray:
        grid = np.zeros((self.n, self.n), dtype=np.uint8)
        for cell, value in self.pre_markers.items():
            grid[cell] = value
        if post:
            for cell, value in self.cur_markers.items():
                grid[cell] = value
        return grid


@dataclass
class SymOutcome:
    status: str
    trace: Trace
    decisions: List[int]
    task: Optional[TaskSpec] = None
    config: Optional[AgentPose] = None

    @property
    def emitted(self) -> bool:
        return self.status == TASK_EMITTED


def _has_repeat_until(code: CodeAst) -> bool:
    return any(isinstance(stmt, RepeatUntil) for _, stmt in walk(code.body))


def run_symbolic(code: CodeAst, decisions: Sequence[int], params: SynthesisParams,
                 pre_init: Optional[np.ndarray] = None, store: Optional[FrozenSet[str]] = None,
                 provider: Optional[DecisionProvider] = None) -> SymOutcome:
    """
    Execute a code over an unknown grid, resolving each open choice from the
    decision string (or from `provider` when given).
    """
    n = params.n
    if provider is None:
        provider = StrictDecisions(decisions)
    try:
        machine = SymbolicMachine(code, n, params.effective_unroll_cap, provider, pre_init)
    except Contradiction:
        return SymOutcome(CONTRADICTION, _empty_trace(code, n), list(provider.taken))

    status = TASK_EMITTED
    try:
        machine.exec_body(code.body, ())
    except Crash:
        status = CRASHED
    except DepthExceeded:
        status = DEPTH_EXCEEDED
    except Contradiction:
        status = CONTRADICTION

    if isinstance(provider, StrictDecisions) and status == TASK_EMITTED and len(provider.taken) < len(provider.decisions):
        raise MalformedDecisions(
            f"{len(provider.decisions) - len(provider.taken)} trailing decisions were not consumed"
        )

    rec = machine.recorder
    trace = Trace(
        solved=status == TASK_EMITTED,
        crashed=status == CRASHED,
        steps=rec.steps,
        counts=rec.counts(),
        covered_nodes=rec.covered_ids(code),
        final_pose=AgentPose(machine.row, machine.col, machine.dir),
        final_markers=machine.markers_grid(post=True),
        depth_exceeded=status == DEPTH_EXCEEDED,
        branches=rec.branch_ids(code),
        total_nodes=len(machine.ids),
    )
    outcome = SymOutcome(status, trace, list(provider.taken), config=machine.start)
    if status != TASK_EMITTED:
        return outcome

    if code.dialect == Dialect.HOC and not _has_repeat_until(code):
        machine.goal = (machine.row, machine.col)
    walls = np.array(machine.walls, dtype=np.int8)
    walls[walls == UNKNOWN] = BLOCKED
    outcome.task = TaskSpec(
        dialect=code.dialect,
        n=n,
        walls=walls,
        start=machine.start,
        goal=machine.goal if code.dialect == Dialect.HOC else None,
        premarkers=machine.markers_grid(post=False),
        postmarkers=machine.markers_grid(post=True) if code.dialect == Dialect.KAREL else None,
        store=store if store is not None else default_store(code),
        max_blocks=code_size(code),
    )
    return outcome


def _empty_trace(code: CodeAst, n: int) -> Trace:
    return Trace(
        solved=False, crashed=False, steps=[], counts=TraceCounts(), covered_nodes=frozenset(),
        final_pose=AgentPose(0, 0, Direction.NORTH), final_markers=np.zeros((n, n), dtype=np.uint8),
        total_nodes=len(node_ids(code)),
    )


def preinit_patterns(name: str, n: int, p: float = 0.1, seed: int = 0) -> np.ndarray:
    """Grid of UNKNOWN cells with some cells fixed before symbolic execution"""
    grid = np.full((n, n), UNKNOWN, dtype=np.int8)
    if name == "none":
        return grid
    if name == "scatter":
        if not 0 <= p <= 1:
            raise ConfigError(f"scatter probability {p} outside [0, 1]")
        rng = np.random.default_rng(seed)
        grid[rng.random((n, n)) < p] = BLOCKED
        return grid
    if name == "border":
        grid[0, :] = BLOCKED
        grid[-1, :] = BLOCKED
        grid[:, 0] = BLOCKED
        grid[:, -1] = BLOCKED
        return grid
    raise ConfigError(f"Unknown pre-initialization pattern: {name}")


def parse_preinit(pattern: str, n: int) -> Optional[np.ndarray]:
    """'none', 'border' or 'scatter[:p[:seed]]'"""
    parts = pattern.split(":")
    name = parts[0].strip()
    if name == "none":
        return None
    if name == "scatter":
        p = float(parts[1]) if len(parts) > 1 else 0.1
        seed = int(parts[2]) if len(parts) > 2 else 0
        return preinit_patterns(name, n, p, seed)
    return preinit_patterns(name, n)


def _visited_cells(task: TaskSpec, steps: List[str]) -> List[Cell]:
    row, col, d = task.start.row, task.start.col, task.start.dir
    cells = [(row, col)]
    for step in steps:
        if step == Action.MOVE.value:
            dr, dc = d.delta
            row, col = row + dr, col + dc
            cells.append((row, col))
        elif step == Action.TURN_LEFT.value:
            d = d.left()
        elif step == Action.TURN_RIGHT.value:
            d = d.right()
    return list(dict.fromkeys(cells))


def _with_walls(task: TaskSpec, walls: np.ndarray) -> TaskSpec:
    return TaskSpec(
        dialect=task.dialect, n=task.n, walls=walls, start=task.start, goal=task.goal,
        premarkers=task.premarkers, postmarkers=task.postmarkers, store=task.store,
        max_blocks=task.max_blocks,
    )


def apply_distractors(task: TaskSpec, code: CodeAst, seed: int, budget: int,
                      unroll_cap: Optional[int] = None, state_cap: int = 1_000_000) -> TaskSpec:
    """
    Open up to `budget` blocked cells via random walks that branch off the
    solution path. A walk that changes the code's behaviour or opens a
    shortcut is rolled back.
    """
    if budget <= 0:
        return task
    base = execute(code, task, unroll_cap)
    if not base.solved:
        logger.warning("Distractors skipped: code does not solve the task")
        return task
    rng = np.random.default_rng(seed)
    path = _visited_cells(task, base.steps)
    size = code_size(code)
    walls = task.walls.copy()
    converted = 0
    attempts = 0
    while converted < budget and attempts < 4 * budget:
        attempts += 1
        cur = path[int(rng.integers(len(path)))]
        opened: List[Cell] = []
        for _ in range(task.n):
            dr, dc = Direction(int(rng.integers(4))).delta
            nxt = (cur[0] + dr, cur[1] + dc)
            if not (0 <= nxt[0] < task.n and 0 <= nxt[1] < task.n):
                break
            if walls[nxt] == BLOCKED and nxt not in opened:
                opened.append(nxt)
                if converted + len(opened) >= budget:
                    cur = nxt
                    break
            cur = nxt
        if not opened:
            continue
        candidate = walls.copy()
        for cell in opened:
            candidate[cell] = FREE
        trial = _with_walls(task, candidate)
        replay = execute(code, trial, unroll_cap)
        keeps = (
            replay.solved
            and replay.branches == base.branches
            and replay.counts == base.counts
            and replay.covered_nodes == base.covered_nodes
            and find_shortcut(trial, size - 1, state_cap).status == "none"
        )
        if keeps:
            walls = candidate
            converted += len(opened)
        else:
            logger.debug(f"Rolled back distractor walk opening {len(opened)} cells")
    logger.info(f"Distractors opened {converted} cells (budget {budget})")
    return _with_walls(task, walls)
