import json
import numpy as np
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple
from pydantic import ValidationError
import logging

from app.core.errors import TaskValidationError
from app.models.code import (
    Action, CodeAst, Dialect, DIALECT_ACTIONS, DIALECT_CONSTRUCTS, dialect_blocks,
    code_props, struct_equal,
)
from app.schemas.task import DIRECTION_NAMES, PoseDocument, TaskDocument

logger = logging.getLogger(__name__)

UNKNOWN = -1
FREE = 0
BLOCKED = 1

Cell = Tuple[int, int]


class Direction(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3

    @property
    def delta(self) -> Cell:
        return DELTAS[self]

    def left(self) -> "Direction":
        return Direction((self + 3) % 4)

    def right(self) -> "Direction":
        return Direction((self + 1) % 4)

    @property
    def label(self) -> str:
        return DIRECTION_NAMES[self]

    @property
    def arrow(self) -> str:
        return "^>v<"[self]


# Row 0 is the top row, so north decreases the row index
DELTAS = {
    Direction.NORTH: (-1, 0),
    Direction.EAST: (0, 1),
    Direction.SOUTH: (1, 0),
    Direction.WEST: (0, -1),
}


@dataclass(frozen=True)
class AgentPose:
    row: int
    col: int
    dir: Direction

    @property
    def cell(self) -> Cell:
        return (self.row, self.col)


@dataclass(frozen=True)
class CellState:
    wall: str
    is_goal: bool = False
    markers: int = 0


# Canonical listing order for stores
BLOCK_ORDER = [a.value for a in Action] + ["Repeat", "While", "RepeatUntil", "If", "IfElse"]


def sort_blocks(blocks: Iterable[str]) -> List[str]:
    return sorted(blocks, key=lambda b: BLOCK_ORDER.index(b) if b in BLOCK_ORDER else len(BLOCK_ORDER))


@dataclass(frozen=True, eq=False)
class TaskSpec:
    dialect: Dialect
    n: int
    walls: np.ndarray
    start: AgentPose
    goal: Optional[Cell] = None
    premarkers: Optional[np.ndarray] = None
    postmarkers: Optional[np.ndarray] = None
    store: FrozenSet[str] = field(default_factory=frozenset)
    max_blocks: int = 0

    def __post_init__(self):
        walls = np.array(self.walls, dtype=np.int8)
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        pre = np.zeros((self.n, self.n), dtype=np.uint8) if self.premarkers is None else np.array(self.premarkers, dtype=np.uint8)
        pre.setflags(write=False)
        object.__setattr__(self, "premarkers", pre)
        if self.postmarkers is not None:
            post = np.array(self.postmarkers, dtype=np.uint8)
            post.setflags(write=False)
            object.__setattr__(self, "postmarkers", post)
        object.__setattr__(self, "store", frozenset(self.store))

    def visual_key(self) -> tuple:
        post = self.postmarkers.tobytes() if self.postmarkers is not None else None
        return (self.dialect.value, self.n, self.walls.tobytes(), self.premarkers.tobytes(), post,
                self.goal, self.start)

    def key(self) -> tuple:
        return self.visual_key() + (tuple(sort_blocks(self.store)), self.max_blocks)

    def __eq__(self, other) -> bool:
        return isinstance(other, TaskSpec) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def in_grid(self, row: int, col: int) -> bool:
        return 0 <= row < self.n and 0 <= col < self.n

    def is_blocked(self, row: int, col: int) -> bool:
        """Out-of-grid counts as blocked"""
        return not self.in_grid(row, col) or self.walls[row, col] == BLOCKED

    def cell(self, row: int, col: int, post: bool = False) -> CellState:
        wall = {UNKNOWN: "unknown", FREE: "free", BLOCKED: "blocked"}[int(self.walls[row, col])]
        markers = self.postmarkers if post and self.postmarkers is not None else self.premarkers
        return CellState(wall=wall, is_goal=self.goal == (row, col), markers=int(markers[row, col]))

    @property
    def materialized(self) -> bool:
        return not bool((self.walls == UNKNOWN).any())

    def blocked_cells(self) -> List[Cell]:
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(self.walls == BLOCKED))]

    def marker_cells(self, post: bool = False) -> List[Cell]:
        grid = self.postmarkers if post else self.premarkers
        if grid is None:
            return []
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(grid))]


def make_task(dialect, n: int, start: Tuple[int, int, int], goal: Optional[Cell] = None,
              walls: Iterable[Cell] = (), premarkers: Iterable[Cell] = (),
              postmarkers: Optional[Iterable[Cell]] = None, store: Iterable[str] = (),
              max_blocks: int = 0, free: Optional[Iterable[Cell]] = None) -> TaskSpec:
    """Build a task from cell lists; `free` lists open cells and blocks everything else"""
    dialect = Dialect(dialect)
    if free is not None:
        grid = np.full((n, n), BLOCKED, dtype=np.int8)
        for r, c in free:
            grid[r, c] = FREE
    else:
        grid = np.zeros((n, n), dtype=np.int8)
        for r, c in walls:
            grid[r, c] = BLOCKED
    pre = np.zeros((n, n), dtype=np.uint8)
    for r, c in premarkers:
        pre[r, c] = 1
    post = None
    if dialect == Dialect.KAREL:
        post = np.zeros((n, n), dtype=np.uint8)
        for r, c in (postmarkers or ()):
            post[r, c] = 1
    row, col, d = start
    return TaskSpec(
        dialect=dialect, n=n, walls=grid, start=AgentPose(row, col, Direction(d)),
        goal=tuple(goal) if goal is not None else None, premarkers=pre, postmarkers=post,
        store=frozenset(store) or dialect_blocks(dialect), max_blocks=max_blocks,
    )


def _cells(doc_cells: Optional[List[List[int]]], n: int, field_name: str) -> List[Cell]:
    cells = []
    for r, c in doc_cells or []:
        if not (0 <= r < n and 0 <= c < n):
            raise TaskValidationError(field_name, f"cell ({r}, {c}) outside the {n}x{n} grid")
        cells.append((r, c))
    return cells


def validate_task(task: TaskSpec) -> TaskSpec:
    n = task.n
    if task.walls.shape != (n, n):
        raise TaskValidationError("walls", f"grid shape {task.walls.shape} does not match n={n}")
    if not task.materialized:
        raise TaskValidationError("walls", "grid contains unknown cells")
    start = task.start
    if not task.in_grid(start.row, start.col):
        raise TaskValidationError("start", f"agent pose ({start.row}, {start.col}) outside the grid")
    if task.walls[start.row, start.col] == BLOCKED:
        raise TaskValidationError("start", "agent stands on a blocked cell")
    if not set(task.store) <= dialect_blocks(task.dialect):
        extra = sort_blocks(set(task.store) - dialect_blocks(task.dialect))
        raise TaskValidationError("store", f"blocks {extra} are not available in {task.dialect.value}")
    if int(task.premarkers.max(initial=0)) > 1:
        raise TaskValidationError("premarkers", "at most one marker per cell")
    if task.dialect == Dialect.HOC:
        if task.goal is None:
            raise TaskValidationError("goal", "HOC task needs exactly one goal cell")
        if not task.in_grid(*task.goal):
            raise TaskValidationError("goal", f"goal {task.goal} outside the grid")
        if task.walls[task.goal] == BLOCKED:
            raise TaskValidationError("goal", "goal cell is blocked")
        if task.premarkers.any():
            raise TaskValidationError("premarkers", "HOC tasks carry no markers")
    else:
        if task.goal is not None:
            raise TaskValidationError("goal", "Karel tasks have no goal cell")
        if task.postmarkers is None:
            raise TaskValidationError("postmarkers", "Karel task needs a postgrid")
        for grid_name, grid in (("premarkers", task.premarkers), ("postmarkers", task.postmarkers)):
            if bool((grid.astype(bool) & (task.walls == BLOCKED)).any()):
                raise TaskValidationError(grid_name, "marker placed on a wall")
    return task


def load_task(data: bytes) -> TaskSpec:
    """Parse and validate a task JSON document"""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise TaskValidationError("json", f"malformed JSON: {e}")
    try:
        doc = TaskDocument.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        raise TaskValidationError(".".join(str(p) for p in err["loc"]) or "task", err["msg"])

    n = doc.n
    dialect = Dialect(doc.dialect)
    walls = _cells(doc.walls, n, "walls")
    if doc.postwalls is not None and set(_cells(doc.postwalls, n, "postwalls")) != set(walls):
        raise TaskValidationError("postwalls", "pregrid and postgrid must share identical walls")

    goal = None
    if doc.goal is not None:
        g = doc.goal
        if isinstance(g, list) and g and all(isinstance(x, list) for x in g):
            if len(g) != 1:
                raise TaskValidationError("goal", "multiple goals")
            g = g[0]
        if not (isinstance(g, list) and len(g) == 2 and all(isinstance(x, int) for x in g)):
            raise TaskValidationError("goal", "goal must be a [row, col] pair")
        goal = (g[0], g[1])

    if dialect == Dialect.HOC and (doc.premarkers or doc.postmarkers):
        raise TaskValidationError("premarkers", "HOC tasks carry no markers")
    if dialect == Dialect.KAREL and doc.postmarkers is None:
        raise TaskValidationError("postmarkers", "Karel task needs a postgrid")

    premarkers = _cells(doc.premarkers, n, "premarkers")
    postmarkers = _cells(doc.postmarkers, n, "postmarkers") if doc.postmarkers is not None else None
    for name, cells in (("premarkers", premarkers), ("postmarkers", postmarkers or [])):
        if len(set(cells)) != len(cells):
            raise TaskValidationError(name, "at most one marker per cell")

    task = make_task(
        dialect, n, (doc.start.row, doc.start.col, DIRECTION_NAMES.index(doc.start.dir)),
        goal=goal, walls=walls, premarkers=premarkers, postmarkers=postmarkers,
        store=doc.store, max_blocks=doc.maxBlocks,
    )
    if not doc.store:
        raise TaskValidationError("store", "store must list at least one block")
    return validate_task(task)


def task_to_document(task: TaskSpec) -> dict:
    doc = {
        "dialect": task.dialect.value,
        "n": task.n,
        "start": PoseDocument(row=task.start.row, col=task.start.col, dir=task.start.dir.label).model_dump(),
    }
    if task.dialect == Dialect.HOC:
        doc["goal"] = list(task.goal) if task.goal is not None else None
    doc["walls"] = [list(c) for c in task.blocked_cells()]
    if task.dialect == Dialect.KAREL:
        doc["premarkers"] = [list(c) for c in task.marker_cells()]
        doc["postmarkers"] = [list(c) for c in task.marker_cells(post=True)]
    doc["store"] = sort_blocks(task.store)
    doc["maxBlocks"] = task.max_blocks
    return doc


def save_task(task: TaskSpec) -> bytes:
    return json.dumps(task_to_document(task)).encode("utf-8")


def _cell_char(state: CellState) -> str:
    if state.wall == "blocked":
        return "#"
    if state.is_goal:
        return "+"
    return "m" if state.markers else "."


def _grid_rows(task: TaskSpec, post: bool) -> List[str]:
    rows = []
    for r in range(task.n):
        chars = []
        for c in range(task.n):
            ch = _cell_char(task.cell(r, c, post))
            if not post and task.start.cell == (r, c):
                ch = task.start.dir.arrow
            chars.append(ch)
        rows.append("".join(chars))
    return rows


def render_ascii(task: TaskSpec) -> str:
    """One char per cell; Karel shows pregrid and postgrid side by side"""
    if not task.materialized:
        raise TaskValidationError("walls", "cannot render a grid with unknown cells")
    pre = _grid_rows(task, post=False)
    if task.dialect == Dialect.KAREL:
        post = _grid_rows(task, post=True)
        return "".join(f"{a} {b}\n" for a, b in zip(pre, post))
    return "".join(f"{row}\n" for row in pre)


def is_conceptually_similar(task: TaskSpec, code: CodeAst, ref_task: TaskSpec,
                            ref_code: CodeAst, delta_size: int) -> bool:
    return (
        task.store == ref_task.store
        and abs(task.max_blocks - ref_task.max_blocks) <= delta_size
        and struct_equal(code, ref_code)
    )


def default_store(code: CodeAst) -> FrozenSet[str]:
    """Store offering the dialect's actions plus the constructs the code uses"""
    constructs = {b for b in code_props(code).blocks if b in DIALECT_CONSTRUCTS[code.dialect]}
    return frozenset([a.value for a in DIALECT_ACTIONS[code.dialect]]) | constructs
