from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, Tuple, Union
import logging

from app.core.errors import DialectError

logger = logging.getLogger(__name__)


class Dialect(str, Enum):
    HOC = "hoc"
    KAREL = "karel"


class Action(str, Enum):
    MOVE = "move"
    TURN_LEFT = "turnLeft"
    TURN_RIGHT = "turnRight"
    PUT_MARKER = "putMarker"
    PICK_MARKER = "pickMarker"


class Condition(str, Enum):
    PATH_AHEAD = "pathAhead"
    NO_PATH_AHEAD = "noPathAhead"
    PATH_LEFT = "pathLeft"
    NO_PATH_LEFT = "noPathLeft"
    PATH_RIGHT = "pathRight"
    NO_PATH_RIGHT = "noPathRight"
    MARKER = "marker"
    NO_MARKER = "noMarker"
    GOAL = "goal"


TURNS = (Action.TURN_LEFT, Action.TURN_RIGHT)
MARKER_ACTIONS = (Action.PICK_MARKER, Action.PUT_MARKER)

DIALECT_ACTIONS: Dict[Dialect, Tuple[Action, ...]] = {
    Dialect.HOC: (Action.MOVE, Action.TURN_LEFT, Action.TURN_RIGHT),
    Dialect.KAREL: (Action.MOVE, Action.TURN_LEFT, Action.TURN_RIGHT,
                    Action.PUT_MARKER, Action.PICK_MARKER),
}

# Conditions usable in If / IfElse / While (goal belongs to RepeatUntil alone)
DIALECT_CONDITIONS: Dict[Dialect, Tuple[Condition, ...]] = {
    Dialect.HOC: (Condition.PATH_AHEAD, Condition.PATH_LEFT, Condition.PATH_RIGHT),
    Dialect.KAREL: (Condition.PATH_AHEAD, Condition.NO_PATH_AHEAD,
                    Condition.PATH_LEFT, Condition.NO_PATH_LEFT,
                    Condition.PATH_RIGHT, Condition.NO_PATH_RIGHT,
                    Condition.MARKER, Condition.NO_MARKER),
}

DIALECT_CONSTRUCTS: Dict[Dialect, Tuple[str, ...]] = {
    Dialect.HOC: ("Repeat", "RepeatUntil", "If", "IfElse"),
    Dialect.KAREL: ("Repeat", "While", "If", "IfElse"),
}

NEGATION: Dict[Condition, Condition] = {
    Condition.PATH_AHEAD: Condition.NO_PATH_AHEAD,
    Condition.NO_PATH_AHEAD: Condition.PATH_AHEAD,
    Condition.PATH_LEFT: Condition.NO_PATH_LEFT,
    Condition.NO_PATH_LEFT: Condition.PATH_LEFT,
    Condition.PATH_RIGHT: Condition.NO_PATH_RIGHT,
    Condition.NO_PATH_RIGHT: Condition.PATH_RIGHT,
    Condition.MARKER: Condition.NO_MARKER,
    Condition.NO_MARKER: Condition.MARKER,
}

MIN_ITER = 2
MAX_ITER = 10


def dialect_blocks(dialect: Dialect) -> FrozenSet[str]:
    """Every block kind a task store may offer in this dialect"""
    return frozenset([a.value for a in DIALECT_ACTIONS[dialect]] + list(DIALECT_CONSTRUCTS[dialect]))


@dataclass(frozen=True)
class ActionStmt:
    action: Action

    @property
    def kind(self) -> str:
        return self.action.value


@dataclass(frozen=True)
class Repeat:
    times: int
    body: Tuple["Stmt", ...]
    kind = "Repeat"


@dataclass(frozen=True)
class While:
    cond: Condition
    body: Tuple["Stmt", ...]
    kind = "While"


@dataclass(frozen=True)
class RepeatUntil:
    body: Tuple["Stmt", ...]
    kind = "RepeatUntil"

    @property
    def cond(self) -> Condition:
        return Condition.GOAL


@dataclass(frozen=True)
class If:
    cond: Condition
    body: Tuple["Stmt", ...]
    kind = "If"


@dataclass(frozen=True)
class IfElse:
    cond: Condition
    then_body: Tuple["Stmt", ...]
    else_body: Tuple["Stmt", ...]
    kind = "IfElse"


Stmt = Union[ActionStmt, Repeat, While, RepeatUntil, If, IfElse]
Path = Tuple[int, ...]


@dataclass(frozen=True)
class CodeAst:
    body: Tuple[Stmt, ...]
    dialect: Dialect = Dialect.HOC


@dataclass(frozen=True)
class CodeProps:
    blocks: FrozenSet[str]
    size: int
    depth: int
    struct_sig: str


def child_bodies(stmt: Stmt) -> List[Tuple[int, Tuple[Stmt, ...]]]:
    """(branch index, body) pairs; IfElse has branch 0 = then, 1 = else"""
    if isinstance(stmt, ActionStmt):
        return []
    if isinstance(stmt, IfElse):
        return [(0, stmt.then_body), (1, stmt.else_body)]
    return [(0, stmt.body)]


def walk(body: Tuple[Stmt, ...], prefix: Path = ()) -> Iterator[Tuple[Path, Stmt]]:
    """Pre-order (path, statement) pairs; a child path is parent + (branch, index)"""
    for i, stmt in enumerate(body):
        path = prefix + (i,)
        yield path, stmt
        for branch, child in child_bodies(stmt):
            yield from walk(child, path + (branch,))


def node_ids(ast: CodeAst) -> Dict[Path, int]:
    return {path: idx for idx, (path, _) in enumerate(walk(ast.body))}


def has_loop(ast: CodeAst) -> bool:
    return any(isinstance(stmt, (While, RepeatUntil)) for _, stmt in walk(ast.body))


def _depth(body: Tuple[Stmt, ...]) -> int:
    inner = 0
    for stmt in body:
        for _, child in child_bodies(stmt):
            inner = max(inner, 1 + _depth(child))
        if not isinstance(stmt, ActionStmt):
            inner = max(inner, 1)
    return inner


def _struct(body: Tuple[Stmt, ...]) -> str:
    parts = []
    for stmt in body:
        if isinstance(stmt, ActionStmt):
            continue
        if isinstance(stmt, IfElse):
            then_sig, else_sig = _struct(stmt.then_body), _struct(stmt.else_body)
            if then_sig or else_sig:
                parts.append(f"IfElse{{{then_sig}}}{{{else_sig}}}")
            else:
                parts.append("IfElse")
            continue
        inner = _struct(stmt.body)
        parts.append(f"{stmt.kind}{{{inner}}}" if inner else stmt.kind)
    return ",".join(parts)


def struct_sig(ast: CodeAst) -> str:
    return f"Run{{{_struct(ast.body)}}}"


def code_props(ast: CodeAst) -> CodeProps:
    blocks = set()
    size = 0
    for _, stmt in walk(ast.body):
        blocks.add(stmt.kind)
        size += 1
    depth = 1 + _depth(ast.body) if ast.body else 0
    return CodeProps(blocks=frozenset(blocks), size=size, depth=depth, struct_sig=struct_sig(ast))


def code_size(ast: CodeAst) -> int:
    return sum(1 for _ in walk(ast.body))


def struct_equal(a: CodeAst, b: CodeAst) -> bool:
    return struct_sig(a) == struct_sig(b)


def validate_code(ast: CodeAst) -> CodeAst:
    """Check dialect closure, iteration bounds and RepeatUntil placement"""
    dialect = ast.dialect
    actions = DIALECT_ACTIONS[dialect]
    conditions = DIALECT_CONDITIONS[dialect]
    constructs = DIALECT_CONSTRUCTS[dialect]

    for path, stmt in walk(ast.body):
        if isinstance(stmt, ActionStmt):
            if stmt.action not in actions:
                raise DialectError(f"Action '{stmt.kind}' is not available in {dialect.value}", stmt.kind)
            continue
        if stmt.kind not in constructs:
            raise DialectError(f"'{stmt.kind}' is not available in {dialect.value}", stmt.kind)
        if isinstance(stmt, Repeat) and not MIN_ITER <= stmt.times <= MAX_ITER:
            raise DialectError(f"Iteration count {stmt.times} out of range {MIN_ITER}..{MAX_ITER}", str(stmt.times))
        if isinstance(stmt, (While, If, IfElse)) and stmt.cond not in conditions:
            raise DialectError(f"Condition '{stmt.cond.value}' is not available in {dialect.value}", stmt.cond.value)
        if isinstance(stmt, RepeatUntil) and (len(path) != 1 or path[0] != len(ast.body) - 1):
            raise DialectError("RepeatUntil must be the final top-level statement", "RepeatUntil")
    return ast
