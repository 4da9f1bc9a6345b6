import lark
from typing import Dict, List, Optional, Union
import logging

from app.core.errors import DialectError, DSLSyntaxError
from app.models.code import (
    Action, ActionStmt, CodeAst, Condition, DIALECT_ACTIONS, DIALECT_CONDITIONS, Dialect,
    If, IfElse, MAX_ITER, MIN_ITER, Repeat, RepeatUntil, Stmt, While, validate_code,
)
from app.schemas.code import CodeDocument

logger = logging.getLogger(__name__)


GRAMMAR = r"""
start: "def" "Run" "(" ")" block

block: "{" stmt* "}"

?stmt: action
     | repeat
     | while_loop
     | repeat_until
     | if_stmt

action: NAME
repeat: "Repeat" "(" INT ")" block
while_loop: "While" "(" NAME ")" block
repeat_until: "RepeatUntil" "(" NAME ")" block
if_stmt: "If" "(" NAME ")" block ("Else" block)?

NAME: /[A-Za-z_][A-Za-z0-9_]*/

%import common.INT
%import common.WS
%ignore WS
""".strip()


ACTION_ALIASES: Dict[str, Action] = {
    "turnL": Action.TURN_LEFT,
    "turnR": Action.TURN_RIGHT,
    "putM": Action.PUT_MARKER,
    "pickM": Action.PICK_MARKER,
}
ACTION_ALIASES.update({a.value: a for a in Action})

CONDITION_ALIASES: Dict[str, Condition] = {
    "pathA": Condition.PATH_AHEAD,
    "noPathA": Condition.NO_PATH_AHEAD,
    "pathL": Condition.PATH_LEFT,
    "noPathL": Condition.NO_PATH_LEFT,
    "pathR": Condition.PATH_RIGHT,
    "noPathR": Condition.NO_PATH_RIGHT,
}
CONDITION_ALIASES.update({c.value: c for c in Condition})

_parser = lark.Lark(GRAMMAR, parser="lalr", propagate_positions=True)


class ConstructAST(lark.Transformer):
    def __init__(self, dialect: Dialect):
        super().__init__()
        self.dialect = dialect

    def _condition(self, token: lark.Token) -> Condition:
        cond = CONDITION_ALIASES.get(str(token))
        if cond is None:
            raise DialectError(f"Unknown condition '{token}'", str(token), token.line, token.column)
        if cond != Condition.GOAL and cond not in DIALECT_CONDITIONS[self.dialect]:
            raise DialectError(
                f"Condition '{token}' is not available in {self.dialect.value}", str(token), token.line, token.column,
            )
        return cond

    def start(self, args):
        (body,) = args
        return body

    def block(self, args):
        return tuple(args)

    def action(self, args):
        (token,) = args
        action = ACTION_ALIASES.get(str(token))
        if action is None:
            raise DialectError(f"Unknown action '{token}'", str(token), token.line, token.column)
        if action not in DIALECT_ACTIONS[self.dialect]:
            raise DialectError(
                f"Action '{token}' is not available in {self.dialect.value}", str(token), token.line, token.column,
            )
        return ActionStmt(action)

    def repeat(self, args):
        count, body = args
        times = int(count)
        if not MIN_ITER <= times <= MAX_ITER:
            raise DSLSyntaxError(
                f"Repeat iteration count {times} out of range {MIN_ITER}..{MAX_ITER}",
                count.line, count.column,
            )
        return Repeat(times, body)

    def while_loop(self, args):
        cond, body = args
        return While(self._condition(cond), body)

    def repeat_until(self, args):
        cond, body = args
        if self._condition(cond) != Condition.GOAL:
            raise DialectError("RepeatUntil only accepts the goal condition", str(cond), cond.line, cond.column)
        return RepeatUntil(body)

    def if_stmt(self, args):
        cond = self._condition(args[0])
        if len(args) == 3:
            return IfElse(cond, args[1], args[2])
        return If(cond, args[1])


def _as_dialect(dialect: Union[Dialect, str]) -> Dialect:
    try:
        return Dialect(dialect)
    except ValueError:
        raise DialectError(f"Unknown dialect '{dialect}'", str(dialect))


def parse_code(text: str, dialect: Union[Dialect, str] = Dialect.HOC) -> CodeAst:
    """Parse concrete `def Run(){ ... }` source into a validated CodeAst"""
    dialect = _as_dialect(dialect)
    try:
        tree = _parser.parse(text)
    except lark.exceptions.UnexpectedInput as e:
        raise DSLSyntaxError(f"Syntax error near {_describe(e)}", e.line, e.column) from e
    try:
        body = ConstructAST(dialect).transform(tree)
    except lark.exceptions.VisitError as e:
        if isinstance(e.orig_exc, (DialectError, DSLSyntaxError)):
            raise e.orig_exc from None
        raise
    return validate_code(CodeAst(body=body, dialect=dialect))


def _describe(e: lark.exceptions.UnexpectedInput) -> str:
    token = getattr(e, "token", None)
    if token is not None:
        return f"'{token}'"
    char = getattr(e, "char", None)
    return f"'{char}'" if char is not None else "end of input"


def detect_dialect(text: str) -> Dialect:
    """HOC unless the source only parses as Karel"""
    try:
        parse_code(text, Dialect.HOC)
        return Dialect.HOC
    except DialectError as hoc_error:
        try:
            parse_code(text, Dialect.KAREL)
        except DialectError:
            raise hoc_error
        return Dialect.KAREL


def parse_code_auto(text: str, dialect: Optional[str] = None) -> CodeAst:
    if dialect in (None, "auto"):
        return parse_code(text, detect_dialect(text))
    return parse_code(text, dialect)


INDENT = "  "


def _print_body(body, depth: int, out: List[str]) -> None:
    pad = INDENT * depth
    for stmt in body:
        if isinstance(stmt, ActionStmt):
            out.append(f"{pad}{stmt.kind}")
        elif isinstance(stmt, Repeat):
            out.append(f"{pad}Repeat({stmt.times}){{")
            _print_body(stmt.body, depth + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(stmt, IfElse):
            out.append(f"{pad}If({stmt.cond.value}){{")
            _print_body(stmt.then_body, depth + 1, out)
            out.append(f"{pad}}} Else {{")
            _print_body(stmt.else_body, depth + 1, out)
            out.append(f"{pad}}}")
        else:
            out.append(f"{pad}{stmt.kind}({stmt.cond.value}){{")
            _print_body(stmt.body, depth + 1, out)
            out.append(f"{pad}}}")


def print_code(ast: CodeAst) -> str:
    out = ["def Run(){"]
    _print_body(ast.body, 1, out)
    out.append("}")
    return "\n".join(out)


def inline_code(ast: CodeAst) -> str:
    """Single-line rendering for logs"""
    return " ".join(line.strip() for line in print_code(ast).splitlines())


def _node_json(stmt: Stmt) -> dict:
    if isinstance(stmt, ActionStmt):
        return {"type": stmt.kind}
    node = {"type": stmt.kind}
    if isinstance(stmt, Repeat):
        node["iter"] = stmt.times
    else:
        node["cond"] = stmt.cond.value
    if isinstance(stmt, IfElse):
        node["body"] = [_node_json(s) for s in stmt.then_body]
        node["elseBody"] = [_node_json(s) for s in stmt.else_body]
    else:
        node["body"] = [_node_json(s) for s in stmt.body]
    return node


def code_to_json(ast: CodeAst) -> dict:
    return {"dialect": ast.dialect.value, "body": [_node_json(s) for s in ast.body]}


def _node_from_json(node: dict) -> Stmt:
    kind = node["type"]
    if kind in ACTION_ALIASES:
        return ActionStmt(ACTION_ALIASES[kind])
    body = tuple(_node_from_json(n) for n in node.get("body", []))
    if kind == "Repeat":
        return Repeat(int(node["iter"]), body)
    if kind == "RepeatUntil":
        return RepeatUntil(body)
    cond = CONDITION_ALIASES.get(node.get("cond", ""))
    if cond is None:
        raise DialectError(f"Unknown condition '{node.get('cond')}'", str(node.get("cond")))
    if kind == "While":
        return While(cond, body)
    if kind == "If":
        return If(cond, body)
    if kind == "IfElse":
        return IfElse(cond, body, tuple(_node_from_json(n) for n in node.get("elseBody", [])))
    raise DialectError(f"Unknown statement type '{kind}'", kind)


def code_from_json(doc: dict) -> CodeAst:
    parsed = CodeDocument.model_validate(doc)
    dialect = _as_dialect(parsed.dialect)
    body = tuple(_node_from_json(n.model_dump(exclude_none=True)) for n in parsed.body)
    return validate_code(CodeAst(body=body, dialect=dialect))
