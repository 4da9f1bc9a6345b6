import os

import numpy as np
import pytest

from app.core.errors import DialectError, DSLSyntaxError
from app.models.code import (
    Action, ActionStmt, CodeAst, Condition, DIALECT_ACTIONS, DIALECT_CONDITIONS, Dialect, If, IfElse,
    MAX_ITER, MIN_ITER, Repeat, RepeatUntil, While, code_props, code_size, node_ids, struct_equal, validate_code,
)
from app.models.dsl import (
    code_from_json, code_to_json, detect_dialect, inline_code, parse_code, parse_code_auto, print_code,
)
from app.models.references import REFERENCES_DIR, load_reference_code, reference_names


class TestParsing:
    def test_references_print_back_to_their_files(self):
        for name in reference_names():
            with open(os.path.join(REFERENCES_DIR, f"{name}.code"), encoding="utf-8") as fh:
                text = fh.read()
            assert print_code(load_reference_code(name)) == text.rstrip("\n")

    def test_short_aliases(self):
        code = parse_code("def Run(){ Repeat(3){ turnL move } If(pathR){ turnR } }", "hoc")
        assert code.body[0] == Repeat(3, (ActionStmt(Action.TURN_LEFT), ActionStmt(Action.MOVE)))
        assert code.body[1] == If(Condition.PATH_RIGHT, (ActionStmt(Action.TURN_RIGHT),))

    def test_karel_action_rejected_in_hoc(self):
        with pytest.raises(DialectError) as e:
            parse_code("def Run(){ move putMarker }", "hoc")
        assert e.value.token == "putMarker"

    def test_repeat_count_out_of_range(self):
        with pytest.raises(DSLSyntaxError):
            parse_code("def Run(){ Repeat(11){ move } }", "hoc")

    def test_missing_brace_reports_position(self):
        with pytest.raises(DSLSyntaxError) as e:
            parse_code("def Run(){\n  move )\n}", "hoc")
        assert e.value.line == 2

    def test_repeat_until_must_be_last(self):
        with pytest.raises(DialectError):
            parse_code("def Run(){ RepeatUntil(goal){ move } turnLeft }", "hoc")

    def test_repeat_until_only_on_goal(self):
        with pytest.raises(DialectError):
            parse_code("def Run(){ RepeatUntil(pathAhead){ move } }", "hoc")

    def test_while_not_in_hoc(self):
        with pytest.raises(DialectError):
            parse_code("def Run(){ While(pathAhead){ move } }", "hoc")

    def test_dialect_detection(self):
        assert detect_dialect("def Run(){ move turnLeft }") == Dialect.HOC
        assert detect_dialect("def Run(){ move pickMarker }") == Dialect.KAREL
        assert parse_code_auto("def Run(){ putMarker }", "auto").dialect == Dialect.KAREL

    def test_validate_code_rejects_bad_iteration(self):
        with pytest.raises(DialectError):
            validate_code(CodeAst((Repeat(1, (ActionStmt(Action.MOVE),)),)))


class TestProperties:
    def test_h5_props(self, reference_codes):
        props = code_props(reference_codes["H5"])
        assert props.size == 4
        assert props.depth == 3
        assert props.struct_sig == "Run{RepeatUntil{If}}"
        assert props.blocks == frozenset({"RepeatUntil", "move", "If", "turnLeft"})

    def test_struct_signatures(self, reference_codes):
        assert code_props(reference_codes["H6"]).struct_sig == "Run{RepeatUntil{IfElse}}"
        assert code_props(reference_codes["K10"]).struct_sig == "Run{While}"
        assert code_props(reference_codes["H3"]).struct_sig == "Run{Repeat,Repeat}"
        assert code_props(reference_codes["H1"]).struct_sig == "Run{}"

    def test_node_ids_are_preorder(self, reference_codes):
        ids = node_ids(reference_codes["H5"])
        assert ids == {(0,): 0, (0, 0, 0): 1, (0, 0, 1): 2, (0, 0, 1, 0, 0): 3}

    def test_struct_equal_ignores_actions_and_counts(self):
        a = parse_code("def Run(){ turnRight Repeat(5){ move } }", "hoc")
        b = parse_code("def Run(){ move move Repeat(6){ move turnLeft } }", "hoc")
        c = parse_code("def Run(){ RepeatUntil(goal){ move } }", "hoc")
        assert struct_equal(a, b)
        assert not struct_equal(a, c)

    def test_sizes(self, reference_codes):
        assert code_size(reference_codes["H2"]) == 3
        assert code_size(reference_codes["K9"]) == 5
        assert code_size(CodeAst(())) == 0


class TestJson:
    def test_h2_document(self, reference_codes):
        assert code_to_json(reference_codes["H2"]) == {
            "dialect": "hoc",
            "body": [{"type": "turnRight"}, {"type": "Repeat", "iter": 5, "body": [{"type": "move"}]}],
        }

    def test_documents_rebuild_the_same_ast(self, reference_codes):
        for name in ("H6", "K9", "K10"):
            code = reference_codes[name]
            assert code_from_json(code_to_json(code)) == code

    def test_unknown_condition_in_document(self):
        with pytest.raises(DialectError):
            code_from_json({"dialect": "hoc", "body": [{"type": "If", "cond": "sunny", "body": []}]})

    def test_bad_dialect_in_document(self):
        with pytest.raises(ValueError):
            code_from_json({"dialect": "scratch", "body": []})

    def test_inline_rendering(self, reference_codes):
        assert inline_code(reference_codes["H2"]) == "def Run(){ turnRight Repeat(5){ move } }"

    def test_repeat_until_document(self):
        code = code_from_json({"dialect": "hoc", "body": [{"type": "RepeatUntil", "cond": "goal", "body": [{"type": "move"}]}]})
        assert code.body == (RepeatUntil((ActionStmt(Action.MOVE),)),)


def random_body(rng, dialect, depth):
    actions = DIALECT_ACTIONS[dialect]
    conds = DIALECT_CONDITIONS[dialect]
    body = []
    for _ in range(int(rng.integers(1, 4))):
        pick = int(rng.integers(6)) if depth < 2 else 0
        if pick <= 2:
            body.append(ActionStmt(actions[int(rng.integers(len(actions)))]))
        elif pick == 3:
            body.append(Repeat(int(rng.integers(MIN_ITER, MAX_ITER + 1)), random_body(rng, dialect, depth + 1)))
        elif pick == 4:
            cond = conds[int(rng.integers(len(conds)))]
            if rng.random() < 0.5:
                body.append(If(cond, random_body(rng, dialect, depth + 1)))
            else:
                body.append(IfElse(cond, random_body(rng, dialect, depth + 1), random_body(rng, dialect, depth + 1)))
        elif dialect == Dialect.KAREL:
            body.append(While(conds[int(rng.integers(len(conds)))], random_body(rng, dialect, depth + 1)))
        else:
            body.append(ActionStmt(Action.MOVE))
    return tuple(body)


def random_ast(rng, dialect):
    body = random_body(rng, dialect, 0)
    if dialect == Dialect.HOC and rng.random() < 0.3:
        body += (RepeatUntil(random_body(rng, dialect, 1)),)
    return validate_code(CodeAst(body, dialect))


class TestRandomRoundTrips:
    def test_print_then_parse(self):
        rng = np.random.default_rng(5)
        for i in range(1000):
            dialect = Dialect.HOC if i % 2 == 0 else Dialect.KAREL
            code = random_ast(rng, dialect)
            assert parse_code(print_code(code), dialect) == code

    def test_json_then_rebuild(self):
        rng = np.random.default_rng(6)
        for i in range(1000):
            dialect = Dialect.HOC if i % 2 == 0 else Dialect.KAREL
            code = random_ast(rng, dialect)
            assert code_from_json(code_to_json(code)) == code
