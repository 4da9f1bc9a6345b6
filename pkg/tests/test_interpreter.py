import itertools

import numpy as np
import pytest

from app.core.errors import DialectError
from app.models.code import Action, DIALECT_ACTIONS, Dialect
from app.models.dsl import parse_code
from app.models.interpreter import TraceCounts, execute, find_shortcut, run_actions
from app.models.task import make_task


class TestExecute:
    def test_h5_reference(self, reference_codes, h5_task):
        trace = execute(reference_codes["H5"], h5_task)
        assert trace.solved and not trace.crashed
        assert trace.counts == TraceCounts(moves=8, turns=1, segments=2, long_segments=0)
        assert trace.full_coverage
        assert (trace.final_pose.row, trace.final_pose.col) == (5, 4)

    def test_h2_reference(self, reference_codes, h2_task):
        trace = execute(reference_codes["H2"], h2_task)
        assert trace.solved
        assert trace.steps == ["turnRight"] + ["move"] * 5
        assert trace.counts.segments == 1 and trace.counts.long_segments == 1

    def test_crash_on_wall(self, h2_task):
        trace = execute(parse_code("def Run(){ move }", "hoc"), h2_task)
        assert trace.crashed and not trace.solved

    def test_unroll_cap(self, h2_task):
        trace = execute(parse_code("def Run(){ RepeatUntil(goal){ turnLeft } }", "hoc"), h2_task)
        assert trace.depth_exceeded and not trace.solved and not trace.crashed
        assert trace.counts.turns == 20

    def test_explicit_unroll_cap(self, h2_task):
        trace = execute(parse_code("def Run(){ RepeatUntil(goal){ turnLeft } }", "hoc"), h2_task, unroll_cap=3)
        assert trace.counts.turns == 3

    def test_karel_reference(self, reference_codes, k7_task):
        trace = execute(reference_codes["K7"], k7_task)
        assert trace.solved
        assert trace.counts.pick_markers == 1
        assert not trace.final_markers.any()

    def test_karel_pick_on_empty_cell_crashes(self, k7_task):
        trace = execute(parse_code("def Run(){ pickMarker }", "karel"), k7_task)
        assert trace.crashed

    def test_unentered_if_is_not_covered(self, reference_codes):
        task = make_task("hoc", 4, (0, 0, 1), goal=(0, 3), free=[(0, 0), (0, 1), (0, 2), (0, 3)])
        trace = execute(reference_codes["H5"], task)
        assert trace.solved
        assert not trace.full_coverage
        assert trace.covered_nodes == frozenset({0, 1})

    def test_branch_record(self, reference_codes):
        task = make_task("hoc", 4, (0, 0, 1), goal=(0, 1), free=[(0, 0), (0, 1)])
        trace = execute(reference_codes["H5"], task)
        # goal check, If(pathLeft), goal check
        assert trace.branches == [(0, False), (2, False), (0, True)]

    def test_dialect_mismatch(self, reference_codes, h2_task):
        with pytest.raises(DialectError):
            execute(reference_codes["K7"], h2_task)


class TestShortcut:
    def test_h2_shortest_path(self, h2_task):
        assert find_shortcut(h2_task, 5).status == "none"
        result = find_shortcut(h2_task, 6)
        assert result.found
        assert result.actions == [Action.TURN_RIGHT] + [Action.MOVE] * 5
        assert run_actions(h2_task, result.actions)

    def test_start_on_goal(self):
        task = make_task("hoc", 3, (1, 1, 0), goal=(1, 1))
        result = find_shortcut(task, 0)
        assert result.found and result.actions == []

    def test_karel_needs_the_pick(self, k7_task):
        result = find_shortcut(k7_task, 3)
        assert result.found
        assert result.actions == [Action.MOVE, Action.MOVE, Action.PICK_MARKER]

    def test_state_cap_is_indeterminate(self, h2_task):
        assert find_shortcut(h2_task, 6, state_cap=2).status == "indeterminate"

    def test_agrees_with_exhaustive_search(self):
        actions = DIALECT_ACTIONS[Dialect.HOC]
        max_len = 6
        for seed in range(50):
            rng = np.random.default_rng(seed)
            cells = [(r, c) for r in range(5) for c in range(5)]
            start, goal = (cells[i] for i in rng.choice(len(cells), size=2, replace=False))
            walls = [cell for cell in cells if rng.random() < 0.3 and cell not in (start, goal)]
            task = make_task("hoc", 5, (start[0], start[1], int(rng.integers(4))), goal=goal, walls=walls)

            shortest = None
            for length in range(max_len + 1):
                if any(run_actions(task, list(seq)) for seq in itertools.product(actions, repeat=length)):
                    shortest = length
                    break

            result = find_shortcut(task, max_len)
            if shortest is None:
                assert result.status == "none", seed
            else:
                assert result.found, seed
                assert len(result.actions) == shortest, seed
                assert run_actions(task, result.actions), seed
