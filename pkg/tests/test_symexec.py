import numpy as np
import pytest

from app.core.config import SynthesisParams
from app.core.errors import ConfigError, DecisionsExhausted, MalformedDecisions
from app.models.code import code_size
from app.models.dsl import parse_code
from app.models.interpreter import execute, find_shortcut
from app.models.symexec import (
    CONTRADICTION, CRASHED, DEPTH_EXCEEDED, TASK_EMITTED, apply_distractors, initial_config,
    parse_preinit, preinit_patterns, run_symbolic,
)
from app.models.task import BLOCKED, Direction, UNKNOWN


@pytest.fixture
def small():
    return SynthesisParams(n=4)


class TestRunSymbolic:
    def test_emits_task_for_h5_variant(self, h5_variant, small):
        outcome = run_symbolic(h5_variant, [19, 1, 1, 0], small)
        assert outcome.status == TASK_EMITTED
        assert outcome.config.dir == Direction.WEST
        assert (outcome.config.row, outcome.config.col) == (2, 2)
        assert outcome.task.goal == (3, 1)
        assert outcome.trace.counts.moves == 2 and outcome.trace.counts.turns == 2
        assert outcome.trace.full_coverage
        assert outcome.task.max_blocks == code_size(h5_variant)

    def test_emitted_task_replays(self, h5_variant, small):
        outcome = run_symbolic(h5_variant, [19, 1, 1, 0], small)
        trace = execute(h5_variant, outcome.task, small.effective_unroll_cap)
        assert trace.solved
        assert trace.steps == outcome.trace.steps
        assert trace.branches == outcome.trace.branches
        assert sorted(outcome.task.blocked_cells()) == sorted(
            (r, c) for r in range(4) for c in range(4) if (r, c) not in {(2, 2), (2, 1), (3, 1), (3, 0)}
        )

    def test_crash_off_the_grid(self, h5_variant, small):
        outcome = run_symbolic(h5_variant, [19, 1, 0, 1], small)
        assert outcome.status == CRASHED
        assert outcome.task is None

    def test_exhausted_decisions(self, h5_variant, small):
        with pytest.raises(DecisionsExhausted) as e:
            run_symbolic(h5_variant, [19], small)
        assert e.value.index == 1

    @pytest.mark.parametrize("decisions", [[20], [19, 2], [19, 1, 1, 0, 1], [-1]])
    def test_malformed_decisions(self, h5_variant, small, decisions):
        with pytest.raises(MalformedDecisions):
            run_symbolic(h5_variant, decisions, small)

    def test_straight_line_goal_is_final_cell(self):
        code = parse_code("def Run(){ move move }", "hoc")
        outcome = run_symbolic(code, [17], SynthesisParams(n=10))
        assert outcome.status == TASK_EMITTED
        assert outcome.task.start.dir == Direction.EAST
        assert outcome.task.goal == (5, 7)
        assert len(outcome.task.blocked_cells()) == 97
        assert execute(code, outcome.task).solved

    def test_leaving_the_grid_at_a_corner(self):
        outcome = run_symbolic(parse_code("def Run(){ move }", "hoc"), [0], SynthesisParams(n=10))
        assert outcome.status == CRASHED

    def test_unroll_cap(self):
        code = parse_code("def Run(){ RepeatUntil(goal){ turnLeft } }", "hoc")
        outcome = run_symbolic(code, [0, 1], SynthesisParams(n=4, unroll_cap=4))
        assert outcome.status == DEPTH_EXCEEDED

    def test_karel_markers_materialize(self, reference_codes):
        code = reference_codes["K7"]
        outcome = run_symbolic(code, [1], SynthesisParams(n=10))
        assert outcome.status == TASK_EMITTED
        assert outcome.task.marker_cells() == [(0, 2)]
        assert outcome.task.marker_cells(post=True) == []
        assert execute(code, outcome.task).solved

    def test_border_preinit_blocks_corner_start(self, h5_variant):
        params = SynthesisParams(n=10)
        outcome = run_symbolic(h5_variant, [0], params, pre_init=preinit_patterns("border", 10))
        assert outcome.status == CONTRADICTION

    def test_initial_configs(self):
        assert initial_config(0, 10).dir == Direction.NORTH
        assert (initial_config(7, 10).row, initial_config(7, 10).col) == (0, 9)
        assert (initial_config(16, 10).row, initial_config(16, 10).col) == (5, 5)
        with pytest.raises(MalformedDecisions):
            initial_config(20, 10)


class TestPreinit:
    def test_patterns(self):
        assert (preinit_patterns("none", 10) == UNKNOWN).all()
        border = preinit_patterns("border", 10)
        assert int((border == BLOCKED).sum()) == 36
        assert border[5, 5] == UNKNOWN

    def test_scatter_is_seeded(self):
        a = preinit_patterns("scatter", 10, 0.3, 7)
        b = preinit_patterns("scatter", 10, 0.3, 7)
        assert np.array_equal(a, b)
        assert (a == BLOCKED).any()

    def test_parse(self):
        assert parse_preinit("none", 10) is None
        assert np.array_equal(parse_preinit("scatter:0.3:7", 10), preinit_patterns("scatter", 10, 0.3, 7))

    def test_unknown_pattern(self):
        with pytest.raises(ConfigError):
            preinit_patterns("spiral", 10)


class TestDistractors:
    def test_zero_budget_is_identity(self, h5_variant, small):
        task = run_symbolic(h5_variant, [19, 1, 1, 0], small).task
        assert apply_distractors(task, h5_variant, seed=1, budget=0) is task

    def test_opened_cells_keep_behaviour(self, reference_codes, h5_task):
        code = reference_codes["H5"]
        opened = apply_distractors(h5_task, code, seed=3, budget=5)
        assert opened.start == h5_task.start and opened.goal == h5_task.goal
        assert len(opened.blocked_cells()) >= len(h5_task.blocked_cells()) - 5
        base, replay = execute(code, h5_task), execute(code, opened)
        assert replay.solved
        assert replay.branches == base.branches
        assert find_shortcut(opened, code_size(code) - 1).status == "none"
