import numpy as np
import pytest

from app.core.config import SynthesisParams
from app.core.errors import TaskValidationError
from app.models.code import Dialect
from app.models.dsl import parse_code
from app.models.interpreter import Trace, TraceCounts, execute
from app.models import scoring
from app.models.scoring import (
    f_diss, f_diversity, f_nocut, f_qual, f_score, path_distance, qualifies, rescore,
)
from app.models.task import AgentPose, Direction, make_task


def trace_with(counts, crashed=False):
    return Trace(
        solved=not crashed, crashed=crashed, steps=[], counts=counts, covered_nodes=frozenset(),
        final_pose=AgentPose(0, 0, Direction.NORTH), final_markers=np.zeros((10, 10), dtype=np.uint8),
    )


def corridor(start_dir=0, start_col=0, n=10):
    return make_task("hoc", n, (0, start_col, start_dir), goal=(0, 5), free=[(0, c) for c in range(6)])


class TestQuality:
    def test_hoc_formula(self):
        trace = trace_with(TraceCounts(moves=6, turns=2, segments=1, long_segments=0))
        assert f_qual(trace, 10, Dialect.HOC) == pytest.approx(0.175)

    def test_karel_formula(self):
        counts = TraceCounts(moves=6, turns=2, segments=1, long_segments=0, pick_markers=5, put_markers=10)
        assert f_qual(trace_with(counts), 10, Dialect.KAREL) == pytest.approx(0.31875)

    def test_terms_saturate(self):
        counts = TraceCounts(moves=100, turns=100, segments=100, long_segments=100)
        assert f_qual(trace_with(counts), 10, Dialect.HOC) == pytest.approx(1.0)

    def test_crash_scores_zero(self):
        trace = trace_with(TraceCounts(moves=6, turns=2), crashed=True)
        assert f_qual(trace, 10, Dialect.HOC) == 0.0

    def test_grid_size_must_be_positive(self):
        with pytest.raises(TaskValidationError):
            f_qual(trace_with(TraceCounts()), 0, Dialect.HOC)

    def test_h5_reference(self, reference_codes, h5_task):
        trace = execute(reference_codes["H5"], h5_task)
        assert f_qual(trace, 10, Dialect.HOC) == pytest.approx(0.225)


class TestDissimilarity:
    def test_identical(self, h5_task):
        assert f_diss(h5_task, h5_task) == 0.0

    def test_start_changes(self):
        assert f_diss(corridor(), corridor(start_dir=1, start_col=1)) == pytest.approx(2 / 3)

    def test_grid_term_saturates(self):
        open_grid = make_task("hoc", 4, (0, 0, 1), goal=(0, 1))
        closed = make_task("hoc", 4, (0, 0, 1), goal=(0, 1), free=[(0, 0), (0, 1)])
        assert f_diss(open_grid, closed) == pytest.approx(1 / 3)

    def test_sizes_must_match(self, h5_task):
        with pytest.raises(TaskValidationError):
            f_diss(h5_task, corridor(n=6))


class TestShortcutTerm:
    def test_short_corridor_has_shortcut(self):
        task = make_task("hoc", 10, (0, 0, 1), goal=(0, 2), free=[(0, 0), (0, 1), (0, 2)])
        code = parse_code("def Run(){ Repeat(2){ move } turnLeft turnRight turnLeft turnRight }", "hoc")
        assert f_nocut(task, code) == 0

    def test_reference_has_none(self, reference_codes, h2_task):
        assert f_nocut(h2_task, reference_codes["H2"]) == 1


class TestDiversity:
    def test_empty_pool(self, h2_task):
        assert f_diversity(h2_task, [0, 1], []) == 1.0

    def test_identical_task(self, h2_task):
        assert f_diversity(h2_task, [0, 1], [(h2_task, [1, 0])]) == 0.0

    def test_direction_only(self):
        assert f_diversity(corridor(0), [3, 1], [(corridor(1), [3, 1])]) == pytest.approx(0.25)

    def test_minimum_over_pool(self):
        far = corridor(1, 1)
        near = corridor(1)
        assert f_diversity(corridor(0), [3], [(far, [3]), (near, [3])]) == pytest.approx(0.25)

    def test_path_distance(self):
        assert path_distance([], []) == 0.0
        assert path_distance([1, 0, 1], [1, 1]) == pytest.approx(1 / 3)
        assert path_distance([0, 1], [1, 0]) == pytest.approx(1.0)


class TestScore:
    def test_reference_against_itself(self, reference_codes, h5_task, params):
        code = reference_codes["H5"]
        scores = f_score(h5_task, code, execute(code, h5_task), h5_task, params)
        assert scores.fCov == 1 and scores.fNocrash == 1 and scores.fNocut == 1
        assert scores.fDiversity is None
        assert scores.fScore == pytest.approx((1 + 0.225 + 0) / 3)
        assert scores.featureCounts["moves"] == 8
        assert not qualifies(scores, params)

    def test_pool_adds_a_term(self, reference_codes, h5_task, params):
        code = reference_codes["H5"]
        scores = f_score(h5_task, code, execute(code, h5_task), h5_task, params, pool=[(h5_task, [])], decisions=[])
        assert scores.fDiversity == 0.0
        assert scores.fScore == pytest.approx(1.225 / 4)

    def test_crash_zeroes_everything(self, h2_task, params):
        code = parse_code("def Run(){ move }", "hoc")
        scores = f_score(h2_task, code, execute(code, h2_task), h2_task, params)
        assert scores.fNocrash == 0 and scores.fQual == 0.0 and scores.fScore == 0.0

    def test_quality_threshold_gates(self, reference_codes, h5_task):
        code = reference_codes["H5"]
        strict = SynthesisParams(delta_qual=0.5)
        assert rescore(h5_task, code, h5_task, strict).fScore == 0.0

    def test_qualifying_corridor(self, reference_codes, h2_task, params):
        code = reference_codes["H2"]
        task = make_task("hoc", 10, (9, 9, 0), goal=(4, 9), free=[(r, 9) for r in range(4, 10)],
                         store=h2_task.store, max_blocks=3)
        scores = rescore(task, code, h2_task, params)
        # turnRight from north faces the border
        assert scores.fNocrash == 0

        task = make_task("hoc", 10, (9, 9, 3), goal=(4, 9), free=[(r, 9) for r in range(4, 10)],
                         store=h2_task.store, max_blocks=3)
        scores = rescore(task, code, h2_task, params)
        assert scores.fNocrash == 1 and scores.fNocut == 1 and scores.fCov == 1
        assert scores.fDiss == pytest.approx((1 + 1 + 0.24) / 3)
        assert qualifies(scores, params)

    def test_weighted_average(self, reference_codes, h2_task, params, monkeypatch):
        monkeypatch.setattr(scoring, "f_qual", lambda trace, n, dialect: 0.3)
        monkeypatch.setattr(scoring, "f_diss", lambda task_a, task_b: 0.6)
        task = make_task("hoc", 10, (9, 9, 3), goal=(4, 9), free=[(r, 9) for r in range(4, 10)],
                         store=h2_task.store, max_blocks=3)
        scores = rescore(task, reference_codes["H2"], h2_task, params)
        assert (scores.fCov, scores.fNocrash, scores.fNocut) == (1, 1, 1)
        assert scores.fScore == pytest.approx(1.9 / 3, abs=1e-9)
