import itertools

import numpy as np
import pytest

from app.core.config import SynthesisParams
from app.models.code import code_size
from app.models.interpreter import execute, find_shortcut
from app.models.mcts import MctsSearch, SearchNode, run_pool, synthesize_pool, synthesize_task
from app.models.scoring import f_diversity, qualifies, rescore


def search_params(iterations, **extra):
    return SynthesisParams(n=10, mcts_iterations=iterations, runs_per_code=1, seed=0, **extra)


class TestSearchNode:
    def test_root_and_branch_widths(self):
        root = SearchNode(())
        assert root.options == 20
        assert SearchNode((3,), root).options == 2

    def test_expansion_order(self):
        node = SearchNode((4,))
        assert node.next_unexpanded() == 0
        node.children[0] = SearchNode((4, 0), node)
        assert node.next_unexpanded() == 1
        node.children[1] = SearchNode((4, 1), node)
        assert node.fully_expanded
        with pytest.raises(ValueError):
            node.next_unexpanded()

    def test_ties_go_to_the_lowest_decision(self):
        node = SearchNode((0,))
        for d in (1, 0):
            child = SearchNode((0, d), node)
            child.update(0.5)
            node.children[d] = child
        node.visit_count = 2
        assert node.best_child(2.0).prefix == (0, 0)

    def test_exploitation_without_exploration(self):
        node = SearchNode((0,))
        for d, reward in ((0, 0.1), (1, 0.9)):
            child = SearchNode((0, d), node)
            child.update(reward)
            node.children[d] = child
        node.visit_count = 2
        assert node.best_child(0.0).prefix == (0, 1)


class TestMctsSearch:
    def test_root_expands_every_configuration_first(self, h5_variant, h5_task, reference_codes):
        search = MctsSearch(h5_variant, h5_task, search_params(20), seed=0, ref_code=reference_codes["H5"])
        search.run()
        assert sorted(search.root.children) == list(range(20))
        assert search.root.visit_count == 20
        assert sum(c.visit_count for c in search.root.children.values()) == 20
        assert search.stats.iterations == 20
        assert sum(search.stats.statusCounts.values()) == 20

    def test_rewards_back_up_to_the_root(self, h5_variant, h5_task):
        search = MctsSearch(h5_variant, h5_task, search_params(150), seed=1)
        search.run()
        children = search.root.children.values()
        assert search.root.total_reward == pytest.approx(sum(c.total_reward for c in children))
        assert 0 < search.stats.uniqueTraces <= 150

    def test_same_seed_same_result(self, h5_variant, h5_task, reference_codes):
        params = search_params(300)
        first = synthesize_task(h5_variant, h5_task, reference_codes["H5"], params, seed=4)
        second = synthesize_task(h5_variant, h5_task, reference_codes["H5"], params, seed=4)
        if first is None:
            assert second is None
        else:
            assert first.task == second.task
            assert first.decisions == second.decisions
            assert first.scores == second.scores

    def test_pool_requires_a_run(self, h5_variant, h5_task):
        with pytest.raises(ValueError):
            run_pool(h5_variant, h5_task, None, search_params(10), 0)

    @pytest.mark.slow
    def test_more_iterations_find_better_tasks(self, h5_variant, h5_task, reference_codes):
        params = search_params(20_000)
        early_scores, late_scores, found = [], [], 0
        for seed in range(5):
            early = synthesize_task(h5_variant, h5_task, reference_codes["H5"], search_params(200), seed=seed)
            result = synthesize_task(h5_variant, h5_task, reference_codes["H5"], params, seed=seed)
            early_scores.append(early.scores.fScore if early is not None else 0.0)
            late_scores.append(result.scores.fScore if result is not None else 0.0)
            if result is None:
                continue
            found += 1
            assert qualifies(result.scores, params)
            assert rescore(result.task, h5_variant, h5_task, params) == result.scores
            assert execute(h5_variant, result.task).solved
            assert find_shortcut(result.task, code_size(h5_variant) - 1).status == "none"
            timeline = [p.fScore for p in result.stats.bestScoreTimeline]
            assert timeline == sorted(timeline)
            assert timeline[-1] == pytest.approx(result.scores.fScore)
        assert found >= 4
        assert np.mean(late_scores) >= np.mean(early_scores)

    @pytest.mark.slow
    def test_pool_of_five_is_pairwise_diverse(self, h5_variant, h5_task, reference_codes):
        params = search_params(20_000)
        results = synthesize_pool(h5_variant, h5_task, reference_codes["H5"], params, 5)
        assert len(results) == 5
        keys = [r.task.visual_key() for r in results]
        assert len(set(keys)) == 5
        for i, j in itertools.combinations(range(5), 2):
            assert f_diversity(results[j].task, results[j].decisions, [(results[i].task, results[i].decisions)]) > 0
        assert all(r.scores.fDiversity is not None for r in results)
        assert results[0].scores.fDiversity == 1.0


class TestPoolScoring:
    def test_first_run_shares_the_pool_scale(self, h5_variant, h5_task, reference_codes):
        results, _ = run_pool(h5_variant, h5_task, reference_codes["H5"], search_params(2_000), 1)
        for r in results:
            assert r.scores.fDiversity == 1.0
            parts = [r.scores.fCov, r.scores.fQual, r.scores.fDiss, r.scores.fDiversity]
            assert r.scores.fScore == pytest.approx(sum(parts) / 4)
            assert rescore(r.task, h5_variant, h5_task, search_params(2_000), [], r.decisions) == r.scores


class TestReplay:
    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["H2", "H4", "H5"])
    def test_emitted_tasks_replay_concretely(self, name, reference_codes, reference_tasks):
        code, ref_task = reference_codes[name], reference_tasks[name]
        params = search_params(20_000)
        emitted = 0
        for seed in range(3):
            search = MctsSearch(code, ref_task, params, seed)
            search.run()
            for evaluation in search.cache.values():
                outcome = evaluation.outcome
                if not outcome.emitted:
                    continue
                emitted += 1
                replay = execute(code, outcome.task, params.effective_unroll_cap)
                assert replay.solved and not replay.crashed and not replay.depth_exceeded
                assert replay.counts == outcome.trace.counts
                assert replay.covered_nodes == outcome.trace.covered_nodes
                assert replay.branches == outcome.trace.branches
        assert emitted > 0
