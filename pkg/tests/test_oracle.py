import itertools

import numpy as np
import pytest

from _instances import random_instance
from intentdiv.core import (Candidate, DiversifierConfig, IntentDistribution,
                            IntentSpace, PosteriorMode, diversify)
from intentdiv.oracle import (MAX_EXHAUSTIVE, exhaustive_best_slate,
                              reference_diversify, slate_satisfaction)

AB = IntentSpace(["A", "B"])


def test_reference_matches_worked_example():
    prior = IntentDistribution(AB, [0.6, 0.4])
    cands = [Candidate("c1", 1.0, 0.8, {"A"}), Candidate("c2", 1.0, 0.8, {"A"}),
             Candidate("c3", 1.0, 0.8, {"B"})]
    ref = reference_diversify(prior, cands, DiversifierConfig(gamma=1.0))
    fast = diversify(prior, cands, DiversifierConfig(gamma=1.0))
    assert ref.order == fast.order == ["c1", "c3", "c2"]
    assert ref.trace[0].posterior == pytest.approx(fast.trace[0].posterior, abs=1e-15)


def test_single_candidate():
    prior = IntentDistribution(AB, [0.6, 0.4])
    c = [Candidate(1, 0.3, 0.2, {"B"})]
    assert reference_diversify(prior, c).order == diversify(prior, c).order == [1]


@pytest.mark.parametrize("mode", list(PosteriorMode))
def test_reference_matches_fast_path_on_random_instances(mode):
    rng = np.random.default_rng(42)
    for i in range(100):
        prior, cands = random_instance(rng, max_items=20, max_intents=8, discrete=i % 2 == 0)
        cfg = DiversifierConfig(gamma=float(rng.choice([0.05, 1.0, 2.5])), posterior_mode=mode)
        a, b = diversify(prior, cands, cfg), reference_diversify(prior, cands, cfg)
        assert a.order == b.order
        for x, y in zip(a.trace, b.trace):
            assert x.score == pytest.approx(y.score, abs=1e-12)
            assert np.allclose(x.posterior, y.posterior, rtol=0, atol=1e-12)


def test_reference_errors():
    prior = IntentDistribution(AB, [0.6, 0.4])
    with pytest.raises(ValueError):
        reference_diversify(prior, [])
    with pytest.raises(ValueError):
        reference_diversify(IntentDistribution(AB, [0.1, 0.1], normalized=False),
                            [Candidate(1, 1.0, 0.5, {"A"})])


class TestSlateSatisfaction:
    def test_single_item(self):
        space = IntentSpace(["A"])
        d = IntentDistribution(space, [1.0])
        assert slate_satisfaction(d, [Candidate(1, 1.0, 0.5, {"A"})], 5, 0.7) == 0.5

    def test_two_items_full_continuation(self):
        space = IntentSpace(["A"])
        d = IntentDistribution(space, [1.0])
        slate = [Candidate(1, 1.0, 0.5, {"A"}), Candidate(2, 1.0, 0.5, {"A"})]
        assert slate_satisfaction(d, slate, 2, 1.0) == pytest.approx(0.75)

    def test_empty_slate(self):
        assert slate_satisfaction(IntentDistribution(AB, [0.5, 0.5]), [], 3, 1.0) == 0.0

    def test_patience_truncates(self):
        d = IntentDistribution(AB, [0.5, 0.5])
        slate = [Candidate(1, 1.0, 0.5, {"A"}), Candidate(2, 1.0, 0.5, {"B"})]
        assert slate_satisfaction(d, slate, 1, 1.0) == pytest.approx(0.25)
        assert slate_satisfaction(d, slate, 2, 1.0) == pytest.approx(0.5)

    def test_matches_monte_carlo(self):
        from intentdiv.simulator import UserProfile, simulate_page_view
        rng = np.random.default_rng(5)
        prior, cands = random_instance(rng, max_items=6, max_intents=3)
        u = UserProfile(0, [0.0], patience=4, continuation_prob=0.7)
        exact = slate_satisfaction(prior, cands, 4, 0.7)
        n = 20_000
        hits = sum(simulate_page_view(u, [c.item_id for c in cands], cands, rng,
                                      intent_dist=prior).consumed_item is not None
                   for _ in range(n))
        sigma = np.sqrt(exact * (1 - exact) / n)
        assert abs(hits / n - exact) < 3 * sigma + 1e-12


class TestExhaustive:
    def test_k1_picks_best_single_item(self):
        d = IntentDistribution(AB, [0.7, 0.3])
        cands = [Candidate(1, 1.0, 0.5, {"A"}), Candidate(2, 1.0, 0.9, {"B"}),
                 Candidate(3, 1.0, 0.4, {"A", "B"})]
        best, value = exhaustive_best_slate(d, cands, 1, 3, 1.0)
        assert [c.item_id for c in best] == [3] and value == pytest.approx(0.4)

    def test_symmetric_tie_goes_to_first_permutation(self):
        d = IntentDistribution(AB, [0.5, 0.5])
        cands = [Candidate(1, 1.0, 0.5, {"A"}), Candidate(2, 1.0, 0.5, {"B"})]
        best, value = exhaustive_best_slate(d, cands, 2, 2, 1.0)
        swapped = slate_satisfaction(d, cands[::-1], 2, 1.0)
        assert value == pytest.approx(swapped)
        assert [c.item_id for c in best] == [1, 2]

    def test_is_optimal_by_brute_force(self):
        rng = np.random.default_rng(9)
        prior, cands = random_instance(rng, max_items=5, max_intents=3)
        k = min(3, len(cands))
        _, value = exhaustive_best_slate(prior, cands, k, 3, 0.8)
        brute = max(slate_satisfaction(prior, list(p), 3, 0.8)
                    for p in itertools.permutations(cands, k))
        assert value == pytest.approx(brute, abs=1e-15)

    def test_size_guard(self):
        d = IntentDistribution(AB, [0.5, 0.5])
        cands = [Candidate(j, 1.0, 0.5, {"A"}) for j in range(MAX_EXHAUSTIVE + 1)]
        with pytest.raises(ValueError):
            exhaustive_best_slate(d, cands, 2, 2, 1.0)
        with pytest.raises(ValueError):
            exhaustive_best_slate(d, cands[:3], 4, 2, 1.0)
