import numpy as np
import pytest

import vflincentive as vi
from vflincentive import bankruptcy
from vflincentive.bankruptcy import BankruptcyProblem

from conftest import random_problems

TOL = 1e-9

def problem(estate, claims):
    return BankruptcyProblem(['P{}'.format(i + 1) for i in range(len(claims))], estate, claims)

def talmud(estate, claims):
    return np.array(bankruptcy.divide_talmud(problem(estate, claims)).payouts)

def tol_for(p):
    return TOL * max(1.0, p.total)


class TestExperimentRows:
    '''Estates and claims of the reported experiments, divided with Talmud's rule'''

    @pytest.mark.parametrize('estate,claims,expected', [
        (39.33, [33.98, 35.27, 28.43], [13.11, 13.11, 13.11]),
        (28.03, [27.85, 20.17, 15.84], [10.055, 10.055, 7.92]),
        (67.93, [3.04, 45.45, 35.89], [1.52, 37.985, 28.425]),
        (20.68, [15.5, 15.5, 12.77], [7.1475, 7.1475, 6.385]),
    ])
    def test_rows(self, estate, claims, expected):
        assert talmud(estate, claims) == pytest.approx(expected, abs=0.01)

    def test_dummy_row_keeps_order(self):
        # the randomized party claims nothing and is paid nothing; the other two split
        # the estate in the order of their claims
        p = talmud(18.54, [0, 15.5, 12.77])
        assert p == pytest.approx([0, 10.635, 7.905], abs=1e-9)
        assert p[1] >= p[2]

    def test_heart_row_is_cea_on_half_claims(self):
        # estate below half the total claim: equal awards on the half-claims
        p = talmud(39.33, [33.98, 35.27, 28.43])
        assert p.sum() == pytest.approx(39.33, abs=TOL)
        assert p[0] == p[1]


class TestContestedGarment:

    @pytest.mark.parametrize('estate,expected', [
        (100, [100 / 3] * 3),
        (200, [50, 75, 75]),
        (300, [50, 100, 150]),
    ])
    def test_classical_triple(self, estate, expected):
        assert talmud(estate, [100, 200, 300]) == pytest.approx(expected, abs=1e-9)

    def test_two_creditors_concede_and_split(self):
        # each concedes what the other doesn't claim; the contested part is halved
        assert talmud(100, [50, 100]) == pytest.approx([25, 75])

    def test_stepwise_agrees(self):
        p = problem(200, [100, 200, 300])
        assert bankruptcy.divide_talmud_stepwise(p).payouts == pytest.approx((50, 75, 75))

    def test_other_rules(self):
        p = problem(100, [100, 200, 300])
        assert bankruptcy.divide_cea(p).payouts == pytest.approx([100 / 3] * 3)
        assert bankruptcy.divide_proportional(p).payouts == pytest.approx([100 / 6, 100 / 3, 50])
        # a loss of 500: the first creditor loses its whole claim, the others 200 each
        assert bankruptcy.divide_cel(p).payouts == pytest.approx([0, 0, 100])


class TestSolveLevel:

    def test_examples(self):
        assert bankruptcy.solve_level([50, 100, 150], 200) == pytest.approx(75)
        assert bankruptcy.solve_level([50, 100, 150], 90) == pytest.approx(30)
        assert bankruptcy.solve_level([50, 100, 150], 0) == 0
        assert bankruptcy.solve_level([50, 100, 150], 300) == 150

    def test_fills_to_target(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            caps = rng.uniform(0, 10, size=rng.integers(1, 8))
            target = rng.uniform(0, caps.sum())
            level = bankruptcy.solve_level(caps, target)
            assert np.minimum(level, caps).sum() == pytest.approx(target, abs=1e-9)

    def test_out_of_range(self):
        with pytest.raises(vi.ProblemError):
            bankruptcy.solve_level([1, 2], 4)

        with pytest.raises(vi.ProblemError):
            bankruptcy.solve_level([1, 2], -1)


class TestRuleAxioms:
    '''Properties every rule (or the named ones) must satisfy on random problems'''

    problems = random_problems(1000, seed=11)

    @pytest.mark.parametrize('rule', bankruptcy.RULES)
    def test_efficiency_and_bounds(self, rule):
        for p in self.problems:
            x = np.array(bankruptcy.divide(p, rule).payouts)
            assert abs(x.sum() - p.estate) <= tol_for(p)
            assert np.all(x >= -tol_for(p))
            assert np.all(x <= p.d + tol_for(p))

    @pytest.mark.parametrize('rule', bankruptcy.RULES)
    def test_order_preservation(self, rule):
        for p in self.problems:
            d = p.d
            x = np.array(bankruptcy.divide(p, rule).payouts)
            t = tol_for(p)
            for i in range(len(d)):
                for j in range(len(d)):
                    if d[i] <= d[j]:
                        assert x[i] <= x[j] + t
                        assert d[i] - x[i] <= d[j] - x[j] + t

    @pytest.mark.parametrize('rule', bankruptcy.RULES)
    def test_equal_treatment(self, rule):
        for p in self.problems:
            d = p.d
            x = np.array(bankruptcy.divide(p, rule).payouts)
            for i in range(len(d)):
                for j in range(i + 1, len(d)):
                    if d[i] == d[j]:
                        assert abs(x[i] - x[j]) <= tol_for(p)

    @pytest.mark.parametrize('rule', bankruptcy.RULES)
    def test_homogeneity(self, rule):
        rng = np.random.default_rng(5)
        for p in self.problems[:300]:
            lam = rng.uniform(0.1, 10)
            x = np.array(bankruptcy.divide(p, rule).payouts)
            y = np.array(bankruptcy.divide(BankruptcyProblem(p.creditors, lam * p.estate, lam * p.d), rule).payouts)
            assert np.max(np.abs(y - lam * x)) <= 1e-9 * max(1.0, lam * p.total)

    @pytest.mark.parametrize('rule', bankruptcy.RULES)
    def test_permutation_equivariance(self, rule):
        rng = np.random.default_rng(6)
        for p in self.problems[:300]:
            perm = rng.permutation(len(p))
            x = np.array(bankruptcy.divide(p, rule).payouts)
            shuffled = BankruptcyProblem([p.creditors[i] for i in perm], p.estate, p.d[perm])
            y = np.array(bankruptcy.divide(shuffled, rule).payouts)
            assert np.max(np.abs(y - x[perm])) <= tol_for(p)

    def test_talmud_half_estate_pays_half_claims(self):
        for p in self.problems[:300]:
            half = BankruptcyProblem(p.creditors, p.total / 2, p.d)
            x = np.array(bankruptcy.divide_talmud(half).payouts)
            assert np.max(np.abs(x - p.d / 2)) <= tol_for(p)

    def test_talmud_self_duality(self):
        for p in self.problems:
            x = np.array(bankruptcy.divide_talmud(p).payouts)
            dual = BankruptcyProblem(p.creditors, max(p.total - p.estate, 0.0), p.d)
            y = np.array(bankruptcy.divide_talmud(dual).payouts)
            assert np.max(np.abs(x - (p.d - y))) <= 1e-9 * max(1.0, p.total)

    def test_cea_cel_duality(self):
        for p in self.problems:
            x = np.array(bankruptcy.divide_cea(p).payouts)
            dual = BankruptcyProblem(p.creditors, max(p.total - p.estate, 0.0), p.d)
            y = np.array(bankruptcy.divide_cel(dual).payouts)
            assert np.max(np.abs(x - (p.d - y))) <= 1e-9 * max(1.0, p.total)

    def test_talmud_implementations_agree(self):
        for p in self.problems:
            a = bankruptcy.divide_talmud(p).payouts
            b = bankruptcy.divide_talmud_stepwise(p).payouts
            assert a == pytest.approx(b, abs=1e-9 * max(1.0, p.total))

    def test_payouts_in_creditor_order(self):
        p = BankruptcyProblem(['c', 'a', 'b'], 200, [300, 100, 200])
        assert bankruptcy.divide_talmud(p).as_dict() == pytest.approx({'c': 75, 'a': 50, 'b': 75})


class TestProblem:

    @pytest.mark.parametrize('creditors,estate,claims', [
        ([], 0, []),
        (['a', 'b'], 1, [1]),
        (['a', 'a'], 1, [1, 1]),
        (['a', 'b'], -1, [1, 1]),
        (['a', 'b'], 3, [1, 1]),
        (['a', 'b'], 1, [float('nan'), 1]),
    ])
    def test_invalid(self, creditors, estate, claims):
        with pytest.raises(vi.ProblemError):
            BankruptcyProblem(creditors, estate, claims)

    def test_unknown_rule(self):
        with pytest.raises(vi.ParameterError, match='unknown rule'):
            bankruptcy.divide(problem(1, [1, 1]), 'nucleolus')


class TestNormalization:

    def test_clamps_nonpositive_claims(self):
        p, log = bankruptcy.normalize_problem(18.54, [-0.3, 15.5, 12.77], ['Ph1', 'Ph2', 'Ph3'])
        assert p.claims == (0.0, 15.5, 12.77)
        assert log.clamped_claims == ('Ph1',)
        assert log.raw_claims[0] == -0.3
        payout = bankruptcy.settle(p, log)
        assert payout.payouts[0] == 0
        assert 'Ph1' in payout.clamped_claims

    def test_negative_estate(self):
        p, log = bankruptcy.normalize_problem(-4.2, [3, 2], ['a', 'b'])
        assert p.estate == 0
        assert log.estate_clamped
        assert bankruptcy.settle(p, log).payouts == (0, 0)

    def test_surplus_is_shared_among_positive_claims(self):
        p, log = bankruptcy.normalize_problem(40, [10, 0, 20], ['a', 'b', 'c'])
        assert p.estate == 30
        assert log.surplus == pytest.approx(10)
        payout = bankruptcy.settle(p, log)
        assert payout.payouts == pytest.approx((15, 0, 25))
        assert payout.surplus_paid == pytest.approx(10)
        assert payout.total == pytest.approx(40)

    def test_surplus_with_no_claims_is_undistributed(self):
        p, log = bankruptcy.normalize_problem(5, [0, -1], ['a', 'b'])
        payout = bankruptcy.settle(p, log)
        assert payout.payouts == (0, 0)
        assert payout.undistributed == pytest.approx(5)
        assert payout.shares() == [0, 0]

    def test_non_finite(self):
        with pytest.raises(vi.ProblemError):
            bankruptcy.normalize_problem(float('inf'), [1, 2], ['a', 'b'])

    def test_shares(self):
        p, log = bankruptcy.normalize_problem(28.03, [27.85, 20.17, 15.84], ['Ph1', 'Ph2', 'Ph3'])
        shares = bankruptcy.settle(p, log).shares(28.03)
        assert shares == pytest.approx([35.87, 35.87, 28.26], abs=0.01)
        assert sum(shares) == pytest.approx(100)


class TestDocuments:

    def test_problem_from_dict(self):
        doc = {'estate': 200, 'claims': {'x': 100, 'y': 200, 'z': 300}}
        estate, claims, creditors, rule = bankruptcy.problem_from_dict(doc)
        assert (estate, claims, creditors, rule) == (200.0, [100.0, 200.0, 300.0], ['x', 'y', 'z'], 'talmud')

    def test_problem_from_list(self):
        _, _, creditors, rule = bankruptcy.problem_from_dict({'estate': 1, 'claims': [1, 2], 'rule': 'cea'})
        assert creditors == ['1', '2']
        assert rule == 'cea'

    @pytest.mark.parametrize('doc', [{}, {'estate': 1}, {'estate': 'x', 'claims': [1]}, {'estate': 1, 'claims': 3}])
    def test_bad_documents(self, doc):
        with pytest.raises(vi.ParameterError):
            bankruptcy.problem_from_dict(doc)

    def test_payout_document(self):
        p, log = bankruptcy.normalize_problem(200, [100, 200, 300], ['a', 'b', 'c'])
        doc = bankruptcy.settle(p, log).to_dict()
        assert doc['creditors'] == ['a', 'b', 'c']
        assert doc['rule'] == 'talmud'
        assert doc['payouts'] == pytest.approx([50, 75, 75])

    def test_repr(self):
        p, log = bankruptcy.normalize_problem(200, [100, 200, 300], ['a', 'b', 'c'])
        payout = bankruptcy.settle(p, log)
        assert '75' in repr(payout)
        assert payout._repr_html_().startswith('<div class="vflincentive">')
