
'''Claims problems and division rules

A bankruptcy (claims) problem is an estate E to be divided among creditors whose
claims d sum to at least E. This module implements the proportional, constrained
equal awards (CEA), constrained equal losses (CEL) and Talmud rules. CEA and CEL
share one exact water-filling solver; Talmud is computed by splitting every claim
in half and applying CEA or CEL to the halves.

Problems that fall outside the canonical domain (negative claims, negative estate,
an estate larger than the total claim) are repaired by normalize_problem() before
any rule sees them. The repairs are recorded on a NormalizationLog and settle()
distributes any surplus after the rule has run.
'''

import logging
from dataclasses import dataclass, field

import numpy as np
from tabulate import tabulate

import vflincentive as vi
from . import utils

logger = logging.getLogger(__name__)

RULES = ('proportional', 'cea', 'cel', 'talmud')

@dataclass(frozen=True)
class BankruptcyProblem:
    '''A canonical claims problem: 0 <= estate <= sum(claims), every claim >= 0.
    Claims need not be sorted; rules sort internally and return payouts in creditor order
    '''

    creditors: tuple
    estate: float
    claims: tuple

    def __post_init__(self):
        object.__setattr__(self, 'creditors', tuple(self.creditors))
        object.__setattr__(self, 'claims', tuple(float(x) for x in self.claims))
        object.__setattr__(self, 'estate', float(self.estate))

        if len(self.creditors) == 0:
            raise vi.ProblemError('no creditors')

        if len(self.creditors) != len(self.claims):
            raise vi.ProblemError('{} creditors but {} claims'.format(len(self.creditors), len(self.claims)))

        if len(set(self.creditors)) != len(self.creditors):
            raise vi.ProblemError('duplicate creditor identifiers')

        if not np.all(np.isfinite(self.claims)) or not np.isfinite(self.estate):
            raise vi.ProblemError('non-finite input')

        if self.estate < 0 or min(self.claims) < 0:
            raise vi.ProblemError('estate and claims must be nonnegative')

        if self.estate > self.total + vi.tolerance * max(1.0, self.total):
            raise vi.ProblemError('estate {} exceeds total claims {}'.format(self.estate, self.total))

    @property
    def total(self):
        return float(sum(self.claims))

    @property
    def d(self):
        '''claims as a numpy array
        '''
        return np.array(self.claims, dtype=float)

    def __len__(self):
        return len(self.creditors)

@dataclass
class NormalizationLog:
    '''Every adjustment normalize_problem() made to the raw input
    '''

    raw_estate: float
    raw_claims: tuple
    clamped_claims: tuple = ()      # creditor ids whose raw claim was <= 0
    estate_clamped: bool = False    # raw estate was negative
    surplus: float = 0.0            # raw estate in excess of the total claim
    notes: list = field(default_factory=list)

    def __bool__(self):
        return len(self.notes) > 0

    def to_dict(self):
        return {
            'raw_estate': self.raw_estate,
            'raw_claims': list(self.raw_claims),
            'clamped_claims': list(self.clamped_claims),
            'estate_clamped': self.estate_clamped,
            'surplus': self.surplus,
            'notes': list(self.notes),
        }

@dataclass(frozen=True)
class PayoutVector:
    '''Payouts in creditor order, the rule that produced them, and what settle() did
    beyond the canonical problem
    '''

    creditors: tuple
    payouts: tuple
    rule: str
    surplus_paid: float = 0.0
    undistributed: float = 0.0
    clamped_claims: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'payouts', tuple(float(x) for x in self.payouts))
        object.__setattr__(self, 'clamped_claims', frozenset(self.clamped_claims))

    @property
    def total(self):
        return float(sum(self.payouts))

    def as_dict(self):
        '''Returns a dict of payouts keyed by creditor
        '''
        return dict(zip(self.creditors, self.payouts))

    def shares(self, estate=None):
        '''Payouts as percentages of the estate (default: the total paid out plus anything undistributed)
        '''

        if estate is None:
            estate = self.total + self.undistributed

        if estate <= 0:
            return [0.0] * len(self.payouts)

        return [100.0 * p / estate for p in self.payouts]

    def to_dict(self):
        return {
            'creditors': list(self.creditors),
            'payouts': list(self.payouts),
            'rule': self.rule,
            'surplus_paid': self.surplus_paid,
            'undistributed': self.undistributed,
            'clamped_claims': sorted(self.clamped_claims, key=str),
        }

    def _rows(self):
        return [[c, vi.rounded(p)] for c, p in zip(self.creditors, self.payouts)]

    def __repr__(self):
        return tabulate(self._rows(), tablefmt='simple', headers=['Creditor', self.rule])

    def _repr_html_(self):
        return vi.htmlTable(self._rows(), headers=['Creditor', self.rule])


def normalize_problem(raw_estate, raw_claims, creditors):
    '''Build a canonical BankruptcyProblem from raw, possibly degenerate, inputs

    Arguments:
        raw_estate:     the amount to divide. Negative values are clamped to 0

        raw_claims:     list-like of claims, one per creditor. Claims <= 0 are clamped to 0

        creditors:      list-like of unique creditor identifiers

    Returns:
        a (BankruptcyProblem, NormalizationLog) tuple. If the estate exceeds the total
        claim the problem's estate is the total claim and the excess is logged as surplus

    Example:
        problem, log = normalize_problem(18.54, [-0.3, 15.5, 12.77], ['Ph1', 'Ph2', 'Ph3'])
        print(log.clamped_claims)       # ('Ph1',)
    '''

    creditors = tuple(creditors)
    raw_claims = tuple(raw_claims)
    if len(creditors) == 0:
        raise vi.ProblemError('no creditors')

    if len(raw_claims) != len(creditors):
        raise vi.ProblemError('{} creditors but {} claims'.format(len(creditors), len(raw_claims)))

    try:
        claims = utils.finite(raw_claims)
        estate = float(utils.finite(raw_estate))
    except vi.ParameterError:
        raise vi.ProblemError('non-finite input')

    log = NormalizationLog(raw_estate=estate, raw_claims=tuple(float(x) for x in claims))

    clamped = [c for c, x in zip(creditors, claims) if x <= 0]
    if clamped:
        claims = np.where(claims > 0, claims, 0.0)
        log.clamped_claims = tuple(clamped)
        log.notes.append('claims of {} clamped to 0'.format(', '.join(map(str, clamped))))
        logger.info('clamped non-positive claims: %s', clamped)

    if estate < 0:
        log.estate_clamped = True
        log.notes.append('negative estate {} clamped to 0'.format(estate))
        logger.info('negative estate %s clamped to 0', estate)
        estate = 0.0

    total = float(claims.sum())
    if estate > total:
        log.surplus = estate - total
        log.notes.append('estate exceeds total claims by {}'.format(log.surplus))
        logger.info('estate %s exceeds total claims %s; surplus %s', estate, total, log.surplus)
        estate = total

    return BankruptcyProblem(creditors, estate, claims), log

def solve_level(caps, target):
    '''Find the water level lambda at which sum(min(lambda, cap_i)) equals target

    Arguments:
        caps:           list-like of nonnegative caps

        target:         a value between 0 and sum(caps)

    Returns:
        lambda, computed exactly by scanning the sorted caps: between two consecutive caps
        the filled amount is affine in lambda, so the level is found by one division

    Example:
        solve_level([50, 100, 150], 200)    # 75.0
    '''

    caps = np.sort(np.asarray(caps, dtype=float))
    total = float(caps.sum())
    if target < 0 or target > total + vi.tolerance * max(1.0, total) or not np.isfinite(target):
        raise vi.ProblemError('target {} outside [0, {}]'.format(target, total))

    n = len(caps)
    if n == 0:
        return 0.0

    if target >= total:
        return float(caps[-1])

    filled = 0.0    # sum of the caps already below the level
    for k in range(n):
        if filled + (n - k) * caps[k] >= target:
            return (target - filled) / (n - k)

        filled += caps[k]

    return float(caps[-1])

def _cea(estate, claims):
    level = solve_level(claims, estate)
    return np.minimum(level, claims)

def _cel(estate, claims):
    # award d - min(mu, d) where the losses min(mu, d) add up to sum(d) - estate
    loss = max(0.0, float(claims.sum()) - estate)
    level = solve_level(claims, min(loss, float(claims.sum())))
    return claims - np.minimum(level, claims)

def _talmud(estate, claims):
    half = claims / 2
    if estate <= half.sum():
        return _cea(estate, half)

    return half + _cel(estate - half.sum(), half)

def _talmud_stepwise(estate, claims):
    '''Talmud division by literally walking through the creditors: share equally until the
    lowest creditor holds half its claim, drop it, repeat; then give to the highest
    creditors until their loss matches the next highest
    '''

    order = np.argsort(claims, kind='stable')
    d = claims[order]
    half = d / 2
    n = len(d)
    remaining = estate

    level = 0.0
    i = 0
    while remaining > 0 and i < n:
        need = (half[i] - level) * (n - i)
        if need >= remaining:
            level += remaining / (n - i)
            remaining = 0.0
        else:
            remaining -= need
            level = half[i]
            i += 1

    p = np.minimum(level, half)
    if remaining > 0:
        # every creditor now holds half; losses are half too
        loss = half[-1]
        group = 1
        for j in range(n - 2, -2, -1):
            next_loss = half[j] if j >= 0 else 0.0
            need = (loss - next_loss) * group
            if need >= remaining:
                loss -= remaining / group
                remaining = 0.0
                break

            remaining -= need
            loss = next_loss
            group += 1

        p = d - np.minimum(loss, half)

    out = np.empty(n)
    out[order] = p
    return out

def _result(problem, payouts, rule):
    return PayoutVector(problem.creditors, payouts, rule)

def divide_proportional(problem):
    '''Each creditor receives a share of the estate proportional to its claim

    Example:
        divide_proportional(BankruptcyProblem(['a', 'b', 'c'], 100, [50, 100, 150])).payouts
        # (16.67, 33.33, 50.0)
    '''

    d = problem.d
    total = d.sum()
    if total == 0:
        return _result(problem, np.zeros(len(d)), 'proportional')

    return _result(problem, problem.estate * d / total, 'proportional')

def divide_cea(problem):
    '''Constrained equal awards: everyone gets the same amount, capped by their claim
    '''

    return _result(problem, _cea(problem.estate, problem.d), 'cea')

def divide_cel(problem):
    '''Constrained equal losses: everyone loses the same amount, floored at a zero payout
    '''

    return _result(problem, _cel(problem.estate, problem.d), 'cel')

def divide_talmud(problem):
    '''Talmud (contested garment) rule: CEA on the half-claims when the estate is at most
    half the total claim, otherwise half of every claim plus CEL on the remainder

    Returns:
        a PayoutVector. If the global cross_check flag is set the result is compared with
        the stepwise procedure and a ProblemError raised on disagreement

    Example:
        divide_talmud(BankruptcyProblem(['a', 'b', 'c'], 200, [100, 200, 300])).payouts
        # (50.0, 75.0, 75.0)
    '''

    d = problem.d
    payouts = _talmud(problem.estate, d)
    if vi.cross_check:
        other = _talmud_stepwise(problem.estate, d)
        gap = float(np.max(np.abs(payouts - other)))
        if gap > vi.tolerance * max(1.0, problem.total):
            raise vi.ProblemError('Talmud implementations disagree by {} on E={} d={}'.format(gap, problem.estate, problem.claims))

    return _result(problem, payouts, 'talmud')

def divide_talmud_stepwise(problem):
    '''Talmud rule computed by the stepwise creditor-removal procedure. Slower than
    divide_talmud(); exists as an independent check
    '''

    return _result(problem, _talmud_stepwise(problem.estate, problem.d), 'talmud')

_dispatch = {
    'proportional': divide_proportional,
    'cea': divide_cea,
    'cel': divide_cel,
    'talmud': divide_talmud,
}

def divide(problem, rule='talmud'):
    '''Apply the named rule (one of RULES) to a canonical problem
    '''

    f = _dispatch.get(str(rule).lower())
    if f is None:
        raise vi.ParameterError('unknown rule {!r}: expected one of {}'.format(rule, ', '.join(RULES)))

    return f(problem)

def settle(problem, log, rule='talmud'):
    '''Divide a normalized problem and distribute whatever normalize_problem() set aside

    Arguments:
        problem:        canonical BankruptcyProblem

        log:            the NormalizationLog returned alongside it

        rule:           division rule name

    Returns:
        a PayoutVector. If the raw estate exceeded the total claim every claim is paid in
        full and the surplus split equally among creditors with positive claims; if all
        claims are zero the surplus is reported as undistributed instead
    '''

    result = divide(problem, rule)
    payouts = np.array(result.payouts)
    surplus_paid = 0.0
    undistributed = 0.0

    if log.surplus > 0:
        positive = problem.d > 0
        if positive.any():
            payouts = np.where(positive, payouts + log.surplus / positive.sum(), payouts)
            surplus_paid = log.surplus
        else:
            undistributed = log.surplus
            logger.warning('all claims are zero; estate of %s left undistributed', log.surplus)

    return PayoutVector(problem.creditors, payouts, result.rule, surplus_paid=surplus_paid,
                        undistributed=undistributed, clamped_claims=log.clamped_claims)

def problem_from_dict(doc):
    '''Read a standalone problem document:
    {"estate": <number>, "claims": {"<party-id>": <number>, ...}, "rule": "talmud"}

    Claims may also be given as a plain list, in which case creditors are numbered from 1

    Returns:
        a (raw_estate, raw_claims, creditors, rule) tuple ready for normalize_problem()
    '''

    if type(doc) is not dict or 'estate' not in doc or 'claims' not in doc:
        raise vi.ParameterError('problem document needs "estate" and "claims"')

    claims = doc['claims']
    if type(claims) is dict:
        creditors = [str(k) for k in claims.keys()]
        values = list(claims.values())
    elif type(claims) is list:
        creditors = [str(i + 1) for i in range(len(claims))]
        values = claims
    else:
        raise vi.ParameterError('"claims" must be an object or a list')

    try:
        values = [float(x) for x in values]
        estate = float(doc['estate'])
    except (TypeError, ValueError):
        raise vi.ParameterError('estate and claims must be numbers')

    return estate, values, creditors, doc.get('rule', 'talmud')
