
'''Coalitional games over the passive parties

A game is stored as a dense table of 2**n values indexed by coalition bitmask: bit i of
the mask is the player at index i of the player list. Exact Shapley values, the
bankruptcy game of a claims problem, excess vectors and two nucleolus checks (a random
falsifier and a grid oracle for small games) are built on that table.
'''

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

import vflincentive as vi
from . import utils

logger = logging.getLogger(__name__)

class Ordering(enum.Enum):
    LESS = 'less'
    EQUAL = 'equal'
    GREATER = 'greater'

def _check_size(n):
    if n > vi.max_players:
        raise vi.GameError('exact Shapley table too large: {} players (limit {})'.format(n, vi.max_players))

class CoalitionalGame:
    '''Characteristic function v over n players, as a complete table of 2**n values

    Arguments:
        values:     list-like of 2**n finite values indexed by coalition mask; values[0] must be 0

        players:    optional player labels, in bit order. Defaults to 0..n-1
    '''

    def __init__(self, values, players=None):
        values = np.array(values, dtype=float)
        n = int(len(values)).bit_length() - 1
        if n < 0 or len(values) != 1 << n:
            raise vi.GameError('game table must have 2**n entries, got {}'.format(len(values)))

        _check_size(n)
        if not np.all(np.isfinite(values)):
            raise vi.GameError('game table contains non-finite values')

        if values[0] != 0:
            raise vi.GameError('v(empty coalition) must be 0, got {}'.format(values[0]))

        if players is None:
            players = list(range(n))

        if len(players) != n:
            raise vi.GameError('{} players for a {}-player table'.format(len(players), n))

        values.setflags(write=False)
        self.n = n
        self.values = values
        self.players = tuple(players)

    @property
    def grand(self):
        '''v(N)'''
        return float(self.values[-1])

    def value(self, mask):
        return float(self.values[mask])

    def to_dict(self):
        return {'n': self.n, 'players': list(self.players),
                'values': {str(m): float(v) for m, v in enumerate(self.values)}}

    @classmethod
    def from_dict(cls, doc):
        '''Build a game from {"n": 3, "values": {"0": 0, "1": ..., ...}}. Keys are coalition
        masks as decimal strings ('0b' and '0x' forms are also accepted)
        '''

        try:
            n = int(doc['n'])
            raw = doc['values']
        except (KeyError, TypeError, ValueError):
            raise vi.ParameterError('game document needs "n" and "values"')

        if n < 0:
            raise vi.ParameterError('negative player count')

        # check the guard before allocating anything
        _check_size(n)
        values = np.full(1 << n, np.nan)
        for k, v in raw.items():
            mask = utils.parse_mask(k)
            if mask < 0 or mask >= len(values):
                raise vi.GameError('coalition mask {} out of range for {} players'.format(mask, n))

            values[mask] = float(v)

        missing = np.flatnonzero(np.isnan(values))
        if len(missing):
            raise vi.GameError('game table is missing coalition {}'.format(int(missing[0])))

        return cls(values, doc.get('players'))

    def __add__(self, other):
        if self.n != other.n:
            raise vi.GameError('cannot add games of different sizes')

        return CoalitionalGame(self.values + other.values, self.players)

    def __repr__(self):
        return 'CoalitionalGame(n={}, v(N)={})'.format(self.n, self.grand)

@dataclass
class ExcessVector:
    '''Excesses v(S) - x(S) over every proper nonempty coalition, sorted descending
    '''

    excesses: np.ndarray

    def __len__(self):
        return len(self.excesses)

    @property
    def top(self):
        return float(self.excesses[0]) if len(self.excesses) else None

@dataclass
class NucleolusReport:
    dominated: bool
    witness: object = None      # an allocation that leximin-dominates the candidate, if found
    trials: int = 0


def marginal_contributions(game, player):
    '''Returns v(S + {player}) - v(S) for every coalition S not containing player, in mask order
    '''

    bit = 1 << player
    without = utils.masks(game.n)
    without = without[(without & bit) == 0]
    return game.values[without | bit] - game.values[without]

def shapley_exact(game):
    '''Exact Shapley values by enumerating every coalition

    Arguments:
        game:       a CoalitionalGame

    Returns:
        a numpy array of Shapley values in player order. Cost is O(n * 2**n)

    Notes:
        Each player's weighted marginal contributions are added with math.fsum, which is
        exactly rounded. The result does not depend on summation order, so interchangeable
        players get bit-identical values and dummy players get exactly 0

    Example:
        game = CoalitionalGame([0, 1, 2, 4])
        shapley_exact(game)     # array([1.5, 2.5])
    '''

    n = game.n
    _check_size(n)
    weights = utils.factorial_weights(n)
    sizes = utils.coalition_sizes(n)
    all_masks = utils.masks(n)

    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        without = all_masks[(all_masks & bit) == 0]
        terms = weights[sizes[without]] * (game.values[without | bit] - game.values[without])
        phi[i] = math.fsum(terms.tolist())

    return phi

def bankruptcy_game(problem):
    '''The bankruptcy game of a claims problem: v(S) = max(0, E - sum of claims outside S)

    Arguments:
        problem:    a canonical BankruptcyProblem

    Returns:
        a CoalitionalGame over the problem's creditors, with v(N) = E

    Example:
        g = bankruptcy_game(BankruptcyProblem(['a', 'b', 'c'], 200, [100, 200, 300]))
        g.value(0b110)      # 100.0
    '''

    n = len(problem)
    _check_size(n)
    d = problem.d
    inside = utils.membership(n).astype(float) @ d
    values = np.maximum(0.0, problem.estate - (problem.total - inside))
    values[0] = 0.0
    values[-1] = problem.estate
    return CoalitionalGame(values, problem.creditors)

def _proper(n):
    return utils.masks(n)[1:-1]

def _excess_matrix(game, allocations):
    '''Sorted (descending) excess vectors for a batch of allocations, one per row
    '''

    proper = _proper(game.n)
    member = utils.membership(game.n)[proper].astype(float)
    exc = game.values[proper][None, :] - allocations @ member.T
    return -np.sort(-exc, axis=1)

def excess_vector(game, allocation):
    '''Excess e(S, x) = v(S) - x(S) of every proper nonempty coalition, sorted descending

    Arguments:
        game:           a CoalitionalGame

        allocation:     list-like of n payoffs adding up to v(N) (within 1e-6)

    Returns:
        an ExcessVector of length 2**n - 2
    '''

    x = np.asarray(allocation, dtype=float)
    if x.shape != (game.n,):
        raise vi.GameError('allocation has {} entries for a {}-player game'.format(len(x), game.n))

    if abs(x.sum() - game.grand) > 1e-6:
        raise vi.GameError('allocation is not efficient: sums to {}, v(N) = {}'.format(x.sum(), game.grand))

    return ExcessVector(_excess_matrix(game, x[None, :])[0])

def leximin_compare(a, b, tol=None):
    '''Compare two descending excess vectors lexicographically. LESS means a is preferred
    by the nucleolus. Entries within tol (default: the global tolerance) count as equal
    '''

    if tol is None:
        tol = vi.tolerance

    a = getattr(a, 'excesses', a)
    b = getattr(b, 'excesses', b)
    if len(a) != len(b):
        raise vi.GameError('excess vectors differ in length')

    for x, y in zip(a, b):
        if abs(x - y) > tol:
            return Ordering.LESS if x < y else Ordering.GREATER

    return Ordering.EQUAL

def _first_dominating(game, candidate_exc, allocations, tol):
    # vectorized leximin_compare of every row against the candidate
    diff = _excess_matrix(game, allocations) - candidate_exc[None, :]
    significant = np.abs(diff) > tol
    decided = significant.any(axis=1)
    first = significant.argmax(axis=1)
    less = decided & (diff[np.arange(len(diff)), first] < 0)
    hits = np.flatnonzero(less)
    return int(hits[0]) if len(hits) else None

def nucleolus_check(game, candidate, trials=10000, seed=None):
    '''Try to falsify that candidate is the nucleolus by searching for an efficient
    allocation with a leximin-smaller excess vector

    Arguments:
        game:           a CoalitionalGame

        candidate:      an efficient allocation

        trials:         number of allocations to try

        seed:           random seed; pass None to use the global default

    Returns:
        a NucleolusReport. dominated=False only means no dominating point was found

    Notes:
        A quarter of the samples are uniform draws from the simplex scaled to v(N); the
        rest perturb the candidate along random zero-sum directions with step sizes of
        1e-1, 1e-2 and 1e-3 times v(N)
    '''

    if seed is None:
        seed = vi.seed

    x = np.asarray(candidate, dtype=float)
    base = excess_vector(game, x).excesses
    n = game.n
    if n <= 1 or trials <= 0:
        return NucleolusReport(False, None, max(trials, 0))

    rng = np.random.default_rng(seed)
    scale = abs(game.grand) if game.grand != 0 else 1.0
    kinds = np.arange(trials) % 4

    samples = np.empty((trials, n))
    uniform = kinds == 0
    samples[uniform] = rng.dirichlet(np.ones(n), size=int(uniform.sum())) * game.grand

    steps = np.array([0.0, 1e-1, 1e-2, 1e-3])[kinds[~uniform]] * scale
    directions = rng.standard_normal((int((~uniform).sum()), n))
    directions -= directions.mean(axis=1, keepdims=True)
    norms = np.abs(directions).max(axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    samples[~uniform] = x[None, :] + directions / norms * steps[:, None]

    # fix rounding drift so every sample is efficient
    samples[:, -1] += game.grand - samples.sum(axis=1)

    # candidates off by rounding alone shouldn't count as witnesses
    tol = vi.tolerance * max(1.0, scale)
    hit = _first_dominating(game, base, samples, tol)
    if hit is not None:
        logger.info('candidate %s dominated by %s', x, samples[hit])
        return NucleolusReport(True, samples[hit].copy(), trials)

    return NucleolusReport(False, None, trials)

def _compositions(n, total):
    '''Yields arrays of nonnegative integer vectors of length n summing to total, in chunks.
    The last (up to) three coordinates are vectorized, earlier ones iterated
    '''

    if n == 1:
        yield np.array([[total]])
        return

    tail = min(n, 3)

    def tails(r):
        if tail == 2:
            a = np.arange(r + 1)
            return np.stack([a, r - a], axis=1)

        a, b = np.nonzero(np.add.outer(np.arange(r + 1), np.arange(r + 1)) <= r)
        return np.stack([a, b, r - a - b], axis=1)

    def prefixes(k, r):
        if k == 0:
            yield ()
            return

        for first in range(r + 1):
            for rest in prefixes(k - 1, r - first):
                yield (first,) + rest

    for prefix in prefixes(n - tail, total):
        t = tails(total - sum(prefix))
        chunk = np.empty((len(t), n), dtype=np.int64)
        chunk[:, :n - tail] = prefix
        chunk[:, n - tail:] = t
        yield chunk

def nucleolus_bruteforce(game, resolution=200):
    '''Grid oracle for the nucleolus of a small game

    Arguments:
        game:           a CoalitionalGame with at most 4 players

        resolution:     grid divisions per axis

    Returns:
        the point of the efficiency grid whose sorted excess vector is leximin-minimal.
        Excesses within float rounding of each other count as equal and remaining ties
        go to the first grid point enumerated. A two-player game returns the standard
        solution v_i + (v(N) - v_1 - v_2) / 2 directly

    Notes:
        The grid covers {x : sum(x) = v(N), x_i >= lo_i} with lo_i = min(v({i}), 0), lowered
        further by the shortfall when v(N) < sum of v({i}). Grid steps are
        (v(N) - sum(lo)) / resolution, so a nucleolus lying on the grid is returned exactly
        and otherwise the answer is one grid step from it in the usual case

    Example:
        game = bankruptcy_game(BankruptcyProblem(['a', 'b', 'c'], 200, [100, 200, 300]))
        nucleolus_bruteforce(game, 400)         # [50, 75, 75]
    '''

    n = game.n
    if n > 4:
        raise vi.GameError('oracle limited to small games (n <= 4), got n = {}'.format(n))

    if resolution < 1:
        raise vi.ParameterError('resolution must be positive')

    if n == 0:
        return np.zeros(0)

    if n == 1:
        return np.array([game.grand])

    singles = np.array([game.values[1 << i] for i in range(n)])
    slack = game.grand - singles.sum()
    if n == 2:
        return singles + slack / 2

    lo = np.minimum(singles, 0.0) - max(0.0, -slack)
    span = game.grand - lo.sum()
    if span <= 0:
        return lo

    step = span / resolution
    tol = vi.tolerance * max(1.0, float(np.abs(game.values).max()))

    # first pass streams the grid and keeps points whose top excess ties the running best
    kept_points, kept_exc = [], []
    best = np.inf
    for chunk in _compositions(n, resolution):
        points = lo[None, :] + step * chunk
        exc = _excess_matrix(game, points)
        best = min(best, float(exc[:, 0].min()))
        near = exc[:, 0] <= best + tol
        kept_points.append(points[near])
        kept_exc.append(exc[near])

    points = np.concatenate(kept_points)
    exc = np.concatenate(kept_exc)
    for k in range(exc.shape[1]):
        near = exc[:, k] <= exc[:, k].min() + tol
        points, exc = points[near], exc[near]

    # survivors tie at every position; enumeration order breaks the tie
    return points[0]
