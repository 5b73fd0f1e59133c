
'''Experiments: train coalition models, turn their F1 scores into an estate and claims,
divide the estate, and report

The estate is the F1 gain (in percentage points) of the model trained by the active
party together with every passive party, over the active party's local model. A
passive party's claim is the gain of the model trained by the active party together
with that party alone. The payout path needs n + 2 models; Shapley values need all
2**n coalitions. Coalition models are cached so the two paths share work.
'''

import concurrent.futures
import contextlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd
import yaml
from tabulate import tabulate

import vflincentive as vi
from . import bankruptcy
from . import coalitional
from . import data
from . import utils
from . import vflsim

logger = logging.getLogger(__name__)

VARIANTS = ('plain', 'dummy', 'symmetry')
FORMATS = ('csv', 'markdown', 'json')
_extensions = {'csv': 'csv', 'markdown': 'md', 'json': 'json'}

# F1 is a fraction; reports use percentage points
scale = 100.0

@dataclass
class CoalitionScores:
    '''F1 of the active party's local model and of the models trained with coalitions of
    passive parties, keyed by coalition mask (bit i = passive party i)
    '''

    passives: tuple
    baseline: float
    by_coalition: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passives = tuple(self.passives)
        self.by_coalition = {int(k): float(v) for k, v in self.by_coalition.items()}
        for v in [self.baseline] + list(self.by_coalition.values()):
            if not 0 <= v <= 1:
                raise vi.ParameterError('F1 score {} outside [0, 1]'.format(v))

    @property
    def n(self):
        return len(self.passives)

    @property
    def grand_mask(self):
        return (1 << self.n) - 1

    def f1(self, mask):
        if mask == 0:
            return self.baseline

        if mask not in self.by_coalition:
            raise vi.ParameterError('no score for coalition {} ({})'.format(
                mask, ', '.join(str(self.passives[i]) for i in utils.members(mask, self.n)) or 'empty'))

        return self.by_coalition[mask]

@dataclass
class ExperimentConfig:
    '''One experiment, as read from a YAML/JSON document. See load_config()
    '''

    dataset: dict
    partition: object
    name: str = 'experiment'
    training: vflsim.TrainingConfig = None
    rule: str = 'talmud'
    variant: dict = field(default_factory=lambda: {'kind': 'plain'})
    shapley: bool = False
    budget: float = None
    seed: int = None
    train_ratio: float = None
    workers: int = 1

    def __post_init__(self):
        if self.seed is None:
            self.seed = vi.seed

        if self.train_ratio is None:
            self.train_ratio = vi.train_ratio

        if self.training is None or type(self.training) is dict:
            training = dict(self.training or {})
            if 'seed' in training:
                raise vi.ConfigError('set the experiment seed, not training.seed')

            self.training = vflsim.TrainingConfig.from_dict(training)

        if self.rule not in bankruptcy.RULES:
            raise vi.ConfigError('unknown rule {!r}'.format(self.rule))

        if type(self.dataset) is not dict or not ({'csv', 'synthetic'} & set(self.dataset)):
            raise vi.ConfigError('dataset needs a "csv" or a "synthetic" entry')

        if 'csv' in self.dataset and 'label' not in self.dataset:
            raise vi.ConfigError('csv dataset needs a "label" column')

        if type(self.variant) is str:
            self.variant = {'kind': self.variant}

        kind = self.variant.get('kind', 'plain')
        if kind not in VARIANTS:
            raise vi.ConfigError('unknown variant {!r}'.format(kind))

        needs = {'plain': (), 'dummy': ('party',), 'symmetry': ('source', 'target')}[kind]
        for key in needs:
            if key not in self.variant:
                raise vi.ConfigError('{} variant needs "{}"'.format(kind, key))

        if self.budget is not None and self.budget < 0:
            raise vi.ConfigError('budget must be nonnegative')

        if self.workers < 1:
            raise vi.ConfigError('workers must be at least 1')

    @classmethod
    def from_dict(cls, doc):
        if type(doc) is not dict:
            raise vi.ConfigError('experiment config must be a mapping')

        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise vi.ConfigError('unknown config keys: {}'.format(', '.join(sorted(unknown))))

        try:
            return cls(**doc)
        except TypeError as err:
            raise vi.ConfigError('invalid experiment config: {}'.format(err))

    def to_dict(self):
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc['training'] = self.training.to_dict()
        return doc

@dataclass
class Allocation:
    '''Result of allocate(): the canonical problem, what normalization did, and the payouts
    '''

    problem: bankruptcy.BankruptcyProblem
    log: bankruptcy.NormalizationLog
    payout: bankruptcy.PayoutVector
    beneficial: bool = True

@dataclass
class AllocationReport:
    '''Everything one experiment produced. Amounts are F1 percentage points except budget
    figures, which are in the budget's currency. Every field is JSON-native
    '''

    description: str
    creditors: list
    estate: float
    claims: list
    payouts: list
    rule: str
    percentages: list
    beneficial: bool = True
    surplus_paid: float = 0.0
    undistributed: float = 0.0
    normalization: dict = field(default_factory=dict)
    shapley: list = None
    zero_marginal: list = field(default_factory=list)
    budget: float = None
    budget_shares: list = None
    budget_residual: float = None
    baseline_f1: float = None
    coalition_f1: dict = field(default_factory=dict)
    models_trained: int = 0
    rows: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    variant: dict = field(default_factory=dict)
    seed: int = None
    warnings: list = field(default_factory=list)

    @property
    def clamped_estate(self):
        return max(self.estate, 0.0)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    def table(self):
        '''Returns (headers, row) laid out as Description | Estate | Claims | Payouts | Shapley
        '''

        headers = ['Description', 'Estate']
        headers += ['Claim {}'.format(c) for c in self.creditors]
        headers += ['Payout {}'.format(c) for c in self.creditors]
        row = [self.description, self.estate] + list(self.claims) + list(self.payouts)
        if self.shapley is not None:
            headers += ['Shapley {}'.format(c) for c in self.creditors]
            row += list(self.shapley)

        return headers, row

    def budget_table(self):
        rows = []
        for c, p, pct, b in zip(self.creditors, self.payouts, self.percentages, self.budget_shares or []):
            rows.append([c, p, pct, b])

        return ['Party', 'Payout', 'Share %', 'Budget'], rows

    def __repr__(self):
        headers, row = self.table()
        return tabulate([row], headers=headers, tablefmt='simple', floatfmt='.{}f'.format(vi.decimals))

    def _repr_html_(self):
        headers, row = self.table()
        return vi.htmlTable([row], headers=headers, floatfmt='.{}f'.format(vi.decimals))


def compute_estate(scores):
    '''Estate = (F1 of the grand coalition model - F1 of the local model) * 100. A negative
    value is returned as is; normalize_problem() clamps it later
    '''

    return (scores.f1(scores.grand_mask) - scores.baseline) * scale

def compute_claims(scores):
    '''Claim of passive party i = (F1 of the model with party i alone - local F1) * 100
    '''

    return [(scores.f1(1 << i) - scores.baseline) * scale for i in range(scores.n)]

def characteristic_from_scores(scores):
    '''The coalitional game v(S) = (F1 with coalition S - local F1) * 100, with v(empty) = 0

    Arguments:
        scores:     CoalitionScores covering all 2**n coalitions

    Returns:
        a CoalitionalGame over the passive parties
    '''

    n = scores.n
    values = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        values[mask] = (scores.f1(mask) - scores.baseline) * scale

    return coalitional.CoalitionalGame(values, scores.passives)

def allocate(estate, claims, rule='talmud', creditors=None):
    '''Normalize a raw estate and claims, divide with the given rule, and settle any surplus

    Arguments:
        estate:         raw estate (may be negative or exceed the total claim)

        claims:         raw claims (may be <= 0)

        rule:           one of bankruptcy.RULES

        creditors:      creditor ids; default '1', '2', ...

    Returns:
        an Allocation. beneficial is False when the raw estate was negative

    Example:
        allocate(39.33, [33.98, 35.27, 28.43]).payout.payouts     # (13.11, 13.11, 13.11)
    '''

    if creditors is None:
        creditors = [str(i + 1) for i in range(len(claims))]

    problem, log = bankruptcy.normalize_problem(estate, claims, creditors)
    payout = bankruptcy.settle(problem, log, rule)
    beneficial = not log.estate_clamped
    if not beneficial:
        logger.warning('federation not beneficial: estate %s', estate)

    return Allocation(problem, log, payout, beneficial)

def budget_split(payouts, estate, budget):
    '''Convert payouts to currency: share_i = budget * payout_i / estate

    Arguments:
        payouts:    list-like of payouts

        estate:     the (positive) estate the payouts were drawn from

        budget:     total amount the active party is willing to pay

    Returns:
        a list of amounts. Estate that was not paid out leaves budget unspent

    Example:
        budget_split([10.055, 10.055, 7.92], 28.03, 10000)      # ~[3587.2, 3587.2, 2825.5]
    '''

    if not estate > 0:
        raise vi.ParameterError('estate must be positive to split a budget')

    if budget < 0:
        raise vi.ParameterError('budget must be nonnegative')

    return [budget * float(p) / estate for p in payouts]

def pay_budget(payouts, estate, budget):
    '''Budget shares plus the unspent residual. A federation with no positive estate
    earns nothing, so every share is 0 and the whole budget is left over

    Returns:
        a (shares, residual) tuple
    '''

    if budget < 0:
        raise vi.ParameterError('budget must be nonnegative')

    if estate > 0:
        shares = budget_split(payouts, estate, budget)
    else:
        shares = [0.0] * len(payouts)

    return shares, budget - math.fsum(shares)

class CoalitionTrainer:
    '''Trains and scores coalition models on fixed train/test parties, caching results
    by (coalition mask, variant, seed)

    Attributes:
        trained:    number of models actually trained

        hits:       number of requests answered from the cache
    '''

    def __init__(self, train, test, config, variant='plain', workers=1):
        self.active = train[0]
        self.passives = list(train[1:])
        self.test = list(test)
        self.config = replace(config, record_messages=False)
        self.variant = variant
        self.workers = workers
        self.trained = 0
        self.hits = 0
        self._cache = {}

    @property
    def n(self):
        return len(self.passives)

    def _key(self, mask):
        return (mask, self.variant, self.config.seed)

    def _fit(self, mask):
        passives = [p for i, p in enumerate(self.passives) if mask >> i & 1]
        model, _ = vflsim.train(self.active, passives, self.config)
        return vflsim.evaluate_f1(model, self.test)

    def scores(self, masks):
        '''Returns a dict of F1 keyed by mask, training whatever isn't cached yet
        '''

        masks = list(dict.fromkeys(masks))
        todo = [m for m in masks if self._key(m) not in self._cache]
        self.hits += len(masks) - len(todo)

        if self.workers > 1 and len(todo) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = dict(zip(todo, pool.map(self._fit, todo)))
        else:
            results = {m: self._fit(m) for m in todo}

        for m in todo:
            self._cache[self._key(m)] = results[m]

        self.trained += len(todo)
        logger.info('coalition scores: %d trained, %d cached', len(todo), len(masks) - len(todo))
        return {m: self._cache[self._key(m)] for m in masks}

    def coalition_scores(self, everything=False):
        '''Scores for the payout path (local model, every singleton, grand coalition), or for
        every coalition when everything is True
        '''

        n = self.n
        if everything:
            masks = list(range(1 << n))
        else:
            masks = [0] + [1 << i for i in range(n)] + [(1 << n) - 1]

        f1 = self.scores(masks)
        baseline = f1.pop(0)
        return CoalitionScores([p.party_id for p in self.passives], baseline, f1)

@contextlib.contextmanager
def _stage(name):
    try:
        yield
    except vi.ExperimentError:
        raise
    except (vi.IncentiveError, ValueError, KeyError, OSError) as err:
        raise vi.ExperimentError(name, str(err)) from err

def load_config(path):
    '''Read an experiment config document (YAML or JSON)

    The document holds:
        name:           report name
        dataset:        {"csv": path-or-url, "label": column} or
                        {"synthetic": {"samples", "features", "informative", "noise", "separation"}}
        partition:      a name from partitions.yaml or an inline {"active", "label", "parties", "exclude"}
        training:       TrainingConfig fields except seed
        rule:           proportional | cea | cel | talmud
        variant:        {"kind": "plain"} | {"kind": "dummy", "party": id} |
                        {"kind": "symmetry", "source": id, "target": id}
        shapley:        compute exact Shapley values (trains all 2**n coalitions)
        budget:         optional currency amount to split
        seed:           the only source of randomness
        train_ratio:    fraction of rows used for training
        workers:        parallel coalition training jobs

    Returns:
        an ExperimentConfig
    '''

    try:
        with open(path, 'r', encoding='utf-8') as fh:
            doc = yaml.safe_load(fh)
    except OSError as err:
        raise vi.ConfigError('cannot read config {}: {}'.format(path, err.strerror or err))
    except yaml.YAMLError as err:
        raise vi.ConfigError('cannot parse config {}: {}'.format(path, err))

    return ExperimentConfig.from_dict(doc)

def _load_dataset(config, seed):
    ds = config.dataset
    if 'csv' in ds:
        return data.load_csv(ds['csv'], ds['label'])

    params = dict(ds['synthetic'] or {})
    return data.generate_synthetic(
        n_samples=int(params.get('samples', 10000)),
        n_features=int(params.get('features', 20)),
        n_informative=params.get('informative'),
        noise_sigma=float(params.get('noise', 0.5)),
        seed=seed,
        separation=float(params.get('separation', 2.0)),
    )

def _partition(config):
    if type(config.partition) is str:
        return data.partition_spec(config.partition)

    return data.PartitionSpec.from_dict(config.partition)

def apply_variant(parties, variant, seed):
    '''Apply the dummy or symmetry manipulation to a partitioned federation

    Returns:
        a new list of parties in the same order
    '''

    kind = variant.get('kind', 'plain')
    ids = [p.party_id for p in parties]
    if kind == 'plain':
        return list(parties)

    if kind == 'dummy':
        target = variant['party']
        if target not in ids:
            raise vi.DataError('no party {!r}'.format(target))

        return [data.randomize_party(p, seed) if p.party_id == target else p for p in parties]

    source, target = variant['source'], variant['target']
    if source not in ids or target not in ids:
        raise vi.DataError('symmetry variant names unknown parties')

    src = parties[ids.index(source)]
    copy = data.duplicate_party(src, target, taken=[i for i in ids if i not in (target, source)])
    return [copy if p.party_id == target else p for p in parties]

def _describe(config):
    kind = config.variant.get('kind', 'plain')
    if kind == 'dummy':
        return '{} (dummy {})'.format(config.name, config.variant['party'])

    if kind == 'symmetry':
        return '{} ({} duplicates {})'.format(config.name, config.variant['target'], config.variant['source'])

    return config.name

def run_experiment(config):
    '''Run one experiment end to end

    Arguments:
        config:     an ExperimentConfig or a dict in the load_config() format

    Returns:
        an AllocationReport

    Notes:
        The experiment seed is split into independent streams for data generation, the
        dummy-party data, the train/test split and batch shuffling. All coalition models
        share the same training seed, so duplicated parties train identical models.
    '''

    if type(config) is dict:
        config = ExperimentConfig.from_dict(config)

    data_seed, variant_seed, split_seed, train_seed = [
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(4)]

    with _stage('load'):
        table = _load_dataset(config, data_seed)

    with _stage('preprocess'):
        table = data.preprocess(table)

    with _stage('partition'):
        parties = data.vertical_partition(table, _partition(config))

    with _stage('variant'):
        parties = apply_variant(parties, config.variant, variant_seed)

    with _stage('split'):
        train, test = data.train_test_split(parties, config.train_ratio, split_seed)
        train, test = data.standardize(train, test)

    kind = config.variant.get('kind', 'plain')
    with _stage('train'):
        training = replace(config.training, seed=train_seed)
        trainer = CoalitionTrainer(train, test, training, variant=kind, workers=config.workers)
        scores = trainer.coalition_scores()
        if config.shapley:
            scores = trainer.coalition_scores(everything=True)

    creditors = list(scores.passives)
    warnings = []
    with _stage('allocate'):
        estate = compute_estate(scores)
        claims = compute_claims(scores)
        allocation = allocate(estate, claims, config.rule, creditors)
        payout = allocation.payout
        if not allocation.beneficial:
            warnings.append('federation not beneficial: grand coalition F1 below local F1')

        if kind == 'dummy':
            i = creditors.index(config.variant['party'])
            if abs(claims[i]) > vi.dummy_claim_threshold:
                msg = 'randomized party {} claims {:.2f} points'.format(creditors[i], claims[i])
                logger.warning(msg)
                warnings.append(msg)

    shapley = None
    zero_marginal = []
    if config.shapley:
        with _stage('shapley'):
            game = characteristic_from_scores(scores)
            shapley = [float(x) for x in coalitional.shapley_exact(game)]
            zero_marginal = [c for i, c in enumerate(creditors)
                             if not np.any(coalitional.marginal_contributions(game, i))]

    total = max(estate, 0.0)
    budget_shares, residual = None, None
    if config.budget is not None:
        with _stage('budget'):
            budget_shares, residual = pay_budget(payout.payouts, total, config.budget)

    report = AllocationReport(
        description=_describe(config),
        creditors=creditors,
        estate=float(estate),
        claims=[float(c) for c in claims],
        payouts=list(payout.payouts),
        rule=payout.rule,
        percentages=payout.shares(total),
        beneficial=allocation.beneficial,
        surplus_paid=payout.surplus_paid,
        undistributed=payout.undistributed,
        normalization=allocation.log.to_dict(),
        shapley=shapley,
        zero_marginal=zero_marginal,
        budget=config.budget,
        budget_shares=budget_shares,
        budget_residual=residual,
        baseline_f1=scores.baseline,
        coalition_f1={str(m): f for m, f in sorted(scores.by_coalition.items())},
        models_trained=trainer.trained,
        rows={'train': len(train[0]), 'test': len(test[0])},
        training=training.to_dict(),
        variant=dict(config.variant),
        seed=config.seed,
        warnings=warnings,
    )
    logger.info('%s: estate %.2f, payouts %s', report.description, estate, vi.rounded(report.payouts))
    return report

def emit_report(report, format='markdown'):
    '''Serialize a report

    Arguments:
        report:     an AllocationReport

        format:     'csv' or 'markdown' (numbers to 2 decimals), or 'json' (full precision)

    Returns:
        the document as a string
    '''

    if format == 'json':
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n'

    headers, row = report.table()
    if format == 'csv':
        return pd.DataFrame([row], columns=headers).to_csv(index=False, float_format='%.{}f'.format(vi.decimals))

    if format == 'markdown':
        floatfmt = '.{}f'.format(vi.decimals)
        s = tabulate([row], headers=headers, tablefmt='pipe', floatfmt=floatfmt) + '\n'
        if report.budget_shares is not None:
            h, rows = report.budget_table()
            s += '\nBudget {}:\n\n'.format(report.budget)
            s += tabulate(rows, headers=h, tablefmt='pipe', floatfmt=floatfmt) + '\n'

        if report.warnings:
            s += '\n' + '\n'.join('- {}'.format(w) for w in report.warnings) + '\n'

        return s

    raise vi.ParameterError('unknown report format {!r}: expected one of {}'.format(format, ', '.join(FORMATS)))

def write_reports(report, out_dir, basename='report'):
    '''Write csv, markdown and json reports into out_dir, each atomically

    Returns:
        list of the paths written
    '''

    paths = []
    for fmt in FORMATS:
        path = os.path.join(out_dir, '{}.{}'.format(basename, _extensions[fmt]))
        utils.atomic_write(path, emit_report(report, fmt))
        paths.append(path)

    return paths
