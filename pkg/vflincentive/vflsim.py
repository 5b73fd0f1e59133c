
'''In-process simulation of vertical federated logistic regression

One active party holds labels and some feature columns; passive parties hold other
columns of the same rows. In every batch step each passive party sends its partial
score X_b^m theta^m to the active party, the active party adds the scores, computes
the logistic loss and sends the gradient with respect to the score back, and every
party updates its own weights. Messages travel through a Channel that records them.

Because the model is linear in the concatenated features, training is numerically
the same as plain minibatch SGD on the unsplit data with the same batch order.
'''

import json
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

import vflincentive as vi

logger = logging.getLogger(__name__)

# probabilities are clamped to [eps, 1 - eps] inside the log-loss
eps = 1e-12

@dataclass
class TrainingConfig:
    '''Hyperparameters of one training run. Fields left as None take the package defaults
    '''

    learning_rate: float = None
    rounds: int = None
    batch_size: int = None
    seed: int = None
    shuffle_each_round: bool = True
    l2: float = 0.0
    record_messages: bool = True

    def __post_init__(self):
        if self.learning_rate is None:
            self.learning_rate = vi.learning_rate

        if self.rounds is None:
            self.rounds = vi.rounds

        if self.batch_size is None:
            self.batch_size = vi.batch_size

        if self.seed is None:
            self.seed = vi.seed

        if not self.learning_rate > 0 or self.rounds < 1 or self.batch_size < 1:
            raise vi.ParameterError('learning_rate, rounds and batch_size must be positive')

        if self.l2 < 0:
            raise vi.ParameterError('l2 must be nonnegative')

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        unknown = set(doc or {}) - names
        if unknown:
            raise vi.ConfigError('unknown training options: {}'.format(', '.join(sorted(unknown))))

        return cls(**(doc or {}))

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

@dataclass
class FederatedModel:
    '''Each party's local weight vector, plus the bias kept by the active party
    '''

    weights: dict
    bias: float = 0.0
    active: str = None

    def concatenated(self, order=None):
        '''All weights laid end to end in the given party order (default: insertion order), then the bias
        '''

        if order is None:
            order = list(self.weights)

        return np.concatenate([self.weights[p] for p in order] + [np.array([self.bias])])

class Message(NamedTuple):
    round: int
    step: int
    sender: str
    receiver: str
    kind: str       # 'partial_score' or 'gradient'
    size: int

class Channel:
    '''In-process transport between parties. Payloads are queued per (receiver, kind)
    and every send is recorded on the log when recording is on
    '''

    def __init__(self, record=True):
        self.record = record
        self.log = []
        self.round = 0
        self.step = 0
        self._queues = defaultdict(deque)

    def send(self, sender, receiver, kind, payload):
        self._queues[(receiver, kind)].append((sender, payload))
        if self.record:
            self.log.append(Message(self.round, self.step, sender, receiver, kind, len(payload)))

    def receive(self, receiver, kind):
        '''Drain and return the (sender, payload) pairs waiting for receiver
        '''

        q = self._queues[(receiver, kind)]
        items = list(q)
        q.clear()
        return items

@dataclass
class RoundTrace:
    losses: list = field(default_factory=list)      # mean training loss of each round
    messages: list = field(default_factory=list)

    def to_jsonl(self):
        '''One JSON object per line: a 'round' record per round, then a 'message' record per message
        '''

        lines = [json.dumps({'type': 'round', 'round': t, 'loss': loss}) for t, loss in enumerate(self.losses)]
        lines += [json.dumps(dict(type='message', **m._asdict())) for m in self.messages]
        return '\n'.join(lines) + '\n'


def _sigmoid(s):
    return np.exp(-np.logaddexp(0.0, -s))

def _active_of(parties):
    active = [p for p in parties if p.role == 'active']
    if len(active) != 1:
        raise vi.TrainingError('a federation needs exactly one active party, got {}'.format(len(active)))

    return active[0]

def init_models(parties, seed=None):
    '''Zero-initialize every party's weights and the active party's bias. The logistic
    objective is convex so zero is a canonical start; seed is accepted for symmetry
    with other initializers but unused

    Example:
        model = init_models(parties)
        model.weights['Ph1']        # array([0., 0., 0., 0.])
    '''

    active = _active_of(parties)
    return FederatedModel({p.party_id: np.zeros(p.width) for p in parties}, 0.0, active.party_id)

def partial_score(party, model, batch_rows=None):
    '''z = X_b theta for one party (plus the bias if it is the active party)
    '''

    X = party.features if batch_rows is None else party.features[batch_rows]
    z = X @ model.weights[party.party_id]
    if party.role == 'active':
        z = z + model.bias

    return z

def aggregate_and_grad(partial_scores, labels):
    '''Combine partial scores on the active party

    Arguments:
        partial_scores:     list of score vectors; they are added in list order

        labels:             0/1 labels of the batch

    Returns:
        a (loss, grad_z) tuple: mean binary cross-entropy of sigmoid(sum of scores), and
        (yhat - y) / batch_size, the gradient of that loss with respect to any party's score
    '''

    y = np.asarray(labels, dtype=float)
    s = np.array(partial_scores[0], dtype=float)
    for z in partial_scores[1:]:
        if len(z) != len(s):
            raise vi.TrainingError('partial scores differ in length')

        s = s + z

    if len(s) != len(y):
        raise vi.TrainingError('{} scores for {} labels'.format(len(s), len(y)))

    p = _sigmoid(s)
    q = np.clip(p, eps, 1 - eps)
    loss = float(-np.mean(y * np.log(q) + (1 - y) * np.log(1 - q)))
    return loss, (p - y) / len(y)

def local_update(party, model, grad_z, batch_rows=None, learning_rate=None, l2=0.0):
    '''One party's gradient step: theta <- theta - lr * (X_b^T grad_z + l2 * theta).
    The active party also moves its bias by -lr * sum(grad_z)

    Returns:
        a new FederatedModel in which only this party's parameters changed
    '''

    if learning_rate is None:
        learning_rate = vi.learning_rate

    X = party.features if batch_rows is None else party.features[batch_rows]
    theta = model.weights[party.party_id]
    weights = dict(model.weights)
    weights[party.party_id] = theta - learning_rate * (X.T @ grad_z + l2 * theta)
    bias = model.bias
    if party.role == 'active':
        bias = model.bias - learning_rate * float(np.sum(grad_z))

    return replace(model, weights=weights, bias=bias)

def batch_schedule(n_rows, config):
    '''Yields, for each round, the list of batches (arrays of row positions). The row order
    is a seeded permutation, redrawn every round when shuffle_each_round is set
    '''

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n_rows)
    for t in range(config.rounds):
        if t > 0 and config.shuffle_each_round:
            order = rng.permutation(n_rows)

        yield [order[i:i + config.batch_size] for i in range(0, n_rows, config.batch_size)]

def train(active, passives=(), config=None, on_step=None):
    '''Train a vertical federated logistic regression

    Arguments:
        active:         the active PartyDataset (training rows)

        passives:       list-like of passive PartyDataset, row-aligned with active. An empty
                        list trains the active party's local model

        config:         a TrainingConfig; pass None for the defaults

        on_step:        optional callable(round, step, model), called after every batch step

    Returns:
        a (FederatedModel, RoundTrace) tuple

    Example:
        model, trace = train(train_parties[0], train_parties[1:], TrainingConfig(rounds=50))
        print(trace.losses[-1])
    '''

    if config is None:
        config = TrainingConfig()

    passives = list(passives)
    parties = [active] + passives
    if active.role != 'active' or active.labels is None:
        raise vi.TrainingError('{} is not an active party with labels'.format(active.party_id))

    for p in passives:
        if p.role != 'passive':
            raise vi.TrainingError('{} is not a passive party'.format(p.party_id))

        if not np.array_equal(p.row_index, active.row_index):
            raise vi.TrainingError('{} is not row-aligned with {}'.format(p.party_id, active.party_id))

    n = len(active)
    if n == 0:
        raise vi.TrainingError('empty training set')

    model = init_models(parties, config.seed)
    channel = Channel(record=config.record_messages)
    trace = RoundTrace()
    a = active.party_id

    for t, batches in enumerate(batch_schedule(n, config)):
        total = 0.0
        for b, rows in enumerate(batches):
            channel.round, channel.step = t, b
            for p in passives:
                channel.send(p.party_id, a, 'partial_score', partial_score(p, model, rows))

            received = dict(channel.receive(a, 'partial_score'))
            scores = [partial_score(active, model, rows)] + [received[p.party_id] for p in passives]
            loss, grad = aggregate_and_grad(scores, active.labels[rows])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise vi.TrainingError('non-finite loss in round {} step {} (learning rate {} too high?)'.format(t, b, config.learning_rate))

            for p in passives:
                channel.send(a, p.party_id, 'gradient', grad)

            # each party only touches its own parameters, so applying the updates one
            # after another is the same as applying them simultaneously
            updated = local_update(active, model, grad, rows, config.learning_rate, config.l2)
            for p in passives:
                (_, g), = channel.receive(p.party_id, 'gradient')
                updated = local_update(p, updated, g, rows, config.learning_rate, config.l2)

            model = updated
            total += loss * len(rows)
            if on_step is not None:
                on_step(t, b, model)

        trace.losses.append(total / n)
        logger.debug('round %d: loss %.6f', t, trace.losses[-1])

    trace.messages = channel.log
    logger.info('trained %s with %d passive parties: %d rounds, final loss %.6f',
                a, len(passives), config.rounds, trace.losses[-1])
    return model, trace

def predict_proba(model, parties):
    '''Probability of class 1 for every row, using the parties that take part in the model
    '''

    members = [p for p in parties if p.party_id in model.weights]
    missing = set(model.weights) - {p.party_id for p in members}
    if missing:
        raise vi.TrainingError('no data for parties {}'.format(', '.join(sorted(missing))))

    active = _active_of(members)
    s = partial_score(active, model)
    for p in members:
        if p is not active:
            s = s + partial_score(p, model)

    return _sigmoid(s)

def evaluate_f1(model, parties):
    '''F1 score of class 1 on the given (test) parties; a row is predicted 1 when
    sigmoid(score) >= 0.5

    Returns:
        F1 in [0, 1]. With no positives predicted or present the score is 1; with
        positives but no true positives it is 0
    '''

    active = _active_of([p for p in parties if p.party_id in model.weights])
    y = active.labels.astype(bool)
    pred = predict_proba(model, parties) >= 0.5
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    return f1_from_counts(tp, fp, fn)

def f1_from_counts(tp, fp, fn):
    if tp == 0:
        return 1.0 if fp == 0 and fn == 0 else 0.0

    return 2 * tp / (2 * tp + fp + fn)
