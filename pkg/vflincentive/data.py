
'''Datasets: CSV ingestion, cleaning and encoding, vertical partitioning into parties,
the train/test split, the synthetic generator, and the two manipulations used by the
dummy-player and symmetry experiments.

Every party of one federation holds different columns of the same rows. That
alignment is carried as a row_index vector on each PartyDataset and every operation
here preserves it.
'''

import io
import logging
import os
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
import requests
import yaml
from tabulate import tabulate

import vflincentive as vi

logger = logging.getLogger(__name__)

missing_markers = ['?', '']
positive_tokens = ('yes', 'true', 'y', 'positive', '1')

# named partition specs, loaded from partitions.yaml on first use
_partition_data = None

class Table:
    '''A rectangular table with a kind for every column: 'numeric', 'categorical',
    'indicator' (a one-hot column produced by preprocess) or 'label'

    Attributes:
        frame:      a pandas DataFrame. Its index holds the global sample identifiers

        kinds:      dict of column kinds

        label:      name of the label column, or None

        origin:     dict mapping each column to the raw column it was derived from
    '''

    def __init__(self, frame, kinds, label=None, origin=None):
        self.frame = frame
        self.kinds = dict(kinds)
        self.label = label
        self.origin = dict(origin) if origin else {c: c for c in frame.columns}

    @property
    def columns(self):
        return list(self.frame.columns)

    @property
    def feature_columns(self):
        return [c for c in self.frame.columns if self.kinds[c] != 'label']

    def __len__(self):
        return len(self.frame)

    def __repr__(self):
        head = self.frame.head(5)
        s = tabulate(head.values.tolist(), tablefmt='simple', headers=list(head.columns))
        return s + '\n{} rows x {} columns'.format(len(self.frame), len(self.frame.columns))

@dataclass
class PartitionSpec:
    '''Which raw columns each party holds. The active party also holds the label column.
    Columns listed in exclude are dropped from the federation altogether
    '''

    parties: dict
    active: str
    label: str
    exclude: tuple = ()

    def __post_init__(self):
        self.parties = {str(k): list(v or []) for k, v in self.parties.items()}
        self.exclude = tuple(self.exclude or ())
        if self.active not in self.parties:
            raise vi.DataError('active party {!r} not in partition'.format(self.active))

        seen = {}
        for pid, cols in self.parties.items():
            for c in cols:
                if c in seen:
                    raise vi.DataError('column {!r} assigned to both {} and {}'.format(c, seen[c], pid))

                seen[c] = pid

        if self.label in seen:
            raise vi.DataError('label column {!r} assigned as a feature'.format(self.label))

    @property
    def passives(self):
        return [p for p in self.parties if p != self.active]

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(doc['parties'], doc['active'], doc['label'], doc.get('exclude', ()))
        except (KeyError, TypeError, AttributeError):
            raise vi.ConfigError('partition needs "parties", "active" and "label"')

    def to_dict(self):
        return {'parties': self.parties, 'active': self.active, 'label': self.label, 'exclude': list(self.exclude)}

@dataclass
class PartyDataset:
    '''One party's block of an aligned federation: its feature matrix, its labels if it
    is the active party, and the global identifiers of its rows
    '''

    party_id: str
    role: str
    features: np.ndarray
    row_index: np.ndarray
    columns: tuple = ()
    labels: np.ndarray = None
    scaled: np.ndarray = None       # True for columns that standardize() should rescale

    def __post_init__(self):
        if self.role not in ('active', 'passive'):
            raise vi.DataError('role must be active or passive, got {!r}'.format(self.role))

        self.row_index = np.array(self.row_index)
        self.features = np.array(self.features, dtype=float)
        if self.features.ndim != 2:
            self.features = self.features.reshape(len(self.row_index), -1)

        if len(self.features) != len(self.row_index):
            raise vi.DataError('{}: {} feature rows for {} row ids'.format(self.party_id, len(self.features), len(self.row_index)))
        if not self.columns:
            self.columns = tuple('{}:{}'.format(self.party_id, i) for i in range(self.features.shape[1]))

        self.columns = tuple(self.columns)
        if len(self.columns) != self.features.shape[1]:
            raise vi.DataError('{}: {} column names for {} columns'.format(self.party_id, len(self.columns), self.features.shape[1]))

        if self.scaled is None:
            self.scaled = np.zeros(self.features.shape[1], dtype=bool)

        self.scaled = np.array(self.scaled, dtype=bool)
        if (self.labels is not None) != (self.role == 'active'):
            raise vi.DataError('{}: labels must be present exactly on the active party'.format(self.party_id))

        if self.labels is not None:
            self.labels = np.array(self.labels, dtype=float)

        for arr in (self.features, self.row_index, self.scaled, self.labels):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def width(self):
        return self.features.shape[1]

    def __len__(self):
        return len(self.row_index)

    def take(self, rows):
        '''Returns a new PartyDataset restricted to the given row positions
        '''

        return replace(self, features=self.features[rows], row_index=self.row_index[rows],
                       labels=None if self.labels is None else self.labels[rows])


def _read_text(path):
    '''Read a local file or fetch an http(s) URL
    '''

    path = os.fspath(path)
    if path.startswith(('http://', 'https://')):
        response = requests.get(path, **vi.get_options)
        if response.status_code != 200:
            raise vi.DataError('cannot fetch {}: [{}] {}'.format(path, response.status_code, response.reason))

        return response.text

    try:
        with open(path, 'r', encoding='utf-8') as fh:
            return fh.read()
    except OSError as err:
        raise vi.DataError('cannot read {}: {}'.format(path, err.strerror or err))

def load_csv(path, label_column=None):
    '''Load a comma-separated file with a header row into a typed Table

    Arguments:
        path:           file path or http(s) URL

        label_column:   name of the label column, or None

    Returns:
        a Table. A column whose non-missing values all parse as numbers is numeric, every
        other column is categorical. '?' and empty strings are missing values (NaN)

    Example:
        table = load_csv('data/heart.csv', 'output')
        print(len(table), len(table.columns))       # 303 14
    '''

    text = _read_text(path)
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise vi.DataError('{}: missing header row'.format(path))
    except pd.errors.ParserError as err:
        raise vi.DataError('{}: ragged rows ({})'.format(path, str(err).strip()))

    # with keep_default_na off, NaN can only come from rows that are too short
    if frame.isna().any().any():
        raise vi.DataError('{}: ragged rows'.format(path))

    frame = frame.apply(lambda s: s.str.strip()).replace(missing_markers, np.nan)
    kinds = {}
    for col in frame.columns:
        parsed = pd.to_numeric(frame[col], errors='coerce')
        if parsed.notna().sum() == frame[col].notna().sum():
            frame[col] = parsed.astype(float)
            kinds[col] = 'numeric'
        else:
            kinds[col] = 'categorical'

    if label_column is not None:
        if label_column not in frame.columns:
            raise vi.DataError('{}: no label column {!r}'.format(path, label_column))

        kinds[label_column] = 'label'

    logger.info('loaded %s: %d rows, %d columns', path, len(frame), len(frame.columns))
    return Table(frame, kinds, label_column)

def _binary_labels(series, numeric):
    values = series.dropna().unique()
    if numeric:
        values = sorted(float(v) for v in values)
        if set(values) <= {0.0, 1.0}:
            return series.astype(float)

        if len(values) == 2:
            logger.info('label %s: mapping %s to 1, %s to 0', series.name, values[1], values[0])
            return (series.astype(float) == values[1]).astype(float)
    else:
        tokens = sorted(str(v) for v in values)
        if len(tokens) <= 2:
            positive = next((t for t in tokens if t.lower() in positive_tokens), tokens[-1])
            logger.info('label %s: mapping %r to 1', series.name, positive)
            return (series.astype(str) == positive).astype(float)

    raise vi.DataError('label column {!r} is not binary ({} distinct values)'.format(series.name, len(values)))

def preprocess(table):
    '''Clean and encode a table

    Arguments:
        table:      a Table from load_csv() or generate_synthetic()

    Returns:
        a new Table: exact duplicate rows removed, rows with missing values dropped,
        categorical columns replaced by one-hot indicator columns named '<col>=<token>',
        the label mapped to 0/1. Numeric columns are left on their raw scale and marked
        for standardize(), which must use training statistics only

    Example:
        t = preprocess(load_csv('data/bank.csv', 'deposit'))
        [c for c in t.columns if c.startswith('marital=')]     # ['marital=divorced', 'marital=married', 'marital=single']
    '''

    frame = table.frame
    n0 = len(frame)
    frame = frame.drop_duplicates()
    n1 = len(frame)
    frame = frame.dropna()
    n2 = len(frame)
    logger.info('preprocess: %d rows, %d duplicates removed, %d rows with missing values dropped', n0, n0 - n1, n1 - n2)
    if n2 == 0:
        raise vi.DataError('table empty after cleaning')

    parts = []
    kinds = {}
    origin = {}
    for col in frame.columns:
        kind = table.kinds[col]
        if kind == 'label':
            continue

        if kind == 'numeric' or kind == 'indicator':
            parts.append(frame[col].astype(float))
            kinds[col] = kind
            origin[col] = table.origin.get(col, col)
        else:
            dummies = pd.get_dummies(frame[col].astype(str), prefix=col, prefix_sep='=', dtype=float)
            parts.append(dummies)
            for c in dummies.columns:
                kinds[c] = 'indicator'
                origin[c] = table.origin.get(col, col)

    if table.label is not None:
        label = frame[table.label]
        parts.append(_binary_labels(label, pd.api.types.is_numeric_dtype(label)).rename(table.label))
        kinds[table.label] = 'label'
        origin[table.label] = table.label

    out = pd.concat(parts, axis=1)
    return Table(out, kinds, table.label, origin)

def partition_spec(name):
    '''Return a named PartitionSpec from the packaged partitions.yaml

    Example:
        spec = partition_spec('heart')
        spec.parties['Ph1']     # ['chol', 'fbs', 'restecg', 'caa']
    '''

    global _partition_data

    if _partition_data is None:
        with open(os.path.join(os.path.dirname(__file__), 'partitions.yaml'), 'r') as fh:
            _partition_data = yaml.safe_load(fh)

    doc = _partition_data.get(name)
    if doc is None:
        raise vi.ConfigError('unknown partition {!r}: expected one of {}'.format(name, ', '.join(sorted(_partition_data))))

    return PartitionSpec.from_dict(doc)

def vertical_partition(table, spec):
    '''Split a preprocessed table into one PartyDataset per party

    Arguments:
        table:      a preprocessed Table

        spec:       a PartitionSpec naming raw columns. One-hot columns follow the raw
                    column they were expanded from

    Returns:
        a list of PartyDataset, active party first, then the passive parties in partition order
    '''

    if table.label is None or table.label != spec.label:
        raise vi.DataError('table label {!r} does not match partition label {!r}'.format(table.label, spec.label))

    by_origin = {}
    for c in table.feature_columns:
        by_origin.setdefault(table.origin.get(c, c), []).append(c)

    assigned = [c for cols in spec.parties.values() for c in cols]
    unknown = [c for c in assigned + list(spec.exclude) if c not in by_origin]
    if unknown:
        raise vi.DataError('partition names unknown columns: {}'.format(', '.join(unknown)))

    omitted = [c for c in by_origin if c not in assigned and c not in spec.exclude]
    if omitted:
        raise vi.DataError('partition omits columns: {}'.format(', '.join(omitted)))

    frame = table.frame
    row_index = frame.index.to_numpy()
    parties = []
    for pid in [spec.active] + spec.passives:
        cols = [c for raw in spec.parties[pid] for c in by_origin[raw]]
        active = pid == spec.active
        parties.append(PartyDataset(
            party_id=pid,
            role='active' if active else 'passive',
            features=frame[cols].to_numpy(dtype=float).reshape(len(frame), len(cols)),
            row_index=row_index,
            columns=tuple(cols),
            labels=frame[spec.label].to_numpy(dtype=float) if active else None,
            scaled=[table.kinds[c] == 'numeric' for c in cols],
        ))

    return parties

def _check_aligned(parties):
    if len(parties) == 0:
        raise vi.DataError('no parties')

    ref = parties[0].row_index
    for p in parties[1:]:
        if len(p.row_index) != len(ref) or not np.array_equal(p.row_index, ref):
            raise vi.DataError('parties {} and {} are not row-aligned'.format(parties[0].party_id, p.party_id))

def train_test_split(parties, ratio=None, seed=None):
    '''Shuffle rows once and split every party the same way

    Arguments:
        parties:    aligned list of PartyDataset

        ratio:      fraction of rows used for training; pass None to use the global train_ratio

        seed:       random seed; pass None to use the global default

    Returns:
        a (train, test) tuple of party lists. The first floor(ratio * n) shuffled rows train

    Example:
        train, test = train_test_split(parties, 0.7, seed=1)    # 303 rows -> 212 / 91
    '''

    if ratio is None:
        ratio = vi.train_ratio

    if seed is None:
        seed = vi.seed

    if not 0 < ratio < 1:
        raise vi.ParameterError('split ratio must be in (0, 1), got {}'.format(ratio))

    _check_aligned(parties)
    n = len(parties[0])
    if n < 2:
        raise vi.DataError('need at least 2 rows to split, got {}'.format(n))

    perm = np.random.default_rng(seed).permutation(n)
    cut = min(max(int(np.floor(ratio * n)), 1), n - 1)
    train_rows, test_rows = perm[:cut], perm[cut:]
    return [p.take(train_rows) for p in parties], [p.take(test_rows) for p in parties]

def standardize(train, test):
    '''Standardize the scaled columns of every party to zero mean / unit variance using
    statistics of the training rows only, and apply the same transform to the test rows.
    Constant columns become all zeros

    Returns:
        a (train, test) tuple of new party lists
    '''

    out_train, out_test = [], []
    for tr, te in zip(train, test):
        if tr.party_id != te.party_id:
            raise vi.DataError('train and test party lists are not in the same order')

        mean = np.where(tr.scaled, tr.features.mean(axis=0) if len(tr) else 0.0, 0.0)
        std = tr.features.std(axis=0) if len(tr) else np.ones(tr.width)
        constant = tr.scaled & (std == 0)
        scale = np.where(tr.scaled & ~constant, std, 1.0)

        def apply(p):
            x = (p.features - mean) / scale
            x[:, constant] = 0.0
            return replace(p, features=x)

        out_train.append(apply(tr))
        out_test.append(apply(te))

    return out_train, out_test

def generate_synthetic(n_samples=10000, n_features=20, n_informative=None, noise_sigma=0.5, seed=None, separation=2.0):
    '''Generate a balanced binary classification table

    Arguments:
        n_samples:      number of rows

        n_features:     number of feature columns (named f1, f2, ...)

        n_informative:  number of features that carry class information; default n_features // 2

        noise_sigma:    scale of Gaussian noise added to every feature

        seed:           random seed; pass None to use the global default

        separation:     distance between the two class means along a random direction

    Returns:
        a Table of n_features numeric columns plus the label column 'target'. Informative
        features come from two unit-variance Gaussian clusters, the rest are pure noise
    '''

    if seed is None:
        seed = vi.seed

    if n_informative is None:
        n_informative = max(n_features // 2, 1)

    if n_samples < 2 or n_features < 1:
        raise vi.ParameterError('need at least 2 samples and 1 feature')

    if not 0 <= n_informative <= n_features:
        raise vi.ParameterError('n_informative ({}) must be between 0 and n_features ({})'.format(n_informative, n_features))

    if noise_sigma < 0 or separation < 0:
        raise vi.ParameterError('noise_sigma and separation must be nonnegative')

    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], [n_samples // 2, n_samples - n_samples // 2])
    rng.shuffle(y)

    direction = rng.standard_normal(n_informative)
    norm = np.linalg.norm(direction)
    if norm > 0:
        direction /= norm

    centers = (2 * y - 1)[:, None] * (separation / 2) * direction[None, :]
    informative = rng.standard_normal((n_samples, n_informative)) + centers
    noise_features = rng.standard_normal((n_samples, n_features - n_informative))
    X = np.hstack([informative, noise_features]) + noise_sigma * rng.standard_normal((n_samples, n_features))

    columns = ['f{}'.format(i + 1) for i in range(n_features)]
    frame = pd.DataFrame(X, columns=columns)
    frame['target'] = y
    kinds = {c: 'numeric' for c in columns}
    kinds['target'] = 'label'
    return Table(frame, kinds, 'target')

def randomize_party(party, seed=None):
    '''Replace a passive party's features with independent standard Gaussians of the same
    shape: the dummy-player construction

    Example:
        dummy = randomize_party(parties[1], seed=7)
    '''

    if seed is None:
        seed = vi.seed

    if party.role == 'active':
        raise vi.DataError('cannot randomize active party')

    rng = np.random.default_rng(seed)
    return replace(party, features=rng.standard_normal(party.features.shape))

def duplicate_party(source, new_id, taken=()):
    '''Copy a passive party's data under a new identifier: the redundant-party construction

    Arguments:
        source:     passive PartyDataset to copy

        new_id:     identifier of the copy

        taken:      identifiers already used in the federation

    Returns:
        a PartyDataset with bit-identical features and the same row_index
    '''

    if source.role == 'active':
        raise vi.DataError('cannot duplicate active party')

    if new_id == source.party_id or new_id in taken:
        raise vi.DataError('party id {!r} already in use'.format(new_id))

    return replace(source, party_id=new_id, features=source.features.copy())
