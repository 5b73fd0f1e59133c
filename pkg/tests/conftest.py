import numpy as np
import pandas as pd
import pytest

import vflincentive as vi

@pytest.fixture(autouse=True)
def defaults(monkeypatch):
    '''Every test runs with the Talmud cross-check on and with the stock defaults, even if
    another test changed them
    '''

    monkeypatch.setattr(vi, 'cross_check', True)
    monkeypatch.setattr(vi, 'seed', 0)
    monkeypatch.setattr(vi, 'decimals', 2)
    monkeypatch.setattr(vi, 'tolerance', 1e-9)

def random_problems(count, seed=0, sizes=(2, 3, 4, 5, 6)):
    '''Seeded random canonical problems. About a third use integer claims so that ties
    occur, and a few put the estate at 0 or at the total claim
    '''

    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.choice(sizes))
        if k % 3 == 0:
            claims = rng.integers(0, 6, size=n).astype(float) * 10
        else:
            claims = rng.uniform(0, 100, size=n)

        total = claims.sum()
        if k % 50 == 0:
            estate = 0.0
        elif k % 50 == 1:
            estate = total
        else:
            estate = rng.uniform(0, total)

        creditors = ['P{}'.format(i + 1) for i in range(n)]
        out.append(vi.bankruptcy.BankruptcyProblem(creditors, estate, claims))

    return out

@pytest.fixture
def heart_csv(tmp_path):
    '''A small heart-shaped CSV: numeric and categorical columns, a '?' marker, an exact
    duplicate row and a yes/no label
    '''

    rng = np.random.default_rng(3)
    n = 60
    frame = pd.DataFrame({
        'age': rng.integers(30, 80, n),
        'sex': rng.choice(['m', 'f'], n),
        'chol': rng.permutation(np.arange(150, 350))[:n],
        'cp': rng.choice(['typical', 'atypical', 'none'], n),
        'output': rng.choice(['yes', 'no'], n),
    })
    frame['chol'] = frame['chol'].astype(str)
    frame.loc[5, 'chol'] = '?'
    frame = pd.concat([frame, frame.iloc[[0]]], ignore_index=True)
    path = tmp_path / 'heart.csv'
    frame.to_csv(path, index=False)
    return path

@pytest.fixture
def small_partition():
    return vi.data.PartitionSpec(
        parties={'Pa': ['age'], 'Ph1': ['sex', 'chol'], 'Ph2': ['cp']},
        active='Pa', label='output')
