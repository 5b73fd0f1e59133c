'''Small helpers shared by the other modules: coalition bitmasks, input checks and
file output. These are used internally
'''

import math
import os
import tempfile

import numpy as np

import vflincentive as vi

def masks(n):
    '''Returns an array of every coalition bitmask over n players, in increasing order.
    Bit i of a mask is the player at index i
    '''

    return np.arange(1 << n, dtype=np.int64)

def membership(n):
    '''Returns a boolean matrix of shape (2**n, n): row S, column i is True if player i is in S
    '''

    m = masks(n)
    return ((m[:, None] >> np.arange(n)) & 1).astype(bool)

def coalition_sizes(n):
    '''Returns the number of members of every coalition, indexed by mask
    '''

    return membership(n).sum(axis=1)

def members(mask, n=None):
    '''Returns the player indices contained in a mask

    Example:
        members(0b101)      # [0, 2]
    '''

    if n is None:
        n = int(mask).bit_length()

    return [i for i in range(n) if mask >> i & 1]

def parse_mask(key):
    '''Parse a serialized coalition mask. Decimal strings are the canonical form but
    '0b' and '0x' prefixes are accepted too
    '''

    if type(key) is int:
        return key

    try:
        return int(str(key).strip(), 0)
    except ValueError:
        raise vi.ParameterError('malformed coalition mask: {!r}'.format(key))

def finite(values, what='input'):
    '''Returns values as a float array, raising ParameterError if anything is NaN or infinite
    '''

    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise vi.ParameterError('non-finite {}'.format(what))

    return arr

def parse_numbers(text):
    '''Parse a comma (or whitespace) separated list of numbers as typed on the command line

    Example:
        parse_numbers('33.98,35.27, 28.43')     # [33.98, 35.27, 28.43]
    '''

    parts = [p for p in text.replace(',', ' ').split() if p]
    if len(parts) == 0:
        raise vi.ParameterError('empty number list')

    try:
        return [float(p) for p in parts]
    except ValueError:
        raise vi.ParameterError('malformed number list: {!r}'.format(text))

def atomic_write(path, text):
    '''Write text to path by writing a temporary file in the same directory and
    renaming it over the target, so readers never see a partial file
    '''

    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix='.' + os.path.basename(path), suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as fh:
            fh.write(text)

        os.replace(tmp, path)
    except:
        os.unlink(tmp)
        raise

def factorial_weights(n):
    '''Shapley weights |S|!(n-|S|-1)!/n! for |S| = 0..n-1
    '''

    f = math.factorial
    return np.array([f(s) * f(n - s - 1) / f(n) for s in range(n)])
