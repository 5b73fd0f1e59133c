
'''vflincentive computes incentive payouts for the passive parties of a vertical
federated learning federation. The gain of the federated model over the active
party's local model is treated as a bankruptcy estate, each passive party's
standalone gain as its claim, and the estate is divided with Talmud's rule. Exact
Shapley values and a nucleolus check are provided for comparison, together with
a deterministic in-process simulator of vertical federated logistic regression
that produces the estate and claims end to end.
'''

import logging
from tabulate import tabulate

from .__version__ import __version__

# Defaults: These can be changed at runtime with reasonable results
tolerance = 1e-9            # absolute tolerance for efficiency and equality checks
decimals = 2                # rounding used by human-readable output only
seed = 0
learning_rate = 0.1
rounds = 200
batch_size = 64
train_ratio = 0.7
max_players = 24            # exact Shapley tables hold 2**n values; 2**24 doubles is already 128MB
dummy_claim_threshold = 3.0 # percentage points; a randomized party claiming more than this is suspicious
cross_check = False         # verify every Talmud division against the stepwise procedure (slow, for tests)
get_options = {}            # Additional parameters passed to requests.get when a dataset path is a URL

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

class IncentiveError(Exception):
    '''Base class for all domain errors raised by the package
    '''
    def __init__(self, msg):
        super(IncentiveError, self).__init__(msg)
        self.msg = msg

    def __str__(self):
        return self.msg

class ParameterError(IncentiveError):
    '''Invalid arguments: the caller asked for something that doesn't make sense
    '''
    pass

class ConfigError(ParameterError):
    pass

class ProblemError(IncentiveError):
    pass

class GameError(IncentiveError):
    pass

class DataError(IncentiveError):
    pass

class TrainingError(IncentiveError):
    pass

class ExperimentError(IncentiveError):
    '''An error raised while running an experiment, tagged with the stage that failed.
    The original exception is available as __cause__
    '''
    def __init__(self, stage, msg):
        super(ExperimentError, self).__init__(msg)
        self.stage = stage

    def __str__(self):
        return '[{}] {}'.format(self.stage, self.msg)


from . import utils
from . import bankruptcy
from . import coalitional
from . import data
from . import vflsim
from . import pipeline


def htmlTable(*args, **kwargs):
    """Generates an HTML table wrapped in a <div class="vflincentive" /> to allow users
       to customize the display if they wish. All arguments are passed to tabulate;
       you should not include the 'tablefmt=html' parameter
    """

    return '<div class="vflincentive">' + tabulate(*args, tablefmt='html', **kwargs) + '</div>'

def rounded(x, ndigits=None):
    '''Round a number (or list-like of numbers) for display, using the global decimals default
    '''

    if ndigits is None:
        ndigits = decimals

    if hasattr(x, '__iter__'):
        return [round(float(elem), ndigits) for elem in x]

    return round(float(x), ndigits)
