
'''Command-line interface

    vflincentive allocate --estate 39.33 --claims 33.98,35.27,28.43
    vflincentive shapley --estate 200 --claims 100,200,300
    vflincentive run --config configs/heart.yaml --out reports/heart
    vflincentive generate --samples 10000 --features 20 --out synthetic.csv

Exit codes: 0 on success, 1 for domain errors, 2 for usage, config and I/O errors
'''

import argparse
import json
import logging
import sys

import yaml
from tabulate import tabulate

import vflincentive as vi
from . import bankruptcy
from . import coalitional
from . import data
from . import pipeline
from . import utils

logger = logging.getLogger(__name__)

def _fmt(x):
    return '{:.{}f}'.format(x, vi.decimals)

def _claims(text):
    '''Claims typed on the command line: '1,2,3', a JSON list, or a JSON object keyed by creditor

    Returns:
        a (values, creditors) tuple; creditors is None for plain lists
    '''

    text = text.strip()
    if text[:1] in ('[', '{'):
        try:
            doc = json.loads(text)
        except ValueError:
            raise vi.ParameterError('malformed claims: {!r}'.format(text))

        if type(doc) is dict:
            return bankruptcy.problem_from_dict({'estate': 0, 'claims': doc})[1:3]

        if type(doc) is list:
            try:
                return [float(x) for x in doc], None
            except (TypeError, ValueError):
                raise vi.ParameterError('malformed claims: {!r}'.format(text))

        raise vi.ParameterError('malformed claims: {!r}'.format(text))

    return utils.parse_numbers(text), None

def _problem_args(args):
    '''(estate, claims, creditors, rule) from either --problem or --estate/--claims
    '''

    if getattr(args, 'problem', None):
        with open(args.problem, 'r', encoding='utf-8') as fh:
            doc = json.load(fh)

        estate, claims, creditors, rule = bankruptcy.problem_from_dict(doc)
        return estate, claims, creditors, args.rule or rule

    if args.estate is None or args.claims is None:
        raise vi.ParameterError('give --estate and --claims, or a problem file')

    claims, creditors = _claims(args.claims)
    return args.estate, claims, creditors, getattr(args, 'rule', None) or 'talmud'

def cmd_allocate(args):
    estate, claims, creditors, rule = _problem_args(args)
    result = pipeline.allocate(estate, claims, rule, creditors)
    payout = result.payout
    shares = None
    if args.budget is not None:
        shares, residual = pipeline.pay_budget(payout.payouts, max(estate, 0.0), args.budget)

    if args.json:
        doc = payout.to_dict()
        doc['normalization'] = result.log.to_dict()
        doc['beneficial'] = result.beneficial
        if shares is not None:
            doc['budget'] = args.budget
            doc['budget_shares'] = shares
            doc['budget_residual'] = residual

        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0

    print(' '.join(_fmt(p) for p in payout.payouts))
    if shares is not None:
        print(' '.join(_fmt(s) for s in shares))

    for note in result.log.notes:
        logger.info(note)

    return 0

def cmd_shapley(args):
    talmud, surplus = None, 0.0
    if args.game:
        with open(args.game, 'r', encoding='utf-8') as fh:
            game = coalitional.CoalitionalGame.from_dict(json.load(fh))
    else:
        estate, claims, creditors, _ = _problem_args(args)
        if creditors is None:
            creditors = [str(i + 1) for i in range(len(claims))]

        problem, log = bankruptcy.normalize_problem(estate, claims, creditors)
        # both columns divide the canonical estate, so any surplus is left out of the game
        game = coalitional.bankruptcy_game(problem)
        talmud = bankruptcy.divide_talmud(problem).payouts
        surplus = log.surplus
        if surplus > 0:
            logger.warning('estate exceeds the total claim; surplus %s is not part of the game', _fmt(surplus))

    phi = coalitional.shapley_exact(game)
    if args.json:
        doc = {'players': list(game.players), 'shapley': [float(x) for x in phi]}
        if talmud is not None:
            doc['talmud'] = list(talmud)
            doc['estate'] = game.grand
            doc['surplus'] = surplus

        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0

    headers = ['Player', 'Shapley']
    rows = [[p, x] for p, x in zip(game.players, phi)]
    if talmud is not None:
        headers.append('Talmud')
        rows = [r + [t] for r, t in zip(rows, talmud)]

    print(tabulate(rows, headers=headers, tablefmt='simple', floatfmt='.{}f'.format(vi.decimals)))
    return 0

def cmd_run(args):
    config = pipeline.load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed

    if args.workers is not None:
        config.workers = args.workers

    report = pipeline.run_experiment(config)
    for path in pipeline.write_reports(report, args.out):
        logger.info('wrote %s', path)

    sys.stdout.write(pipeline.emit_report(report, 'markdown'))
    return 0

def cmd_generate(args):
    table = data.generate_synthetic(args.samples, args.features, args.informative, args.noise, args.seed)
    text = table.frame.to_csv(index=False)
    if args.out is None or args.out == '-':
        sys.stdout.write(text)
    else:
        utils.atomic_write(args.out, text)
        logger.info('wrote %d rows to %s', len(table), args.out)

    return 0

def build_parser():
    parser = argparse.ArgumentParser(prog='vflincentive',
        description='Incentive payouts for passive parties of a vertical federated learning federation')
    parser.add_argument('--version', action='version', version='%(prog)s ' + vi.__version__)
    parser.add_argument('-v', '--verbose', action='count', default=0, help='more logging (repeatable)')
    parser.add_argument('-q', '--quiet', action='store_true', help='errors only')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('allocate', help='divide an estate among claims')
    p.add_argument('--estate', type=float)
    p.add_argument('--claims', help="'33.98,35.27,28.43', a JSON list or a JSON object keyed by party")
    p.add_argument('--problem', help='JSON problem file: {"estate": ..., "claims": {...}, "rule": ...}')
    p.add_argument('--rule', choices=bankruptcy.RULES)
    p.add_argument('--budget', type=float, help='currency amount to split in proportion to payouts')
    p.add_argument('--json', action='store_true', help='full-precision JSON output')
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser('shapley', help='exact Shapley values of a game or of a bankruptcy problem')
    p.add_argument('--game', help='JSON game file: {"n": 3, "values": {"0": 0, ...}}')
    p.add_argument('--estate', type=float)
    p.add_argument('--claims')
    p.add_argument('--json', action='store_true')
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser('run', help='run an experiment and write reports')
    p.add_argument('--config', required=True, help='experiment config (JSON or YAML)')
    p.add_argument('--out', default='reports', help='report directory (default: reports)')
    p.add_argument('--seed', type=int, help='override the config seed')
    p.add_argument('--workers', type=int, help='parallel coalition training jobs')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('generate', help='write a synthetic classification dataset as CSV')
    p.add_argument('--samples', type=int, default=10000)
    p.add_argument('--features', type=int, default=20)
    p.add_argument('--informative', type=int)
    p.add_argument('--noise', type=float, default=0.5)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', help='output file (default: stdout)')
    p.set_defaults(func=cmd_generate)

    return parser

def _configure_logging(args):
    if args.quiet:
        level = logging.ERROR
    else:
        level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)

    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if type(err.code) is int else 2

    _configure_logging(args)
    try:
        return args.func(args)
    except vi.ParameterError as err:
        parser.print_usage(sys.stderr)
        print('vflincentive: error: {}'.format(err), file=sys.stderr)
        return 2
    except vi.IncentiveError as err:
        print('vflincentive: {}'.format(err), file=sys.stderr)
        return 1
    except (OSError, ValueError, yaml.YAMLError) as err:
        print('vflincentive: error: {}'.format(err), file=sys.stderr)
        return 2

if __name__ == '__main__':
    sys.exit(main())
