import json
import pathlib

import numpy as np
import pandas as pd
import pytest

import vflincentive as vi
from vflincentive import pipeline
from vflincentive.pipeline import CoalitionScores, ExperimentConfig

TOL = 1e-9

def synthetic_config(**overrides):
    '''A quick synthetic experiment: 600 rows, the 20-feature partition, a few rounds
    '''

    doc = {
        'name': 'synthetic',
        'dataset': {'synthetic': {'samples': 600, 'features': 20, 'informative': 10, 'noise': 0.5}},
        'partition': 'synthetic',
        'training': {'learning_rate': 0.1, 'rounds': 5, 'batch_size': 64},
        'seed': 1,
    }
    doc.update(overrides)
    return doc

def scores_for(n, f1):
    '''CoalitionScores from a function of the coalition mask
    '''

    return CoalitionScores(['Ph{}'.format(i + 1) for i in range(n)], f1(0),
                           {m: f1(m) for m in range(1, 1 << n)})


class TestScores:

    def test_estate(self):
        s = CoalitionScores(['Ph1', 'Ph2'], 0.60, {1: 0.7, 2: 0.65, 3: 0.85})
        assert pipeline.compute_estate(s) == pytest.approx(25.0)

    def test_negative_estate_is_returned(self):
        s = CoalitionScores(['Ph1', 'Ph2'], 0.60, {1: 0.5, 2: 0.65, 3: 0.55})
        assert pipeline.compute_estate(s) == pytest.approx(-5.0)

    def test_claims(self):
        s = CoalitionScores(['Ph1', 'Ph2'], 0.60, {1: 0.80, 2: 0.75, 3: 0.9})
        assert pipeline.compute_claims(s) == pytest.approx([20, 15])

    def test_range(self):
        with pytest.raises(vi.ParameterError):
            CoalitionScores(['Ph1'], 0.5, {1: 1.2})

    def test_missing_coalition(self):
        s = CoalitionScores(['Ph1', 'Ph2'], 0.6, {1: 0.7, 3: 0.8})
        with pytest.raises(vi.ParameterError, match='coalition 2'):
            pipeline.compute_claims(s)

    def test_characteristic(self):
        s = scores_for(3, lambda m: 0.5 + 0.1 * bin(m).count('1'))
        # a stray entry for the empty coalition is ignored
        s.by_coalition[0] = 0.9
        g = pipeline.characteristic_from_scores(s)
        assert g.n == 3
        assert g.value(0) == 0
        assert g.grand == pytest.approx(pipeline.compute_estate(s))
        assert vi.coalitional.shapley_exact(g).sum() == pytest.approx(pipeline.compute_estate(s), abs=TOL)

    def test_characteristic_needs_every_coalition(self):
        s = CoalitionScores(['Ph1', 'Ph2'], 0.6, {1: 0.7, 3: 0.8})
        with pytest.raises(vi.ParameterError, match='coalition 2'):
            pipeline.characteristic_from_scores(s)


class TestAllocate:

    @pytest.mark.parametrize('estate,claims,expected', [
        (39.33, [33.98, 35.27, 28.43], [13.11, 13.11, 13.11]),
        (28.03, [27.85, 20.17, 15.84], [10.055, 10.055, 7.92]),
        (67.93, [3.04, 45.45, 35.89], [1.52, 37.985, 28.425]),
    ])
    def test_rows(self, estate, claims, expected):
        result = pipeline.allocate(estate, claims, 'talmud', ['Ph1', 'Ph2', 'Ph3'])
        assert result.payout.payouts == pytest.approx(expected, abs=0.01)
        assert result.beneficial

    def test_not_beneficial(self):
        result = pipeline.allocate(-3.0, [2.0, 1.0])
        assert not result.beneficial
        assert result.payout.payouts == (0, 0)
        assert result.payout.creditors == ('1', '2')

    def test_budget(self):
        shares = pipeline.budget_split([10.055, 10.055, 7.92], 28.03, 10000)
        assert shares == pytest.approx([3587.2, 3587.2, 2825.5], abs=0.1)

    def test_budget_zero(self):
        assert pipeline.budget_split([1, 2], 3, 0) == [0, 0]

    def test_budget_single_party(self):
        assert pipeline.budget_split([7.5], 7.5, 500) == pytest.approx([500])

    def test_budget_needs_estate(self):
        with pytest.raises(vi.ParameterError):
            pipeline.budget_split([0, 0], 0, 100)

    def test_pay_budget(self):
        shares, residual = pipeline.pay_budget([50, 75, 75], 200, 1000)
        assert shares == pytest.approx([250, 375, 375])
        assert residual == pytest.approx(0)

    def test_pay_budget_without_estate(self):
        assert pipeline.pay_budget([0, 0], 0, 100) == ([0.0, 0.0], 100)

    def test_pay_budget_negative(self):
        with pytest.raises(vi.ParameterError):
            pipeline.pay_budget([0, 0], 0, -1)


class TestConfig:

    def test_defaults(self):
        config = ExperimentConfig.from_dict(synthetic_config())
        assert config.rule == 'talmud'
        assert config.variant == {'kind': 'plain'}
        assert config.train_ratio == vi.train_ratio
        assert config.training.rounds == 5

    @pytest.mark.parametrize('override,match', [
        ({'rule': 'shapley'}, 'unknown rule'),
        ({'variant': {'kind': 'copy'}}, 'unknown variant'),
        ({'variant': {'kind': 'dummy'}}, 'party'),
        ({'dataset': {'path': 'x.csv'}}, 'dataset'),
        ({'dataset': {'csv': 'x.csv'}}, 'label'),
        ({'training': {'seed': 3}}, 'experiment seed'),
        ({'training': {'epochs': 3}}, 'epochs'),
        ({'colour': 'blue'}, 'colour'),
        ({'budget': -1}, 'budget'),
    ])
    def test_invalid(self, override, match):
        with pytest.raises(vi.ConfigError, match=match):
            ExperimentConfig.from_dict(synthetic_config(**override))

    def test_load_yaml(self, tmp_path):
        path = tmp_path / 'exp.yaml'
        path.write_text('name: y\ndataset:\n  synthetic: {samples: 100}\npartition: synthetic\nvariant: plain\n')
        config = pipeline.load_config(path)
        assert config.name == 'y'
        assert config.variant == {'kind': 'plain'}

    def test_load_json(self, tmp_path):
        path = tmp_path / 'exp.json'
        path.write_text(json.dumps(synthetic_config()))
        assert pipeline.load_config(path).seed == 1

    def test_load_missing(self, tmp_path):
        with pytest.raises(vi.ConfigError, match='cannot read'):
            pipeline.load_config(tmp_path / 'missing.json')

    def test_shipped_configs(self):
        folder = pathlib.Path(__file__).resolve().parent.parent / 'configs'
        paths = sorted(folder.glob('*.*'))
        assert paths
        for path in paths:
            config = pipeline.load_config(path)
            if 'csv' in config.dataset:
                # the CSV is not shipped, so the header comment has to name it
                header = [line for line in path.read_text().splitlines() if line.startswith('#')]
                assert any(config.dataset['csv'] in line for line in header), path


class TestExperiment:

    def test_plain(self):
        report = pipeline.run_experiment(synthetic_config())
        assert report.creditors == ['Ph1', 'Ph2', 'Ph3']
        assert len(report.claims) == 3
        assert report.estate > 0
        assert sum(report.payouts) == pytest.approx(report.clamped_estate - report.undistributed, abs=TOL)
        assert sum(report.percentages) == pytest.approx(100 * (1 - report.undistributed / report.estate))
        assert report.shapley is None
        # local model, three singletons, the grand coalition
        assert report.models_trained == 5
        assert report.rows == {'train': 420, 'test': 180}

    def test_payout_path_trains_n_plus_two(self):
        config = ExperimentConfig.from_dict(synthetic_config())
        train, test = self.split(config)
        trainer = pipeline.CoalitionTrainer(train, test, config.training)
        trainer.coalition_scores()
        assert trainer.trained == 5
        trainer.coalition_scores(everything=True)
        assert trainer.trained == 8
        assert trainer.hits == 5
        trainer.coalition_scores()
        assert trainer.trained == 8

    def test_parallel_training_matches(self):
        config = ExperimentConfig.from_dict(synthetic_config())
        train, test = self.split(config)
        serial = pipeline.CoalitionTrainer(train, test, config.training).coalition_scores(everything=True)
        parallel = pipeline.CoalitionTrainer(train, test, config.training, workers=4).coalition_scores(everything=True)
        assert serial.by_coalition == parallel.by_coalition
        assert serial.baseline == parallel.baseline

    def split(self, config):
        table = vi.data.preprocess(vi.data.generate_synthetic(600, 20, 10, seed=config.seed))
        parties = vi.data.vertical_partition(table, vi.data.partition_spec('synthetic'))
        train, test = vi.data.train_test_split(parties, config.train_ratio, config.seed)
        return vi.data.standardize(train, test)

    def test_shapley(self):
        report = pipeline.run_experiment(synthetic_config(shapley=True))
        assert report.models_trained == 8
        assert sum(report.shapley) == pytest.approx(report.estate, abs=TOL)
        assert len(report.coalition_f1) == 7

    def test_budget(self):
        report = pipeline.run_experiment(synthetic_config(budget=10000))
        assert report.budget_shares == pytest.approx([10000 * p / report.estate for p in report.payouts])
        assert report.budget_residual == pytest.approx(10000 - sum(report.budget_shares))

    def test_deterministic(self):
        a = pipeline.emit_report(pipeline.run_experiment(synthetic_config(shapley=True)), 'json')
        b = pipeline.emit_report(pipeline.run_experiment(synthetic_config(shapley=True)), 'json')
        assert a == b

    def test_seed_matters(self):
        a = pipeline.run_experiment(synthetic_config())
        b = pipeline.run_experiment(synthetic_config(seed=2))
        assert a.coalition_f1 != b.coalition_f1

    def test_dummy(self):
        report = pipeline.run_experiment(synthetic_config(
            variant={'kind': 'dummy', 'party': 'Ph1'}, shapley=True))
        i = report.creditors.index('Ph1')
        assert report.description == 'synthetic (dummy Ph1)'
        warned = any(w.startswith('randomized party Ph1') for w in report.warnings)
        assert warned == (abs(report.claims[i]) > vi.dummy_claim_threshold)
        assert sum(report.shapley) == pytest.approx(report.estate, abs=TOL)

    def test_dummy_beside_a_perfect_local_model(self, tmp_path):
        # the active party's feature alone separates the classes, so no coalition can beat
        # its local F1 of 1.0 and the randomized party's claim is at most 0
        rng = np.random.default_rng(3)
        rows = 120
        y = np.arange(rows) % 2
        frame = {'x': np.where(y == 1, 3.0, -3.0), 'n1': rng.normal(size=rows),
                 'n2': rng.normal(size=rows), 'z': rng.normal(size=rows), 'y': y}
        path = tmp_path / 'separable.csv'
        pd.DataFrame(frame).to_csv(path, index=False)

        report = pipeline.run_experiment({
            'name': 'separable',
            'dataset': {'csv': str(path), 'label': 'y'},
            'partition': {'active': 'Pa', 'label': 'y', 'parties': {'Pa': ['x'], 'Ph1': ['n1', 'n2'], 'Ph2': ['z']}},
            'training': {'learning_rate': 0.5, 'rounds': 100, 'batch_size': 200},
            'variant': {'kind': 'dummy', 'party': 'Ph1'},
            'seed': 4,
        })
        i = report.creditors.index('Ph1')
        assert report.baseline_f1 == 1.0
        assert report.claims[i] <= 0
        assert report.payouts[i] == 0
        assert 'Ph1' in report.normalization['clamped_claims']

    def test_symmetry(self):
        report = pipeline.run_experiment(synthetic_config(
            variant={'kind': 'symmetry', 'source': 'Ph2', 'target': 'Ph3'}, shapley=True))
        i, j = report.creditors.index('Ph2'), report.creditors.index('Ph3')
        assert report.claims[i] == report.claims[j]
        assert report.payouts[i] == report.payouts[j]
        assert report.shapley[i] == report.shapley[j]

    def test_unknown_variant_party(self):
        with pytest.raises(vi.ExperimentError) as err:
            pipeline.run_experiment(synthetic_config(variant={'kind': 'dummy', 'party': 'Ph9'}))

        assert err.value.stage == 'variant'
        assert str(err.value).startswith('[variant]')

    def test_stage_of_data_errors(self, tmp_path):
        config = synthetic_config(dataset={'csv': str(tmp_path / 'none.csv'), 'label': 'y'})
        with pytest.raises(vi.ExperimentError, match=r'^\[load\]'):
            pipeline.run_experiment(config)


class TestReports:

    @pytest.fixture(scope='class')
    def report(self):
        return pipeline.run_experiment(synthetic_config(shapley=True, budget=10000))

    def test_markdown(self, report):
        doc = pipeline.emit_report(report, 'markdown')
        header = doc.splitlines()[0]
        cells = [c.strip() for c in header.strip('|').split('|')]
        assert cells[:3] == ['Description', 'Estate', 'Claim Ph1']
        assert cells[-1] == 'Shapley Ph3'
        assert '{:.2f}'.format(report.estate) in doc
        assert 'Budget' in doc

    def test_without_shapley(self):
        report = pipeline.run_experiment(synthetic_config())
        assert 'Shapley' not in pipeline.emit_report(report, 'csv')

    def test_csv(self, report):
        lines = pipeline.emit_report(report, 'csv').splitlines()
        assert len(lines) == 2
        assert lines[0].split(',')[:2] == ['Description', 'Estate']
        assert lines[1].split(',')[1] == '{:.2f}'.format(report.estate)

    def test_json_round_trip(self, report):
        doc = json.loads(pipeline.emit_report(report, 'json'))
        assert pipeline.AllocationReport.from_dict(doc) == report

    def test_unknown_format(self, report):
        with pytest.raises(vi.ParameterError):
            pipeline.emit_report(report, 'xml')

    def test_write(self, report, tmp_path):
        paths = pipeline.write_reports(report, tmp_path / 'out')
        assert sorted(p.rsplit('.', 1)[1] for p in paths) == ['csv', 'json', 'md']
        for p in paths:
            with open(p) as fh:
                assert fh.read() == pipeline.emit_report(report, {'md': 'markdown'}.get(p.rsplit('.', 1)[1], p.rsplit('.', 1)[1]))

        assert not [f for f in (tmp_path / 'out').iterdir() if f.name.endswith('.tmp')]
