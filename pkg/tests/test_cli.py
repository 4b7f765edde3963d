"""
Tests for the command-line front end.

To Test:
    - [x] toy, oracle, estimate and simulate commands write their records
    - [x] CSV header of estimate records
    - [x] Exit code 1 for invalid networks, estimator parameters and command lines
    - [x] Exit code 1 for negative seeds and nonpositive reps, grid or workers
    - [x] Exit code 1 for the toy criterion on a loaded network
    - [x] Exit code 2 for failures during a run
    - [x] Sweeps: one independently seeded record per grid point
    - [x] Identical configurations give byte-identical output
"""

import sys
import pytest

import json
from unittest.mock import patch

from qnet_gradient import cli
from qnet_gradient.network import network_spec_to_dict
from qnet_gradient.oracle import affine_feedback_network
from qnet_gradient.recursions import RecursionException

STARVING_DOC = {
    'nodes': [
        {'id': 1, 'initial_customers': 1,
         'service': {'family': 'deterministic', 'constant': 1.0},
         'routing': {'kind': 'constant', 'targets': [1], 'probs': [1.0]}},
        {'id': 2, 'initial_customers': 0,
         'service': {'family': 'deterministic', 'constant': 1.0},
         'routing': {'kind': 'constant', 'targets': [1], 'probs': [1.0]}},
    ],
    'horizon_L': 3,
    'theta_domain': [0.1, 0.9],
    'tagged_node': 2,
    'completions_K': 1,
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


class cli_test_fixture(object):

    def __init__(self):
        self.feedback_doc = network_spec_to_dict(affine_feedback_network())
        self.starving_doc = STARVING_DOC
        self.bad_doc = dict(self.feedback_doc, tagged_node=7)


@pytest.fixture(scope="class")
def test_cli():
    test_fixture = cli_test_fixture()
    yield test_fixture


class TestCommands():

    def test_toy_record(self, capsys):
        assert cli.main(['toy', '--theta', '0.5']) == 0
        records = json.loads(capsys.readouterr().out)
        assert records == [{'command': 'toy', 'theta': 0.5, 'EF': 1.5, 'dEF': 2.0,
                            'EdF': 1.0, 'EG': 2.0}]

    def test_naive_ipa_on_toy(self, capsys):
        assert cli.main(['estimate', '--estimator', 'naive-ipa', '--reps', '200',
                         '--seed', '1']) == 0
        record, = json.loads(capsys.readouterr().out)
        assert record['mean'] == 1.0
        assert record['estimator'] == 'naive-ipa'
        assert record['criterion'] == 'F'
        assert record['seed'] == 1
        assert len(record['spec_hash']) == 64

    def test_estimate_csv_header(self, capsys):
        assert cli.main(['estimate', '--reps', '20', '--output', 'csv']) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith('estimator,criterion,theta,reps,mean,variance,ci95,psi_mode,'
                                   'ties,seed')
        assert len(lines) == 2
        assert lines[1].startswith('lr-corrected,F,0.5,20,')

    def test_oracle_record(self, capsys):
        assert cli.main(['oracle', '--theta', '0.5', '--grid', '200']) == 0
        record, = json.loads(capsys.readouterr().out)
        assert record['command'] == 'oracle'
        assert record['EF'] == pytest.approx(1.5, abs=1e-4)
        assert record['EG'] == pytest.approx(2.0, abs=1e-6)
        assert record['tables'] == 2

    def test_config_defaults_to_utilization(self, test_cli, tmp_path, capsys):
        path = write_json(tmp_path / 'feedback.json', test_cli.feedback_doc)
        assert cli.main(['estimate', '--config', path, '--estimator', 'alg51',
                         '--reps', '20']) == 0
        record, = json.loads(capsys.readouterr().out)
        assert record['criterion'] == 'U'
        assert record['psi_mode'] == 'online'

    def test_simulate_csv(self, capsys):
        assert cli.main(['simulate', '--output', 'csv', '--seed', '3']) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == 'node,k,event,value,deriv,route'
        assert '2,1,A,0.0,0.0,' in lines

    def test_simulate_json(self, capsys):
        assert cli.main(['simulate', '--seed', '3']) == 0
        rows = json.loads(capsys.readouterr().out)
        assert set(rows[0]) == {'node', 'k', 'event', 'value', 'deriv', 'route'}


class TestExitCodes():

    def test_invalid_network(self, test_cli, tmp_path):
        path = write_json(tmp_path / 'bad.json', test_cli.bad_doc)
        with patch('qnet_gradient.cli.logger') as logger:
            assert cli.main(['estimate', '--config', path]) == 1
            logger.error.assert_called_once()

    def test_missing_config(self, tmp_path):
        assert cli.main(['estimate', '--config', str(tmp_path / 'absent.json')]) == 1

    def test_starvation(self, test_cli, tmp_path):
        path = write_json(tmp_path / 'starving.json', test_cli.starving_doc)
        assert cli.main(['simulate', '--config', path]) == 2
        assert cli.main(['estimate', '--config', path, '--reps', '5']) == 2

    @pytest.mark.parametrize(
        "argv",
        [
            ['estimate', '--reps', 'many'],
            ['estimate', '--estimator', 'bootstrap'],
            ['estimate', '--sweep', '0.1-0.9'],
            ['profile'],
            [],
        ]
    )
    def test_bad_arguments(self, argv):
        with pytest.raises(SystemExit) as exit_info:
            cli.main(argv)
        assert exit_info.value.code == 1

    @pytest.mark.parametrize(
        "argv",
        [
            ['estimate', '--seed', '-1', '--reps', '10'],
            ['estimate', '--reps', '0'],
            ['estimate', '--workers', '0'],
            ['oracle', '--grid', '0'],
            ['oracle', '--grid', '-3'],
        ]
    )
    def test_out_of_range_values(self, argv):
        with patch('qnet_gradient.cli.logger') as logger:
            assert cli.main(argv) == 1
            logger.error.assert_called_once()

    def test_toy_criterion_needs_toy(self, test_cli, tmp_path):
        path = write_json(tmp_path / 'feedback.json', test_cli.feedback_doc)
        with patch('qnet_gradient.cli.logger') as logger:
            assert cli.main(['estimate', '--config', path, '--criterion', 'F',
                             '--reps', '10']) == 1
            assert 'toy network only' in str(logger.error.call_args)

    def test_online_algorithm_needs_utilization(self, test_cli, tmp_path):
        path = write_json(tmp_path / 'feedback.json', test_cli.feedback_doc)
        assert cli.main(['estimate', '--config', path, '--estimator', 'alg51',
                         '--criterion', 'S']) == 1

    @pytest.mark.parametrize("sweep", ['0.0:0.9:3', '0.9:0.1:3', '0.1:0.9:0'])
    def test_bad_sweep(self, sweep):
        assert cli.main(['toy', '--sweep', sweep]) == 1

    def test_sweep_on_simulate(self):
        assert cli.main(['simulate', '--sweep', '0.1:0.9:3']) == 1

    def test_runtime_failure(self):
        with patch('qnet_gradient.cli.theta_sweep', side_effect=RecursionException('broken')):
            assert cli.main(['estimate']) == 2


class TestSweeps():

    def test_toy_sweep(self, capsys):
        assert cli.main(['toy', '--sweep', '0.1:0.9:9']) == 0
        records = json.loads(capsys.readouterr().out)
        assert [record['theta'] for record in records] == \
            pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
        for record in records:
            assert record['EF'] == pytest.approx(2.0 * record['theta'] + 0.5)

    def test_estimate_sweep_seeds(self, capsys):
        assert cli.main(['estimate', '--estimator', 'naive-ipa', '--reps', '10',
                         '--sweep', '0.2:0.8:4', '--seed', '5']) == 0
        records = json.loads(capsys.readouterr().out)
        assert len(records) == 4
        assert len({record['seed'] for record in records}) == 4
        assert all(record['mean'] == 1.0 for record in records)

    def test_byte_identical_reruns(self, tmp_path):
        outputs = []
        for name in ('first.csv', 'second.csv'):
            path = tmp_path / name
            assert cli.main(['estimate', '--reps', '50', '--seed', '7', '--sweep', '0.3:0.7:3',
                             '--output', 'csv', '--out', str(path)]) == 0
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]
        assert len(outputs[0].splitlines()) == 4
