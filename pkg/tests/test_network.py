"""
Tests for parsing, validating and enumerating network descriptions.

To Test:
    - [x] Feedback network document parses and validates
    - [x] Built-in toy network: one random routing decision, description round trip
    - [x] Each validation failure raises its own exception
    - [x] Validation is idempotent
    - [x] Routing-table enumeration size, order and cap
    - [x] Loading from file and the description hash
"""

import sys
import pytest

import copy
import json

from qnet_gradient.network import (EmptyPopulation, HorizonTooSmall, InvalidDomain,
                                   InvalidProbability, InvalidService, InvalidTopology,
                                   NetworkSpec, SpecFormatError, SupportTooLarge,
                                   ValidatedNetwork, enumerate_routing_tables,
                                   load_network_spec, network_spec_to_dict, parse_network_spec,
                                   spec_hash, validate_network)
from qnet_gradient.oracle import toy_network
from qnet_gradient.routing import AffineRouting, RoutingTable
from qnet_gradient.services import ShiftedUniform

FEEDBACK_DOC = {
    'nodes': [
        {'id': 1, 'initial_customers': 1,
         'service': {'family': 'shifted_uniform', 'offset': 1.0, 'theta_slope': 1.0,
                     'width': 1.0},
         'routing': {'kind': 'affine', 'targets': [1, 2], 'const': [0.0, 1.0],
                     'slope': [1.0, -1.0]}},
        {'id': 2, 'initial_customers': 0,
         'service': {'family': 'shifted_uniform', 'offset': 0.0, 'theta_slope': 1.0,
                     'width': 1.0},
         'routing': {'kind': 'constant', 'targets': [1], 'probs': [1.0]}},
    ],
    'horizon_L': 2,
    'theta_domain': [0.05, 0.95],
    'tagged_node': 1,
    'completions_K': 2,
}

DETERMINISTIC_CYCLE_DOC = {
    'nodes': [
        {'id': 1, 'initial_customers': 1,
         'service': {'family': 'deterministic', 'constant': 1.0},
         'routing': {'kind': 'constant', 'targets': [2], 'probs': [1.0]}},
        {'id': 2, 'initial_customers': 0,
         'service': {'family': 'deterministic', 'constant': 2.0},
         'routing': {'kind': 'constant', 'targets': [1], 'probs': [1.0]}},
    ],
    'horizon_L': 3,
    'theta_domain': [0.0, 1.0],
    'tagged_node': 1,
    'completions_K': 2,
}


def modified(doc, change):
    changed = copy.deepcopy(doc)
    change(changed)
    return changed


class network_test_fixture(object):

    def __init__(self):
        self.feedback_doc = FEEDBACK_DOC
        self.feedback = validate_network(parse_network_spec(FEEDBACK_DOC))
        self.cycle = validate_network(parse_network_spec(DETERMINISTIC_CYCLE_DOC))


@pytest.fixture(scope="class")
def test_network():
    test_fixture = network_test_fixture()
    yield test_fixture


class TestParseAndValidate():

    def test_feedback_document(self, test_network):
        net = test_network.feedback
        assert isinstance(net, ValidatedNetwork)
        assert net.population == 1
        assert net.node(1).service == ShiftedUniform(offset=1.0, theta_slope=1.0, width=1.0)
        assert net.node(1).routing == AffineRouting(targets=(1, 2), const=(0.0, 1.0),
                                                    slope=(1.0, -1.0))

    def test_idempotent(self, test_network):
        assert validate_network(test_network.feedback) == test_network.feedback

    def test_dict_round_trip(self, test_network):
        assert parse_network_spec(network_spec_to_dict(test_network.feedback)) == \
            NetworkSpec(**{name: getattr(test_network.feedback, name) for name in
                           ('nodes', 'horizon_L', 'theta_domain', 'tagged_node',
                            'completions_K')})

    def test_toy_network(self):
        net = toy_network()
        assert (len(net.nodes), net.population, net.horizon_L) == (3, 1, 1)
        assert (net.tagged_node, net.completions_K) == (3, 1)
        assert validate_network(parse_network_spec(network_spec_to_dict(net))) == net
        tables = enumerate_routing_tables(net)
        assert tables == [RoutingTable([[3], [1], [2]]), RoutingTable([[3], [3], [2]])]

    @pytest.mark.parametrize(
        "change, exception",
        [
            (lambda d: d['nodes'][1]['routing'].update(targets=[3]), InvalidTopology),
            (lambda d: d['nodes'][0]['routing'].update(targets=[2, 1]), InvalidTopology),
            (lambda d: d.update(tagged_node=3), InvalidTopology),
            (lambda d: d['nodes'][1].update(id=5), InvalidTopology),
            # p_1 = theta vanishes at the lower end of [0, 1]
            (lambda d: d.update(theta_domain=[0.0, 1.0]), InvalidProbability),
            (lambda d: d['nodes'][1]['routing'].update(probs=[0.9]), InvalidProbability),
            (lambda d: d['nodes'][0]['routing'].update(slope=[1.0, -0.5]), InvalidProbability),
            (lambda d: d['nodes'][0].update(initial_customers=0), EmptyPopulation),
            (lambda d: d.update(completions_K=3), HorizonTooSmall),
            (lambda d: d.update(theta_domain=[0.5, 0.5]), InvalidDomain),
            (lambda d: d.update(theta_domain=[0.05, float('inf')]), InvalidDomain),
            (lambda d: d['nodes'][1]['service'].update(offset=-0.5), InvalidService),
            (lambda d: d['nodes'][1]['service'].update(width=-1.0), InvalidService),
        ]
    )
    def test_invalid_networks(self, test_network, change, exception):
        spec = parse_network_spec(modified(test_network.feedback_doc, change))
        with pytest.raises(exception):
            validate_network(spec)

    def test_exponential_needs_positive_domain(self):
        doc = modified(DETERMINISTIC_CYCLE_DOC, lambda d: d['nodes'][1].update(
            service={'family': 'exponential_scale'}))
        with pytest.raises(InvalidService, match=".*positive mean.*"):
            validate_network(parse_network_spec(doc))

    def test_exponential_positive_domain(self, test_network):
        doc = modified(test_network.feedback_doc, lambda d: d['nodes'][1].update(
            service={'family': 'exponential_scale'}))
        doc['theta_domain'] = [0.1, 0.9]
        assert validate_network(parse_network_spec(doc)).node(2).service.family == \
            'exponential_scale'

    @pytest.mark.parametrize(
        "change",
        [
            lambda d: d.update(seed=3),
            lambda d: d['nodes'][0].update(capacity=2),
            lambda d: d['nodes'][0]['service'].update(shape=2.0),
            lambda d: d.pop('horizon_L'),
            lambda d: d.update(horizon_L=2.5),
            lambda d: d.update(nodes=[]),
            lambda d: d.update(theta_domain=[0.1]),
        ]
    )
    def test_format_errors(self, test_network, change):
        with pytest.raises(SpecFormatError):
            parse_network_spec(modified(test_network.feedback_doc, change))


class TestEnumerateTables():

    def test_feedback_table_count(self, test_network):
        assert len(enumerate_routing_tables(test_network.feedback)) == 4

    def test_deterministic_single_table(self, test_network):
        tables = enumerate_routing_tables(test_network.cycle)
        assert tables == [RoutingTable([[2, 2, 2], [1, 1, 1]])]

    def test_longer_horizon(self, test_network):
        doc = modified(test_network.feedback_doc, lambda d: d.update(horizon_L=3))
        assert len(enumerate_routing_tables(validate_network(parse_network_spec(doc)))) == 8

    def test_row_major_order(self, test_network):
        rows = [table.row(1) for table in enumerate_routing_tables(test_network.feedback)]
        assert rows == [(1, 1), (1, 2), (2, 1), (2, 2)]

    def test_cap(self, test_network):
        with pytest.raises(SupportTooLarge, match=".*exceed the cap.*"):
            enumerate_routing_tables(test_network.feedback, cap=3)


class TestLoadAndHash():

    def test_load_from_file(self, test_network, tmp_path):
        path = tmp_path / 'feedback.json'
        path.write_text(json.dumps(test_network.feedback_doc))
        assert validate_network(load_network_spec(str(path))) == test_network.feedback

    def test_bad_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"nodes": [')
        with pytest.raises(SpecFormatError, match=".*Could not decode.*"):
            load_network_spec(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecFormatError, match=".*Could not read.*"):
            load_network_spec(str(tmp_path / 'absent.json'))

    def test_hash_is_stable(self, test_network):
        digest = spec_hash(test_network.feedback)
        assert digest == spec_hash(validate_network(parse_network_spec(FEEDBACK_DOC)))
        assert len(digest) == 64
        assert digest != spec_hash(test_network.cycle)
