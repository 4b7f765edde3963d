"""
Tests for the event-driven network simulator and the trajectory conformance check.

To Test:
    - [x] Hand-traced deterministic cycle and self-loop
    - [x] Starvation and horizon errors
    - [x] Simulated trajectories satisfy the node recursions
    - [x] Perturbed departures and routes are detected
    - [x] Same seed gives the same trajectory
    - [x] Departure derivatives agree with central differences
    - [x] Completion listener and CSV dump
"""

import sys
import pytest

import io
from unittest.mock import Mock, patch

from qnet_gradient.network import NetworkSpec, NodeSpec, ParameterDomain, validate_network
from qnet_gradient.routing import AffineRouting, ConstantRouting, RoutingTable
from qnet_gradient.services import Deterministic, ExponentialScale, ShiftedUniform
from qnet_gradient.simulator import (HorizonExceeded, SimulationException, Starvation,
                                     TRAJECTORY_COLUMNS, simulate_network,
                                     trajectory_satisfies_recursions, write_trajectory_csv)
from qnet_gradient.streams import RandomStream
from qnet_gradient.tangent import Tangent


def build_network(nodes, horizon, tagged, completions, domain=(0.1, 0.9)):
    specs = tuple(NodeSpec(id=position, initial_customers=initial, service=service,
                           routing=routing)
                  for position, (initial, service, routing) in enumerate(nodes, start=1))
    return validate_network(NetworkSpec(nodes=specs, horizon_L=horizon,
                                        theta_domain=ParameterDomain(*domain),
                                        tagged_node=tagged, completions_K=completions))


def three_node_network(first_routing):
    return build_network([
        (2, ShiftedUniform(offset=0.5, theta_slope=1.0, width=1.0), first_routing),
        (1, ExponentialScale(), ConstantRouting(targets=(1, 3), probs=(0.5, 0.5))),
        (0, ShiftedUniform(offset=0.6, theta_slope=-0.5, width=1.0),
         ConstantRouting(targets=(1,), probs=(1.0,))),
    ], horizon=30, tagged=1, completions=10)


class simulator_test_fixture(object):

    def __init__(self):
        self.cycle = build_network([
            (1, Deterministic(constant=1.0), ConstantRouting(targets=(2,), probs=(1.0,))),
            (0, Deterministic(constant=2.0), ConstantRouting(targets=(1,), probs=(1.0,))),
        ], horizon=3, tagged=1, completions=2)
        self.self_loop = build_network([
            (1, Deterministic(constant=1.5), ConstantRouting(targets=(1,), probs=(1.0,))),
        ], horizon=4, tagged=1, completions=4)
        self.constant_routing = three_node_network(
            ConstantRouting(targets=(2, 3), probs=(0.6, 0.4)))
        self.affine_routing = three_node_network(
            AffineRouting(targets=(2, 3), const=(0.5, 0.5), slope=(0.3, -0.3)))


@pytest.fixture(scope="class")
def test_simulator():
    test_fixture = simulator_test_fixture()
    yield test_fixture


class TestHandTraces():

    def test_deterministic_cycle(self, test_simulator):
        traj, table = simulate_network(test_simulator.cycle, 0.5, RandomStream(0))
        assert [d.value for d in traj.node(1).departures] == [1.0, 4.0]
        assert [d.value for d in traj.node(2).departures] == [3.0]
        assert (traj.stop_node, traj.stop_count) == (1, 2)
        assert traj.decision_counts() == [1, 1]
        assert table == RoutingTable([[2, 2, 2], [1, 1, 1]])

    def test_self_loop(self, test_simulator):
        traj, _ = simulate_network(test_simulator.self_loop, 0.5, RandomStream(0))
        assert [d.value for d in traj.node(1).departures] == [1.5, 3.0, 4.5, 6.0]
        assert all(d.deriv == 0.0 for d in traj.node(1).departures)

    def test_unreachable_tagged_node(self):
        net = build_network([
            (1, Deterministic(constant=1.0), ConstantRouting(targets=(1,), probs=(1.0,))),
            (0, Deterministic(constant=1.0), ConstantRouting(targets=(1, 2), probs=(0.5, 0.5))),
        ], horizon=3, tagged=2, completions=1)
        with pytest.raises(Starvation, match=".*cannot be reached.*"):
            simulate_network(net, 0.5, RandomStream(0))

    def test_horizon_exceeded(self):
        net = build_network([
            (1, Deterministic(constant=1.0), ConstantRouting(targets=(1, 2), probs=(0.5, 0.5))),
            (0, Deterministic(constant=1.0), ConstantRouting(targets=(1,), probs=(1.0,))),
        ], horizon=2, tagged=2, completions=1)
        # every departure of node 1 feeds back to node 1, so node 2 never completes
        with pytest.raises(HorizonExceeded, match=".*beyond horizon L=2.*"):
            simulate_network(net, 0.5, RandomStream(0), table=RoutingTable([[1, 1], [1, 1]]))

    def test_theta_outside_domain(self, test_simulator):
        with pytest.raises(SimulationException, match=".*outside the domain.*"):
            simulate_network(test_simulator.constant_routing, 0.95, RandomStream(0))


class TestConformance():

    @pytest.mark.parametrize("net_name", ['constant_routing', 'affine_routing'])
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_simulated_trajectories_conform(self, test_simulator, net_name, seed):
        net = getattr(test_simulator, net_name)
        for theta in (0.1, 0.45, 0.9):
            traj, table = simulate_network(net, theta, RandomStream(seed))
            assert trajectory_satisfies_recursions(traj, net, table)
            for trace in traj.nodes:
                values = [d.value for d in trace.departures]
                assert values == sorted(values)

    def test_perturbed_departure_detected(self, test_simulator):
        net = test_simulator.constant_routing
        traj, table = simulate_network(net, 0.5, RandomStream(7))
        trace = traj.node(1)
        trace.departures[1] = trace.departures[1] + 0.1
        assert not trajectory_satisfies_recursions(traj, net, table)

    def test_swapped_route_detected(self, test_simulator):
        net = test_simulator.constant_routing
        traj, table = simulate_network(net, 0.5, RandomStream(7))
        first = table.entry(1, 1)
        swapped = table.with_entry(1, 1, 3 if first == 2 else 2)
        assert not trajectory_satisfies_recursions(traj, net, swapped)

    def test_violation_logged(self, test_simulator):
        net = test_simulator.cycle
        traj, table = simulate_network(net, 0.5, RandomStream(0))
        traj.node(2).departures[0] = Tangent(2.5, 0.0)
        with patch('qnet_gradient.simulator.logger') as logger:
            assert not trajectory_satisfies_recursions(traj, net, table)
            logger.warning.assert_called_once()


class TestReplications():

    def test_same_seed_same_trajectory(self, test_simulator):
        net = test_simulator.affine_routing
        first, first_table = simulate_network(net, 0.3, RandomStream(42, 5))
        second, second_table = simulate_network(net, 0.3, RandomStream(42, 5))
        assert first_table == second_table
        for a, b in zip(first.nodes, second.nodes):
            assert a.departures == b.departures
            assert a.routes == b.routes

    @pytest.mark.parametrize("seed", range(10))
    def test_derivatives_match_central_difference(self, test_simulator, seed):
        net = test_simulator.constant_routing
        theta, step = 0.5, 1e-5
        centre, _ = simulate_network(net, theta, RandomStream(seed))
        plus, _ = simulate_network(net, theta + step, RandomStream(seed))
        minus, _ = simulate_network(net, theta - step, RandomStream(seed))
        for d, d_plus, d_minus in zip(centre.node(1).departures, plus.node(1).departures,
                                      minus.node(1).departures):
            assert d.deriv == pytest.approx((d_plus.value - d_minus.value) / (2 * step),
                                            abs=1e-6)

    def test_completion_listener(self, test_simulator):
        listener = Mock()
        traj, _ = simulate_network(test_simulator.cycle, 0.5, RandomStream(0),
                                   on_completion=listener)
        assert listener.call_count == 3
        node, k, service, departure, route, server_free = listener.call_args_list[0][0]
        assert (node, k, route, server_free) == (1, 1, 2, True)
        assert departure == Tangent(1.0, 0.0)
        assert listener.call_args_list[-1][0][4:] == (None, None)

    def test_csv_dump(self, test_simulator):
        traj, _ = simulate_network(test_simulator.cycle, 0.5, RandomStream(0))
        out = io.StringIO()
        write_trajectory_csv(traj, out)
        assert out.getvalue().splitlines() == [
            ','.join(TRAJECTORY_COLUMNS),
            '1,1,A,0.0,0.0,',
            '1,2,A,3.0,0.0,',
            '1,1,D,1.0,0.0,2',
            # the stopping departure has no route
            '1,2,D,4.0,0.0,',
            '2,1,A,1.0,0.0,',
            '2,1,D,3.0,0.0,1',
        ]
