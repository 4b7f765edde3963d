"""Event-driven simulation of a closed network of single-server FIFO nodes.

At time zero every node holding customers starts serving its head customer. When the kth
customer leaves node i it moves instantly to node r = R[i, k] of the routing table and starts
service there at once if that server is idle. The run stops at the Kth service completion at
the tagged node.

Every timestamp is a Tangent. A service that starts at node n for its kth customer ends at

    D^k = (A^k v D^{k-1}) + tau^k

so the trajectory satisfies the single-node recursion by construction; the arrival
composition across nodes follows from the routing. Events with equal times are taken in
(time, node, departure index) order.

The optional completion listener is called at every service completion with
(node, k, service, departure, route, server_free); route and server_free are None for the
final completion that stops the run.
"""

import csv
from dataclasses import dataclass
import heapq
import logging

from qnet_gradient.recursions import (RecursionException, compose_arrivals, gg1_departures,
                                      kth_arrival_from_departures)
from qnet_gradient.routing import sample_routing_table
from qnet_gradient.streams import Purpose
from qnet_gradient.tangent import Tangent, TieCounter, tmax

logger = logging.getLogger('qnet_gradient.simulator')


class SimulationException(Exception):
    pass


class Starvation(SimulationException):
    pass


class HorizonExceeded(SimulationException):
    pass


class NodeTrace(object):
    """Timestamps of one node.

    arrivals includes the K_n zero tangents of the initial customers; sources holds the
    (node, departure index) each real arrival came from, in arrival order.
    """

    def __init__(self, node_id):
        self.node_id = node_id
        self.arrivals = []
        self.departures = []
        self.services = []
        self.routes = []
        self.sources = []


@dataclass
class Trajectory(object):
    nodes: tuple
    stop_node: int
    stop_count: int
    ties: int = 0

    def node(self, n):
        return self.nodes[n - 1]

    def decision_counts(self):
        """Number of routing decisions realized at each node."""
        return [len(trace.routes) for trace in self.nodes]


def _reachable_from_population(net):
    reached = {node.id for node in net.nodes if node.initial_customers > 0}
    frontier = list(reached)
    while frontier:
        current = net.node(frontier.pop())
        for target in current.routing.targets:
            if target not in reached:
                reached.add(target)
                frontier.append(target)
    return reached


def simulate_network(net, theta, stream, table=None, on_completion=None):
    """Simulate one replication up to the Kth completion at the tagged node.

    :param net: validated network
    :param theta: parameter value inside the network's theta domain
    :param stream: RandomStream (or any object with the same uniform() method)
    :param table: routing table to follow; drawn from the stream when None
    :param on_completion: optional listener called at every service completion
    :return: (Trajectory, RoutingTable)
    """
    if not net.theta_domain.contains(theta):
        raise SimulationException("theta={} outside the domain [{}, {}]".format(
            theta, net.theta_domain.lo, net.theta_domain.hi))
    if net.tagged_node not in _reachable_from_population(net):
        raise Starvation("Tagged node {} cannot be reached by any customer".format(
            net.tagged_node))
    if table is None:
        table = sample_routing_table(net, theta, stream)

    ties = TieCounter()
    traces = tuple(NodeTrace(node.id) for node in net.nodes)
    waiting = [node.initial_customers for node in net.nodes]
    busy = [False] * len(net.nodes)
    last_departure = [Tangent.zero()] * len(net.nodes)
    pending = {}
    events = []

    def start_service(n):
        trace = traces[n - 1]
        family = net.node(n).service
        k = len(trace.services) + 1
        u = stream.uniform(n, Purpose.SERVICE, k) if family.consumes_uniform else None
        service = family.sample(theta, u)
        departure = tmax(trace.arrivals[k - 1], last_departure[n - 1], ties) + service
        trace.services.append(service)
        waiting[n - 1] -= 1
        busy[n - 1] = True
        pending[(n, k)] = departure
        heapq.heappush(events, (departure.value, n, k))
        logger.debug("Node %d starts customer %d, departs at %s", n, k, departure.value)

    for node in net.nodes:
        traces[node.id - 1].arrivals.extend(
            Tangent.zero() for _ in range(node.initial_customers))
        if node.initial_customers > 0:
            start_service(node.id)

    while events:
        _, i, k = heapq.heappop(events)
        departure = pending.pop((i, k))
        trace = traces[i - 1]
        trace.departures.append(departure)
        last_departure[i - 1] = departure
        busy[i - 1] = False
        service = trace.services[k - 1]

        if i == net.tagged_node and k == net.completions_K:
            if on_completion is not None:
                on_completion(i, k, service, departure, None, None)
            if ties.count:
                logger.debug("Replication recorded %d ties", ties.count)
            return Trajectory(nodes=traces, stop_node=i, stop_count=k, ties=ties.count), table

        if waiting[i - 1] > 0:
            start_service(i)
        if k > net.horizon_L:
            raise HorizonExceeded("Node {} needs routing decision {} beyond horizon L={}".format(
                i, k, net.horizon_L))
        route = table.entry(i, k)
        trace.routes.append(route)
        server_free = not busy[route - 1]
        if on_completion is not None:
            on_completion(i, k, service, departure, route, server_free)
        logger.debug("Customer %d leaves node %d for node %d", k, i, route)

        target = traces[route - 1]
        target.arrivals.append(departure)
        target.sources.append((i, k))
        waiting[route - 1] += 1
        if server_free:
            start_service(route)

    raise Starvation("Event list emptied before completion {} at node {}".format(
        net.completions_K, net.tagged_node))


def _routed_departures(traj, n):
    routed = []
    for trace in traj.nodes:
        for index, route in enumerate(trace.routes):
            if route == n:
                routed.append(trace.departures[index])
    return routed


def find_recursion_violation(traj, net, table):
    """Return a description of the first recursion violation, or None if conformant.

    Checks, per node, that departures are nondecreasing and follow the single-server
    recursion, that the realized routes are the table's, and that the real arrivals are the
    order statistics of the departures routed to the node.
    """
    for node in net.nodes:
        n = node.id
        trace = traj.node(n)
        count = len(trace.departures)
        if len(trace.arrivals) < count or len(trace.services) < count:
            return "node {}: {} departures but {} arrivals, {} services".format(
                n, count, len(trace.arrivals), len(trace.services))

        expected = gg1_departures(trace.arrivals[:count], trace.services[:count])
        for k, (wanted, seen) in enumerate(zip(expected, trace.departures), start=1):
            if wanted != seen:
                return "node {} departure {}: expected {}, observed {}".format(
                    n, k, wanted, seen)
            if seen.value < trace.arrivals[k - 1].value:
                return "node {} departure {} precedes its arrival".format(n, k)

        stops_here = n == traj.stop_node
        if len(trace.routes) != count - (1 if stops_here else 0):
            return "node {}: {} routes for {} departures".format(n, len(trace.routes), count)
        for k, route in enumerate(trace.routes, start=1):
            if route != table.entry(n, k):
                return "node {} route {}: expected {}, observed {}".format(
                    n, k, table.entry(n, k), route)

        routed = _routed_departures(traj, n)
        initial = node.initial_customers
        if len(trace.arrivals) != initial + len(routed):
            return "node {}: {} arrivals, expected {} initial and {} routed".format(
                n, len(trace.arrivals), initial, len(routed))
        for k, seen in enumerate(trace.arrivals, start=1):
            try:
                wanted = compose_arrivals(
                    lambda j: kth_arrival_from_departures(routed, j), initial, k)
            except RecursionException as error:
                return "node {} arrival {}: {}".format(n, k, error)
            if wanted != seen:
                return "node {} arrival {}: expected {}, observed {}".format(n, k, wanted, seen)
    return None


def trajectory_satisfies_recursions(traj, net, table):
    """True if the trajectory obeys the node recursions and the arrival composition.

    Never raises; the first violation found is logged.
    """
    violation = find_recursion_violation(traj, net, table)
    if violation is not None:
        logger.warning("Trajectory violates the recursions: %s", violation)
        return False
    return True


TRAJECTORY_COLUMNS = ('node', 'k', 'event', 'value', 'deriv', 'route')


def trajectory_rows(traj):
    """Flatten a trajectory into rows of TRAJECTORY_COLUMNS, node by node."""
    rows = []
    for trace in traj.nodes:
        for k, arrival in enumerate(trace.arrivals, start=1):
            rows.append((trace.node_id, k, 'A', arrival.value, arrival.deriv, ''))
        for k, departure in enumerate(trace.departures, start=1):
            route = trace.routes[k - 1] if k <= len(trace.routes) else ''
            rows.append((trace.node_id, k, 'D', departure.value, departure.deriv, route))
    return rows


def write_trajectory_csv(traj, out):
    """Write the trajectory dump to an open text file.

    :param traj: Trajectory
    :param out: writable text file object
    """
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(TRAJECTORY_COLUMNS)
    for row in trajectory_rows(traj):
        writer.writerow([repr(float(item)) if isinstance(item, float) else item
                         for item in row])
