"""Parameter-dependent routing distributions, routing tables and their score functions.

A routing distribution gives, for one node, the probability p_r(theta) that a departing
customer moves to target node r. Two kinds are supported: constant probabilities, and
probabilities affine in theta (p_r = c_r + d_r*theta). The same distribution is applied at
every departure index of its node.

A routing table is the N x L matrix of realized next-node decisions: entry (n, k) is the
destination of the kth customer to leave node n. Tables are drawn up front, one routing
uniform per entry, by inverse-CDF over the targets in ascending order (u < CDF(r) selects r).

The likelihood of a table is the product of the per-decision probabilities, and its score
is the sum of per-decision d ln p / d theta.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from qnet_gradient.streams import Purpose

logger = logging.getLogger('qnet_gradient.routing')


class RoutingException(Exception):
    pass


class TargetNotInSupport(RoutingException):
    pass


class _RoutingDistribution(object):
    """Shared behaviour of the routing kinds; subclasses provide probabilities/slopes."""

    def _index(self, r):
        try:
            return self.targets.index(r)
        except ValueError:
            raise TargetNotInSupport(
                "Node {} is not a routing target (targets {})".format(r, list(self.targets)))

    @property
    def support_size(self):
        return len(self.targets)

    def pmf(self, theta, r):
        return float(self.probabilities(theta)[self._index(r)])

    def score(self, theta, r):
        index = self._index(r)
        slope = self.slopes()[index]
        if slope == 0.0:
            return 0.0
        return float(slope / self.probabilities(theta)[index])

    def sample(self, theta, u):
        if len(self.targets) == 1:
            return self.targets[0]
        cumulative = np.cumsum(self.probabilities(theta))
        index = int(np.searchsorted(cumulative, u, side='right'))
        # rounding may leave the last cumulative value just below u
        return self.targets[min(index, len(self.targets) - 1)]


@dataclass(frozen=True)
class ConstantRouting(_RoutingDistribution):
    """Parameter-independent probabilities; the score is identically zero."""

    targets: tuple
    probs: tuple

    kind = 'constant'

    def probabilities(self, theta):
        return np.asarray(self.probs, dtype=float)

    def slopes(self):
        return np.zeros(len(self.targets))

    def to_dict(self):
        return {'kind': self.kind, 'targets': list(self.targets), 'probs': list(self.probs)}


@dataclass(frozen=True)
class AffineRouting(_RoutingDistribution):
    """p_r(theta) = const_r + slope_r * theta."""

    targets: tuple
    const: tuple
    slope: tuple

    kind = 'affine'

    def probabilities(self, theta):
        return np.asarray(self.const, dtype=float) + np.asarray(self.slope, dtype=float) * theta

    def slopes(self):
        return np.asarray(self.slope, dtype=float)

    def to_dict(self):
        return {'kind': self.kind, 'targets': list(self.targets),
                'const': list(self.const), 'slope': list(self.slope)}


_KIND_KEYS = {
    ConstantRouting.kind: (ConstantRouting, ('targets', 'probs')),
    AffineRouting.kind: (AffineRouting, ('targets', 'const', 'slope')),
}


def routing_distribution_from_dict(doc):
    """Build a routing distribution from its JSON form.

    Raises ValueError for unknown kinds, unknown or missing keys, and mismatched lengths.
    Target ranges and probability validity are checked by the network validator.
    """
    if not isinstance(doc, dict) or 'kind' not in doc:
        raise ValueError("Routing entry must be an object with a 'kind' key")
    name = doc['kind']
    if name not in _KIND_KEYS:
        raise ValueError("Unknown routing kind '{}'".format(name))
    cls, keys = _KIND_KEYS[name]
    present = set(doc) - {'kind'}
    if present != set(keys):
        raise ValueError("Routing kind '{}' takes keys {}, got {}".format(
            name, list(keys), sorted(present)))
    fields = {}
    for key in keys:
        values = doc[key]
        if not isinstance(values, list) or not values:
            raise ValueError("Routing '{}' must be a non-empty list".format(key))
        for value in values:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError("Routing '{}' entries must be numbers".format(key))
        if key == 'targets':
            if any(int(value) != value for value in values):
                raise ValueError("Routing targets must be integers")
            fields[key] = tuple(int(value) for value in values)
        else:
            fields[key] = tuple(float(value) for value in values)
    if len({len(values) for values in fields.values()}) != 1:
        raise ValueError("Routing lists must all have the same length")
    return cls(**fields)


def routing_pmf(dist, theta, r):
    """Probability that a departure is routed to node r.

    :param dist: routing distribution
    :param theta: parameter value
    :param r: target node index
    """
    return dist.pmf(theta, r)


def routing_score(dist, theta, r):
    """Return d ln p_r(theta) / d theta; zero for constant distributions."""
    return dist.score(theta, r)


def sample_route(dist, theta, u):
    """Inverse-CDF draw of the next node from uniform u (u < CDF(r) selects r)."""
    return dist.sample(theta, u)


class RoutingTable(object):
    """Realized N x L matrix of next-node decisions; entry(n, k) is 1-based in both indices."""

    __slots__ = ('entries',)

    def __init__(self, entries):
        """Create a table from a sequence of rows, one per node.

        :param entries: rows of node indices, row n-1 holding r_n^1..r_n^L
        """
        self.entries = tuple(tuple(int(route) for route in row) for row in entries)

    @property
    def nodes(self):
        return len(self.entries)

    @property
    def horizon(self):
        return len(self.entries[0]) if self.entries else 0

    def entry(self, n, k):
        return self.entries[n - 1][k - 1]

    def row(self, n):
        return self.entries[n - 1]

    def with_entry(self, n, k, route):
        """Return a copy with entry (n, k) replaced."""
        rows = [list(row) for row in self.entries]
        rows[n - 1][k - 1] = route
        return RoutingTable(rows)

    def differs_from(self, other, counts=None):
        """True if the tables differ on any entry within the given per-node decision counts."""
        for n in range(1, self.nodes + 1):
            limit = self.horizon if counts is None else counts[n - 1]
            if self.row(n)[:limit] != other.row(n)[:limit]:
                return True
        return False

    def __eq__(self, other):
        if not isinstance(other, RoutingTable):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return 'RoutingTable({!r})'.format([list(row) for row in self.entries])


def sample_routing_table(net, theta, stream):
    """Draw the full N x L routing table from the routing substreams of a replication.

    Nodes with a single routing target consume no uniforms.

    :param net: validated network
    :param theta: parameter value
    :param stream: RandomStream of the replication
    """
    rows = []
    for node in net.nodes:
        dist = node.routing
        if dist.support_size == 1:
            rows.append((dist.targets[0],) * net.horizon_L)
            continue
        uniforms = stream.uniforms(node.id, Purpose.ROUTING, net.horizon_L)
        rows.append(tuple(dist.sample(theta, u) for u in uniforms))
    table = RoutingTable(rows)
    logger.debug("Drew routing table %r at theta=%s", table, theta)
    return table


def _decision_counts(net, counts):
    if counts is None:
        return [net.horizon_L] * len(net.nodes)
    return list(counts)


def table_score(net, theta, table, counts=None):
    """Sum of per-decision routing scores over the first counts[n] decisions of each node.

    With counts omitted every node contributes all L decisions, which is the exact score
    of the truncated table.

    :param net: validated network
    :param theta: parameter value
    :param table: RoutingTable
    :param counts: per-node decision counts, or None for the full horizon
    """
    total = 0.0
    for node, count in zip(net.nodes, _decision_counts(net, counts)):
        dist = node.routing
        if not np.any(dist.slopes()):
            continue
        for route in table.row(node.id)[:count]:
            total += dist.score(theta, route)
    return total


def table_likelihood(net, theta, table):
    """Probability of the whole table as the direct product of its decision probabilities."""
    product = 1.0
    for node in net.nodes:
        for route in table.row(node.id):
            product *= node.routing.pmf(theta, route)
    return product


def table_log_likelihood(net, theta, table):
    """Log-probability of the whole table as a sum of log-probabilities."""
    return math.fsum(math.log(node.routing.pmf(theta, route))
                     for node in net.nodes for route in table.row(node.id))
