"""Static description of a closed queueing network with parameter-dependent inputs.

A network is a list of single-server FIFO nodes. Node n starts with K_n customers in its
buffer, serves them with times drawn from a service family, and sends each departing
customer to a next node drawn from its routing distribution. The description also fixes
the routing-table truncation horizon L, the parameter domain, and the stopping rule: the
Kth service completion at the tagged node.

Descriptions are read from a JSON document, for example:

    {"nodes": [{"id": 1, "initial_customers": 1,
                "service": {"family": "shifted_uniform", "offset": 1.0,
                            "theta_slope": 1.0, "width": 1.0},
                "routing": {"kind": "affine", "targets": [1, 2],
                            "const": [0.0, 1.0], "slope": [1.0, -1.0]}}, ...],
     "horizon_L": 50, "theta_domain": [0.05, 0.95], "tagged_node": 1, "completions_K": 20}

Unknown keys are rejected at every level. validate_network checks every invariant and seals
the description into an immutable ValidatedNetwork.
"""

from dataclasses import dataclass, fields
import hashlib
import itertools
import json
import logging
import math

from qnet_gradient.routing import RoutingTable, routing_distribution_from_dict
from qnet_gradient.services import service_family_from_dict

logger = logging.getLogger('qnet_gradient.network')

PROBABILITY_MARGIN = 1e-9
NORMALISATION_TOLERANCE = 1e-12
DEFAULT_TABLE_CAP = 10**6


class NetworkException(Exception):
    pass


class SpecFormatError(NetworkException):
    pass


class InvalidDomain(NetworkException):
    pass


class InvalidTopology(NetworkException):
    pass


class InvalidProbability(NetworkException):
    pass


class InvalidService(NetworkException):
    pass


class EmptyPopulation(NetworkException):
    pass


class HorizonTooSmall(NetworkException):
    pass


class SupportTooLarge(NetworkException):
    pass


@dataclass(frozen=True)
class ParameterDomain(object):
    """Closed interval [lo, hi] of admissible theta values."""

    lo: float
    hi: float

    def contains(self, theta):
        return self.lo <= theta <= self.hi

    def endpoints(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class NodeSpec(object):
    id: int
    initial_customers: int
    service: object
    routing: object


@dataclass(frozen=True)
class NetworkSpec(object):
    """Unvalidated network description."""

    nodes: tuple
    horizon_L: int
    theta_domain: ParameterDomain
    tagged_node: int
    completions_K: int

    @property
    def population(self):
        return sum(node.initial_customers for node in self.nodes)

    def node(self, n):
        return self.nodes[n - 1]


@dataclass(frozen=True)
class ValidatedNetwork(NetworkSpec):
    """Network description that has passed validate_network; immutable and shareable."""


_TOP_KEYS = {'nodes', 'horizon_L', 'theta_domain', 'tagged_node', 'completions_K'}
_NODE_KEYS = {'id', 'initial_customers', 'service', 'routing'}


def _integer(doc, key, where):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecFormatError("{}: '{}' must be an integer, got {!r}".format(where, key, value))
    return value


def _check_keys(doc, expected, where):
    if not isinstance(doc, dict):
        raise SpecFormatError("{} must be a JSON object".format(where))
    unknown = set(doc) - expected
    if unknown:
        raise SpecFormatError("{}: unknown keys {}".format(where, sorted(unknown)))
    missing = expected - set(doc)
    if missing:
        raise SpecFormatError("{}: missing keys {}".format(where, sorted(missing)))


def parse_network_spec(doc):
    """Build a NetworkSpec from a decoded JSON document.

    :param doc: dict in the network description format
    :return: NetworkSpec, not yet validated
    """
    _check_keys(doc, _TOP_KEYS, 'network')
    if not isinstance(doc['nodes'], list) or not doc['nodes']:
        raise SpecFormatError("network: 'nodes' must be a non-empty list")

    nodes = []
    for position, node_doc in enumerate(doc['nodes'], start=1):
        where = 'node #{}'.format(position)
        _check_keys(node_doc, _NODE_KEYS, where)
        try:
            service = service_family_from_dict(node_doc['service'])
            routing = routing_distribution_from_dict(node_doc['routing'])
        except ValueError as error:
            raise SpecFormatError("{}: {}".format(where, error))
        nodes.append(NodeSpec(id=_integer(node_doc, 'id', where),
                              initial_customers=_integer(node_doc, 'initial_customers', where),
                              service=service, routing=routing))

    domain = doc['theta_domain']
    if (not isinstance(domain, list) or len(domain) != 2 or
            any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in domain)):
        raise SpecFormatError("network: 'theta_domain' must be a list [lo, hi] of numbers")

    return NetworkSpec(nodes=tuple(nodes),
                       horizon_L=_integer(doc, 'horizon_L', 'network'),
                       theta_domain=ParameterDomain(float(domain[0]), float(domain[1])),
                       tagged_node=_integer(doc, 'tagged_node', 'network'),
                       completions_K=_integer(doc, 'completions_K', 'network'))


def load_network_spec(path):
    """Read and parse a network description file (validation is separate)."""
    try:
        with open(path, 'r') as spec_file:
            doc = json.load(spec_file)
    except ValueError as error:
        raise SpecFormatError("Could not decode {}: {}".format(path, error))
    except OSError as error:
        raise SpecFormatError("Could not read {}: {}".format(path, error))
    return parse_network_spec(doc)


def network_spec_to_dict(net):
    """Inverse of parse_network_spec."""
    return {
        'nodes': [{'id': node.id, 'initial_customers': node.initial_customers,
                   'service': node.service.to_dict(), 'routing': node.routing.to_dict()}
                  for node in net.nodes],
        'horizon_L': net.horizon_L,
        'theta_domain': [net.theta_domain.lo, net.theta_domain.hi],
        'tagged_node': net.tagged_node,
        'completions_K': net.completions_K,
    }


def spec_hash(net):
    """SHA-256 of the canonical JSON form of a network description."""
    canonical = json.dumps(network_spec_to_dict(net), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _validate_routing(node, count, domain):
    dist = node.routing
    targets = list(dist.targets)
    for target in targets:
        if not 1 <= target <= count:
            raise InvalidTopology("Node {} routes to node {} outside 1..{}".format(
                node.id, target, count))
    if targets != sorted(set(targets)):
        raise InvalidTopology("Node {} routing targets must be ascending and distinct, "
                              "got {}".format(node.id, targets))

    # probabilities are affine in theta, so the domain endpoints are the extremes
    for theta in domain.endpoints():
        probs = dist.probabilities(theta)
        if probs.min() < PROBABILITY_MARGIN:
            raise InvalidProbability(
                "Node {} routing probability {} < {} at theta={}; restrict the parameter "
                "domain".format(node.id, probs.min(), PROBABILITY_MARGIN, theta))
        if abs(math.fsum(probs) - 1.0) > NORMALISATION_TOLERANCE:
            raise InvalidProbability("Node {} routing probabilities sum to {} at theta={}".format(
                node.id, math.fsum(probs), theta))
    if abs(math.fsum(dist.slopes())) > NORMALISATION_TOLERANCE:
        raise InvalidProbability("Node {} routing slopes do not sum to 0".format(node.id))


def _validate_service(node, domain):
    service = node.service
    if service.family == 'exponential_scale':
        if domain.lo <= 0.0:
            raise InvalidService("Node {} exponential_scale needs a positive mean, theta domain "
                                 "starts at {}".format(node.id, domain.lo))
        return
    values = [v for v in vars(service).values() if isinstance(v, float)]
    if not all(math.isfinite(v) for v in values):
        raise InvalidService("Node {} service parameters must be finite".format(node.id))
    if getattr(service, 'width', 0.0) < 0.0:
        raise InvalidService("Node {} shifted_uniform width must be >= 0".format(node.id))
    bounds = service.bounds(domain)
    if bounds.nu <= 0.0:
        raise InvalidService("Node {} {} service is not positive on the theta domain "
                             "(lower bound {})".format(node.id, service.family, bounds.nu))


def validate_network(spec):
    """Check every invariant of a network description and seal it.

    Validating an already-validated network returns an equal ValidatedNetwork.

    :param spec: NetworkSpec or ValidatedNetwork
    :return: ValidatedNetwork
    """
    domain = spec.theta_domain
    if not (math.isfinite(domain.lo) and math.isfinite(domain.hi)) or not domain.lo < domain.hi:
        raise InvalidDomain("Theta domain [{}, {}] must be finite with lo < hi".format(
            domain.lo, domain.hi))

    count = len(spec.nodes)
    if count < 1:
        raise InvalidTopology("Network needs at least one node")
    for position, node in enumerate(spec.nodes, start=1):
        if node.id != position:
            raise InvalidTopology("Node ids must be 1..N in order, found {} at position {}".format(
                node.id, position))
        if node.initial_customers < 0:
            raise SpecFormatError("Node {} initial_customers must be >= 0".format(node.id))
        _validate_routing(node, count, domain)
        _validate_service(node, domain)

    if not 1 <= spec.tagged_node <= count:
        raise InvalidTopology("Tagged node {} outside 1..{}".format(spec.tagged_node, count))
    if spec.horizon_L < 1 or spec.completions_K < 1:
        raise SpecFormatError("horizon_L and completions_K must be positive")
    if spec.completions_K > spec.horizon_L:
        raise HorizonTooSmall("completions_K={} exceeds horizon_L={}".format(
            spec.completions_K, spec.horizon_L))
    if spec.population == 0:
        raise EmptyPopulation("Network holds no customers")

    values = {field.name: getattr(spec, field.name) for field in fields(NetworkSpec)}
    values['nodes'] = tuple(values['nodes'])
    return ValidatedNetwork(**values)


def enumerate_routing_tables(net, cap=DEFAULT_TABLE_CAP):
    """List every routing table with positive probability.

    Tables are the Cartesian product of the per-entry supports, emitted in row-major entry
    order with targets ascending.

    :param net: validated network
    :param cap: maximum number of tables
    """
    supports = []
    size = 1
    for node in net.nodes:
        size *= node.routing.support_size ** net.horizon_L
        supports.extend([node.routing.targets] * net.horizon_L)
    if size > cap:
        raise SupportTooLarge("{} routing tables exceed the cap of {}".format(size, cap))
    logger.debug("Enumerating %d routing tables", size)

    tables = []
    width = net.horizon_L
    for flat in itertools.product(*supports):
        tables.append(RoutingTable([flat[i:i + width] for i in range(0, len(flat), width)]))
    return tables
