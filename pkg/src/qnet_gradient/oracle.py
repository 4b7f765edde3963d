"""Ground truth at desk scale.

    - the two-branch toy model: one customer, one theta-dependent routing decision and a
      service-time functional, with closed forms E[F] = 2*theta + 1/2, dE[F]/dtheta = 2,
      E[dF/dtheta] = 1 and E[G] = 2
    - brute-force expectations over routing tables: E[F] = sum over tables R of
      Phi(theta, R) * E[F | R], with E[F | R] by midpoint-rule quadrature over the uniforms a
      run consumes under the fixed table R
    - the identity dE[F]/dtheta = sum over R of (E[dF/dtheta | R] + E[F | R] Psi(R)) Phi(R),
      both sides by quadrature
    - subset enumeration of the kth arrival, and an event-driven two-server FIFO queue

Quadrature runs the ordinary simulator with array-valued tangents: a lattice stream hands out
arrays of lattice midpoints instead of single uniforms. This needs the labels a run consumes
to depend on the table only, which holds for single-customer networks.
"""

from dataclasses import dataclass
import itertools
import logging
import math

import numpy as np

from qnet_gradient.criteria import CriterionKind, evaluate_criterion
from qnet_gradient.network import (NetworkSpec, NodeSpec, ParameterDomain,
                                   enumerate_routing_tables, validate_network)
from qnet_gradient.recursions import KTooLarge
from qnet_gradient.routing import AffineRouting, ConstantRouting, table_likelihood, table_score
from qnet_gradient.services import Deterministic, ShiftedUniform
from qnet_gradient.simulator import simulate_network

logger = logging.getLogger('qnet_gradient.oracle')

ORACLE_FD_STEP = 1e-4
MAX_QUADRATURE_COORDINATES = 4
MAX_LATTICE_POINTS = 2**22
LATTICE_CHUNK = 2**20
MAX_SUBSET_SIZE = 20


class OracleException(Exception):
    pass


class OutOfDomain(OracleException):
    pass


class TooManyCoordinates(OracleException):
    pass


class UnsupportedNetwork(OracleException):
    pass


def toy_network():
    """The two-branch model as a single-customer network with one routing decision.

    Node 2 holds the customer and serves it in theta + u. It then routes the customer to
    node 1 with probability theta, or straight to node 3 with probability 1 - theta. Node 1
    adds a fixed service of 1 and passes the customer on to node 3. F is the epoch node 3
    starts its first service: theta + u + 1 through node 1, theta + u otherwise, with the
    same u on both branches. L = 1, so the table holds exactly one random decision.
    """
    nodes = (
        NodeSpec(id=1, initial_customers=0, service=Deterministic(constant=1.0),
                 routing=ConstantRouting(targets=(3,), probs=(1.0,))),
        NodeSpec(id=2, initial_customers=1,
                 service=ShiftedUniform(offset=0.0, theta_slope=1.0, width=1.0),
                 routing=AffineRouting(targets=(1, 3), const=(0.0, 1.0), slope=(1.0, -1.0))),
        NodeSpec(id=3, initial_customers=0, service=Deterministic(constant=1.0),
                 routing=ConstantRouting(targets=(2,), probs=(1.0,))),
    )
    return validate_network(NetworkSpec(nodes=nodes, horizon_L=1,
                                        theta_domain=ParameterDomain(0.05, 0.95),
                                        tagged_node=3, completions_K=1))


TOY_CRITERION = CriterionKind.F


def toy_exact(theta):
    """Closed forms of the toy model: (E[F], dE[F]/dtheta, E[dF/dtheta], E[G])."""
    if not 0.0 < theta < 1.0:
        raise OutOfDomain("The toy model is defined for 0 < theta < 1, got {}".format(theta))
    return (2.0 * theta + 0.5, 2.0, 1.0, 2.0)


def affine_feedback_network():
    """Two nodes, one customer, affine routing at node 1 and a deterministic node 2.

    Node 1 serves in 0.5 + theta + u and routes to itself or to node 2 with probabilities
    0.3 + 0.4*theta and 0.7 - 0.4*theta; node 2 serves in 1.5 time units and returns the
    customer. Observed through the utilization of node 1 at K = 2 with L = 2.
    """
    nodes = (
        NodeSpec(id=1, initial_customers=1,
                 service=ShiftedUniform(offset=0.5, theta_slope=1.0, width=1.0),
                 routing=AffineRouting(targets=(1, 2), const=(0.3, 0.7), slope=(0.4, -0.4))),
        NodeSpec(id=2, initial_customers=0,
                 service=Deterministic(constant=1.5),
                 routing=ConstantRouting(targets=(1,), probs=(1.0,))),
    )
    return validate_network(NetworkSpec(nodes=nodes, horizon_L=2,
                                        theta_domain=ParameterDomain(0.05, 0.95),
                                        tagged_node=1, completions_K=2))


class _LabelRecorder(object):
    """Hands out 0.5 for every label and records the labels in first-use order."""

    def __init__(self):
        self.labels = []

    def uniform(self, node, purpose, k):
        label = (node, purpose, k)
        if label not in self.labels:
            self.labels.append(label)
        return 0.5


class _LatticeStream(object):
    """Hands out, for each recorded label, its lattice coordinate over a range of points."""

    def __init__(self, labels, per_axis, start, stop):
        self.coordinates = {}
        index = np.arange(start, stop, dtype=np.int64)
        for axis, label in enumerate(labels):
            position = (index // per_axis ** axis) % per_axis
            self.coordinates[label] = (position + 0.5) / per_axis

    def uniform(self, node, purpose, k):
        return self.coordinates[(node, purpose, k)]


def _check_single_customer(net):
    """Reject networks with more than one customer.

    Quadrature hands every lattice point the same list of uniform labels, recorded in one run
    under the fixed table. With a single customer the events happen in path order, so the
    labels a run consumes depend on the table alone. With two or more customers the order of
    services, and with it which labels are drawn before the stop, changes with the uniforms.
    """
    if net.population != 1:
        raise UnsupportedNetwork("Quadrature needs a single-customer network, population is "
                                 "{}".format(net.population))


def _lattice_size(dimensions, grid_m):
    if dimensions == 0:
        return 1, 1
    per_axis = grid_m
    if grid_m ** dimensions > MAX_LATTICE_POINTS:
        per_axis = max(1, int(math.floor(MAX_LATTICE_POINTS ** (1.0 / dimensions))))
        logger.info("Lattice reduced from %d to %d points per axis for %d coordinates",
                    grid_m, per_axis, dimensions)
    return per_axis, per_axis ** dimensions


def conditional_expectation(net, kind, theta, table, grid_m):
    """E[F | R] and E[dF/dtheta | R] by midpoint-rule quadrature under a fixed table.

    :return: (E[F | R], E[dF/dtheta | R], number of uniform coordinates)
    """
    if grid_m < 1:
        raise OracleException("grid_m must be at least 1, got {}".format(grid_m))
    _check_single_customer(net)
    recorder = _LabelRecorder()
    simulate_network(net, theta, recorder, table=table)
    dimensions = len(recorder.labels)
    if dimensions > MAX_QUADRATURE_COORDINATES:
        raise TooManyCoordinates("A run under this table consumes {} uniforms; at most {} "
                                 "are supported".format(dimensions, MAX_QUADRATURE_COORDINATES))

    per_axis, points = _lattice_size(dimensions, grid_m)
    value_total = []
    deriv_total = []
    for start in range(0, points, LATTICE_CHUNK):
        stop = min(points, start + LATTICE_CHUNK)
        stream = _LatticeStream(recorder.labels, per_axis, start, stop)
        traj, _ = simulate_network(net, theta, stream, table=table)
        result = evaluate_criterion(kind, traj, net.tagged_node, net.completions_K)
        value_total.append(float(np.sum(np.broadcast_to(result.value, (stop - start,)))))
        deriv_total.append(float(np.sum(np.broadcast_to(result.deriv, (stop - start,)))))
    return math.fsum(value_total) / points, math.fsum(deriv_total) / points, dimensions


@dataclass(frozen=True)
class MixtureReport(object):
    """Quadrature over all routing tables at one theta.

    EF and dEF are E[F] and its central difference in theta; EdF is the mixture of
    E[dF/dtheta | R]; EG adds the score term E[F | R] Psi(R); residual is |dEF - EG|.
    """

    theta: float
    EF: float
    dEF: float
    EdF: float
    EG: float
    residual: float
    tables: int
    coordinates: int

    def to_record(self):
        return {'theta': self.theta, 'EF': self.EF, 'dEF': self.dEF, 'EdF': self.EdF,
                'EG': self.EG, 'residual': self.residual, 'tables': self.tables,
                'coordinates': self.coordinates}


def _mixture_value(net, kind, theta, tables, grid_m):
    return math.fsum(table_likelihood(net, theta, table) *
                     conditional_expectation(net, kind, theta, table, grid_m)[0]
                     for table in tables)


def mixture_report(net, kind, theta, grid_m, step=ORACLE_FD_STEP):
    """Evaluate both sides of the score identity by quadrature over every routing table.

    :param net: validated single-customer network
    :param kind: CriterionKind
    :param theta: parameter value with [theta - step, theta + step] inside the domain
    :param grid_m: lattice points per axis
    :param step: central difference step for dE[F]/dtheta
    """
    domain = net.theta_domain
    if not (domain.contains(theta - step) and domain.contains(theta + step)):
        raise OutOfDomain("theta={} +/- {} leaves the domain [{}, {}]".format(
            theta, step, domain.lo, domain.hi))
    tables = enumerate_routing_tables(net)
    logger.info("Quadrature over %d routing tables at theta=%s", len(tables), theta)

    ef_terms, edf_terms, eg_terms = [], [], []
    coordinates = 0
    for table in tables:
        likelihood = table_likelihood(net, theta, table)
        value, deriv, dimensions = conditional_expectation(net, kind, theta, table, grid_m)
        coordinates = max(coordinates, dimensions)
        ef_terms.append(likelihood * value)
        edf_terms.append(likelihood * deriv)
        eg_terms.append(likelihood * (deriv + value * table_score(net, theta, table)))

    upper = _mixture_value(net, kind, theta + step, tables, grid_m)
    lower = _mixture_value(net, kind, theta - step, tables, grid_m)
    dEF = (upper - lower) / (2.0 * step)
    EG = math.fsum(eg_terms)
    return MixtureReport(theta=theta, EF=math.fsum(ef_terms), dEF=dEF,
                         EdF=math.fsum(edf_terms), EG=EG, residual=abs(dEF - EG),
                         tables=len(tables), coordinates=coordinates)


def brute_force_expectation(net, kind, theta, grid_m):
    """E[F](theta) and its central-difference derivative by exhaustive quadrature."""
    report = mixture_report(net, kind, theta, grid_m)
    return report.EF, report.dEF


def theorem2_identity_check(net, kind, theta, grid_m):
    """Absolute gap between dE[F]/dtheta and the mixture of E[dF/dtheta + F Psi]."""
    return mixture_report(net, kind, theta, grid_m).residual


def subset_enum_arrival(departures, k):
    """Literal min over all k-subsets of the subset maximum."""
    if len(departures) > MAX_SUBSET_SIZE:
        raise ValueError("Subset enumeration is limited to {} departures".format(
            MAX_SUBSET_SIZE))
    if k < 1:
        raise ValueError("Order index k must be positive, got {}".format(k))
    if k > len(departures):
        raise KTooLarge("k={} exceeds the {} departures".format(k, len(departures)))
    return min(max(subset) for subset in itertools.combinations(departures, k))


def two_server_event_oracle(arrivals, services):
    """Departure epochs of a two-server FIFO queue by direct event tracing.

    Customer i starts at max(A_i, earliest server-free time) on the earliest free server
    (server 1 on ties).

    :return: sorted departure epochs
    """
    free_at = [0.0, 0.0]
    departures = []
    for arrival, service in zip(arrivals, services):
        server = 0 if free_at[0] <= free_at[1] else 1
        start = max(arrival, free_at[server])
        free_at[server] = start + service
        departures.append(free_at[server])
    return sorted(departures)
