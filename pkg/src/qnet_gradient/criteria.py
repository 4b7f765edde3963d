"""Performance criteria of a node and their pathwise derivatives.

For node n observed up to its Kth service completion:

    S = sum_k (D^k - A^k) / K               system time of one customer
    W = sum_k (D^k - A^k - tau^k) / K       waiting time of one customer
    T = K / D^K                             throughput rate
    U = sum_k tau^k / D^K                   server utilization
    J = sum_k (D^k - A^k) / D^K             number of customers
    Q = sum_k (D^k - A^k - tau^k) / D^K     queue length

Each is evaluated with Tangent arithmetic on the stored trajectory tangents, so the value
and its exact theta-derivative come out together.

F is the raw service-time functional A^K v D^{K-1}, the epoch node n starts its Kth service.
In a single-customer network nobody waits, so this is the service the customer received on
its way to node n. It is not one of the node criteria above and is used by the oracle
models only.
"""

from enum import Enum

import numpy as np

from qnet_gradient.tangent import tmax, tsum


class CriterionException(Exception):
    pass


class InsufficientCompletions(CriterionException):
    pass


class ZeroDeparture(CriterionException):
    pass


class CriterionKind(Enum):
    S = 'S'
    W = 'W'
    T = 'T'
    U = 'U'
    J = 'J'
    Q = 'Q'
    F = 'F'

    @property
    def oracle_only(self):
        return self is CriterionKind.F

    @property
    def is_ratio(self):
        return self in (CriterionKind.T, CriterionKind.U, CriterionKind.J, CriterionKind.Q)


NODE_CRITERIA = tuple(kind for kind in CriterionKind if not kind.oracle_only)


def _node_terms(trace, n, K):
    if K < 1:
        raise ValueError("K must be positive, got {}".format(K))
    if len(trace.departures) < K or len(trace.arrivals) < K or len(trace.services) < K:
        raise InsufficientCompletions(
            "Node {} has {} departures, {} arrivals and {} services; {} needed".format(
                n, len(trace.departures), len(trace.arrivals), len(trace.services), K))
    sojourns = tsum(trace.departures[k] - trace.arrivals[k] for k in range(K))
    work = tsum(trace.services[:K])
    return sojourns, work, trace.departures[K - 1]


def _service_start(traj, n, K):
    if K < 1:
        raise ValueError("K must be positive, got {}".format(K))
    trace = traj.node(n)
    if len(trace.departures) < K:
        raise InsufficientCompletions("Node {} has {} departures; {} needed".format(
            n, len(trace.departures), K))
    if K == 1:
        return trace.arrivals[0]
    return tmax(trace.arrivals[K - 1], trace.departures[K - 2])


def evaluate_criterion(kind, traj, n, K):
    """Evaluate a criterion and its theta-derivative on a trajectory.

    :param kind: CriterionKind
    :param traj: Trajectory
    :param n: node index
    :param K: number of completions observed at node n
    :return: Tangent (value, d value / d theta); arrays if the trajectory holds arrays
    """
    if kind is CriterionKind.F:
        return _service_start(traj, n, K)

    sojourns, work, last = _node_terms(traj.node(n), n, K)
    if kind is CriterionKind.S:
        return sojourns / K
    if kind is CriterionKind.W:
        return (sojourns - work) / K

    if np.any(np.asarray(last.value) == 0.0):
        raise ZeroDeparture("Node {} departure {} is at time zero".format(n, K))
    if kind is CriterionKind.T:
        return K / last
    if kind is CriterionKind.U:
        return work / last
    if kind is CriterionKind.J:
        return sojourns / last
    return (sojourns - work) / last


def criterion_from_name(name):
    """Look up a CriterionKind by its letter."""
    try:
        return CriterionKind(name.upper())
    except ValueError:
        raise ValueError("Unknown criterion '{}'; choose from {}".format(
            name, [kind.value for kind in CriterionKind]))
