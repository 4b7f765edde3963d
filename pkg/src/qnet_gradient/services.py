"""Service-time families with analytic theta-derivatives.

Service times are produced by inverse-transform sampling from an explicit uniform u, so the
pathwise derivative d tau / d theta at fixed u is available in closed form. Three families
are supported:

    - shifted_uniform:   tau = a + b*theta + c*u
    - exponential_scale: tau = -theta * ln(1 - u)   (exponential with mean theta)
    - deterministic:     tau = c + b*theta          (u is not consumed)

Each family also reports analytic bounds on the parameter domain: the lower bound nu, the
upper bound mu and the Lipschitz constant lambda of tau in theta. These feed the
unbiasedness condition report.
"""

from dataclasses import dataclass
from enum import Enum
import logging
import math

import numpy as np

from qnet_gradient.tangent import Tangent

logger = logging.getLogger('qnet_gradient.services')


@dataclass(frozen=True)
class ServiceBounds(object):
    """Analytic bounds of a service family over a parameter domain.

    lipschitz is the sup of |d tau / d theta| (infinite if unbounded); lipschitz_mean is
    the expectation of the pathwise Lipschitz constant over u.
    """

    nu: float
    mu: float
    lipschitz: float
    lipschitz_mean: float


@dataclass(frozen=True)
class ShiftedUniform(object):
    """tau = offset + theta_slope*theta + width*u."""

    offset: float
    theta_slope: float
    width: float

    family = 'shifted_uniform'
    consumes_uniform = True

    def sample(self, theta, u):
        return Tangent(self.offset + self.theta_slope * theta + self.width * u,
                       self.theta_slope)

    def bounds(self, domain):
        low = self.offset + min(self.theta_slope * domain.lo, self.theta_slope * domain.hi)
        high = self.offset + max(self.theta_slope * domain.lo, self.theta_slope * domain.hi)
        slope = abs(self.theta_slope)
        return ServiceBounds(nu=low, mu=high + self.width, lipschitz=slope, lipschitz_mean=slope)

    def to_dict(self):
        return {'family': self.family, 'offset': self.offset,
                'theta_slope': self.theta_slope, 'width': self.width}


@dataclass(frozen=True)
class ExponentialScale(object):
    """tau = -theta * ln(1 - u); theta is the mean service time."""

    family = 'exponential_scale'
    consumes_uniform = True

    def sample(self, theta, u):
        unit = -np.log1p(-u)
        return Tangent(theta * unit, unit)

    def bounds(self, domain):
        # values reach 0 as u -> 0 and grow without bound as u -> 1;
        # the pathwise Lipschitz constant -ln(1 - u) has mean 1
        return ServiceBounds(nu=0.0, mu=math.inf, lipschitz=math.inf, lipschitz_mean=1.0)

    def to_dict(self):
        return {'family': self.family}


@dataclass(frozen=True)
class Deterministic(object):
    """tau = constant + theta_slope*theta, no randomness."""

    constant: float
    theta_slope: float = 0.0

    family = 'deterministic'
    consumes_uniform = False

    def sample(self, theta, u=None):
        return Tangent(self.constant + self.theta_slope * theta, self.theta_slope)

    def bounds(self, domain):
        ends = (self.constant + self.theta_slope * domain.lo,
                self.constant + self.theta_slope * domain.hi)
        slope = abs(self.theta_slope)
        return ServiceBounds(nu=min(ends), mu=max(ends), lipschitz=slope, lipschitz_mean=slope)

    def to_dict(self):
        return {'family': self.family, 'constant': self.constant,
                'theta_slope': self.theta_slope}


_FAMILY_KEYS = {
    ShiftedUniform.family: (ShiftedUniform, {'offset', 'theta_slope', 'width'}, set()),
    ExponentialScale.family: (ExponentialScale, set(), set()),
    Deterministic.family: (Deterministic, {'constant'}, {'theta_slope'}),
}


def service_family_from_dict(doc):
    """Build a service family from its JSON form.

    Raises ValueError on an unknown family, unknown keys or missing keys; the network
    loader wraps these as spec format errors.
    """
    if not isinstance(doc, dict) or 'family' not in doc:
        raise ValueError("Service entry must be an object with a 'family' key")
    name = doc['family']
    if name not in _FAMILY_KEYS:
        raise ValueError("Unknown service family '{}'".format(name))
    cls, required, optional = _FAMILY_KEYS[name]
    keys = set(doc) - {'family'}
    unknown = keys - required - optional
    if unknown:
        raise ValueError("Unknown keys for family '{}': {}".format(name, sorted(unknown)))
    missing = required - keys
    if missing:
        raise ValueError("Missing keys for family '{}': {}".format(name, sorted(missing)))
    kwargs = {}
    for key in keys:
        value = doc[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("Service parameter '{}' must be a number".format(key))
        kwargs[key] = float(value)
    return cls(**kwargs)


def sample_service(family, theta, u):
    """Sample one service time as a Tangent (value, d value / d theta).

    :param family: service family instance
    :param theta: parameter value
    :param u: uniform on [0, 1), ignored by deterministic families
    """
    return family.sample(theta, u)


class ConditionStatus(Enum):
    SATISFIED = 'satisfied'
    VIOLATED = 'violated'
    UNKNOWN = 'unknown'


@dataclass(frozen=True)
class NodeCondition(object):
    """Unbiasedness condition outcome for one node."""

    node: int
    family: str
    status: ConditionStatus
    bounds: ServiceBounds
    reason: str


@dataclass(frozen=True)
class ConditionReport(object):
    """Per-node unbiasedness condition outcomes for one criterion."""

    criterion: str
    nodes: tuple

    @property
    def status(self):
        statuses = [node.status for node in self.nodes]
        if ConditionStatus.VIOLATED in statuses:
            return ConditionStatus.VIOLATED
        if ConditionStatus.UNKNOWN in statuses:
            return ConditionStatus.UNKNOWN
        return ConditionStatus.SATISFIED


def check_unbiasedness_conditions(net, kind):
    """Check the pathwise-interchange conditions for a criterion, node by node.

    Time averages (S, W) need each service time to be continuous in u and Lipschitz in theta
    with an integrable constant. Ratio criteria (T, U, J, Q) need in addition a positive
    lower bound nu and a finite upper bound mu, so that E[mu*lambda/nu^2] is finite. The
    raw service-time functional is not covered by either list and is reported unknown.

    :param net: validated network
    :param kind: CriterionKind
    """
    # local import: criteria does not depend on services
    from qnet_gradient.criteria import CriterionKind

    entries = []
    for node in net.nodes:
        bounds = node.service.bounds(net.theta_domain)
        if kind is CriterionKind.F:
            status, reason = ConditionStatus.UNKNOWN, "raw functional is outside both lists"
        elif not math.isfinite(bounds.lipschitz_mean):
            status, reason = ConditionStatus.VIOLATED, "Lipschitz constant not integrable"
        elif kind in (CriterionKind.S, CriterionKind.W):
            status, reason = ConditionStatus.SATISFIED, "continuous and Lipschitz in theta"
        elif bounds.nu <= 0.0:
            status, reason = ConditionStatus.VIOLATED, "no positive lower bound nu"
        elif not math.isfinite(bounds.mu):
            status, reason = ConditionStatus.VIOLATED, "no finite upper bound mu"
        else:
            status, reason = ConditionStatus.SATISFIED, "nu > 0, mu finite, lambda bounded"
        if status is ConditionStatus.VIOLATED:
            logger.warning("Node %d (%s) violates the %s conditions: %s",
                           node.id, node.service.family, kind.value, reason)
        entries.append(NodeCondition(node=node.id, family=node.service.family, status=status,
                                     bounds=bounds, reason=reason))
    return ConditionReport(criterion=kind.value, nodes=tuple(entries))
