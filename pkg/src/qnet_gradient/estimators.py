"""Monte Carlo gradient estimators for a performance measure E[F](theta).

    - naive IPA: the mean of the pathwise derivatives dF/dtheta. Biased when the routing
      law depends on theta, because a routing flip moves F discontinuously.
    - likelihood-ratio corrected: G = dF/dtheta + F * Psi, where Psi is the score of the
      realized routing table. With Psi summed over the whole N x L table (fixed horizon) the
      estimator is unbiased; summing only the decisions realized before the stopping time
      (online) reproduces the online algorithm and carries a small bias.
    - the online algorithm for the utilization criterion, run as a completion listener
      inside the simulation.
    - central finite differences, with or without common random numbers.

Replication i of a run is driven by RandomStream(seed, i). With workers > 1 replications are
spread over a process pool and reduced in replication order, so the result is identical to
the serial run.
"""

from collections import namedtuple
from concurrent import futures
from dataclasses import asdict, dataclass
from enum import Enum
import functools
import logging
import math

from qnet_gradient.criteria import CriterionKind, evaluate_criterion
from qnet_gradient.routing import routing_score, table_score
from qnet_gradient.simulator import simulate_network
from qnet_gradient.streams import RandomStream

logger = logging.getLogger('qnet_gradient.estimators')

CI95_Z = 1.96
DEFAULT_FD_STEP = 1e-5
DEFAULT_FD_TOLERANCE = 1e-4


class EstimatorException(Exception):
    pass


class TooFewSamples(EstimatorException):
    pass


class InvalidParameter(EstimatorException):
    pass


class PsiMode(Enum):
    FIXED_HORIZON = 'fixed-horizon'
    ONLINE = 'online'


class EstimatorTag(Enum):
    NAIVE_IPA = 'naive-ipa'
    LR_CORRECTED = 'lr-corrected'
    ALG51 = 'alg51'
    FD = 'fd'


@dataclass(frozen=True)
class EstimateSummary(object):
    """Monte Carlo summary of one estimator run.

    value_mean is the mean of the criterion values F where the estimator sees them; psi_gap
    is the mean difference between fixed-horizon and online corrected samples.
    """

    mean: float
    sample_variance: float
    reps: int
    ci95_halfwidth: float
    estimator_tag: EstimatorTag = None
    value_mean: float = None
    ties: int = 0
    psi_mode: PsiMode = None
    psi_gap: float = None

    def to_record(self):
        record = asdict(self)
        record['estimator_tag'] = self.estimator_tag.value if self.estimator_tag else None
        record['psi_mode'] = self.psi_mode.value if self.psi_mode else None
        return record


Replication = namedtuple('Replication', ['F', 'table', 'counts', 'ties'])


def mc_summary(samples, estimator_tag=None, value_mean=None, ties=0, psi_mode=None,
               psi_gap=None):
    """Summarise samples: mean, unbiased variance and 95% confidence half-width.

    Sums are taken in index order with math.fsum, so the result does not depend on the
    platform or on how replications were scheduled.

    :param samples: sequence of at least two floats
    """
    count = len(samples)
    if count < 2:
        raise TooFewSamples("At least 2 samples are needed, got {}".format(count))
    mean = math.fsum(samples) / count
    variance = math.fsum((sample - mean) ** 2 for sample in samples) / (count - 1)
    halfwidth = CI95_Z * math.sqrt(variance / count)
    return EstimateSummary(mean=mean, sample_variance=variance, reps=count,
                           ci95_halfwidth=halfwidth, estimator_tag=estimator_tag,
                           value_mean=value_mean, ties=ties, psi_mode=psi_mode, psi_gap=psi_gap)


def _check_theta(net, theta):
    if not net.theta_domain.contains(theta):
        raise InvalidParameter("theta={} outside the domain [{}, {}]".format(
            theta, net.theta_domain.lo, net.theta_domain.hi))


def _check_reps(reps):
    if reps < 2:
        raise TooFewSamples("At least 2 replications are needed, got {}".format(reps))


def _run_replications(task, reps, workers):
    """Evaluate task(0..reps-1), returning results in replication order."""
    if workers is not None and workers > 1:
        with futures.ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(task, range(reps),
                                     chunksize=max(1, reps // (4 * workers))))
    return [task(replication) for replication in range(reps)]


def replicate_F(net, kind, theta, stream):
    """Simulate one replication and evaluate the criterion at the tagged node.

    :return: Replication(F tangent, realized RoutingTable, per-node decision counts, ties)
    """
    traj, table = simulate_network(net, theta, stream)
    value = evaluate_criterion(kind, traj, net.tagged_node, net.completions_K)
    return Replication(value, table, traj.decision_counts(), traj.ties)


def _naive_sample(net, kind, theta, seed, replication):
    result = replicate_F(net, kind, theta, RandomStream(seed, replication))
    return result.F.deriv, result.F.value, result.ties


def _corrected_sample(net, kind, theta, seed, replication):
    result = replicate_F(net, kind, theta, RandomStream(seed, replication))
    fixed = result.F.deriv + result.F.value * table_score(net, theta, result.table)
    online = result.F.deriv + result.F.value * table_score(net, theta, result.table,
                                                           result.counts)
    return fixed, online, result.F.value, result.ties


def _warn_ties(tag, ties):
    if ties:
        logger.warning("%s: %d ties with differing derivatives observed", tag.value, ties)


def naive_ipa_estimate(net, kind, theta, reps, seed, workers=None):
    """Average of the pathwise derivatives dF/dtheta, without routing correction."""
    _check_reps(reps)
    _check_theta(net, theta)
    logger.info("naive-ipa: criterion %s, theta=%s, %d replications", kind.value, theta, reps)
    samples = _run_replications(
        functools.partial(_naive_sample, net, kind, theta, seed), reps, workers)
    ties = sum(sample[2] for sample in samples)
    _warn_ties(EstimatorTag.NAIVE_IPA, ties)
    summary = mc_summary([sample[0] for sample in samples], EstimatorTag.NAIVE_IPA,
                         value_mean=math.fsum(sample[1] for sample in samples) / reps, ties=ties)
    logger.info("naive-ipa: mean %s +/- %s", summary.mean, summary.ci95_halfwidth)
    return summary


def corrected_estimate(net, kind, theta, reps, seed, psi_mode=PsiMode.FIXED_HORIZON,
                       workers=None):
    """Likelihood-ratio corrected estimator G = dF/dtheta + F * Psi.

    :param psi_mode: PsiMode.FIXED_HORIZON sums the scores of all N x L table entries;
                     PsiMode.ONLINE sums only the decisions realized before the stop
    """
    _check_reps(reps)
    _check_theta(net, theta)
    if psi_mode is PsiMode.ONLINE:
        logger.warning("Online Psi counts only realized decisions and is biased in general")
    logger.info("lr-corrected: criterion %s, theta=%s, %d replications, %s",
                kind.value, theta, reps, psi_mode.value)
    samples = _run_replications(
        functools.partial(_corrected_sample, net, kind, theta, seed), reps, workers)
    chosen = 0 if psi_mode is PsiMode.FIXED_HORIZON else 1
    ties = sum(sample[3] for sample in samples)
    _warn_ties(EstimatorTag.LR_CORRECTED, ties)
    gap = math.fsum(sample[0] - sample[1] for sample in samples) / reps
    summary = mc_summary([sample[chosen] for sample in samples], EstimatorTag.LR_CORRECTED,
                         value_mean=math.fsum(sample[2] for sample in samples) / reps,
                         ties=ties, psi_mode=psi_mode, psi_gap=gap)
    logger.info("lr-corrected: mean %s +/- %s (psi gap %s)", summary.mean,
                summary.ci95_halfwidth, gap)
    return summary


class OnlineUtilizationGradient(object):
    """Online gradient accumulator for the utilization of the tagged node.

    Installed as the simulator's completion listener. g[i] carries the derivative of the
    current busy period's departure epochs at node i and is handed to the destination when
    a customer reaches an idle server; t and t_prime accumulate the tagged node's service
    times and their derivatives; s accumulates the scores of the realized routing decisions;
    d is the tagged node's Kth departure epoch.
    """

    def __init__(self, net, theta):
        self.net = net
        self.theta = theta
        self.g = [0.0] * len(net.nodes)
        self.s = 0.0
        self.t = 0.0
        self.t_prime = 0.0
        self.d = None

    def __call__(self, node, k, service, departure, route, server_free):
        self.g[node - 1] += service.deriv
        if node == self.net.tagged_node:
            self.t += service.value
            self.t_prime += service.deriv
            if k == self.net.completions_K:
                self.d = departure.value
                return
        self.s += routing_score(self.net.node(node).routing, self.theta, route)
        if server_free:
            self.g[route - 1] = self.g[node - 1]

    @property
    def value(self):
        if self.d is None:
            raise EstimatorException("The run has not reached the stopping completion")
        d = self.d
        g_n = self.g[self.net.tagged_node - 1]
        return (self.t_prime * d - self.t * g_n) / (d * d) + self.t * self.s / d


def online_estimate_alg51(net, theta, seed, replication=0):
    """One sample of the online algorithm for the utilization gradient at the tagged node.

    :param net: validated network
    :param theta: parameter value
    :param seed: run seed
    :param replication: replication index of the stream
    """
    _check_theta(net, theta)
    listener = OnlineUtilizationGradient(net, theta)
    simulate_network(net, theta, RandomStream(seed, replication), on_completion=listener)
    return listener.value


def _alg51_sample(net, theta, seed, replication):
    return online_estimate_alg51(net, theta, seed, replication)


def alg51_estimate(net, kind, theta, reps, seed, workers=None):
    """Average of online-algorithm samples; only defined for the utilization criterion."""
    if kind is not CriterionKind.U:
        raise InvalidParameter("The online algorithm estimates the U criterion only, "
                               "got {}".format(kind.value))
    _check_reps(reps)
    _check_theta(net, theta)
    logger.warning("Online Psi counts only realized decisions and is biased in general")
    samples = _run_replications(
        functools.partial(_alg51_sample, net, theta, seed), reps, workers)
    summary = mc_summary(samples, EstimatorTag.ALG51, psi_mode=PsiMode.ONLINE)
    logger.info("alg51: mean %s +/- %s", summary.mean, summary.ci95_halfwidth)
    return summary


def _check_bracket(net, theta, step):
    if step <= 0.0:
        raise InvalidParameter("Finite difference step must be positive, got {}".format(step))
    if not (net.theta_domain.contains(theta - step) and net.theta_domain.contains(theta + step)):
        raise InvalidParameter("Bracket [{}, {}] leaves the domain [{}, {}]".format(
            theta - step, theta + step, net.theta_domain.lo, net.theta_domain.hi))


def _fd_sample(net, kind, theta, step, seed, reps, crn, replication):
    plus = replicate_F(net, kind, theta + step, RandomStream(seed, replication))
    minus_replication = replication if crn else reps + replication
    minus = replicate_F(net, kind, theta - step, RandomStream(seed, minus_replication))
    return (plus.F.value - minus.F.value) / (2.0 * step), plus.ties + minus.ties


def finite_difference_estimate(net, kind, theta, step, reps, seed, crn=True, workers=None):
    """Central difference (F(theta+h) - F(theta-h)) / 2h averaged over replications.

    With crn both runs of replication i use stream i; without, the minus run uses stream
    reps + i.
    """
    _check_reps(reps)
    _check_theta(net, theta)
    _check_bracket(net, theta, step)
    samples = _run_replications(
        functools.partial(_fd_sample, net, kind, theta, step, seed, reps, crn), reps, workers)
    ties = sum(sample[1] for sample in samples)
    summary = mc_summary([sample[0] for sample in samples], EstimatorTag.FD, ties=ties)
    logger.info("fd: h=%s crn=%s mean %s +/- %s", step, crn, summary.mean,
                summary.ci95_halfwidth)
    return summary


@dataclass(frozen=True)
class FDCheckReport(object):
    """Outcome of the replication-by-replication finite difference versus IPA comparison.

    tie_events counts replications with a derivative-relevant tie in any of the three
    runs; routing_flips counts replications whose realized routes differ between the ends
    of the bracket.
    """

    reps: int
    matched: int
    tie_events: int
    routing_flips: int

    @property
    def match_rate(self):
        return self.matched / self.reps


def _pathwise_sample(net, kind, theta, step, seed, tolerance, replication):
    centre = replicate_F(net, kind, theta, RandomStream(seed, replication))
    plus = replicate_F(net, kind, theta + step, RandomStream(seed, replication))
    minus = replicate_F(net, kind, theta - step, RandomStream(seed, replication))
    difference = (plus.F.value - minus.F.value) / (2.0 * step)
    matched = abs(difference - centre.F.deriv) <= tolerance
    tied = bool(centre.ties or plus.ties or minus.ties)
    counts = [max(a, b) for a, b in zip(plus.counts, minus.counts)]
    flipped = (plus.counts != minus.counts or plus.table.differs_from(minus.table, counts))
    return matched, tied, flipped


def pathwise_fd_check(net, kind, theta, step=DEFAULT_FD_STEP, reps=10**4, seed=0,
                      tolerance=DEFAULT_FD_TOLERANCE, workers=None):
    """Compare the CRN central difference with the IPA tangent replication by replication."""
    _check_reps(reps)
    _check_theta(net, theta)
    _check_bracket(net, theta, step)
    samples = _run_replications(
        functools.partial(_pathwise_sample, net, kind, theta, step, seed, tolerance),
        reps, workers)
    report = FDCheckReport(reps=reps,
                           matched=sum(1 for sample in samples if sample[0]),
                           tie_events=sum(1 for sample in samples if sample[1]),
                           routing_flips=sum(1 for sample in samples if sample[2]))
    if report.matched < reps:
        logger.warning("FD/IPA mismatch on %d of %d replications (%d with ties, %d flips)",
                       reps - report.matched, reps, report.tie_events, report.routing_flips)
    return report
