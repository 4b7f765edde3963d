"""Algebraic node recursions on tangents.

Evaluates the max-plus dynamics of single nodes and the arrival composition across nodes:

    - G/G/1:  D^k = (A^k v D^{k-1}) + tau^k, D^0 = 0, and its closed form
              D^k = max over i <= k of (A^i + tau^i + ... + tau^k)
    - G/G/2:  D^k = [max over i <= k of ((A^i v D^{i-2}) + tau^i)]
                    ^ [(A^{k+1} v D^{k-1}) + tau^{k+1}]
              with D^j = 0 for j <= 0; when no (k+1)th arrival exists the second bracket
              is +infinity and the first is taken.
    - the kth arrival built from routed departures is their kth order statistic, and a
      node's kth arrival is zero while k <= K_n (initial customers).

The event-driven simulator does not call these to produce trajectories; they are the
reference the trajectory conformance check compares against.
"""

from qnet_gradient.tangent import Tangent, tmax, tmin


class RecursionException(Exception):
    pass


class LengthMismatch(RecursionException):
    pass


class KTooLarge(RecursionException):
    pass


class MissingArrival(RecursionException):
    pass


def _check_lengths(arrivals, services):
    if len(services) < len(arrivals):
        raise LengthMismatch("{} service times for {} arrivals".format(
            len(services), len(arrivals)))


def gg1_departures(arrivals, services, ties=None):
    """Departure tangents of a single-server FIFO node.

    :param arrivals: arrival tangents A^1..A^m, values nondecreasing
    :param services: service tangents, at least m of them
    :param ties: optional TieCounter
    :return: list of m departure tangents
    """
    _check_lengths(arrivals, services)
    departures = []
    previous = Tangent.zero()
    for arrival, service in zip(arrivals, services):
        previous = tmax(arrival, previous, ties) + service
        departures.append(previous)
    return departures


def gg1_closed_form(arrivals, services):
    """Departure tangents from the closed-form max over busy-period starts.

    Candidate i is A^i + tau^i + ... + tau^k, accumulated left to right so that it is
    computed with the same additions as the recursion. Among equal maxima the latest start
    i is taken, which is the choice the recursion makes.
    """
    _check_lengths(arrivals, services)
    departures = []
    candidates = []
    for arrival, service in zip(arrivals, services):
        candidates = [candidate + service for candidate in candidates]
        candidates.append(arrival + service)
        best = candidates[0]
        for candidate in candidates[1:]:
            best = tmax(candidate, best)
        departures.append(best)
    return departures


def gg2_departures(arrivals, services, ties=None):
    """Departure epochs of a two-server FIFO node as tangents.

    D^k is the kth departure epoch, not the departure of customer k.

    :param arrivals: arrival tangents, values nondecreasing
    :param services: service tangents, at least as many as arrivals
    :param ties: optional TieCounter
    """
    _check_lengths(arrivals, services)
    count = len(arrivals)
    zero = Tangent.zero()
    departures = []

    def departure(j):
        return departures[j - 1] if j >= 1 else zero

    def start_plus_service(i):
        # (A^i v D^{i-2}) + tau^i
        return tmax(arrivals[i - 1], departure(i - 2), ties) + services[i - 1]

    if count == 0:
        return departures
    running = None
    latest = start_plus_service(1)
    for k in range(1, count + 1):
        running = latest if running is None else tmax(running, latest, ties)
        if k < count:
            # depends on D^{k-1} only, so it is reused as the next running candidate
            latest = start_plus_service(k + 1)
            departures.append(tmin(running, latest, ties))
        else:
            departures.append(running)
    return departures


def kth_arrival_from_departures(departures, k):
    """Return the kth smallest of the routed departure tangents.

    Equal values keep their given order, so the tangent of the earlier entry is selected.

    :param departures: departure tangents routed to one node
    :param k: positive order index
    """
    if k < 1:
        raise ValueError("Order index k must be positive, got {}".format(k))
    if k > len(departures):
        raise KTooLarge("k={} exceeds the {} routed departures".format(k, len(departures)))
    return sorted(departures, key=lambda tangent: tangent.value)[k - 1]


def compose_arrivals(kth_external, initial_customers, k):
    """Arrival tangent A^k of a node holding initial_customers at time zero.

    :param kth_external: callable j -> jth real arrival tangent (the routed departures'
                         jth order statistic); may raise KTooLarge or return None
    :param initial_customers: K_n
    :param k: positive arrival index
    """
    if k <= initial_customers:
        return Tangent.zero()
    index = k - initial_customers
    try:
        arrival = kth_external(index)
    except (KTooLarge, IndexError):
        arrival = None
    if arrival is None:
        raise MissingArrival("Arrival {} needs real arrival {} which does not exist".format(
            k, index))
    return arrival
