"""Tangent - value/derivative pairs for pathwise timestamp arithmetic.

Every timestamp and service time handled by the simulator is carried as a Tangent: the
value itself together with its derivative with respect to the scalar parameter theta.
Addition adds derivatives, and the max/min operators of the node recursions hand over the
derivative of whichever operand they select. On equal values the first operand is selected.

Values and derivatives may be plain floats or numpy arrays. The array form lets the
quadrature oracle push a whole lattice of inputs through exactly the same arithmetic.
"""

import numpy as np


def _is_batch(*items):
    return any(isinstance(item, np.ndarray) for item in items)


class Tangent(object):
    """A value together with its derivative with respect to theta."""

    __slots__ = ('value', 'deriv')

    def __init__(self, value, deriv=0.0):
        """Create a tangent.

        :param value: the value (time units for timestamps)
        :param deriv: d value / d theta
        """
        self.value = value
        self.deriv = deriv

    @classmethod
    def zero(cls):
        """Return the zero tangent used for initial customers and D^0."""
        return cls(0.0, 0.0)

    @property
    def is_batch(self):
        """True if this tangent holds arrays rather than scalars."""
        return _is_batch(self.value, self.deriv)

    def __add__(self, other):
        if isinstance(other, Tangent):
            return Tangent(self.value + other.value, self.deriv + other.deriv)
        return Tangent(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tangent):
            return Tangent(self.value - other.value, self.deriv - other.deriv)
        return Tangent(self.value - other, self.deriv)

    def __rsub__(self, other):
        return Tangent(other - self.value, -self.deriv)

    def __neg__(self):
        return Tangent(-self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, Tangent):
            return Tangent(self.value * other.value,
                           self.deriv * other.value + self.value * other.deriv)
        return Tangent(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tangent):
            denominator = other.value * other.value
            return Tangent(self.value / other.value,
                           (self.deriv * other.value - self.value * other.deriv) / denominator)
        return Tangent(self.value / other, self.deriv / other)

    def __rtruediv__(self, other):
        # other is a constant numerator
        return Tangent(other / self.value, -other * self.deriv / (self.value * self.value))

    def __eq__(self, other):
        if not isinstance(other, Tangent):
            return NotImplemented
        if self.is_batch or other.is_batch:
            return bool(np.array_equal(self.value, other.value) and
                        np.array_equal(self.deriv, other.deriv))
        return self.value == other.value and self.deriv == other.deriv

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __hash__(self):
        return hash((self.value, self.deriv))

    def __iter__(self):
        yield self.value
        yield self.deriv

    def __repr__(self):
        return 'Tangent({!r}, {!r})'.format(self.value, self.deriv)


class TieCounter(object):
    """Counts max/min comparisons where equal values carried different derivatives.

    Only these ties can change a pathwise derivative, so ties between identical tangents
    (for example two zero timestamps at the start of a run) are not counted.
    """

    def __init__(self):
        self.count = 0

    def observe(self, first, second):
        if _is_batch(first.value, second.value, first.deriv, second.deriv):
            self.count += int(np.count_nonzero((first.value == second.value) &
                                               (first.deriv != second.deriv)))
        elif first.value == second.value and first.deriv != second.deriv:
            self.count += 1


def tmax(first, second, ties=None):
    """Maximum of two tangents; equal values select the first operand.

    :param first: first operand
    :param second: second operand
    :param ties: optional TieCounter to record derivative-relevant ties
    """
    if ties is not None:
        ties.observe(first, second)
    if _is_batch(first.value, second.value):
        pick = first.value >= second.value
        return Tangent(np.where(pick, first.value, second.value),
                       np.where(pick, first.deriv, second.deriv))
    if first.value >= second.value:
        return first
    return second


def tmin(first, second, ties=None):
    """Minimum of two tangents; equal values select the first operand."""
    if ties is not None:
        ties.observe(first, second)
    if _is_batch(first.value, second.value):
        pick = first.value <= second.value
        return Tangent(np.where(pick, first.value, second.value),
                       np.where(pick, first.deriv, second.deriv))
    if first.value <= second.value:
        return first
    return second


def tsum(tangents):
    """Left-to-right sum of tangents; the empty sum is the zero tangent."""
    total = Tangent.zero()
    for item in tangents:
        total = total + item
    return total
