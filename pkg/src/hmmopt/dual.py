"""Forward-mode automatic differentiation on fixed-width dual numbers.

A :class:`Dual` stores a value together with its partial derivatives with
respect to a fixed set of input coordinates.  The value may be a scalar or
an ndarray; partials always carry one extra trailing axis of length
``n_partials``.  Seeding a parameter vector with :func:`seed` and pushing it
through ordinary arithmetic yields exact directional derivatives, which is
all the likelihood code needs (parameter dimensions here are tiny, so
forward mode beats reverse mode on both simplicity and constant factors).
"""

from __future__ import annotations

import math

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the domain of an autodiff primitive."""


def _coerce_partials(x, n):
    """Partials of a constant: zeros broadcast against the value shape."""
    shape = np.shape(x) + (n,)
    return np.zeros(shape)


class Dual:
    """Value plus partial derivatives along ``n_partials`` coordinates.

    ``value`` is a float or ndarray; ``partials`` has shape
    ``value.shape + (n_partials,)``.  Arithmetic follows the usual chain
    rules and broadcasts like numpy.  Mixing with plain numbers/arrays
    treats them as constants.
    """

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = np.asarray(value, dtype=float) if np.ndim(value) else float(value)
        self.partials = np.asarray(partials, dtype=float)

    @property
    def n_partials(self) -> int:
        return self.partials.shape[-1]

    @property
    def shape(self):
        return np.shape(self.value)

    # -- arithmetic -------------------------------------------------------

    def _lift(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual(other, _coerce_partials(other, self.n_partials))

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.value + o.value, self.partials + o.partials)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.value - o.value, self.partials - o.partials)

    def __rsub__(self, other):
        o = self._lift(other)
        return Dual(o.value - self.value, o.partials - self.partials)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(
            self.value * o.value,
            self.partials * _tail(o.value) + _tail(self.value) * o.partials,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if np.any(np.asarray(o.value) == 0.0):
            raise DomainError("division by zero in dual arithmetic")
        inv = 1.0 / o.value
        val = self.value * inv
        part = (self.partials - _tail(val) * o.partials) * _tail(inv)
        return Dual(val, part)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            # a**b = exp(b log a); rare enough to route through the primitives
            return exp(exponent * log(self))
        val = self.value ** exponent
        return Dual(val, _tail(exponent * self.value ** (exponent - 1.0)) * self.partials)

    # -- structure --------------------------------------------------------

    def __getitem__(self, idx):
        return Dual(np.asarray(self.value)[idx], self.partials[idx])

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(np.ndim(self.value)))
        return Dual(np.sum(self.value, axis=axis), np.sum(self.partials, axis=axis))

    def reshape(self, *shape):
        return Dual(np.reshape(self.value, shape), self.partials.reshape(*shape, self.n_partials))

    def __repr__(self):
        return f"Dual({self.value!r}, partials={self.partials!r})"


def _tail(x):
    """Append a length-1 axis so values broadcast against partials."""
    return np.asarray(x)[..., None] if np.ndim(x) else x


# -- seeding and extraction -----------------------------------------------


def seed(theta) -> list[Dual]:
    """Lift a parameter vector into duals carrying basis-vector partials."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    return [Dual(theta[j], np.eye(n)[j]) for j in range(n)]


def value_of(x):
    """Plain value of a Dual, passed through for anything else."""
    return x.value if isinstance(x, Dual) else x


def partials_of(x, n_partials: int):
    """Partials of ``x``, zero-filled when ``x`` is a plain constant."""
    if isinstance(x, Dual):
        return x.partials
    return _coerce_partials(x, n_partials)


def array(rows, n_partials: int | None = None):
    """Assemble scalars/duals (possibly nested) into one array-valued Dual.

    Returns a plain float ndarray when no entry is a Dual and ``n_partials``
    is None.
    """
    flat: list = []

    def _walk(node):
        if isinstance(node, (list, tuple)):
            return [_walk(n) for n in node]
        flat.append(node)
        return node

    _walk(rows)
    has_dual = any(isinstance(x, Dual) for x in flat)
    if not has_dual and n_partials is None:
        return np.asarray(rows, dtype=float)
    if n_partials is None:
        n_partials = next(x.n_partials for x in flat if isinstance(x, Dual))

    def _vals(node):
        if isinstance(node, (list, tuple)):
            return [_vals(n) for n in node]
        return value_of(node)

    def _parts(node):
        if isinstance(node, (list, tuple)):
            return [_parts(n) for n in node]
        return partials_of(node, n_partials)

    return Dual(np.asarray(_vals(rows), dtype=float), np.asarray(_parts(rows), dtype=float))


def stack(items, axis: int = 0):
    """Stack array-valued duals (or plain arrays) along a new axis.

    ``axis`` refers to value axes and must be non-negative; the partials
    axis always stays trailing.
    """
    if axis < 0:
        raise ValueError("stack axis must be non-negative")
    if not any(isinstance(x, Dual) for x in items):
        return np.stack(items, axis=axis)
    n = next(x.n_partials for x in items if isinstance(x, Dual))
    vals = [np.asarray(value_of(x), dtype=float) for x in items]
    parts = [np.broadcast_to(partials_of(x, n), np.shape(value_of(x)) + (n,)) for x in items]
    return Dual(np.stack(vals, axis=axis), np.stack(parts, axis=axis))


# -- primitives -----------------------------------------------------------


def add(a, b):
    return a + b if isinstance(a, Dual) else b + a


def sub(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        a = a if isinstance(a, Dual) else Dual(a, _coerce_partials(a, b.n_partials))
        return a - b
    return a - b


def mul(a, b):
    return a * b if isinstance(a, Dual) else b * a


def div(a, b):
    if isinstance(a, Dual):
        return a / b
    if isinstance(b, Dual):
        return b.__rtruediv__(a)
    if np.any(np.asarray(b) == 0.0):
        raise DomainError("division by zero")
    return a / b


def log(x):
    if isinstance(x, Dual):
        if np.any(np.asarray(x.value) <= 0.0):
            raise DomainError("log of non-positive value")
        return Dual(np.log(x.value), x.partials * _tail(1.0 / x.value))
    if np.any(np.asarray(x) <= 0.0):
        raise DomainError("log of non-positive value")
    return np.log(x)


def exp(x):
    if isinstance(x, Dual):
        val = np.exp(x.value)
        return Dual(val, x.partials * _tail(val))
    return np.exp(x)


def sqrt(x):
    if isinstance(x, Dual):
        if np.any(np.asarray(x.value) <= 0.0):
            raise DomainError("sqrt of non-positive value")
        val = np.sqrt(x.value)
        return Dual(val, x.partials * _tail(0.5 / val))
    if np.any(np.asarray(x) < 0.0):
        raise DomainError("sqrt of negative value")
    return np.sqrt(x)


def pow(x, exponent):  # noqa: A001 - mirrors the primitive set
    if isinstance(x, Dual):
        return x ** exponent
    return np.power(x, exponent)


def gaussian_pdf(x, mu, sigma):
    """Normal density at ``x`` with dual-aware mean and standard deviation.

    Implemented as a primitive rather than composed from exp/sqrt so the
    partials stay clean (exactly zero) where the density underflows to zero.
    """
    sig_val = value_of(sigma)
    if np.any(np.asarray(sig_val) <= 0.0):
        raise DomainError("gaussian_pdf requires sigma > 0")
    if not (isinstance(mu, Dual) or isinstance(sigma, Dual)):
        z = (np.asarray(x, dtype=float) - mu) / sigma
        return np.exp(-0.5 * z * z) / (sigma * _SQRT_2PI)

    n = mu.n_partials if isinstance(mu, Dual) else sigma.n_partials
    mu_val = value_of(mu)
    z = (np.asarray(x, dtype=float) - mu_val) / sig_val
    val = np.exp(-0.5 * z * z) / (sig_val * _SQRT_2PI)
    # d/dmu = f * z / sigma ; d/dsigma = f * (z^2 - 1) / sigma
    dmu = val * z / sig_val
    dsig = val * (z * z - 1.0) / sig_val
    part = _tail(dmu) * partials_of(mu, n) + _tail(dsig) * partials_of(sigma, n)
    # where the density underflowed, z*val can be 0*inf = nan; pin to 0
    part = np.where(_tail(val) == 0.0, 0.0, part)
    return Dual(val, part)
