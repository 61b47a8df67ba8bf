"""Normalized Hadamard matrices of small order.

Sylvester doubling covers powers of two, Paley I covers ``q + 1`` with
``q = 3 (mod 4)`` a prime power, Paley II covers ``2(q + 1)`` with
``q = 1 (mod 4)``, and a Kronecker product with ``H_2`` fills the remaining
multiples of four up to 64.
"""

from functools import lru_cache

import numpy as np

from .exceptions import ConfigurationError

MAX_ORDER = 64


def _prime_power(q):
    """Return ``(p, k)`` with ``q = p**k`` for a prime p, else None."""
    if q < 2:
        return None
    for p in range(2, q + 1):
        if q % p == 0:
            k = 0
            while q % p == 0:
                q //= p
                k += 1
            return (p, k) if q == 1 else None
    return None


def _field_elements(p, k):
    """Elements of GF(p^k) as coefficient tuples plus a multiply function.

    Only k in {1, 2} is needed for orders up to 64.
    """
    if k == 1:
        elems = [(a,) for a in range(p)]

        def mul(x, y):
            return ((x[0] * y[0]) % p,)

        return elems, mul
    if k == 2 and p % 2 == 1:
        # GF(p^2) = GF(p)[x] / (x^2 - r) with r a non-residue
        squares = {(a * a) % p for a in range(1, p)}
        r = next(a for a in range(2, p) if a not in squares)
        elems = [(a, b) for a in range(p) for b in range(p)]

        def mul(x, y):
            return ((x[0] * y[0] + r * x[1] * y[1]) % p, (x[0] * y[1] + x[1] * y[0]) % p)

        return elems, mul
    raise ConfigurationError(f"GF({p}^{k}) is not supported")


def _field_ok(pk):
    return pk is not None and pk[0] % 2 == 1 and pk[1] <= 2


def _jacobsthal(q):
    p, k = _prime_power(q)
    elems, mul = _field_elements(p, k)
    zero = elems[0]
    squares = {mul(x, x) for x in elems if x != zero}

    def chi(x):
        if x == zero:
            return 0
        return 1 if x in squares else -1

    def sub(x, y):
        return tuple((a - b) % p for a, b in zip(x, y))

    return np.array([[chi(sub(b, a)) for b in elems] for a in elems], dtype=np.int64)


def _paley1(q):
    Q = _jacobsthal(q)
    n = q + 1
    S = np.zeros((n, n), dtype=np.int64)
    S[0, 1:] = 1
    S[1:, 0] = -1
    S[1:, 1:] = Q
    return S + np.eye(n, dtype=np.int64)


def _paley2(q):
    Q = _jacobsthal(q)
    n = q + 1
    C = np.zeros((n, n), dtype=np.int64)
    C[0, 1:] = 1
    C[1:, 0] = 1
    C[1:, 1:] = Q
    A = np.array([[1, -1], [-1, -1]])
    B = np.array([[1, 1], [1, -1]])
    return np.kron(C, A) + np.kron(np.eye(n, dtype=np.int64), B)


def normalize(H):
    """Flip row and column signs so the first row and column are all +1."""
    H = np.array(H, dtype=np.int64)
    H = H * H[:, :1]
    H = H * H[:1, :]
    return H


def supported_orders():
    return [1, 2] + [k for k in range(4, MAX_ORDER + 1, 4) if _build(k) is not None]


def _build(order):
    if order == 1:
        return np.ones((1, 1), dtype=np.int64)
    if order == 2:
        return np.array([[1, 1], [1, -1]], dtype=np.int64)
    if order % 4:
        return None
    if order & (order - 1) == 0:
        half = _build(order // 2)
        return np.block([[half, half], [half, -half]])
    pk = _prime_power(order - 1)
    if _field_ok(pk) and (order - 1) % 4 == 3:
        return _paley1(order - 1)
    q = order // 2 - 1
    pk = _prime_power(q)
    if _field_ok(pk) and q % 4 == 1:
        return _paley2(q)
    if order % 8 == 0:
        half = _build(order // 2)
        if half is not None:
            return np.kron(np.array([[1, 1], [1, -1]]), half)
    return None


@lru_cache(maxsize=None)
def _cached(order):
    H = _build(order)
    if H is None:
        return None
    H = normalize(H)
    assert np.array_equal(H.T @ H, order * np.eye(order, dtype=np.int64))
    H.setflags(write=False)
    return H


def hadamard(order):
    """Normalized Hadamard matrix: ``H'H = order * I``, first row/column +1."""
    order = int(order)
    H = _cached(order) if 1 <= order <= MAX_ORDER else None
    if H is None:
        raise ConfigurationError(
            f"no Hadamard matrix of order {order}; supported orders: {supported_orders()}"
        )
    return H.copy()
