import numpy as np
import pytest

from foldover.exceptions import ConfigurationError
from foldover.hadamard import hadamard, normalize, supported_orders


def test_supported_orders_cover_small_multiples_of_four():
    orders = supported_orders()
    assert {1, 2} <= set(orders)
    assert set(range(4, 65, 4)) <= set(orders)


@pytest.mark.parametrize("order", supported_orders())
def test_orthogonal_and_normalized(order):
    H = hadamard(order)
    assert H.shape == (order, order)
    assert set(np.unique(H)) <= {-1, 1}
    assert np.array_equal(H.T @ H, order * np.eye(order, dtype=H.dtype))
    assert np.all(H[0] == 1) and np.all(H[:, 0] == 1)


def test_sylvester_order_8_rows():
    H = hadamard(8)
    assert H[1].tolist() == [1, -1, 1, -1, 1, -1, 1, -1]


def test_normalize_makes_first_row_and_column_positive():
    H = hadamard(4) * np.array([1, -1, 1, -1])[:, None]
    N = normalize(H)
    assert np.all(N[0] == 1) and np.all(N[:, 0] == 1)


def test_copies_are_independent():
    H = hadamard(12)
    try:
        H[0, 0] = -1
    except ValueError:
        pass
    assert hadamard(12)[0, 0] == 1


@pytest.mark.parametrize("order", [0, 3, 6, 10, 68, -4])
def test_unsupported_orders(order):
    with pytest.raises(ConfigurationError, match="supported orders"):
        hadamard(order)
