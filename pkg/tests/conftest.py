import numpy as np
import pytest

from bagbw.kernel import gaussian_kernel
from bagbw.simlab import get_model


@pytest.fixture(scope="session")
def k():
    return gaussian_kernel()


@pytest.fixture(scope="session")
def m1():
    return get_model("M1")


@pytest.fixture(scope="session")
def m2():
    return get_model("M2")


def gauss(u):
    return np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)


def naive_nw(x, y, h, x0):
    num = den = 0.0
    for xi, yi in zip(x, y):
        w = gauss((x0 - xi) / h) / h
        num += w * yi
        den += w
    return num / den


def naive_cv(x, y, h):
    """Delete-and-refit leave-one-out CV with explicit loops."""
    n = len(x)
    total = 0.0
    for i in range(n):
        xs = [x[j] for j in range(n) if j != i]
        ys = [y[j] for j in range(n) if j != i]
        total += (naive_nw(xs, ys, h, x[i]) - y[i]) ** 2
    return total / n
