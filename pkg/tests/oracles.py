"""Independent reference solutions used by the tests."""

import itertools

import numpy as np


def gram(X, y):
    """Centered Gram blocks of the standardized-target least-squares problem."""
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    sy = y.std()
    yc = (y - y.mean()) / sy
    return Xc.T @ Xc / n, Xc.T @ yc / n, sy


def exact_elastic_net(G, c, l2, l1):
    """Minimize b'Gb - 2c'b + l2|b|^2 + sum l1_j|b_j| by enumerating sign patterns.

    For every support and sign vector the stationarity conditions are a
    linear system; the unique pattern whose solution is sign consistent and
    satisfies the inactive-coordinate bound is the optimum.
    """
    J = c.shape[0]
    l1 = np.broadcast_to(np.asarray(l1, float), (J,))
    best, best_obj = None, np.inf
    for signs in itertools.product((-1, 0, 1), repeat=J):
        s = np.array(signs, float)
        S = np.flatnonzero(s)
        b = np.zeros(J)
        if S.size:
            A = G[np.ix_(S, S)] + l2 * np.eye(S.size)
            b[S] = np.linalg.solve(A, c[S] - 0.5 * l1[S] * s[S])
            if np.any(np.sign(b[S]) != s[S]):
                continue
        grad = 2 * (G @ b - c) + 2 * l2 * b
        off = np.setdiff1d(np.arange(J), S)
        if off.size and np.any(np.abs(grad[off]) > l1[off] + 1e-9):
            continue
        obj = b @ G @ b - 2 * c @ b + l2 * b @ b + np.sum(l1 * np.abs(b))
        if obj < best_obj:
            best, best_obj = b, obj
    return best


def ols_lstsq(X, y):
    A = np.column_stack([np.ones(X.shape[0]), X])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return coef[0], coef[1:]
