import numpy as np


def dense_arrays(prob):
    """Dense (A, E, B1, B2, C) of a standard problem."""
    a = prob.a.toarray() if prob.is_sparse else np.asarray(prob.a, float)
    e = prob.e.toarray() if prob.is_sparse else np.asarray(prob.e, float)
    return a, e, prob.b1, prob.b2, np.atleast_2d(prob.c)


def indefinite_residual(prob, x):
    """Densely assembled residual of the indefinite equation at X."""
    a, e, b1, b2, c = dense_arrays(prob)
    return (a.T @ x @ e + e.T @ x @ a +
            e.T @ x @ (b1 @ (b1.T @ x) - b2 @ (b2.T @ x)) @ e + c.T @ c)
