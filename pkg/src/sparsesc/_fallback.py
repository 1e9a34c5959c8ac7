"""Pure-Python kernels, used when the compiled extension is unavailable.

Same signatures as the functions in ``_kernels.pyx``.
"""

import numpy as np

from . import prox


def _check(D, pin, out):
    if D.shape[0] < 2:
        raise ValueError("columns must have length >= 2")
    if D.shape[1] != pin.shape[0] or out.shape != D.shape:
        raise ValueError("shape mismatch between block, pin indices and output")


def _apply(D, pin, out, op):
    _check(D, pin, out)
    n = D.shape[0]
    for col in range(D.shape[1]):
        j = int(pin[col])
        keep = np.arange(n) != j
        out[keep, col] = op(D[keep, col])
        out[j, col] = 0.0


def l1_affine_columns(D, pin, gamma, out):
    _apply(D, pin, out, lambda d: prox.prox_l1_affine(d, gamma))


def top_k_columns(D, pin, k, out):
    _apply(D, pin, out, lambda d: prox.project_top_k(d, k))


def gshp_columns(D, pin, k, out):
    _apply(D, pin, out, lambda d: prox.gshp(d, k))


def admm_shrink_dual(A, Delta, rho, C, Delta_out):
    if not A.shape == Delta.shape == C.shape == Delta_out.shape:
        raise ValueError("shape mismatch in ADMM update")
    V = np.divide(Delta, rho)
    V += A
    np.abs(V, out=C)
    C -= 1.0 / rho
    np.maximum(C, 0.0, out=C)
    np.copysign(C, V, out=C)
    C += 0.0  # turn -0.0 into 0.0
    np.fill_diagonal(C, 0.0)
    np.subtract(A, C, out=Delta_out)
    Delta_out *= rho
    Delta_out += Delta
