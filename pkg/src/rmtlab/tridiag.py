"""Householder tridiagonalization and implicit-shift symmetric QR.

Reference eigensolver kept independent of LAPACK.  It is pure numpy with
Python-level loops over rotations, so it is meant for small matrices and as
a cross-check of the LAPACK path in :func:`rmtlab.spectral.eigen_decompose`.
"""

from __future__ import annotations

import math

import numpy as np

from rmtlab.errors import NumericalError


def householder_tridiagonalize(a: np.ndarray, want_q: bool = True):
    """Reduce a real symmetric or complex hermitian matrix to real tridiagonal form.

    Returns ``(d, e, q)`` with ``q^H a q = tridiag(e, d, e)`` and ``d``, ``e``
    real.  For hermitian input the complex off-diagonal is rotated to the
    real line by a diagonal unitary that is folded into ``q``.
    """
    a = np.array(a, dtype=np.complex128 if np.iscomplexobj(a) else np.float64)
    n = a.shape[0]
    q = np.eye(n, dtype=a.dtype) if want_q else None
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * nx
        v /= np.linalg.norm(v)
        # a <- (I - 2 v v^H) a (I - 2 v v^H) restricted to the trailing block
        blk = a[k + 1:, k:]
        blk -= 2.0 * np.outer(v, v.conj() @ blk)
        blk = a[k:, k + 1:]
        blk -= 2.0 * np.outer(blk @ v, v.conj())
        if want_q:
            qb = q[:, k + 1:]
            qb -= 2.0 * np.outer(qb @ v, v.conj())
    d = np.real(np.diag(a)).copy()
    sub = np.diag(a, -1).copy()
    e = np.abs(sub)
    if want_q and np.iscomplexobj(a):
        p = np.ones(n, dtype=np.complex128)
        for k in range(n - 1):
            p[k + 1] = p[k] * (sub[k] / e[k] if e[k] != 0 else 1.0)
        q = q * p[None, :]
    elif want_q:
        # real case: fix signs so the off-diagonal is nonnegative
        p = np.ones(n)
        for k in range(n - 1):
            p[k + 1] = p[k] * (1.0 if sub[k].real >= 0 else -1.0)
        q = q * p[None, :]
    return d, e, q


def tridiagonal_qr(d, e, z=None, max_sweeps: int = 30):
    """Eigenvalues (and optionally vectors) of a real symmetric tridiagonal matrix.

    Implicit single-shift QR with Wilkinson shifts and deflation.  ``z``, if
    given, is multiplied on the right by the accumulated rotations.  Returns
    ``(w, z)`` with ``w`` sorted ascending and ``z`` columns permuted to match.
    """
    d = np.array(d, dtype=np.float64)
    e = np.array(e, dtype=np.float64)
    n = d.size
    if z is not None:
        z = np.array(z)
    eps = np.finfo(float).eps
    hi = n - 1
    iters = 0
    while hi > 0:
        if abs(e[hi - 1]) <= eps * (abs(d[hi - 1]) + abs(d[hi])) or abs(e[hi - 1]) < 1e-300:
            e[hi - 1] = 0.0
            hi -= 1
            continue
        lo = hi - 1
        while lo > 0:
            if abs(e[lo - 1]) <= eps * (abs(d[lo - 1]) + abs(d[lo])):
                e[lo - 1] = 0.0
                break
            lo -= 1
        iters += 1
        if iters > max_sweeps * n:
            raise NumericalError("implicit QR did not converge")
        _qr_step(d, e, lo, hi, z)
    order = np.argsort(d, kind="stable")
    w = d[order]
    if z is not None:
        z = z[:, order]
    return w, z


def _qr_step(d, e, lo, hi, z):
    dd = 0.5 * (d[hi - 1] - d[hi])
    b = e[hi - 1]
    sgn = 1.0 if dd >= 0 else -1.0
    mu = d[hi] - b * b / (dd + sgn * math.hypot(dd, b))
    x = d[lo] - mu
    y = e[lo]
    for k in range(lo, hi):
        r = math.hypot(x, y)
        if r == 0.0:
            c, s = 1.0, 0.0
        else:
            c, s = x / r, y / r
        if k > lo:
            e[k - 1] = r
        a, bk, cc = d[k], e[k], d[k + 1]
        d[k] = c * c * a + 2.0 * c * s * bk + s * s * cc
        d[k + 1] = s * s * a - 2.0 * c * s * bk + c * c * cc
        e[k] = c * s * (cc - a) + (c * c - s * s) * bk
        if k + 1 < hi:
            y = s * e[k + 1]
            e[k + 1] = c * e[k + 1]
        x = e[k]
        if z is not None:
            zk = z[:, k].copy()
            z[:, k] = c * zk + s * z[:, k + 1]
            z[:, k + 1] = -s * zk + c * z[:, k + 1]


def eigh_qr(a: np.ndarray, want_vectors: bool = False):
    """Full eigendecomposition of a self-adjoint matrix via tridiagonal QR."""
    d, e, q = householder_tridiagonalize(a, want_q=want_vectors)
    w, v = tridiagonal_qr(d, e[: max(d.size - 1, 0)], z=q if want_vectors else None)
    return w, v
