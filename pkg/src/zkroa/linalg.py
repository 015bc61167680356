"""Hermitian eigendecomposition by cyclic Jacobi rotations and the
thresholded pseudoinverse built on it."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateDataError


def _round_robin(n: int):
    """Pairings for one sweep: n-1 rounds of n/2 disjoint pairs (n even).

    Circle method: index 0 stays fixed, the rest rotate one place per round.
    """
    others = list(range(1, n))
    rounds = []
    for _ in range(n - 1):
        ring = [0] + others
        p = np.array(ring[: n // 2])
        q = np.array(ring[n // 2:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        others = others[-1:] + others[:-1]
    return rounds


def _scalar_jacobi(a, tol: float = 1e-14, max_sweeps: int = 60):
    """Scalar cyclic Jacobi. Each sweep visits every pair (p, q) once in a
    round-robin order; the pairs of one round are disjoint, so a round is
    applied as a single vectorised update."""
    n0 = a.shape[0]
    if n0 % 2:
        a = np.pad(a, ((0, 1), (0, 1)))
    n = a.shape[0]
    v = np.eye(n, dtype=a.dtype)
    if n0 <= 1:
        return a.real.diagonal()[:n0].copy(), v[:n0, :n0], 0

    scale = np.linalg.norm(a)
    rounds = _round_robin(n)
    sweeps = 0
    if scale == 0.0:
        max_sweeps = 0
    prev_off = np.inf
    for sweeps in range(1, max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        # Stop at tolerance, or once rounding noise stops the decrease.
        if off <= tol * scale or (off >= prev_off and off <= 1e-10 * scale):
            sweeps -= 1
            break
        prev_off = off
        for p, q in rounds:
            apq = a[p, q]
            r = np.abs(apq)
            app = a[p, p].real
            aqq = a[q, q].real
            act = r > 1e-300
            r_safe = np.where(act, r, 1.0)
            tau = (aqq - app) / (2.0 * r_safe)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(act, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ph = np.where(act, apq / r_safe, 1.0).astype(a.dtype)  # e^{i phi}
            # G on (p, q) = [[c, s ph], [-s conj(ph), c]], i.e. D J D^H with D = diag(1, conj(ph))
            gpp, gpq, gqp, gqq = c, s * ph, -s * np.conj(ph), c
            ap, aq = a[:, p], a[:, q]
            a[:, p] = ap * gpp + aq * gqp
            a[:, q] = ap * gpq + aq * gqq
            ap, aq = a[p, :], a[q, :]
            a[p, :] = np.conj(gpp)[:, None] * ap + np.conj(gqp)[:, None] * aq
            a[q, :] = np.conj(gpq)[:, None] * ap + np.conj(gqq)[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p], v[:, q]
            v[:, p] = vp * gpp + vq * gqp
            v[:, q] = vp * gpq + vq * gqq
    w = a.real.diagonal().copy()
    if n != n0:
        # The padding index is an exact zero row/column, never rotated into
        # the rest (its off-diagonals stay zero); drop it.
        keep = np.flatnonzero(np.abs(v[n0, :]) < 0.5)
        w, v = w[keep], v[:n0, keep]
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], sweeps


def pinv_hermitian(g, rel_tol: float = 1e-12):
    """Moore-Penrose inverse of a Hermitian PSD matrix.

    Eigenvalues at or below ``rel_tol * max eigenvalue`` are treated as zero.
    Returns ``(g_pinv, rank)``.
    """
    w, v, _ = jacobi_eigh(g)
    top = w.max() if w.size else 0.0
    if not top > 0:
        raise DegenerateDataError("Gram matrix has no eigenvalue above the threshold")
    keep = w > rel_tol * top
    vk = v[:, keep]
    return (vk / w[keep]) @ vk.conj().T, int(keep.sum())


def _block_jacobi(a, block, tol, max_sweeps):
    n0 = a.shape[0]
    nb = -(-n0 // block)
    nb += nb % 2
    n = nb * block
    # Padding rows sit on a sentinel diagonal below every eigenvalue and have
    # exactly zero coupling, so rotations never touch them.
    sentinel = -(2.0 * np.linalg.norm(a) + 1.0)
    if n != n0:
        a = np.pad(a, ((0, n - n0), (0, n - n0)))
        a[np.arange(n0, n), np.arange(n0, n)] = sentinel
    v = np.eye(n, dtype=a.dtype)
    blocks = [np.arange(i * block, (i + 1) * block) for i in range(nb)]
    rounds = _round_robin(nb)
    scale = np.linalg.norm(a[:n0, :n0])
    sweeps = 0
    prev_off = np.inf
    for sweeps in range(1, max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        # Stop at tolerance, or once rounding noise stops the decrease.
        if off <= tol * scale or (off >= prev_off and off <= 1e-10 * scale):
            sweeps -= 1
            break
        prev_off = off
        for ps, qs in rounds:
            for p, q in zip(ps, qs):
                idx = np.concatenate([blocks[p], blocks[q]])
                sub = a[np.ix_(idx, idx)]
                if np.linalg.norm(sub - np.diag(np.diag(sub))) <= tol * scale:
                    continue
                _, u, _ = _scalar_jacobi(sub)
                a[:, idx] = a[:, idx] @ u
                a[idx, :] = u.conj().T @ a[idx, :]
                v[:, idx] = v[:, idx] @ u
    w = a.real.diagonal().copy()
    order = np.argsort(w, kind="stable")[n - n0:]
    return w[order], v[:n0, order], sweeps


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 60, block: int = 32):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi sweeps.

    Returns ``(w, v, sweeps)`` with ascending real eigenvalues ``w`` and
    unitary ``v`` such that ``a = v @ diag(w) @ v^H``.

    Matrices larger than ``2 * block`` use the block form: the index set is
    cut into blocks, and each sweep visits every block pair once in a fixed
    round-robin order, diagonalising the pair's principal submatrix with the
    scalar method and applying that unitary to whole rows and columns.
    Output is deterministic for a given input.
    """
    a = np.array(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    # Real symmetric input stays in real arithmetic.
    a = a.real.astype(float) if not np.iscomplexobj(a) or not np.any(a.imag) else a.astype(complex)
    a = 0.5 * (a + a.conj().T)
    if block and a.shape[0] > 2 * block:
        return _block_jacobi(a, block, tol, max_sweeps)
    return _scalar_jacobi(a, tol, max_sweeps)
