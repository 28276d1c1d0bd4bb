"""Hot numerical kernels, available in two interchangeable backends.

The training inner loops dominate runtime (the noise-corrected trainer does
a full data pass per update; sweeps run hundreds of trainings), so they
exist twice:

* a looped implementation compiled with numba's ``@njit`` (``*_numba``), and
* a vectorized pure-NumPy implementation (``*_numpy``).

The active backend is chosen at import time: numba when it imports cleanly,
unless the environment variable ``UNCONFUSED_NUMBA`` is set to
``0``/``false``/``off``/``no``, which forces the NumPy path.  Both backends
implement identical update rules; floating-point reduction order differs, so
across backends results agree to roundoff rather than bit-for-bit.  Within a
backend every run is bit-reproducible.  Under the ``random`` selection
strategy the two backends consume different RNG streams (the compiled loop
keeps its own counter), so their trajectories are not comparable there.

``benchmarks/bench_kernels.py`` times the two backends side by side.

Weight layout inside kernels is (Q, d), one contiguous row per class;
callers transpose at the boundary.  Trace arrays are preallocated by the
caller and filled up to the returned row count.  The 4-slot ``diag`` array
receives [max column-sum drift ratio, max |sum of step coefficients|,
update count, stop reason].
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba as nb

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    nb = None
    HAS_NUMBA = False

_flag = os.environ.get("UNCONFUSED_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off", "no")
USE_NUMBA = HAS_NUMBA and NUMBA_REQUESTED

SEL_ERROR = 0
SEL_CONFUSION = 1
SEL_RANDOM = 2
STEP_PERCEPTRON = 0
STEP_UNIFORM = 1
STOP_CONVERGED = 0
STOP_NO_VIABLE = 1
STOP_MAX_ITERS = 2


def backend() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# looped bodies (compiled with numba when available)


def _uma_train_loop(X, y, WT, Cinv, alpha, stop_norm, max_iters, sel_mode,
                    step_mode, sel_priors, rand_seed, tp, tq, tnorm, tesize,
                    terr, diag):
    n, d = X.shape
    Q = Cinv.shape[0]
    if sel_mode == 2:
        np.random.seed(rand_seed)
    gam = np.zeros((Q, Q, d))
    Z = np.zeros((Q, Q, d))
    norms = np.empty((Q, Q))
    spent = np.zeros((Q, Q), dtype=np.uint8)
    eflag = np.zeros(Q, dtype=np.uint8)
    tau = np.zeros(Q)
    t = 0
    pending = -1
    updates = 0
    reason = 2
    while True:
        if updates >= max_iters:
            reason = 2
            break
        zero_model = True
        for q in range(Q):
            for j in range(d):
                if WT[q, j] != 0.0:
                    zero_model = False
                    break
            if not zero_model:
                break
        for p in range(Q):
            for k in range(Q):
                for j in range(d):
                    gam[p, k, j] = 0.0
        mistakes = 0
        if zero_model:
            # an all-zero model ties every class on every point; treat each
            # point as confidently owned by all classes so the first pass can
            # leave the zero state
            for i in range(n):
                yi = y[i]
                if yi != 0:
                    mistakes += 1
                for j in range(d):
                    gam[0, yi, j] += X[i, j]
            for p in range(1, Q):
                for k in range(Q):
                    for j in range(d):
                        gam[p, k, j] = gam[0, k, j]
        else:
            for i in range(n):
                best = -1.0e308
                second = -1.0e308
                bp = 0
                for q in range(Q):
                    s = 0.0
                    for j in range(d):
                        s += X[i, j] * WT[q, j]
                    if s > best:
                        second = best
                        best = s
                        bp = q
                    elif s > second:
                        second = s
                if bp != y[i]:
                    mistakes += 1
                if best - second > alpha:
                    yi = y[i]
                    for j in range(d):
                        gam[bp, yi, j] += X[i, j]
        if pending >= 0:
            terr[pending] = mistakes / n
            pending = -1
        inv_n = 1.0 / n
        maxnorm = 0.0
        for p in range(Q):
            for q in range(Q):
                for j in range(d):
                    acc = 0.0
                    for k in range(Q):
                        acc += Cinv[q, k] * gam[p, k, j]
                    Z[p, q, j] = acc * inv_n
        for p in range(Q):
            for q in range(Q):
                if p == q:
                    norms[p, q] = -1.0
                else:
                    s = 0.0
                    for j in range(d):
                        s += Z[p, q, j] * Z[p, q, j]
                    s = np.sqrt(s)
                    norms[p, q] = s
                    if s > maxnorm:
                        maxnorm = s
        if maxnorm <= stop_norm:
            reason = 0
            break
        for p in range(Q):
            for q in range(Q):
                spent[p, q] = 0
        applied = False
        while not applied:
            bp = -1
            bq = -1
            if sel_mode == 2:
                cnt = 0
                for p in range(Q):
                    for q in range(Q):
                        if p != q and spent[p, q] == 0 and norms[p, q] > stop_norm:
                            cnt += 1
                if cnt > 0:
                    pick = int(np.random.random() * cnt)
                    if pick >= cnt:
                        pick = cnt - 1
                    seen = 0
                    for p in range(Q):
                        for q in range(Q):
                            if p != q and spent[p, q] == 0 and norms[p, q] > stop_norm:
                                if seen == pick:
                                    bp = p
                                    bq = q
                                seen += 1
            else:
                bestkey = -1.0
                for p in range(Q):
                    for q in range(Q):
                        if p == q or spent[p, q] == 1 or norms[p, q] <= stop_norm:
                            continue
                        key = norms[p, q]
                        if sel_mode == 1:
                            key = key / sel_priors[q]
                        if key > bestkey:
                            bestkey = key
                            bp = p
                            bq = q
            if bp < 0:
                break
            alpha_eff = alpha
            if zero_model:
                alpha_eff = 0.0
            esize = 0
            for r in range(Q):
                eflag[r] = 0
            for r in range(Q):
                if r == bq:
                    continue
                g = 0.0
                for j in range(d):
                    g += (WT[r, j] - WT[bq, j]) * Z[bp, bq, j]
                if g >= alpha_eff:
                    eflag[r] = 1
                    esize += 1
            if esize == 0:
                spent[bp, bq] = 1
                continue
            for r in range(Q):
                tau[r] = 0.0
            tau[bq] = 1.0
            if step_mode == 0 and eflag[bp] == 1:
                tau[bp] = -1.0
            else:
                share = -1.0 / esize
                for r in range(Q):
                    if eflag[r] == 1:
                        tau[r] = share
            tsum = 0.0
            for r in range(Q):
                tsum += tau[r]
            if abs(tsum) > diag[1]:
                diag[1] = abs(tsum)
            for r in range(Q):
                if tau[r] != 0.0:
                    tr = tau[r]
                    for j in range(d):
                        WT[r, j] += tr * Z[bp, bq, j]
            maxcol = 0.0
            for q in range(Q):
                s = 0.0
                for j in range(d):
                    s += WT[q, j] * WT[q, j]
                s = np.sqrt(s)
                if s > maxcol:
                    maxcol = s
            maxsum = 0.0
            for j in range(d):
                cs = 0.0
                for q in range(Q):
                    cs += WT[q, j]
                cs = abs(cs)
                if cs > maxsum:
                    maxsum = cs
            ratio = maxsum / (1.0 + maxcol)
            if ratio > diag[0]:
                diag[0] = ratio
            tp[t] = bp
            tq[t] = bq
            tnorm[t] = norms[bp, bq]
            tesize[t] = esize
            terr[t] = np.nan
            pending = t
            t += 1
            updates += 1
            applied = True
        if not applied:
            reason = 1
            break
    if pending >= 0:
        mistakes = 0
        for i in range(n):
            best = -1.0e308
            bp = 0
            for q in range(Q):
                s = 0.0
                for j in range(d):
                    s += X[i, j] * WT[q, j]
                if s > best:
                    best = s
                    bp = q
            if bp != y[i]:
                mistakes += 1
        terr[pending] = mistakes / n
    diag[2] = updates
    diag[3] = reason
    return t


def _perceptron_epochs_loop(X, y, WT, orders, diag):
    n_epochs, n = orders.shape
    Q, d = WT.shape
    updates = 0
    epochs_run = n_epochs
    for e in range(n_epochs):
        mistakes = 0
        for ii in range(n):
            i = orders[e, ii]
            best = -1.0e308
            bp = 0
            for q in range(Q):
                s = 0.0
                for j in range(d):
                    s += X[i, j] * WT[q, j]
                if s > best:
                    best = s
                    bp = q
            yi = y[i]
            if bp != yi:
                for j in range(d):
                    WT[yi, j] += X[i, j]
                    WT[bp, j] -= X[i, j]
                mistakes += 1
                updates += 1
                maxcol = 0.0
                for q in range(Q):
                    s = 0.0
                    for j in range(d):
                        s += WT[q, j] * WT[q, j]
                    s = np.sqrt(s)
                    if s > maxcol:
                        maxcol = s
                maxsum = 0.0
                for j in range(d):
                    cs = 0.0
                    for q in range(Q):
                        cs += WT[q, j]
                    cs = abs(cs)
                    if cs > maxsum:
                        maxsum = cs
                ratio = maxsum / (1.0 + maxcol)
                if ratio > diag[0]:
                    diag[0] = ratio
        if mistakes == 0:
            epochs_run = e + 1
            break
    diag[1] = updates
    return updates, epochs_run


if HAS_NUMBA:
    uma_train_numba = nb.njit(cache=True, nogil=True)(_uma_train_loop)
    perceptron_epochs_numba = nb.njit(cache=True, nogil=True)(_perceptron_epochs_loop)
else:  # pragma: no cover - exercised only without numba installed
    uma_train_numba = None
    perceptron_epochs_numba = None


# ---------------------------------------------------------------------------
# vectorized NumPy backend


def iteration_candidates_numpy(X, y, WT, Cinv, alpha, inclusive):
    """One data pass: every update candidate against the current model.

    Returns (Z, norms, mistakes): Z[p, q] is the reconstructed update vector
    for the ordered class pair (p, q), norms[p, q] its Euclidean norm with -1
    on the diagonal, and mistakes the count of points whose arg-max
    prediction differs from their noisy label.  With ``inclusive`` set (used
    only against an all-zero model, where every score ties) each point
    contributes to every class region.
    """
    n, d = X.shape
    Q = Cinv.shape[0]
    scores = X @ WT.T
    pred = np.argmax(scores, axis=1)
    mistakes = int((pred != y).sum())
    if inclusive:
        sums = np.zeros((Q, d))
        for j in range(d):
            sums[:, j] = np.bincount(y, weights=X[:, j], minlength=Q)
        gam = np.broadcast_to(sums, (Q, Q, d)).copy()
    else:
        rows = np.arange(n)
        best = scores[rows, pred]
        scores[rows, pred] = -np.inf
        second = scores.max(axis=1)
        keep = (best - second) > alpha
        flat = pred[keep] * Q + y[keep]
        kept = X[keep]
        gam = np.zeros((Q * Q, d))
        for j in range(d):
            gam[:, j] = np.bincount(flat, weights=kept[:, j], minlength=Q * Q)
        gam = gam.reshape(Q, Q, d)
    Z = np.matmul(Cinv, gam) / n
    norms = np.sqrt((Z ** 2).sum(axis=2))
    np.fill_diagonal(norms, -1.0)
    return Z, norms, mistakes


def uma_train_numpy(X, y, WT, Cinv, alpha, stop_norm, max_iters, sel_mode,
                    step_mode, sel_priors, gen, tp, tq, tnorm, tesize, terr,
                    diag):
    """Vectorized twin of the compiled training loop.  ``gen`` supplies the
    draws for the random selection strategy."""
    n = X.shape[0]
    Q = Cinv.shape[0]
    t = 0
    pending = -1
    updates = 0
    reason = STOP_MAX_ITERS
    while True:
        if updates >= max_iters:
            reason = STOP_MAX_ITERS
            break
        inclusive = not WT.any()
        Z, norms, mistakes = iteration_candidates_numpy(X, y, WT, Cinv, alpha, inclusive)
        if pending >= 0:
            terr[pending] = mistakes / n
            pending = -1
        if norms.max() <= stop_norm:
            reason = STOP_CONVERGED
            break
        spent = np.zeros((Q, Q), dtype=bool)
        applied = False
        while not applied:
            viable = (norms > stop_norm) & ~spent
            if not viable.any():
                break
            if sel_mode == SEL_RANDOM:
                options = np.flatnonzero(viable.ravel())
                pick = int(options[int(gen.integers(options.size))])
            elif sel_mode == SEL_CONFUSION:
                keys = np.where(viable, norms / sel_priors[None, :], -1.0)
                pick = int(np.argmax(keys))
            else:
                keys = np.where(viable, norms, -1.0)
                pick = int(np.argmax(keys))
            p, q = divmod(pick, Q)
            z = Z[p, q]
            alpha_eff = 0.0 if inclusive else alpha
            gaps = (WT - WT[q]) @ z
            eflag = gaps >= alpha_eff
            eflag[q] = False
            esize = int(eflag.sum())
            if esize == 0:
                spent[p, q] = True
                continue
            tau = np.zeros(Q)
            tau[q] = 1.0
            if step_mode == STEP_PERCEPTRON and eflag[p]:
                tau[p] = -1.0
            else:
                tau[eflag] = -1.0 / esize
            diag[1] = max(diag[1], abs(float(tau.sum())))
            WT += tau[:, None] * z[None, :]
            colnorm = float(np.sqrt((WT ** 2).sum(axis=1)).max())
            colsum = float(np.abs(WT.sum(axis=0)).max())
            diag[0] = max(diag[0], colsum / (1.0 + colnorm))
            tp[t] = p
            tq[t] = q
            tnorm[t] = norms[p, q]
            tesize[t] = esize
            terr[t] = np.nan
            pending = t
            t += 1
            updates += 1
            applied = True
        if not applied:
            reason = STOP_NO_VIABLE
            break
    if pending >= 0:
        pred = np.argmax(X @ WT.T, axis=1)
        terr[pending] = float((pred != y).sum()) / n
    diag[2] = updates
    diag[3] = reason
    return t


def perceptron_epochs_numpy(X, y, WT, orders, diag):
    """Per-example fallback for the perceptron epochs.  The update sequence is
    inherently serial (each mistake changes the very next prediction), so
    this path trades speed for independence from the compiler."""
    n_epochs, n = orders.shape
    updates = 0
    epochs_run = n_epochs
    for e in range(n_epochs):
        mistakes = 0
        for ii in range(n):
            i = orders[e, ii]
            p = int(np.argmax(X[i] @ WT.T))
            yi = int(y[i])
            if p != yi:
                WT[yi] += X[i]
                WT[p] -= X[i]
                mistakes += 1
                updates += 1
                colnorm = float(np.sqrt((WT ** 2).sum(axis=1)).max())
                colsum = float(np.abs(WT.sum(axis=0)).max())
                diag[0] = max(diag[0], colsum / (1.0 + colnorm))
        if mistakes == 0:
            epochs_run = e + 1
            break
    diag[1] = updates
    return updates, epochs_run


def warmup() -> None:
    """Force JIT compilation of the compiled kernels on toy inputs."""
    if not USE_NUMBA:
        return
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([0, 1], dtype=np.int64)
    WT = np.zeros((2, 2))
    Cinv = np.eye(2)
    pri = np.full(2, 0.5)
    tp = np.zeros(4, dtype=np.int64)
    tq = np.zeros(4, dtype=np.int64)
    tn = np.zeros(4)
    te = np.zeros(4, dtype=np.int64)
    tr = np.zeros(4)
    diag = np.zeros(4)
    uma_train_numba(X, y, WT, Cinv, 0.0, 1e-4, 4, SEL_ERROR, STEP_PERCEPTRON,
                    pri, 0, tp, tq, tn, te, tr, diag)
    orders = np.tile(np.arange(2, dtype=np.int64), (2, 1))
    perceptron_epochs_numba(X, y, np.zeros((2, 2)), orders, np.zeros(2))
