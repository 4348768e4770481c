"""Growing-window least-squares AR fits and one-step predictors.

Index conventions
-----------------
Everything public uses the 1-based indices of the model equations; arrays are
0-based internally.

=====================================  ==========================================
quantity (1-based)                     array expression (0-based ``v = values``)
=====================================  ==========================================
``x_t``                                ``v[t - 1]``
``x_j(k) = (x_j, ..., x_{j-k+1})'``    ``v[j - k:j][::-1]``
target paired with ``x_j(k)``          ``x_{j+1} = v[j]``
fit at index ``i``                     rows ``j = K_n .. i - 1`` (``i - K_n`` rows)
prediction from the fit at ``i``       ``xhat_{i+1}(k) = -x_i(k)' a_i(k)``
=====================================  ==========================================

The regressor start ``j = K_n`` is shared by every order ``k <= K_n``, so the
Gram matrix of order ``k`` is the leading ``k x k`` block of the order-``K_n``
Gram matrix.  :class:`OrderFits` exploits this: one Cholesky factor ``L`` of
the full Gram matrix yields predictions for all orders at once, because the
leading block of ``L`` is the factor of the leading block of the Gram matrix
and ``xhat(k) = sum_{l <= k} (L^{-1} x)_l (L^{-1} c)_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg

from .errors import BoundsError, EstimationError
from .procgen import SeriesWindow

RANK_TOL = 1e-10
REFACTOR_INTERVAL = 64
_BLOCK_ELEMENTS = 1 << 21


def lag_matrix(values: np.ndarray, k: int, j_lo: int, j_hi: int) -> np.ndarray:
    """Rows ``x_j(k)'`` for ``j = j_lo .. j_hi`` (inclusive, 1-based)."""
    if j_hi < j_lo:
        return np.zeros((0, k))
    if j_lo - k < 0 or j_hi > values.size:
        raise BoundsError(f"regressors x_j({k}) for j={j_lo}..{j_hi} need x_{j_lo - k + 1}..x_{j_hi}")
    w = sliding_window_view(values, k)
    return w[j_lo - k:j_hi - k + 1, ::-1]


def gram_is_valid(gram: np.ndarray, rows: int, rank_tol: float = RANK_TOL) -> bool:
    """Numerical rank test for an unnormalized Gram matrix built from ``rows`` rows."""
    k = gram.shape[0]
    if rows < k:
        return False
    trace = float(np.trace(gram))
    if not (trace > 0 and math.isfinite(trace)):
        return False
    lam = linalg.eigvalsh(gram, subset_by_index=[0, 0])[0]
    return bool(lam > rank_tol * trace / k)


def cholesky_update(L: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``L L' + x x'``."""
    L = L.copy()
    x = np.array(x, dtype=float)
    k = x.size
    for p in range(k):
        r = math.hypot(L[p, p], x[p])
        c = r / L[p, p]
        s = x[p] / L[p, p]
        L[p, p] = r
        if p + 1 < k:
            L[p + 1:, p] = (L[p + 1:, p] + s * x[p + 1:]) / c
            x[p + 1:] = c * x[p + 1:] - s * L[p + 1:, p]
    return L


@dataclass(frozen=True)
class Predictor:
    """``xhat_{i+1}(k) = -x_i(k)' coeffs``."""

    coeffs: np.ndarray

    @property
    def k(self) -> int:
        return self.coeffs.size

    def predict(self, regressor: np.ndarray) -> float:
        return float(-np.dot(regressor, self.coeffs))


@dataclass(frozen=True)
class SequentialFit:
    """Least-squares state of an AR(k) fit over rows ``j = K_n .. i - 1``.

    ``gram`` and ``cross`` are unnormalized sums; the ``1 / (i - K_n)`` factor of
    the normal equations cancels in the solution.  ``coeffs`` is ``None`` when
    the Gram matrix fails the rank test.
    """

    k: int
    K_n: int
    i: int
    gram: np.ndarray
    cross: np.ndarray
    coeffs: Optional[np.ndarray]
    valid: bool
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    updates: int = 0

    @property
    def rows(self) -> int:
        return self.i - self.K_n

    @property
    def normalized_gram(self) -> np.ndarray:
        return self.gram / self.rows

    def predictor(self) -> Predictor:
        if not self.valid:
            raise EstimationError(f"AR({self.k}) fit at i={self.i} is not uniquely defined")
        return Predictor(self.coeffs)

    def predict_next(self, series: SeriesWindow) -> float:
        """``xhat_{i+1}(k)`` using ``x_i(k)`` from ``series``."""
        return self.predictor().predict(series.regressor(self.i, self.k))


def _check_fit_args(series: SeriesWindow, k: int, K_n: int, i: int) -> None:
    if K_n < 1:
        raise BoundsError(f"K_n must be >= 1, got {K_n}")
    if not 1 <= k <= K_n:
        raise BoundsError(f"order k={k} outside 1..K_n={K_n}")
    if i < K_n + k or i > series.n:
        raise BoundsError(f"fit index i={i} outside {K_n + k}..n={series.n} for k={k}, K_n={K_n}")


def _solve(gram, cross, rows, chol=None):
    if not gram_is_valid(gram, rows):
        return None, None, False
    if chol is None:
        try:
            chol = linalg.cholesky(gram, lower=True)
        except linalg.LinAlgError:
            return None, None, False
    coeffs = -linalg.cho_solve((chol, True), cross)
    return coeffs, chol, True


def fit_at(series: SeriesWindow, k: int, K_n: int, i: int) -> SequentialFit:
    """Batch normal-equation fit of AR(k) at index ``i`` (rows ``j = K_n .. i-1``)."""
    _check_fit_args(series, k, K_n, i)
    X = lag_matrix(series.values, k, K_n, i - 1)
    y = series.values[K_n:i]
    gram = X.T @ X
    cross = X.T @ y
    coeffs, chol, valid = _solve(gram, cross, i - K_n)
    return SequentialFit(k, K_n, i, gram, cross, coeffs, valid, chol, 0)


def advance(fit: SequentialFit, series: SeriesWindow) -> SequentialFit:
    """Fit at ``i + 1`` from the fit at ``i`` by a rank-one update.

    The Cholesky factor is updated in place of refactoring, except every
    ``REFACTOR_INTERVAL`` updates (or while the fit is still invalid), when it
    is recomputed from the accumulated Gram matrix.
    """
    i = fit.i
    if i + 1 > series.n:
        raise BoundsError(f"cannot advance past the end of the series (i={i}, n={series.n})")
    x = series.regressor(i, fit.k)
    target = series.values[i]
    gram = fit.gram + np.outer(x, x)
    cross = fit.cross + x * target
    rows = i + 1 - fit.K_n
    updates = fit.updates + 1
    chol = None
    if fit.valid and fit.chol is not None and updates < REFACTOR_INTERVAL:
        chol = cholesky_update(fit.chol, x)
    else:
        updates = 0
    coeffs, chol, valid = _solve(gram, cross, rows, chol)
    return replace(fit, i=i + 1, gram=gram, cross=cross, coeffs=coeffs, valid=valid, chol=chol, updates=updates)


def residual_variance(series: SeriesWindow, k: int, K_n: int) -> float:
    """``sigma2_hat_n(k) = (1/N) sum_{t=K_n}^{n-1} (x_{t+1} + a_n(k)' x_t(k))^2``, ``N = n - K_n``."""
    fit = fit_at(series, k, K_n, series.n)
    if not fit.valid:
        raise EstimationError(f"final Gram matrix of AR({k}) is singular (n={series.n}, K_n={K_n})")
    X = lag_matrix(series.values, k, K_n, series.n - 1)
    resid = series.values[K_n:] + X @ fit.coeffs
    return float(np.mean(resid ** 2))


def first_valid_index(series: SeriesWindow, K_n: int) -> int:
    """``m``: first ``i >= 2 K_n`` at which the full-order fit is defined."""
    return OrderFits(series, K_n).m


class OrderFits:
    """All nested fits AR(1)..AR(K_n) on one series, computed lazily and cached.

    This is the shared fit cache for criteria that run on the same series:
    final-index coefficients, residual variances and predictions for every
    order, and sequential one-step errors for every ``(i, k)`` from a start index.
    """

    def __init__(self, series: SeriesWindow, K_n: int):
        if K_n < 1:
            raise BoundsError(f"K_n must be >= 1, got {K_n}")
        if series.n < 2 * K_n + 1:
            raise BoundsError(f"series of length {series.n} too short for K_n={K_n}")
        self.series = series
        self.K_n = K_n
        self.n = series.n
        self.N = series.n - K_n
        v = series.values
        self._X = lag_matrix(v, K_n, K_n, self.n - 1)
        self._y = v[K_n:]
        self._m = None
        self._final = None
        self._seq_lo = None
        self._seq_pred = None
        self._seq_valid = None

    # -- validity -----------------------------------------------------------

    def _gram(self, i):
        rows = i - self.K_n
        X = self._X[:rows]
        return X.T @ X, X.T @ self._y[:rows]

    def order_validity(self, gram: np.ndarray, rows: int) -> np.ndarray:
        """Validity of every nested order for one Gram matrix."""
        K = self.K_n
        diag = np.diag(gram)
        mean_tr = np.cumsum(diag) / np.arange(1, K + 1)
        ok = np.zeros(K, dtype=bool)
        if not (np.all(np.isfinite(gram)) and mean_tr[0] > 0):
            return np.array([gram_is_valid(gram[:k, :k], rows) for k in range(1, K + 1)])
        if rows >= K:
            lam = linalg.eigvalsh(gram, subset_by_index=[0, 0])[0]
            if lam > RANK_TOL * mean_tr.max():
                # interlacing: every leading block has a larger smallest eigenvalue
                ok[:] = True
                return ok
        return np.array([gram_is_valid(gram[:k, :k], rows) for k in range(1, K + 1)])

    @property
    def m(self) -> int:
        if self._m is None:
            K = self.K_n
            for i in range(2 * K, self.n + 1):
                gram, _ = self._gram(i)
                if gram_is_valid(gram, i - K):
                    self._m = i
                    break
            else:
                raise EstimationError(f"full-order AR({K}) fit is never defined on this series (n={self.n})")
        return self._m

    # -- final-index quantities ---------------------------------------------

    def _compute_final(self):
        K, n = self.K_n, self.n
        gram, cross = self._gram(n)
        valid = self.order_validity(gram, self.N)
        coeffs = [None] * K
        sigma2 = np.full(K, np.nan)
        pred = np.full(K, np.nan)
        x_n = self.series.regressor(n, K)
        X, y = self._X, self._y
        if valid.all():
            L = linalg.cholesky(gram, lower=True)
            v = linalg.solve_triangular(L, cross, lower=True)
            u = linalg.solve_triangular(L, x_n, lower=True)
            pred = np.cumsum(u * v)
            W = linalg.solve_triangular(L, X.T, lower=True).T
            fitted = np.cumsum(W * v, axis=1)
            sigma2 = np.mean((y[:, None] - fitted) ** 2, axis=0)
            for k in range(1, K + 1):
                coeffs[k - 1] = -linalg.solve_triangular(L[:k, :k], v[:k], lower=True, trans="T")
        else:
            for k in range(1, K + 1):
                if not valid[k - 1]:
                    continue
                a = -linalg.solve(gram[:k, :k], cross[:k], assume_a="pos")
                coeffs[k - 1] = a
                sigma2[k - 1] = np.mean((y + X[:, :k] @ a) ** 2)
                pred[k - 1] = -x_n[:k] @ a
        self._final = (valid, coeffs, sigma2, pred)

    @property
    def final_valid(self) -> np.ndarray:
        if self._final is None:
            self._compute_final()
        return self._final[0]

    def coefficients(self, k: int) -> np.ndarray:
        """``a_n(k)``; raises when the final fit of order ``k`` is undefined."""
        if self._final is None:
            self._compute_final()
        a = self._final[1][k - 1]
        if a is None:
            raise EstimationError(f"final AR({k}) fit is singular (n={self.n}, K_n={self.K_n})")
        return a

    @property
    def residual_variances(self) -> np.ndarray:
        """``sigma2_hat_n(k)`` for ``k = 1..K_n`` (NaN where the fit is undefined)."""
        if self._final is None:
            self._compute_final()
        return self._final[2]

    @property
    def final_predictions(self) -> np.ndarray:
        """``xhat_{n+1}(k)`` for ``k = 1..K_n`` (NaN where the fit is undefined)."""
        if self._final is None:
            self._compute_final()
        return self._final[3]

    def predict_other(self, other: SeriesWindow, k: int) -> float:
        """``-y_n(k)' a_n(k)`` for an independent series ``y`` of the same length."""
        return float(-other.regressor(other.n, k) @ self.coefficients(k))

    # -- sequential predictions ---------------------------------------------

    def _sequential_block(self, i_lo, i_hi):
        """Predictions ``xhat_{i+1}(k)`` for ``i = i_lo..i_hi`` and all ``k``."""
        K = self.K_n
        X, y = self._X, self._y
        count = i_hi - i_lo + 1
        pred = np.full((count, K), np.nan)
        valid = np.zeros((count, K), dtype=bool)
        r0 = i_lo - K
        G0 = X[:r0].T @ X[:r0]
        c0 = X[:r0].T @ y[:r0]
        rows_new = X[r0:r0 + count - 1]
        grams = np.empty((count, K, K))
        grams[0] = G0
        np.multiply(rows_new[:, :, None], rows_new[:, None, :], out=grams[1:])
        np.cumsum(grams[1:], axis=0, out=grams[1:])
        grams[1:] += G0
        cross = np.empty((count, K))
        cross[0] = c0
        cross[1:] = c0 + np.cumsum(rows_new * y[r0:r0 + count - 1, None], axis=0)
        regs = X[r0:r0 + count]
        rows = np.arange(i_lo, i_hi + 1) - K
        fast = np.zeros(count, dtype=bool)
        if rows[0] >= K:
            diag = np.diagonal(grams, axis1=1, axis2=2)
            mean_tr = (np.cumsum(diag, axis=1) / np.arange(1, K + 1)).max(axis=1)
            # Gram matrices only gain PSD terms as i grows, so the smallest
            # eigenvalue and every trace are nondecreasing within the block
            lam0 = linalg.eigvalsh(grams[0], subset_by_index=[0, 0])[0]
            if lam0 > RANK_TOL * mean_tr[-1]:
                fast[:] = True
            else:
                lam = np.linalg.eigvalsh(grams)[:, 0]
                fast = lam > RANK_TOL * mean_tr
        if fast.any():
            L = np.linalg.cholesky(grams[fast])
            rhs = np.stack([cross[fast], regs[fast]], axis=2)
            sol = np.linalg.solve(L, rhs)
            pred[fast] = np.cumsum(sol[:, :, 0] * sol[:, :, 1], axis=1)
            valid[fast] = True
        for r in np.nonzero(~fast)[0]:
            ok = self.order_validity(grams[r], int(rows[r]))
            valid[r] = ok
            for k in np.nonzero(ok)[0] + 1:
                a = -linalg.solve(grams[r, :k, :k], cross[r, :k], assume_a="pos")
                pred[r, k - 1] = -regs[r, :k] @ a
        return pred, valid

    def _ensure_sequential(self, start):
        if self._seq_lo is not None and self._seq_lo <= start:
            return
        hi = self.n - 1 if self._seq_lo is None else self._seq_lo - 1
        preds, valids = [], []
        # walk backwards in blocks so memory stays bounded
        block = max(8, min(512, _BLOCK_ELEMENTS // (self.K_n * self.K_n)))
        i_hi = hi
        while i_hi >= start:
            i_lo = max(start, i_hi - block + 1)
            p, v = self._sequential_block(i_lo, i_hi)
            preds.insert(0, p)
            valids.insert(0, v)
            i_hi = i_lo - 1
        if self._seq_lo is not None:
            preds.append(self._seq_pred)
            valids.append(self._seq_valid)
        self._seq_pred = np.vstack(preds)
        self._seq_valid = np.vstack(valids)
        self._seq_lo = start

    def sequential_errors(self, start: int):
        """One-step errors ``x_{i+1} - xhat_{i+1}(k)`` for ``i = start..n-1``.

        Returns ``(errors, valid)`` of shape ``(n - start, K_n)``.
        """
        if not self.K_n + 1 <= start <= self.n - 1:
            raise BoundsError(f"start index {start} outside {self.K_n + 1}..{self.n - 1}")
        self._ensure_sequential(start)
        off = start - self._seq_lo
        pred = self._seq_pred[off:]
        valid = self._seq_valid[off:]
        targets = self.series.values[start:self.n]
        return targets[:, None] - pred, valid

    def ape(self, start: int) -> np.ndarray:
        """Accumulated squared prediction errors from ``start``; NaN for orders with an undefined fit."""
        err, valid = self.sequential_errors(start)
        out = np.sum(err ** 2, axis=0)
        out[~valid.all(axis=0)] = np.nan
        return out
