"""Population quantities computed from theoretical autocovariances.

The best order-k linear predictor coefficients ``a(k)`` solve the Yule-Walker
system ``R(k) a(k) = -(gamma_1..gamma_k)'``, and the squared projection bias
``||a - a(k)||_R^2`` equals ``sigma_k^2 - sigma^2`` for the population, so no
infinite quadratic form is ever truncated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np
from scipy import linalg

from .errors import DegeneratePopulationError
from .procgen import ProcessSpec, theoretical_autocov

ORACLE_CSV_HEADER = ("n", "K_n", "N", "D", "k_star", "L_D_min", "L_n_at_k_star", "k_star_n", "L_n_min")


@dataclass(frozen=True)
class PopulationModel:
    """Autocovariances ``gamma_0..gamma_L``, innovation variance and AR coefficients."""

    gamma: np.ndarray
    sigma2: float
    a_inf: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.size < 1 or not g[0] > 0:
            raise DegeneratePopulationError("gamma_0 must be positive")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "a_inf", np.asarray(self.a_inf, dtype=float))

    @classmethod
    def from_spec(cls, spec: ProcessSpec, max_lag: Optional[int] = None, K_n: Optional[int] = None) -> "PopulationModel":
        """Default lag count ``max(4 K_n, T)`` where T is the AR truncation."""
        T = spec.truncation or len(spec.coeffs) or 1
        if max_lag is None:
            max_lag = max(4 * (K_n or 1), T)
        if spec.kind == "arma11":
            a = spec.ar_coefficients(max(max_lag, 1))
        else:
            a = spec.ar_coefficients()
        return cls(theoretical_autocov(spec, max_lag), spec.sigma2, a)

    @property
    def max_lag(self) -> int:
        return self.gamma.size - 1

    def toeplitz(self, k: int) -> np.ndarray:
        self._need(k - 1)
        return linalg.toeplitz(self.gamma[:k])

    def _need(self, lag):
        if lag > self.max_lag:
            raise ValueError(f"need gamma up to lag {lag}, model stores {self.max_lag}")


def projection(pop: PopulationModel, k: int):
    """``(a(k), sigma_k^2)`` for the best linear predictor of order ``k``."""
    if k < 1:
        raise ValueError("order must be >= 1")
    pop._need(k)
    R = pop.toeplitz(k)
    r = pop.gamma[1:k + 1]
    try:
        c = linalg.cho_factor(R, lower=True)
    except linalg.LinAlgError:
        raise DegeneratePopulationError(f"R({k}) is not positive definite") from None
    a = -linalg.cho_solve(c, r)
    return a, float(pop.gamma[0] + a @ r)


def innovation_variances(pop: PopulationModel, K: int) -> np.ndarray:
    """``sigma_k^2`` for ``k = 0..K`` by the Durbin-Levinson recursion."""
    pop._need(K)
    g = pop.gamma
    out = np.empty(K + 1)
    out[0] = g[0]
    phi = np.zeros(0)
    v = g[0]
    for k in range(1, K + 1):
        refl = (g[k] - phi @ g[k - 1:0:-1]) / v
        phi = np.concatenate((phi - refl * phi[::-1], [refl]))
        v = v * (1.0 - refl * refl)
        if not v > 0:
            raise DegeneratePopulationError(f"R({k}) is not positive definite")
        out[k] = v
    return out


def projection_bias(pop: PopulationModel, K: int) -> np.ndarray:
    """``||a - a(k)||_R^2 = sigma_k^2 - sigma^2`` for ``k = 1..K``."""
    return innovation_variances(pop, K)[1:] - pop.sigma2


def quadratic_norm(pop: PopulationModel, d: np.ndarray) -> float:
    """``||d||_R^2 = sum_{i,j} d_i d_j gamma_{i-j}`` for a finite vector."""
    d = np.asarray(d, dtype=float)
    return float(d @ pop.toeplitz(d.size) @ d)


def L_n(pop: PopulationModel, k: int, n: int, K_n: int) -> float:
    """``k sigma^2 / N + ||a - a(k)||_R^2``."""
    return L_n_D(pop, k, n, K_n, 2.0)


def L_n_D(pop: PopulationModel, k: int, n: int, K_n: int, D: float) -> float:
    """``(D - 1) k sigma^2 / N + ||a - a(k)||_R^2``."""
    N = n - K_n
    if N <= 0:
        raise ValueError(f"N = n - K_n must be positive (n={n}, K_n={K_n})")
    _, s2k = projection(pop, k)
    return (D - 1.0) * k * pop.sigma2 / N + (s2k - pop.sigma2)


def L_profile(pop: PopulationModel, n: int, K_n: int, D: float = 2.0, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """``L_{n,D}(k)`` for ``k = 1..K_n``."""
    N = n - K_n
    if N <= 0:
        raise ValueError(f"N = n - K_n must be positive (n={n}, K_n={K_n})")
    if bias is None:
        bias = projection_bias(pop, K_n)
    k = np.arange(1, K_n + 1)
    return (D - 1.0) * k * pop.sigma2 / N + bias[:K_n]


def k_star(pop: PopulationModel, n: int, K_n: int, D: float = 2.0, bias: Optional[np.ndarray] = None) -> int:
    """Smallest minimizer of ``L_{n,D}`` over ``1..K_n``."""
    return int(np.argmin(L_profile(pop, n, K_n, D, bias))) + 1


@dataclass(frozen=True)
class RnDiagnostic:
    value: float
    k_star: int
    empty: bool

    def __float__(self):
        return self.value


def rn_diagnostic(pop: PopulationModel, n: int, K_n: int, D: float, xi: float, theta: float, M: float) -> RnDiagnostic:
    """``min_{k in A} k*^xi N (L_D(k) - L_D(k*)) / ((D - 1) |k - k*|)``.

    ``A`` holds the orders at distance at least ``M k*^theta`` from ``k*``; an
    empty ``A`` gives ``value = inf`` with ``empty = True``.
    """
    N = n - K_n
    L = L_profile(pop, n, K_n, D)
    ks = int(np.argmin(L)) + 1
    k = np.arange(1, K_n + 1)
    far = np.abs(k - ks) >= M * ks ** theta
    if not far.any():
        return RnDiagnostic(math.inf, ks, True)
    ratio = ks ** xi * N * (L[far] - L[ks - 1]) / ((D - 1.0) * np.abs(k[far] - ks))
    return RnDiagnostic(float(ratio.min()), ks, False)


def oracle_sweep(spec: ProcessSpec, n_values: Iterable[int], D_values: Iterable[float], K_rule=None) -> List[tuple]:
    """Rows of :data:`ORACLE_CSV_HEADER` for every ``(n, D)`` pair."""
    K_rule = K_rule or (lambda n: math.isqrt(n))
    n_values = list(n_values)
    D_values = list(D_values)
    K_max = max(K_rule(n) for n in n_values)
    pop = PopulationModel.from_spec(spec, max_lag=max(K_max, 1))
    bias = projection_bias(pop, K_max)
    rows = []
    for n in n_values:
        K_n = K_rule(n)
        L2 = L_profile(pop, n, K_n, 2.0, bias)
        kn = int(np.argmin(L2)) + 1
        for D in D_values:
            LD = L_profile(pop, n, K_n, D, bias)
            kD = int(np.argmin(LD)) + 1
            rows.append((n, K_n, n - K_n, D, kD, float(LD[kD - 1]), float(L2[kD - 1]), kn, float(L2[kn - 1])))
    return rows
