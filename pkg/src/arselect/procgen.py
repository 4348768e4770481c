"""Generative processes: ARMA(1,1), finite AR, and truncated AR(infinity) presets.

Every process is stored in the sign convention

    x_t + a_1 x_{t-1} + a_2 x_{t-2} + ... = e_t,

so the AR polynomial is ``A(z) = 1 + sum_i a_i z^i`` and the MA(infinity)
weights are the power series of ``1 / A(z)``.  The ARMA(1,1) process
``x_{t+1} = phi x_t + eps_{t+1} + theta eps_t`` has ``A(z) = (1 - phi z) / (1 + theta z)``.

Random numbers come from numpy's PCG64 generator seeded through
``numpy.random.SeedSequence``; a fixed ``(seed, numpy PCG64)`` pair reproduces a
series bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import signal

from .errors import BoundsError, InvalidSpecError

ARMA11 = "arma11"
AR_FINITE = "ar"
AR_INF_EXP = "ar_inf_exp"
AR_INF_ALG = "ar_inf_alg"
KINDS = (ARMA11, AR_FINITE, AR_INF_EXP, AR_INF_ALG)

DEFAULT_BURN_IN = 1000
ALG_DEFAULT_TRUNCATION = 200
EXP_TRUNCATION_TOL = 1e-12
PSI_TOL = 1e-14
_PSI_MAX_TERMS = 1 << 22
_UNIT_CIRCLE_POINTS = 512

SeedLike = Union[int, np.random.SeedSequence, None]


def _exp_coeff(i, beta, scale):
    return scale * np.exp(-0.5 * beta * np.asarray(i, dtype=float))


def _alg_coeff(i, beta, scale):
    return scale * np.asarray(i, dtype=float) ** (-0.5 * (beta + 1.0))


def exp_truncation(beta: float, scale: float, tol: float = EXP_TRUNCATION_TOL) -> int:
    """Smallest T with ``|a_T| < tol`` for the exponential preset."""
    t = max(1, math.ceil(2.0 * math.log(scale / tol) / beta))
    # guard against rounding at the boundary
    while t > 1 and abs(_exp_coeff(t - 1, beta, scale)) < tol:
        t -= 1
    while abs(_exp_coeff(t, beta, scale)) >= tol:
        t += 1
    return t


def check_stationary(coeffs: Sequence[float]) -> None:
    """Raise InvalidSpecError unless ``1 + sum a_i z^i`` has no roots in ``|z| <= 1``.

    Two checks: the modulus of A(z) on the unit circle must stay away from zero,
    and the companion matrix of the recursion must have spectral radius < 1.
    """
    a = np.asarray(coeffs, dtype=float)
    if a.size == 0:
        return
    if not np.all(np.isfinite(a)):
        raise InvalidSpecError("AR coefficients must be finite")
    z = np.exp(2j * np.pi * np.arange(_UNIT_CIRCLE_POINTS) / _UNIT_CIRCLE_POINTS)
    poly = np.concatenate(([1.0], a))
    modulus = np.abs(np.polynomial.polynomial.polyval(z, poly))
    if modulus.min() < 1e-10:
        raise InvalidSpecError("A(z) vanishes on the unit circle")
    p = a.size
    companion = np.zeros((p, p))
    companion[0, :] = -a
    if p > 1:
        companion[1:, :-1] = np.eye(p - 1)
    radius = np.max(np.abs(np.linalg.eigvals(companion)))
    if radius >= 1.0:
        raise InvalidSpecError(
            f"A(z) has a root inside the closed unit disc (companion spectral radius {radius:.6g})"
        )


@dataclass(frozen=True)
class ProcessSpec:
    """Description of a stationary linear process driven by N(0, sigma2) noise.

    Use the constructors :meth:`arma11`, :meth:`ar`, :meth:`ar_inf_exp` and
    :meth:`ar_inf_alg` rather than instantiating directly.

    The AR(infinity) presets are simulated as finite AR(T).  Their coefficients
    are chosen so that the tail ``sum_{i>k} a_i^2`` behaves like ``e^{-beta k}``
    (``a_i = scale * exp(-beta i / 2)``) or like ``k^{-beta}``
    (``a_i = scale * i^{-(beta + 1) / 2}``).
    """

    kind: str
    phi: float = 0.0
    theta: float = 0.0
    coeffs: tuple = ()
    beta: float = 0.0
    scale: float = 0.0
    truncation: int = 0
    sigma2: float = 1.0
    noise_kind: str = "normal"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown process kind {self.kind!r}; expected one of {KINDS}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise InvalidSpecError(f"sigma2 must be positive, got {self.sigma2}")
        if self.noise_kind != "normal":
            raise InvalidSpecError(f"unsupported noise kind {self.noise_kind!r}")
        if self.kind == ARMA11:
            if not abs(self.phi) < 1:
                raise InvalidSpecError(f"ARMA(1,1) needs |phi| < 1 for causality, got {self.phi}")
            if not abs(self.theta) < 1:
                raise InvalidSpecError(f"ARMA(1,1) needs |theta| < 1 for invertibility, got {self.theta}")
            return
        if self.kind == AR_INF_EXP and not self.beta > 0:
            raise InvalidSpecError(f"exponential preset needs beta > 0, got {self.beta}")
        if self.kind == AR_INF_ALG and not self.beta > 1:
            raise InvalidSpecError(f"algebraic preset needs beta > 1, got {self.beta}")
        if self.kind in (AR_INF_EXP, AR_INF_ALG):
            if not self.scale > 0:
                raise InvalidSpecError(f"preset scale must be positive, got {self.scale}")
            if self.truncation < 1:
                raise InvalidSpecError(f"truncation must be >= 1, got {self.truncation}")
        check_stationary(self.ar_coefficients())

    # -- constructors -------------------------------------------------------

    @classmethod
    def arma11(cls, phi: float, theta: float, sigma2: float = 1.0) -> "ProcessSpec":
        return cls(ARMA11, phi=float(phi), theta=float(theta), sigma2=float(sigma2))

    @classmethod
    def white_noise(cls, sigma2: float = 1.0) -> "ProcessSpec":
        return cls.arma11(0.0, 0.0, sigma2)

    @classmethod
    def ar(cls, coeffs: Sequence[float], sigma2: float = 1.0) -> "ProcessSpec":
        """Finite AR(p) with ``x_t + sum a_i x_{t-i} = e_t``."""
        return cls(AR_FINITE, coeffs=tuple(float(c) for c in coeffs), sigma2=float(sigma2))

    @classmethod
    def ar_inf_exp(
        cls, beta: float, scale: float = 0.2, truncation: Optional[int] = None, sigma2: float = 1.0
    ) -> "ProcessSpec":
        if truncation is None:
            if not (beta > 0 and scale > 0):
                raise InvalidSpecError("exponential preset needs beta > 0 and scale > 0")
            truncation = exp_truncation(beta, scale)
        return cls(AR_INF_EXP, beta=float(beta), scale=float(scale), truncation=int(truncation), sigma2=float(sigma2))

    @classmethod
    def ar_inf_alg(
        cls, beta: float, scale: float = 0.3, truncation: int = ALG_DEFAULT_TRUNCATION, sigma2: float = 1.0
    ) -> "ProcessSpec":
        return cls(AR_INF_ALG, beta=float(beta), scale=float(scale), truncation=int(truncation), sigma2=float(sigma2))

    # -- representations ----------------------------------------------------

    @property
    def is_finite_ar(self) -> bool:
        return self.kind != ARMA11 or self.theta == 0.0

    def ar_coefficients(self, num_terms: Optional[int] = None) -> np.ndarray:
        """AR coefficients ``a_1, a_2, ...``.

        For finite and truncated processes ``num_terms=None`` returns the full
        finite vector; ARMA(1,1) requires ``num_terms``.  A longer request is
        zero padded.
        """
        if self.kind == ARMA11:
            if num_terms is None:
                if self.theta == 0.0:
                    return np.array([-self.phi]) if self.phi != 0.0 else np.zeros(0)
                raise ValueError("num_terms is required for an ARMA(1,1) with theta != 0")
            return arma_to_ar_inf(self, num_terms)
        if self.kind == AR_FINITE:
            a = np.asarray(self.coeffs, dtype=float)
        else:
            i = np.arange(1, self.truncation + 1)
            a = _exp_coeff(i, self.beta, self.scale) if self.kind == AR_INF_EXP else _alg_coeff(i, self.beta, self.scale)
        if num_terms is None:
            return a.copy()
        if num_terms < 0:
            raise ValueError("num_terms must be nonnegative")
        out = np.zeros(num_terms)
        m = min(num_terms, a.size)
        out[:m] = a[:m]
        return out

    def filter_polys(self):
        """Numerator and denominator of the transfer function ``1 / A(z)``."""
        if self.kind == ARMA11:
            return np.array([1.0, self.theta]), np.array([1.0, -self.phi])
        return np.array([1.0]), np.concatenate(([1.0], self.ar_coefficients()))

    def default_burn_in(self) -> int:
        if self.kind in (AR_INF_EXP, AR_INF_ALG):
            return 10 * self.truncation
        return DEFAULT_BURN_IN

    # -- plain-text config --------------------------------------------------

    def to_config(self) -> dict:
        """Flat ``key -> str`` mapping suitable for a configparser section."""
        out = {"kind": self.kind}
        if self.kind == ARMA11:
            out.update(phi=repr(self.phi), theta=repr(self.theta))
        elif self.kind == AR_FINITE:
            out["coeffs"] = ", ".join(repr(c) for c in self.coeffs)
        else:
            out.update(beta=repr(self.beta), scale=repr(self.scale), truncation=str(self.truncation))
        out["sigma2"] = repr(self.sigma2)
        return out

    @classmethod
    def from_config(cls, block: Mapping[str, str]) -> "ProcessSpec":
        """Inverse of :meth:`to_config`.  A ``seed`` key is ignored here."""
        allowed = {"kind", "phi", "theta", "coeffs", "beta", "scale", "truncation", "sigma2", "seed"}
        unknown = set(block) - allowed
        if unknown:
            raise InvalidSpecError(f"unknown process key(s): {', '.join(sorted(unknown))}")
        if "kind" not in block:
            raise InvalidSpecError("process block is missing key 'kind'")
        kind = str(block["kind"]).strip().lower()

        def num(key, default=None, conv=float):
            if key not in block:
                if default is None:
                    raise InvalidSpecError(f"process kind {kind!r} requires key {key!r}")
                return default
            try:
                return conv(str(block[key]).strip())
            except ValueError:
                raise InvalidSpecError(f"process key {key!r}: cannot parse {block[key]!r}") from None

        sigma2 = num("sigma2", 1.0)
        if kind == ARMA11:
            return cls.arma11(num("phi", 0.0), num("theta", 0.0), sigma2)
        if kind == AR_FINITE:
            raw = str(block.get("coeffs", "")).replace(",", " ").split()
            if not raw:
                raise InvalidSpecError("process kind 'ar' requires key 'coeffs'")
            try:
                coeffs = [float(c) for c in raw]
            except ValueError:
                raise InvalidSpecError(f"process key 'coeffs': cannot parse {block['coeffs']!r}") from None
            return cls.ar(coeffs, sigma2)
        if kind == AR_INF_EXP:
            trunc = num("truncation", 0, int) or None
            return cls.ar_inf_exp(num("beta"), num("scale", 0.2), trunc, sigma2)
        if kind == AR_INF_ALG:
            return cls.ar_inf_alg(num("beta"), num("scale", 0.3), num("truncation", ALG_DEFAULT_TRUNCATION, int), sigma2)
        raise InvalidSpecError(f"unknown process kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class SeriesWindow:
    """An observed stretch ``x_1, ..., x_n``.

    ``values[t - 1]`` holds ``x_t``.  When the series was simulated,
    ``innovations[t - 1]`` holds the innovation ``e_t`` that entered ``x_t``,
    which lets Monte Carlo code separate the unpredictable part of a future value.
    """

    values: np.ndarray
    innovations: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        object.__setattr__(self, "values", v)
        if self.innovations is not None:
            e = np.ascontiguousarray(self.innovations, dtype=float)
            if e.shape != v.shape:
                raise ValueError("innovations must align with values")
            object.__setattr__(self, "innovations", e)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size

    def x(self, t: int) -> float:
        """Paper-style 1-based access to ``x_t``."""
        if not 1 <= t <= self.n:
            raise BoundsError(f"x_{t} is outside 1..{self.n}")
        return float(self.values[t - 1])

    def regressor(self, i: int, k: int) -> np.ndarray:
        """``x_i(k) = (x_i, x_{i-1}, ..., x_{i-k+1})``."""
        if k < 1 or i - k + 1 < 1 or i > self.n:
            raise BoundsError(f"x_{i}({k}) needs indices {i - k + 1}..{i} inside 1..{self.n}")
        return self.values[i - k:i][::-1].copy()

    def head(self, m: int) -> "SeriesWindow":
        if not 0 <= m <= self.n:
            raise BoundsError(f"prefix length {m} outside 0..{self.n}")
        e = None if self.innovations is None else self.innovations[:m]
        return SeriesWindow(self.values[:m], e)

    def scaled(self, c: float) -> "SeriesWindow":
        e = None if self.innovations is None else c * self.innovations
        return SeriesWindow(c * self.values, e)


def arma_to_ar_inf(spec: ProcessSpec, num_terms: int) -> np.ndarray:
    """AR(infinity) coefficients ``a_1..a_T`` of an invertible ARMA(1,1).

    ``a_i = -(phi + theta) (-theta)^(i - 1)``.
    """
    if spec.kind != ARMA11:
        raise InvalidSpecError("arma_to_ar_inf needs an ARMA(1,1) spec")
    if not abs(spec.theta) < 1:
        raise InvalidSpecError("ARMA(1,1) is not invertible")
    if num_terms < 1:
        raise ValueError("num_terms must be >= 1")
    i = np.arange(num_terms)
    return -(spec.phi + spec.theta) * (-spec.theta) ** i


def ma_inf_weights(spec: ProcessSpec, tol: float = PSI_TOL) -> np.ndarray:
    """MA(infinity) weights ``psi_0 = 1, psi_1, ...`` of ``1 / A(z)``.

    The series is extended until its trailing block falls below ``tol``.
    """
    b, a = spec.filter_polys()
    m = 256
    while True:
        impulse = np.zeros(m)
        impulse[0] = 1.0
        psi = signal.lfilter(b, a, impulse)
        tail = np.abs(psi[m // 2:])
        if tail.max() < tol:
            last = np.nonzero(np.abs(psi) >= tol)[0]
            return psi[: (last[-1] + 1 if last.size else 1)]
        if m >= _PSI_MAX_TERMS:
            raise InvalidSpecError("MA(infinity) weights do not decay; process is too close to non-stationary")
        m *= 2


def theoretical_autocov(spec: ProcessSpec, max_lag: int) -> np.ndarray:
    """Population autocovariances ``gamma_0..gamma_L``.

    ``gamma_j = sigma2 * sum_i psi_i psi_{i+j}`` over the truncated MA(infinity) weights.
    """
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    psi = ma_inf_weights(spec)
    full = signal.correlate(psi, psi, mode="full")
    centre = psi.size - 1
    gamma = np.zeros(max_lag + 1)
    m = min(max_lag, psi.size - 1)
    gamma[: m + 1] = full[centre:centre + m + 1]
    return spec.sigma2 * gamma


def arma11_autocov_closed_form(phi: float, theta: float, sigma2: float, max_lag: int) -> np.ndarray:
    """Textbook ARMA(1,1) autocovariances, used as an independent check."""
    g0 = sigma2 * (1 + 2 * phi * theta + theta ** 2) / (1 - phi ** 2)
    g1 = sigma2 * (1 + phi * theta) * (phi + theta) / (1 - phi ** 2)
    out = np.zeros(max_lag + 1)
    out[0] = g0
    if max_lag >= 1:
        out[1] = g1
        out[2:] = g1 * phi ** np.arange(1, max_lag)
    return out


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def simulate(
    spec: ProcessSpec, n: int, burn_in: Optional[int] = None, seed: SeedLike = 0, rng: Optional[np.random.Generator] = None
) -> SeriesWindow:
    """Simulate ``n`` observations after discarding ``burn_in`` from zero initial conditions.

    Pass either ``seed`` or an explicit ``rng``; the result is deterministic in
    ``(spec, n, burn_in, seed)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if burn_in is None:
        burn_in = spec.default_burn_in()
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if rng is None:
        rng = make_rng(seed)
    eps = math.sqrt(spec.sigma2) * rng.standard_normal(burn_in + n)
    b, a = spec.filter_polys()
    x = signal.lfilter(b, a, eps)
    return SeriesWindow(x[burn_in:], eps[burn_in:])
