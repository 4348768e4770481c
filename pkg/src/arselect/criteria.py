"""Order-selection criteria: APE from a start index, IC_P, S_n, the two-stage hybrid.

All selectors take the smallest minimizing order among orders whose fit is
defined.  They accept an optional :class:`FitCache` so several criteria on the
same series reuse one set of least-squares fits.
"""

from __future__ import annotations

import math
from configparser import SectionProxy
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple, Union

import numpy as np
from scipy import optimize

from .arfit import OrderFits
from .errors import ConfigurationError, DegenerateFitError, DomainError, EstimationError
from .procgen import SeriesWindow

APE = "ape"
IC = "ic"
SN = "sn"
TWO_STAGE = "two_stage"
FIXED = "fixed"
CRITERION_KINDS = (APE, IC, SN, TWO_STAGE, FIXED)

SELECTION_CSV_HEADER = ("criterion", "n", "K_n", "param", "k_hat", "prediction")


def _ifloor(x: float) -> int:
    # n**iota for "integral" cases such as 1000**(2/3) lands a hair below the integer
    return int(math.floor(x * (1 + 1e-12)))


def default_max_order(n: int) -> int:
    """Largest integer <= sqrt(n)."""
    return math.isqrt(n)


# -- schedules ---------------------------------------------------------------


@dataclass(frozen=True)
class DeltaRule:
    """Start fraction schedule for APE.

    ``const``: delta;  ``inv_log``: 1 / log n;  ``one_minus_c_logr``: 1 - C (log n)^(-r).
    """

    kind: str
    value: float = 0.0
    C: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if self.kind == "const" and not 0 < self.value < 1:
            raise ConfigurationError(f"constant delta must lie in (0, 1), got {self.value}")
        if self.kind == "one_minus_c_logr" and not (self.C > 0 and self.r > 0):
            raise ConfigurationError(f"delta rule 1 - C(log n)^-r needs C > 0 and r > 0, got C={self.C}, r={self.r}")
        if self.kind not in ("const", "inv_log", "one_minus_c_logr"):
            raise ConfigurationError(f"unknown delta rule {self.kind!r}")

    @classmethod
    def const(cls, delta):
        return cls("const", value=float(delta))

    @classmethod
    def inv_log(cls):
        return cls("inv_log")

    @classmethod
    def one_minus_c_logr(cls, C, r):
        return cls("one_minus_c_logr", C=float(C), r=float(r))

    def raw(self, n: int) -> float:
        if self.kind == "const":
            return self.value
        if self.kind == "inv_log":
            return 1.0 / math.log(n)
        return 1.0 - self.C * math.log(n) ** (-self.r)

    def resolve(self, n: int) -> float:
        """Delta for sample size ``n``, clamped to ``[1/n, 1 - 1/n]``."""
        return min(max(self.raw(n), 1.0 / n), 1.0 - 1.0 / n)

    def describe(self) -> str:
        if self.kind == "const":
            return f"delta={self.value:g}"
        if self.kind == "inv_log":
            return "delta=1/log(n)"
        return f"delta=1-{self.C:g}*log(n)^-{self.r:g}"


@dataclass(frozen=True)
class PenaltyRule:
    """Penalty weight schedule ``P_n`` of an information criterion.

    ``aic``: 2;  ``bic``: log n;  ``hq``: c log log n (c > 2);
    ``powlog``: C1 (log n)^C2;  ``const``: P.
    """

    kind: str
    value: float = 0.0
    c: float = 0.0
    C1: float = 0.0
    C2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("const", "aic", "bic", "hq", "powlog"):
            raise ConfigurationError(f"unknown penalty rule {self.kind!r}")
        if self.kind == "const" and not self.value > 1:
            raise ConfigurationError(f"constant penalty must exceed 1, got {self.value}")
        if self.kind == "hq" and not self.c > 2:
            raise ConfigurationError(f"HQ needs c > 2, got {self.c}")
        if self.kind == "powlog" and not (self.C1 > 0 and self.C2 > 0):
            raise ConfigurationError(f"powlog penalty needs C1 > 0 and C2 > 0, got C1={self.C1}, C2={self.C2}")

    @classmethod
    def const(cls, P):
        return cls("const", value=float(P))

    @classmethod
    def aic(cls):
        return cls("aic")

    @classmethod
    def bic(cls):
        return cls("bic")

    @classmethod
    def hq(cls, c=2.001):
        return cls("hq", c=float(c))

    @classmethod
    def powlog(cls, C1, C2):
        return cls("powlog", C1=float(C1), C2=float(C2))

    def resolve(self, n: int) -> float:
        if self.kind == "const":
            P = self.value
        elif self.kind == "aic":
            P = 2.0
        elif self.kind == "bic":
            P = math.log(n)
        elif self.kind == "hq":
            P = self.c * math.log(math.log(n))
        else:
            P = self.C1 * math.log(n) ** self.C2
        if not P > 1:
            raise ConfigurationError(f"penalty {self.describe()} resolves to P={P:.6g} <= 1 at n={n}")
        return P

    def describe(self) -> str:
        if self.kind == "const":
            return f"P={self.value:g}"
        if self.kind == "aic":
            return "P=2"
        if self.kind == "bic":
            return "P=log(n)"
        if self.kind == "hq":
            return f"P={self.c:g}*loglog(n)"
        return f"P={self.C1:g}*log(n)^{self.C2:g}"


@dataclass(frozen=True)
class CriterionSpec:
    """Which selector to run and with which schedule.

    ``K`` fixes the maximal order; by default it is ``floor(sqrt(n))``.
    ``name`` overrides the label used in tables.
    """

    kind: str
    delta: Optional[DeltaRule] = None
    penalty: Optional[PenaltyRule] = None
    iota: float = 0.0
    order: int = 0
    K: Optional[int] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in CRITERION_KINDS:
            raise ConfigurationError(f"unknown criterion kind {self.kind!r}; expected one of {CRITERION_KINDS}")
        if self.kind == APE and self.delta is None:
            raise ConfigurationError("APE criterion needs a delta rule")
        if self.kind in (IC, SN, TWO_STAGE) and self.penalty is None:
            raise ConfigurationError(f"{self.kind} criterion needs a penalty rule")
        if self.kind == TWO_STAGE and not 0 < self.iota < 1:
            raise ConfigurationError(f"two-stage iota must lie in (0, 1), got {self.iota}")
        if self.kind == FIXED and self.order < 1:
            raise ConfigurationError(f"fixed order must be >= 1, got {self.order}")
        if self.K is not None and self.K < 1:
            raise ConfigurationError(f"explicit K must be >= 1, got {self.K}")

    @classmethod
    def aic(cls, **kw):
        return cls(IC, penalty=PenaltyRule.aic(), **kw)

    @classmethod
    def bic(cls, **kw):
        return cls(IC, penalty=PenaltyRule.bic(), **kw)

    @classmethod
    def hq(cls, c=2.001, **kw):
        return cls(IC, penalty=PenaltyRule.hq(c), **kw)

    @classmethod
    def ic(cls, penalty: PenaltyRule, **kw):
        return cls(IC, penalty=penalty, **kw)

    @classmethod
    def sn(cls, penalty: PenaltyRule, **kw):
        return cls(SN, penalty=penalty, **kw)

    @classmethod
    def ape(cls, delta: DeltaRule, **kw):
        return cls(APE, delta=delta, **kw)

    @classmethod
    def two_stage(cls, iota: float, penalty: Optional[PenaltyRule] = None, **kw):
        return cls(TWO_STAGE, penalty=penalty or PenaltyRule.powlog(0.8, 1.0), iota=float(iota), **kw)

    @classmethod
    def fixed(cls, order: int, **kw):
        return cls(FIXED, order=int(order), **kw)

    def max_order(self, n: int) -> int:
        return self.K if self.K is not None else default_max_order(n)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == IC:
            return {"aic": "AIC", "bic": "BIC", "hq": "HQ"}.get(self.penalty.kind, "IC")
        return {APE: "APE", SN: "SN", TWO_STAGE: "TwoStage", FIXED: "Fixed"}[self.kind]

    def describe(self) -> str:
        """Parameter string for CSV ``param`` columns."""
        if self.kind == APE:
            return self.delta.describe()
        if self.kind in (IC, SN):
            return self.penalty.describe()
        if self.kind == TWO_STAGE:
            return f"iota={self.iota:g};{self.penalty.describe()}"
        return f"k={self.order}"

    @property
    def key(self) -> str:
        """Label plus parameters; unique within a sensible criteria list."""
        return f"{self.label}[{self.describe()}]"


def _float(block, key):
    try:
        return float(str(block[key]).strip())
    except KeyError:
        raise ConfigurationError(f"criterion block is missing key {key!r}") from None
    except ValueError:
        raise ConfigurationError(f"criterion key {key!r}: cannot parse {block[key]!r}") from None


def _penalty_from(block) -> PenaltyRule:
    rule = str(block.get("rule", "")).strip().lower()
    if rule in ("aic", "bic"):
        return PenaltyRule(rule)
    if rule == "hq":
        return PenaltyRule.hq(_float(block, "c") if "c" in block else 2.001)
    if rule == "powlog":
        return PenaltyRule.powlog(_float(block, "C1"), _float(block, "C2"))
    if rule == "const":
        return PenaltyRule.const(_float(block, "value"))
    raise ConfigurationError(f"criterion key 'rule': unknown penalty rule {rule!r} (aic, bic, hq, powlog, const)")


def criterion_from_config(block: Mapping[str, str]) -> CriterionSpec:
    """Parse one plain-text criterion block.

    Keys: ``kind`` (ape, ic, sn, two_stage, fixed); ``rule`` with ``c``, ``C1``,
    ``C2`` or ``value`` for penalties; ``delta`` (const, inv_log,
    one_minus_c_logr) with ``value``, ``C``, ``r``; ``iota``; ``order``; ``K``; ``name``.
    """
    if isinstance(block, SectionProxy):
        block = dict(block)
    # configparser lower-cases keys; accept either spelling
    block = {(k.upper() if k in ("c1", "c2") else k): v for k, v in block.items()}
    if "kind" not in block:
        raise ConfigurationError("criterion block is missing key 'kind'")
    kind = str(block["kind"]).strip().lower()
    kw = {}
    if "K" in block or "k" in block:
        kw["K"] = int(_float(block, "K" if "K" in block else "k"))
    if "name" in block:
        kw["name"] = str(block["name"]).strip()
    if kind == APE:
        d = str(block.get("delta", "")).strip().lower()
        if d == "inv_log":
            rule = DeltaRule.inv_log()
        elif d == "const":
            rule = DeltaRule.const(_float(block, "value"))
        elif d == "one_minus_c_logr":
            rule = DeltaRule.one_minus_c_logr(_float(block, "C" if "C" in block else "c"), _float(block, "r"))
        else:
            raise ConfigurationError(f"criterion key 'delta': unknown rule {d!r} (const, inv_log, one_minus_c_logr)")
        return CriterionSpec.ape(rule, **kw)
    if kind == IC:
        return CriterionSpec.ic(_penalty_from(block), **kw)
    if kind == SN:
        return CriterionSpec.sn(_penalty_from(block), **kw)
    if kind == TWO_STAGE:
        pen = _penalty_from(block) if "rule" in block else None
        return CriterionSpec.two_stage(_float(block, "iota"), pen, **kw)
    if kind == FIXED:
        return CriterionSpec.fixed(int(_float(block, "order")), **kw)
    raise ConfigurationError(f"criterion key 'kind': unknown kind {kind!r}; expected one of {CRITERION_KINDS}")


def parse_criteria_list(text: str):
    """Short names like ``"aic,bic,hq,ape"`` for command-line use."""
    presets = {
        "aic": CriterionSpec.aic,
        "bic": CriterionSpec.bic,
        "hq": CriterionSpec.hq,
        "ape": lambda: CriterionSpec.ape(DeltaRule.inv_log()),
        "two_stage": lambda: CriterionSpec.two_stage(0.72),
    }
    out = []
    for name in (t.strip().lower() for t in text.split(",")):
        if not name:
            continue
        if name not in presets:
            raise ConfigurationError(f"unknown criterion {name!r}; expected one of {sorted(presets)}")
        out.append(presets[name]())
    return out


# -- records and caching -----------------------------------------------------


@dataclass
class SelectionRecord:
    """Outcome of one order selection on one series."""

    criterion: str
    n: int
    K_n: int
    resolved: float
    k_hat: int
    criterion_values: np.ndarray
    prediction: float
    start: Optional[int] = None
    clamped: bool = False
    stages: Optional[Tuple[int, int, int]] = field(default=None)

    def csv_row(self) -> tuple:
        return (self.criterion, self.n, self.K_n, f"{self.resolved:.10g}", self.k_hat, f"{self.prediction:.12g}")


class FitCache:
    """Lazily built :class:`OrderFits` for prefixes of one series."""

    def __init__(self, series: SeriesWindow):
        self.series = series
        self._fits = {}

    def get(self, K_n: int, n: Optional[int] = None) -> OrderFits:
        n = self.series.n if n is None else n
        key = (n, K_n)
        if key not in self._fits:
            s = self.series if n == self.series.n else self.series.head(n)
            self._fits[key] = OrderFits(s, K_n)
        return self._fits[key]


def _cache(series, cache):
    if cache is None:
        return FitCache(series)
    if cache.series is not series and not np.array_equal(cache.series.values, series.values):
        raise ValueError("fit cache belongs to a different series")
    return cache


def _argmin(values: np.ndarray, what: str) -> int:
    if np.all(np.isnan(values)):
        raise EstimationError(f"{what}: no candidate order has a defined fit")
    return int(np.nanargmin(values)) + 1


def _fits_for(series, cache, K_n, n=None):
    try:
        return cache.get(K_n, n)
    except IndexError as exc:
        raise ConfigurationError(f"series of length {n or series.n} too short for K_n={K_n}: {exc}") from None


# -- APE ---------------------------------------------------------------------


def ape_value(series: SeriesWindow, k: int, K_n: int, start: int, cache: Optional[FitCache] = None) -> float:
    """``sum_{i=start}^{n-1} (x_{i+1} - xhat_{i+1}(k))^2`` with sequential fits.

    A start below the first defined full-order index ``m`` is raised to ``m``.
    """
    cache = _cache(series, cache)
    fits = _fits_for(series, cache, K_n)
    start = max(start, fits.m)
    if start > series.n - 1:
        raise ConfigurationError(f"APE window is empty: start {start} > n - 1 = {series.n - 1}")
    value = fits.ape(start)[k - 1]
    if np.isnan(value):
        raise EstimationError(f"AR({k}) fit undefined somewhere in i={start}..{series.n - 1}")
    return float(value)


def ape_start(n: int, delta: float, m: int) -> Tuple[int, bool]:
    """``max(round(n delta), m)`` and whether the clamp to ``m`` was applied."""
    raw = int(math.floor(n * delta + 0.5))
    return (m, True) if raw < m else (raw, False)


def select_ape_delta(series: SeriesWindow, spec: CriterionSpec, cache: Optional[FitCache] = None) -> SelectionRecord:
    cache = _cache(series, cache)
    n = series.n
    K_n = spec.max_order(n)
    delta = spec.delta.resolve(n)
    fits = _fits_for(series, cache, K_n)
    start, clamped = ape_start(n, delta, fits.m)
    if start > n - 1:
        raise ConfigurationError(
            f"APE window is empty for n={n}, delta={delta:.6g}, K_n={K_n} (start {start} > n - 1)"
        )
    values = fits.ape(start)
    k_hat = _argmin(values, spec.key)
    return SelectionRecord(
        spec.label, n, K_n, delta, k_hat, values, float(fits.final_predictions[k_hat - 1]), start, clamped
    )


# -- information criteria ----------------------------------------------------


def ic_value(sigma2_hat: float, k: int, P_n: float, n: int) -> float:
    """``log sigma2_hat + P_n k / n``."""
    if not sigma2_hat > 0:
        raise DegenerateFitError(f"residual variance {sigma2_hat!r} <= 0; the series is perfectly predictable")
    return math.log(sigma2_hat) + P_n * k / n


def sn_value(sigma2_hat: float, k: int, P_n: float, N: int) -> float:
    """``(1 + P_n k / N) sigma2_hat``."""
    if N <= 0:
        raise ConfigurationError(f"N = n - K_n must be positive, got {N}")
    return (1.0 + P_n * k / N) * sigma2_hat


def _ic_profile(fits: OrderFits, P: float) -> np.ndarray:
    s2 = fits.residual_variances
    if np.any(s2[~np.isnan(s2)] <= 0):
        raise DegenerateFitError(f"zero residual variance at n={fits.n}; the series is perfectly predictable")
    k = np.arange(1, fits.K_n + 1)
    return np.log(s2) + P * k / fits.n


def _ic_on(series, cache, n, K_n, P, label):
    fits = _fits_for(series, cache, K_n, n)
    values = _ic_profile(fits, P)
    return fits, values, _argmin(values, label)


def select_ic(series: SeriesWindow, spec: CriterionSpec, cache: Optional[FitCache] = None) -> SelectionRecord:
    cache = _cache(series, cache)
    n = series.n
    K_n = spec.max_order(n)
    P = spec.penalty.resolve(n)
    fits, values, k_hat = _ic_on(series, cache, n, K_n, P, spec.key)
    return SelectionRecord(spec.label, n, K_n, P, k_hat, values, float(fits.final_predictions[k_hat - 1]))


def select_sn(series: SeriesWindow, spec: CriterionSpec, cache: Optional[FitCache] = None) -> SelectionRecord:
    cache = _cache(series, cache)
    n = series.n
    K_n = spec.max_order(n)
    P = spec.penalty.resolve(n)
    fits = _fits_for(series, cache, K_n)
    k = np.arange(1, K_n + 1)
    values = (1.0 + P * k / fits.N) * fits.residual_variances
    k_hat = _argmin(values, spec.key)
    return SelectionRecord(spec.label, n, K_n, P, k_hat, values, float(fits.final_predictions[k_hat - 1]))


def two_stage_sizes(n: int, iota: float) -> Tuple[int, int]:
    """Prefix length ``floor(n^iota)`` and its maximal order ``floor(n^(iota/2))``."""
    return _ifloor(n ** iota), _ifloor(n ** (iota / 2))


def select_two_stage(series: SeriesWindow, spec: CriterionSpec, cache: Optional[FitCache] = None) -> SelectionRecord:
    """BIC-like choice if it agrees between the prefix and the full sample, else AIC."""
    cache = _cache(series, cache)
    n = series.n
    K_n = spec.max_order(n)
    n_pre, K_pre = two_stage_sizes(n, spec.iota)
    if K_pre < 1 or n_pre < 4 * K_pre:
        raise ConfigurationError(
            f"two-stage prefix too short: n={n}, iota={spec.iota}, prefix {n_pre} < 4 * K={K_pre}"
        )
    P = spec.penalty.resolve(n)
    P_pre = spec.penalty.resolve(n_pre)
    fits, values, k_full = _ic_on(series, cache, n, K_n, P, spec.key)
    _, _, k_pre = _ic_on(series, cache, n_pre, K_pre, P_pre, spec.key + " prefix")
    _, _, k_aic = _ic_on(series, cache, n, K_n, 2.0, "AIC")
    k_hat = k_full if k_full == k_pre else k_aic
    return SelectionRecord(
        spec.label, n, K_n, P, k_hat, values, float(fits.final_predictions[k_hat - 1]), stages=(k_full, k_pre, k_aic)
    )


def select_fixed(series: SeriesWindow, spec: CriterionSpec, cache: Optional[FitCache] = None) -> SelectionRecord:
    cache = _cache(series, cache)
    n = series.n
    K_n = spec.max_order(n)
    if spec.order > K_n:
        raise ConfigurationError(f"fixed order {spec.order} exceeds K_n={K_n} at n={n}")
    fits = _fits_for(series, cache, K_n)
    if not fits.final_valid[spec.order - 1]:
        raise EstimationError(f"final AR({spec.order}) fit is singular at n={n}")
    values = np.full(K_n, np.nan)
    return SelectionRecord(
        spec.label, n, K_n, float(spec.order), spec.order, values, float(fits.final_predictions[spec.order - 1])
    )


_SELECTORS = {APE: select_ape_delta, IC: select_ic, SN: select_sn, TWO_STAGE: select_two_stage, FIXED: select_fixed}


def select(series: SeriesWindow, spec: CriterionSpec, cache: Optional[FitCache] = None) -> SelectionRecord:
    """Dispatch to the selector for ``spec.kind``."""
    return _SELECTORS[spec.kind](series, spec, cache)


# -- penalty <-> delta -------------------------------------------------------


def penalty_of_delta(delta: float, n: int, K_n: int) -> float:
    """Implicit penalty ``1 + N log(1/delta) / (n (1 - delta))`` of APE from ``n delta``."""
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    N = n - K_n
    # delta - 1 is exact in floating point, so log1p keeps the ratio accurate near 1
    return 1.0 + N * (-math.log1p(delta - 1.0)) / (n * (1.0 - delta))


def _penalty_of_log_delta(u: float, ratio: float) -> float:
    return 1.0 + ratio * (-u) / (-math.expm1(u))


def delta_of_penalty(P: float, n: int, K_n: int) -> float:
    """Inverse of :func:`penalty_of_delta` over ``0 < delta <= 1 - 1/n``."""
    N = n - K_n
    ratio = N / n
    if not ratio > 0:
        raise DomainError(f"N = n - K_n must be positive (n={n}, K_n={K_n})")
    u_hi = math.log1p(-1.0 / n)
    u_lo = math.log(np.finfo(float).tiny)
    P_lo = _penalty_of_log_delta(u_hi, ratio)
    P_hi = _penalty_of_log_delta(u_lo, ratio)
    if not P_lo <= P <= P_hi:
        raise DomainError(f"penalty {P!r} outside the attainable range [{P_lo:.15g}, {P_hi:.6g}] for n={n}, K_n={K_n}")
    if P == P_lo:
        return math.exp(u_hi)
    u = optimize.brentq(lambda t: _penalty_of_log_delta(t, ratio) - P, u_lo, u_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return math.exp(u)
