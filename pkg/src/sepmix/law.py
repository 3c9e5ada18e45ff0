"""Site-disorder laws and their log-Laplace analytics.

A law describes the common distribution of the jump parameters
``omega_x`` in ``[alpha, 1 - alpha]`` with ``0 < alpha < 1/2``.  The
quantities that control trapping are all functionals of the jump ratio
``rho = (1 - omega) / omega``:

* ``F(u) = log E[rho^u]`` (strictly convex, ``F(0) = 0``),
* the positive root ``lambda`` of ``F`` (infinite iff ``rho <= 1`` a.s.),
* the interior minimiser ``u0`` of ``F`` and its depth ``F(u0) < 0``,
* ``kappa = F'(lambda) = E[rho^lambda log rho]``.

Three law variants are supported: ``two-point`` on
``{alpha, 1 - alpha}``, ``finite-discrete`` on an explicit support, and
``quantile-table`` (piecewise-linear inverse CDF, numeric analytics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import bisect, minimize_scalar
from scipy.special import logsumexp

from .errors import NotTransient, NotTrapped, SchemaError

_BRACKET_HI = 64.0
_BRACKET_MAX = 2.0**16
_GL_NODES = 64  # Gauss-Legendre nodes per quantile segment


@dataclass(frozen=True)
class LawSpec:
    """A validated law over the admissible interval [alpha, 1 - alpha].

    Use the classmethod constructors; the raw constructor trusts its
    arguments only after `__post_init__` validation.
    """

    kind: str
    alpha: float
    p: Optional[float] = None
    values: Optional[tuple] = None
    weights: Optional[tuple] = None
    quantiles: Optional[tuple] = None  # (u grid, value grid) for quantile-table

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.5):
            raise SchemaError("law.alpha", "alpha must lie in (0, 1/2)")
        if self.kind == "two-point":
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise SchemaError("law.p", "p must lie in [0, 1]")
        elif self.kind == "finite-discrete":
            v = np.asarray(self.values, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if v.ndim != 1 or v.size == 0 or v.shape != w.shape:
                raise SchemaError("law.values", "values and weights must be equal-length vectors")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise SchemaError("law.weights", "weights must be nonnegative and sum to 1")
            if np.any(v < self.alpha - 1e-15) or np.any(v > 1.0 - self.alpha + 1e-15):
                raise SchemaError("law.values", "support must lie in [alpha, 1 - alpha]")
        elif self.kind == "quantile-table":
            u, v = self.quantiles
            u = np.asarray(u, dtype=float)
            v = np.asarray(v, dtype=float)
            if u.ndim != 1 or u.shape != v.shape or u.size < 2:
                raise SchemaError("law.quantiles", "need matching u/value grids with >= 2 points")
            if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) < 0):
                raise SchemaError("law.quantiles", "u grid must increase from 0 to 1")
            if np.any(v < self.alpha - 1e-15) or np.any(v > 1.0 - self.alpha + 1e-15):
                raise SchemaError("law.quantiles", "values must lie in [alpha, 1 - alpha]")
        else:
            raise SchemaError("law.kind", f"unknown law kind {self.kind!r}")

    # -- constructors -------------------------------------------------

    @classmethod
    def two_point(cls, alpha: float, p: float) -> "LawSpec":
        """Two-point law: omega = alpha with probability p, else 1 - alpha."""
        return cls(kind="two-point", alpha=alpha, p=p)

    @classmethod
    def finite_discrete(cls, alpha: float, values, weights) -> "LawSpec":
        return cls(kind="finite-discrete", alpha=alpha,
                   values=tuple(float(x) for x in values),
                   weights=tuple(float(x) for x in weights))

    @classmethod
    def quantile_table(cls, alpha: float, u_grid, value_grid) -> "LawSpec":
        return cls(kind="quantile-table", alpha=alpha,
                   quantiles=(tuple(float(x) for x in u_grid),
                              tuple(float(x) for x in value_grid)))

    # -- internal views -----------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("two-point", "finite-discrete")

    def support(self):
        """(values, weights) for discrete variants."""
        if self.kind == "two-point":
            return (np.array([self.alpha, 1.0 - self.alpha]),
                    np.array([self.p, 1.0 - self.p]))
        if self.kind == "finite-discrete":
            return np.asarray(self.values, float), np.asarray(self.weights, float)
        raise ValueError("quantile-table law has no finite support")

    def _quad_nodes(self):
        """Quadrature nodes and weights for E[g(omega)] on a quantile table."""
        u, v = self.quantiles
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        x, w = np.polynomial.legendre.leggauss(_GL_NODES)
        nodes, wts = [], []
        for i in range(len(u) - 1):
            du = u[i + 1] - u[i]
            if du == 0.0:
                continue
            q = u[i] + (x + 1.0) * (du / 2.0)
            nodes.append(np.interp(q, u, v))
            wts.append(w * (du / 2.0))
        return np.concatenate(nodes), np.concatenate(wts)

    def omega_points(self):
        """(omega values, weights) usable for expectations, any variant."""
        if self.is_discrete:
            return self.support()
        return self._quad_nodes()

    def prob_below_half(self) -> float:
        """Mass of {omega < 1/2}."""
        if self.is_discrete:
            v, w = self.support()
            return float(w[v < 0.5].sum())
        u, v = self.quantiles
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        # Lebesgue measure of {q : value(q) < 1/2} under the piecewise-linear table
        total = 0.0
        for i in range(len(u) - 1):
            du = u[i + 1] - u[i]
            a, b = v[i], v[i + 1]
            if du == 0.0:
                continue
            lo, hi = min(a, b), max(a, b)
            if hi < 0.5:
                total += du
            elif lo < 0.5:
                total += du * (0.5 - lo) / (hi - lo)
        return total

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "alpha": self.alpha}
        if self.kind == "two-point":
            d["p"] = self.p
        elif self.kind == "finite-discrete":
            d["values"] = list(self.values)
            d["weights"] = list(self.weights)
        else:
            d["u"] = list(self.quantiles[0])
            d["omega"] = list(self.quantiles[1])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LawSpec":
        kind = d.get("kind")
        if kind == "two-point":
            return cls.two_point(d["alpha"], d["p"])
        if kind == "finite-discrete":
            return cls.finite_discrete(d["alpha"], d["values"], d["weights"])
        if kind == "quantile-table":
            return cls.quantile_table(d["alpha"], d["u"], d["omega"])
        raise SchemaError("law.kind", f"unknown law kind {kind!r}")

    # -- analytics ----------------------------------------------------

    def mean_log_rho(self) -> float:
        om, w = self.omega_points()
        return float(np.sum(w * np.log((1.0 - om) / om)))

    def analytics(self) -> "LawAnalytics":
        return analytics(self)


def log_mgf(law: LawSpec, u: float) -> float:
    """F(u) = log E[rho^u] with rho = (1 - omega) / omega."""
    om, w = law.omega_points()
    log_rho = np.log1p(-om) - np.log(om)
    return float(logsumexp(u * log_rho, b=w))


def lambda_root(law: LawSpec) -> float:
    """Positive root of F, or +inf when rho <= 1 almost surely.

    Requires rightward drift (E[log rho] < 0); bisection to 1e-10 on a
    bracket grown geometrically from [1e-9, 64].
    """
    if not (law.mean_log_rho() < 0.0):
        raise NotTransient("E[log rho] >= 0: no rightward drift")
    if law.prob_below_half() <= 0.0:
        return math.inf
    lo, hi = 1e-9, _BRACKET_HI
    # near-balanced laws can pass the mean test on rounding alone; the
    # bracket must straddle zero or there is no positive root
    if log_mgf(law, lo) >= 0.0:
        raise NotTransient("E[log rho] >= 0: no rightward drift")
    while log_mgf(law, hi) <= 0.0:
        hi *= 2.0
        if hi > _BRACKET_MAX:
            raise RuntimeError("root bracket exhausted; law is numerically degenerate")
    return float(bisect(lambda u: log_mgf(law, u), lo, hi, xtol=1e-10))


def f_minimizer(law: LawSpec) -> tuple:
    """(u0, F(u0)): golden-section minimum of the convex F on (0, lambda).

    A single Newton polish on the stationarity condition squares the
    golden-section accuracy, comfortably below 1e-10 in u.
    """
    lam = lambda_root(law)
    if math.isinf(lam):
        raise NotTrapped("tilt root is infinite; F has no interior minimum below 0")
    res = minimize_scalar(lambda u: log_mgf(law, u), method="golden",
                          bracket=(0.0, 0.5 * lam, lam),
                          options={"xtol": 1e-12, "maxiter": 500})
    u0 = float(res.x)
    h = 1e-5
    fp, fm, fc = log_mgf(law, u0 + h), log_mgf(law, u0 - h), log_mgf(law, u0)
    d1 = (fp - fm) / (2.0 * h)
    d2 = (fp - 2.0 * fc + fm) / (h * h)
    if d2 > 0.0:
        step = d1 / d2
        if abs(step) < 1e-4:
            u0 -= step
    return u0, log_mgf(law, u0)


def kappa(law: LawSpec) -> float:
    """F'(lambda): closed form for discrete laws, central difference otherwise."""
    lam = lambda_root(law)
    if math.isinf(lam):
        raise NotTrapped("tilt root is infinite; kappa undefined")
    if law.is_discrete:
        om, w = law.support()
        log_rho = np.log1p(-om) - np.log(om)
        return float(np.sum(w * np.exp(lam * log_rho) * log_rho))
    h = 1e-6
    return (log_mgf(law, lam + h) - log_mgf(law, lam - h)) / (2.0 * h)


def q_n(law: LawSpec, n: int) -> int:
    """Trap-resolution scale: ceil((3 u0 + 2) / |F(u0)| * log n)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    u0, f0 = f_minimizer(law)
    return int(math.ceil((3.0 * u0 + 2.0) / abs(f0) * math.log(n)))


@dataclass(frozen=True)
class LawAnalytics:
    """Bundle of the derived constants of a law.

    ``u0``, ``f_at_u0`` and ``kappa`` are None when ``lam`` is infinite.
    """

    mean_log_rho: float
    lam: float
    u0: Optional[float]
    f_at_u0: Optional[float]
    kappa: Optional[float]


def analytics(law: LawSpec) -> LawAnalytics:
    mlr = law.mean_log_rho()
    lam = lambda_root(law)
    if math.isinf(lam):
        return LawAnalytics(mlr, lam, None, None, None)
    u0, f0 = f_minimizer(law)
    return LawAnalytics(mlr, lam, u0, f0, kappa(law))
