"""Closed-form constants of the l1-oracle inequality and its supporting lemmas.

All quantities are evaluated exactly as displayed, in double precision. The
packing-number bound is kept in log scale because it overflows quickly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .divergence import entropy_constants
from .exceptions import TheoremHypothesisError
from .model import ParameterBounds

KAPPA_MIN = 148.0
# constant of the remainder term in the oracle inequality
REMAINDER_CONSTANT = 302.0


@dataclass(frozen=True)
class BoundInputs:
    n: int
    p: int
    q: int
    k: int
    bounds: ParameterBounds
    kappa: float = KAPPA_MIN
    m_n: float | None = None
    allow_small_kappa: bool = False

    def __post_init__(self):
        for name in ("n", "p", "q", "k"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.n < 2:
            raise ValueError("n must be >= 2 so that ln n > 0")
        if self.kappa < KAPPA_MIN and not self.allow_small_kappa:
            raise TheoremHypothesisError(f"kappa must be >= {KAPPA_MIN:g} (got {self.kappa:g})")
        if self.m_n is not None and not self.m_n > 0:
            raise ValueError("m_n must be positive")

    @property
    def truncation(self) -> float:
        return choose_mn(self.n, self.bounds) if self.m_n is None else self.m_n

    @property
    def theorem_regime(self) -> bool:
        return self.kappa >= KAPPA_MIN


def _a_g_max(bounds: ParameterBounds, k: int) -> float:
    return math.exp(2.0 * bounds.a_gamma_sup) / k


def _lead(bounds: ParameterBounds, k: int) -> float:
    return max(bounds.a_sigma_max, 1.0 + k * _a_g_max(bounds, k))


def _param_radius(bounds: ParameterBounds, q: int) -> float:
    # A_gamma + q A_beta + q sqrt(q) / a_sigma
    return bounds.a_gamma_sup + q * bounds.a_beta_sup + q * math.sqrt(q) / bounds.a_sigma_min


def choose_mn(n: int, bounds: ParameterBounds) -> float:
    """Truncation level balancing the bounded and tail parts of the risk."""
    if n < 2:
        raise ValueError("n must be >= 2")
    ab, asig = bounds.a_beta_sup, bounds.a_sigma_max
    return ab + math.sqrt(ab * ab + 4.0 * asig * math.log(n))


def b_n(m_n: float, bounds: ParameterBounds, q: int, k: int) -> float:
    if not m_n > 0:
        raise ValueError("m_n must be positive")
    return _lead(bounds, k) * (1.0 + q * math.sqrt(q) * (m_n + bounds.a_beta_sup) ** 2 * bounds.a_sigma_max)


def b_n_prime(n: int, bounds: ParameterBounds, q: int, k: int) -> float:
    if n < 2:
        raise ValueError("n must be >= 2")
    ab, asig = bounds.a_beta_sup, bounds.a_sigma_max
    return _lead(bounds, k) * (1.0 + 2.0 * q * math.sqrt(q) * asig * (5.0 * ab * ab + 4.0 * asig * math.log(n)))


def lambda_min(inputs: BoundInputs) -> float:
    """Smallest penalty level covered by the oracle inequality."""
    n, p, q, k = inputs.n, inputs.p, inputs.q, inputs.k
    bp = b_n_prime(n, inputs.bounds, q, k)
    return inputs.kappa * k * bp / math.sqrt(n) * (q * math.log(n) * math.sqrt(math.log(2 * p + 1)) + 1.0)


def lambda_min_original(inputs: BoundInputs, kappa: float = 1.0) -> float:
    """Unfolded penalty condition ``kappa * 4 K B_n / sqrt(n) * (37 q ln n sqrt(ln(2p+1)) + 1)``.

    Here ``kappa >= 1`` and ``B_n`` is evaluated at ``inputs.truncation``.
    """
    if kappa < 1:
        raise TheoremHypothesisError("the unfolded condition needs kappa >= 1")
    n, p, q, k = inputs.n, inputs.p, inputs.q, inputs.k
    bn = b_n(inputs.truncation, inputs.bounds, q, k)
    return kappa * 4.0 * k * bn / math.sqrt(n) * (37.0 * q * math.log(n) * math.sqrt(math.log(2 * p + 1)) + 1.0)


def delta_m(m: float, p: int, n: int, bounds: ParameterBounds, q: int, k: int) -> float:
    if m < 1:
        raise ValueError("m must be >= 1")
    return m * math.sqrt(math.log(2 * p + 1)) * math.log(n) + 2.0 * math.sqrt(k) * _param_radius(bounds, q)


def r_n(bounds: ParameterBounds, q: int, k: int, b_n_value: float) -> float:
    """Uniform bound on the truncated log-likelihood ratios, ``2 K B_n (A_gamma + q A_beta + q sqrt(q) / a_sigma)``."""
    if not b_n_value > 0:
        raise ValueError("b_n_value must be positive")
    return 2.0 * k * b_n_value * _param_radius(bounds, q)


def log_packing_bound(delta: float, m: float, b_n_value: float, p: int, q: int, k: int,
                      bounds: ParameterBounds) -> float:
    """Natural log of the delta-packing bound for the l1 ball of radius ``m``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    bn = b_n_value
    first = 72.0 * bn * bn * q * q * k * k * m * m / (delta * delta) * math.log(2 * p + 1)
    c = 18.0 * bn * k
    rest = (
        math.log1p(c * q * bounds.a_beta_sup / delta)
        + math.log1p(c * bounds.a_gamma_sup / delta)
        + math.log1p(c * q * math.sqrt(q) / (bounds.a_sigma_min * delta))
    )
    return first + k * rest


def packing_bound(delta: float, m: float, b_n_value: float, p: int, q: int, k: int, bounds: ParameterBounds) -> float:
    """Direct-scale packing bound; overflows to ``inf`` for small ``delta``."""
    bn = b_n_value
    try:
        base = (2 * p + 1) ** (72.0 * bn**2 * q**2 * k**2 * m**2 / delta**2)
        c = 18.0 * bn * k
        return (
            base
            * (1 + c * q * bounds.a_beta_sup / delta) ** k
            * (1 + c * bounds.a_gamma_sup / delta) ** k
            * (1 + c * q * math.sqrt(q) / (bounds.a_sigma_min * delta)) ** k
        )
    except OverflowError:
        return math.inf


def tail_bound(m_n: float, n: int, k: int, q: int, bounds: ParameterBounds) -> float:
    """Bound on ``P(max_i ||Y_i||_inf > M_n)`` exactly as printed, A_gamma factor included."""
    if not m_n > 0:
        raise ValueError("m_n must be positive")
    ab, asig = bounds.a_beta_sup, bounds.a_sigma_max
    return 2.0 * k * n * q * bounds.a_gamma_sup * math.exp(-(m_n * m_n - 2.0 * m_n * ab) / (2.0 * asig))


def chernoff_gaussian_tail(t: float) -> float:
    """Chernoff bound ``exp(-t^2 / 2)`` on ``P(U >= t)`` for standard normal ``U``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return math.exp(-0.5 * t * t)


@dataclass(frozen=True)
class OracleRhs:
    total: float
    term1: float  # (1 + 1/kappa) * (inf term + lambda * ||psi||_1)
    term2: float  # lambda
    term3: float  # tail / entropy remainder
    term4: float  # 302 q sqrt(K/n) B'_n K (1 + radius^2)

    def terms(self) -> tuple[float, float, float, float]:
        return self.term1, self.term2, self.term3, self.term4

    def to_dict(self) -> dict:
        return {"total": self.total, "term1": self.term1, "term2": self.term2, "term3": self.term3, "term4": self.term4}


def oracle_rhs(kl_inf_term: float, l1_norm_psi0: float, inputs: BoundInputs, lam: float) -> OracleRhs:
    """Right-hand side of the l1-oracle inequality, summand by summand.

    Raises :class:`TheoremHypothesisError` if ``lam`` is below
    :func:`lambda_min`.
    """
    lmin = lambda_min(inputs)
    if lam < lmin:
        raise TheoremHypothesisError(f"lambda={lam:.6g} is below the theorem's minimum {lmin:.6g}")
    n, q, k, b = inputs.n, inputs.q, inputs.k, inputs.bounds
    kappa = inputs.kappa
    _, h = entropy_constants(b, q)
    root = math.sqrt(k / n)
    t1 = (1.0 + 1.0 / kappa) * (kl_inf_term + lam * l1_norm_psi0)
    t2 = float(lam)
    t3 = root * (math.exp(q / 2 - 1) * math.pi ** (q / 2) / b.a_sigma_max ** (q / 2) + h) * math.sqrt(2 * q * b.a_gamma_sup)
    t4 = REMAINDER_CONSTANT * q * root * b_n_prime(n, b, q, k) * k * (1.0 + _param_radius(b, q) ** 2)
    return OracleRhs(t1 + t2 + t3 + t4, t1, t2, t3, t4)


def constants_report(inputs: BoundInputs, m_grid=(1, 2, 4, 8), lam: float | None = None,
                     l1_norm_psi0: float = 0.0) -> dict:
    """Every constant for one ``(n, p, q, K, bounds, kappa)`` setting, JSON-ready."""
    b, n, p, q, k = inputs.bounds, inputs.n, inputs.p, inputs.q, inputs.k
    mn = inputs.truncation
    bn = b_n(mn, b, q, k)
    lmin = lambda_min(inputs)
    lam = lmin if lam is None else lam
    c, h = entropy_constants(b, q)
    out = {
        "inputs": {"n": n, "p": p, "q": q, "k": k, "kappa": inputs.kappa, "bounds": b.to_dict()},
        "theorem_regime": inputs.theorem_regime,
        "a_g_min": b.with_k(k).a_g_min,
        "a_g_max": b.with_k(k).a_g_max,
        "m_n": mn,
        "b_n": bn,
        "b_n_prime": b_n_prime(n, b, q, k),
        "lambda_min": lmin,
        "lambda_min_original_kappa1": lambda_min_original(inputs, 1.0),
        "r_n": r_n(b, q, k, bn),
        "delta_m": {str(m): delta_m(m, p, n, b, q, k) for m in m_grid},
        "tail_bound": tail_bound(mn, n, k, q, b),
        "entropy_c": c,
        "entropy_h": h,
    }
    if lam >= lmin:
        out["oracle_rhs"] = {"lambda": lam, "l1_norm_psi0": l1_norm_psi0,
                             **oracle_rhs(0.0, l1_norm_psi0, inputs, lam).to_dict()}
    return out
