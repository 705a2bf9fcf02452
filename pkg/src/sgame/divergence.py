"""Kullback-Leibler losses between SGaME conditional densities, plus Gaussian identities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.stats import norm

from .exceptions import NotPositiveDefiniteError
from .model import SgameParams, expert_means, log_density, sample

# two-sided standard normal quantile with tail mass 1e-14
_Z_TAIL = float(norm.isf(0.5e-14))
_GL_PER_PANEL = 16


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1000:
            raise ValueError("MonteCarlo needs at least 1000 samples")


@dataclass(frozen=True)
class Quadrature:
    """Composite Gauss-Legendre on a truncated interval (``q = 1`` only).

    ``truncation`` is the half-width around the origin; ``None`` picks it from
    the truth's expert means and largest standard deviation so the neglected
    Gaussian tail mass is below 1e-14.
    """

    nodes: int = 2048
    truncation: float | None = None

    def __post_init__(self):
        if self.nodes < 64:
            raise ValueError("Quadrature needs at least 64 nodes")


KlMethod = Union[MonteCarlo, Quadrature]


@dataclass(frozen=True)
class KlEstimate:
    value: float
    se: float = 0.0

    def __float__(self):
        return self.value


def _check_pair(truth: SgameParams, cand: SgameParams):
    if truth.p != cand.p or truth.q != cand.q:
        raise ValueError(f"dimension mismatch: truth (p={truth.p}, q={truth.q}) vs candidate (p={cand.p}, q={cand.q})")


def truncation_halfwidth(psi: SgameParams, x) -> float:
    m = expert_means(psi.experts, np.asarray(x, float))
    sd = math.sqrt(max(float(np.max(psi.experts.covariances[:, i, i])) for i in range(psi.q)))
    return float(np.abs(m).max()) + _Z_TAIL * sd


def gauss_legendre_grid(lo: float, hi: float, nodes: int):
    """Composite Gauss-Legendre nodes and weights over ``[lo, hi]``."""
    panels = max(1, nodes // _GL_PER_PANEL)
    t, w = np.polynomial.legendre.leggauss(_GL_PER_PANEL)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def integrate_density_1d(psi: SgameParams, x, nodes: int = 2048, truncation: float | None = None) -> float:
    """Quadrature of ``s_psi(y | x)`` over ``y`` for ``q = 1``."""
    if psi.q != 1:
        raise ValueError("density quadrature is implemented for q = 1 only")
    m = truncation_halfwidth(psi, x) if truncation is None else float(truncation)
    pts, wts = gauss_legendre_grid(-m, m, nodes)
    return float(wts @ np.exp(log_density(psi, x, pts[:, None])))


def kl_conditional(truth: SgameParams, candidate: SgameParams, x, method: KlMethod = MonteCarlo()) -> KlEstimate:
    """``KL(s_truth(. | x), s_candidate(. | x))`` by Monte Carlo or quadrature."""
    _check_pair(truth, candidate)
    x = np.asarray(x, dtype=float)
    if x.shape != (truth.p,):
        raise ValueError(f"x must have shape ({truth.p},)")
    if isinstance(method, Quadrature):
        if truth.q != 1:
            raise ValueError("quadrature KL requires q = 1")
        m = truncation_halfwidth(truth, x) if method.truncation is None else float(method.truncation)
        pts, wts = gauss_legendre_grid(-m, m, method.nodes)
        ys = pts[:, None]
        l0 = log_density(truth, x, ys)
        l1 = log_density(candidate, x, ys)
        return KlEstimate(float(wts @ (np.exp(l0) * (l0 - l1))), 0.0)
    if isinstance(method, MonteCarlo):
        ys = sample(truth, x, np.random.default_rng(method.seed), size=method.samples)
        diff = log_density(truth, x, ys) - log_density(candidate, x, ys)
        return KlEstimate(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(diff.size)))
    raise TypeError(f"unknown KL method {method!r}")


def kl_n(truth: SgameParams, candidate: SgameParams, design, method: KlMethod = MonteCarlo()) -> KlEstimate:
    """Average conditional KL over the rows of a fixed design.

    With Monte Carlo, row ``i`` draws from a stream derived from
    ``(method.seed, i)``, so two candidates scored with the same seed see the
    same responses (common random numbers).
    """
    _check_pair(truth, candidate)
    design = np.atleast_2d(np.asarray(design, dtype=float))
    if design.shape[1] != truth.p:
        raise ValueError(f"design has {design.shape[1]} columns, expected {truth.p}")
    if design.min() < 0 or design.max() > 1:
        raise ValueError("design entries must lie in [0, 1]")
    n = design.shape[0]
    if isinstance(method, Quadrature):
        vals = [kl_conditional(truth, candidate, xi, method).value for xi in design]
        return KlEstimate(float(np.mean(vals)), 0.0)
    if not isinstance(method, MonteCarlo):
        raise TypeError(f"unknown KL method {method!r}")
    seeds = np.random.SeedSequence(method.seed).spawn(n)
    means = np.empty(n)
    var = np.empty(n)
    for i, (xi, ss) in enumerate(zip(design, seeds)):
        ys = sample(truth, xi, np.random.default_rng(ss), size=method.samples)
        diff = log_density(truth, xi, ys) - log_density(candidate, xi, ys)
        means[i] = diff.mean()
        var[i] = diff.var(ddof=1) / diff.size
    return KlEstimate(float(means.mean()), float(math.sqrt(var.sum()) / n))


def neg_entropy(psi: SgameParams, x, samples: int = 20_000, seed=0) -> KlEstimate:
    """Monte Carlo estimate of ``int ln s(y|x) s(y|x) dy`` with its standard error."""
    ys = sample(psi, np.asarray(x, float), np.random.default_rng(seed), size=samples)
    ld = log_density(psi, x, ys)
    return KlEstimate(float(ld.mean()), float(ld.std(ddof=1) / math.sqrt(ld.size)))


def _chol(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc


def gaussian_kl_closed_form(m1, s1, m2, s2) -> float:
    """``KL(N(m1, s1) || N(m2, s2))``."""
    m1, m2 = np.atleast_1d(np.asarray(m1, float)), np.atleast_1d(np.asarray(m2, float))
    l1, l2 = _chol(s1, "S1"), _chol(s2, "S2")
    q = m1.size
    a = np.linalg.solve(l2, l1)
    d = np.linalg.solve(l2, m2 - m1)
    logdet1 = 2 * np.log(np.diag(l1)).sum()
    logdet2 = 2 * np.log(np.diag(l2)).sum()
    return float(0.5 * ((a * a).sum() + d @ d - q + logdet2 - logdet1))


def gaussian_product_constant(a, A, b, B) -> float:
    """``int phi(y; a, A) phi(y; b, B) dy``, i.e. ``phi(a; b, A + B)``."""
    a, b = np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(b, float))
    _chol(A, "A")
    _chol(B, "B")
    L = _chol(np.atleast_2d(A) + np.atleast_2d(B), "A + B")
    q = a.size
    z = np.linalg.solve(L, a - b)
    logdet = 2 * np.log(np.diag(L)).sum()
    return float(math.exp(-0.5 * (q * math.log(2 * math.pi) + logdet + z @ z)))


def entropy_constants(bounds, q: int) -> tuple[float, float]:
    """``(C, H)`` with ``C = (4 pi)^(-q/2) A_sigma^(q/2)`` and ``H = max(0, ln C)``."""
    c = (4 * math.pi) ** (-q / 2) * bounds.a_sigma_max ** (q / 2)
    return c, max(0.0, math.log(c))


__all__ = [
    "MonteCarlo",
    "Quadrature",
    "KlEstimate",
    "kl_conditional",
    "kl_n",
    "neg_entropy",
    "integrate_density_1d",
    "gaussian_kl_closed_form",
    "gaussian_product_constant",
    "entropy_constants",
]
