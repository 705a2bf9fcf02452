"""Soft-max gated mixture of Gaussian experts: parameters, density, sampling, gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import BoundsViolationError, NotPositiveDefiniteError

_LOG_2PI = math.log(2.0 * math.pi)
# relative slack used when deciding whether an eigenvalue already sits inside its cap
_CAP_RTOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParameterBounds:
    """Box constants of the bounded parameter class.

    ``a_sigma_min`` and ``a_sigma_max`` bound the eigenvalues of the expert
    *precision* matrices, so covariance eigenvalues live in
    ``[1 / a_sigma_max, 1 / a_sigma_min]``.
    """

    a_gamma_sup: float
    a_beta_sup: float
    a_sigma_min: float
    a_sigma_max: float
    k: int

    def __post_init__(self):
        for name in ("a_gamma_sup", "a_beta_sup"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a non-negative finite real, got {v!r}")
        for name in ("a_sigma_min", "a_sigma_max"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite real, got {v!r}")
        if self.a_sigma_min > self.a_sigma_max:
            raise ValueError("a_sigma_min must not exceed a_sigma_max")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        for name in ("a_gamma_sup", "a_beta_sup", "a_sigma_min", "a_sigma_max"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def a_g_min(self) -> float:
        return math.exp(-2.0 * self.a_gamma_sup) / self.k

    @property
    def a_g_max(self) -> float:
        return math.exp(2.0 * self.a_gamma_sup) / self.k

    @property
    def cov_eig_min(self) -> float:
        return 1.0 / self.a_sigma_max

    @property
    def cov_eig_max(self) -> float:
        return 1.0 / self.a_sigma_min

    def with_k(self, k: int) -> "ParameterBounds":
        return ParameterBounds(self.a_gamma_sup, self.a_beta_sup, self.a_sigma_min, self.a_sigma_max, k)

    def to_dict(self) -> dict:
        return {
            "a_gamma_sup": self.a_gamma_sup,
            "a_beta_sup": self.a_beta_sup,
            "a_sigma_min": self.a_sigma_min,
            "a_sigma_max": self.a_sigma_max,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterBounds":
        return cls(d["a_gamma_sup"], d["a_beta_sup"], d["a_sigma_min"], d["a_sigma_max"], d["k"])


@dataclass(frozen=True)
class GatingParams:
    """Affine soft-max scores ``w_k(x) = intercepts[k] + slopes[k] @ x``."""

    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        b = _frozen(self.intercepts)
        w = _frozen(self.slopes)
        if b.ndim != 1 or w.ndim != 2 or w.shape[0] != b.shape[0]:
            raise ValueError(f"gating shapes inconsistent: intercepts {b.shape}, slopes {w.shape}")
        if b.shape[0] < 1:
            raise ValueError("need at least one gating component")
        object.__setattr__(self, "intercepts", b)
        object.__setattr__(self, "slopes", w)

    @property
    def k(self) -> int:
        return self.intercepts.shape[0]

    @property
    def p(self) -> int:
        return self.slopes.shape[1]

    @classmethod
    def zeros(cls, k: int, p: int) -> "GatingParams":
        return cls(np.zeros(k), np.zeros((k, p)))


@dataclass(frozen=True)
class ExpertParams:
    """Gaussian experts with affine means ``intercepts[k] + slopes[k] @ x``.

    Shapes: intercepts ``(K, q)``, slopes ``(K, q, p)``, covariances ``(K, q, q)``.
    """

    intercepts: np.ndarray
    slopes: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        b = _frozen(self.intercepts)
        w = _frozen(self.slopes)
        s = _frozen(self.covariances)
        if b.ndim != 2 or w.ndim != 3 or s.ndim != 3:
            raise ValueError("expert arrays must have shapes (K, q), (K, q, p), (K, q, q)")
        k, q = b.shape
        if w.shape[:2] != (k, q) or s.shape != (k, q, q):
            raise ValueError(
                f"expert shapes inconsistent: intercepts {b.shape}, slopes {w.shape}, covariances {s.shape}"
            )
        if k < 1 or q < 1:
            raise ValueError("need at least one expert and one response dimension")
        object.__setattr__(self, "intercepts", b)
        object.__setattr__(self, "slopes", w)
        object.__setattr__(self, "covariances", s)

    @property
    def k(self) -> int:
        return self.intercepts.shape[0]

    @property
    def q(self) -> int:
        return self.intercepts.shape[1]

    @property
    def p(self) -> int:
        return self.slopes.shape[2]


@dataclass(frozen=True)
class SgameParams:
    gating: GatingParams
    experts: ExpertParams
    bounds: ParameterBounds

    def __post_init__(self):
        g, e = self.gating, self.experts
        if g.k != e.k:
            raise ValueError(f"gating has {g.k} components but experts have {e.k}")
        if g.p != e.p:
            raise ValueError(f"gating uses p={g.p} covariates but experts use p={e.p}")
        if self.bounds.k != g.k:
            raise ValueError(f"bounds declare k={self.bounds.k} but parameters have {g.k} components")

    @property
    def k(self) -> int:
        return self.gating.k

    @property
    def p(self) -> int:
        return self.gating.p

    @property
    def q(self) -> int:
        return self.experts.q

    def l1_norm(self) -> float:
        """l1 norm of the penalized coordinates (gating and expert slopes)."""
        return float(np.abs(self.gating.slopes).sum() + np.abs(self.experts.slopes).sum())

    def replace(self, gating=None, experts=None, bounds=None) -> "SgameParams":
        return SgameParams(
            gating if gating is not None else self.gating,
            experts if experts is not None else self.experts,
            bounds if bounds is not None else self.bounds,
        )

    def to_dict(self) -> dict:
        return {
            "gating": {
                "intercepts": self.gating.intercepts.tolist(),
                "slopes": self.gating.slopes.tolist(),
            },
            "experts": {
                "intercepts": self.experts.intercepts.tolist(),
                "slopes": self.experts.slopes.tolist(),
                "covariances": self.experts.covariances.tolist(),
            },
            "bounds": self.bounds.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SgameParams":
        g, e = d["gating"], d["experts"]
        k = len(g["intercepts"])
        p = len(g["slopes"][0]) if k else 0
        q = len(e["intercepts"][0])
        return cls(
            GatingParams(
                np.asarray(g["intercepts"], float),
                np.asarray(g["slopes"], float).reshape(k, p),
            ),
            ExpertParams(
                np.asarray(e["intercepts"], float).reshape(k, q),
                np.asarray(e["slopes"], float).reshape(k, q, p),
                np.asarray(e["covariances"], float).reshape(k, q, q),
            ),
            ParameterBounds.from_dict(d["bounds"]),
        )


@dataclass(frozen=True)
class Dataset:
    """Fixed design in ``[0, 1]^p`` with matching responses."""

    design: np.ndarray
    responses: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = _frozen(self.design)
        y = _frozen(self.responses)
        if x.ndim != 2:
            raise ValueError("design must be a 2-D array (n, p)")
        if y.ndim == 1:
            y = _frozen(y[:, None])
        if y.ndim != 2 or y.shape[0] != x.shape[0]:
            raise ValueError(f"responses shape {y.shape} does not match design shape {x.shape}")
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValueError("design entries must lie in [0, 1]; rescale covariates first")
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @property
    def q(self) -> int:
        return self.responses.shape[1]


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------


def _sup_abs_linear(coef):
    """sup over x in [0,1]^p of |coef @ x|, row-wise over the last axis."""
    pos = np.clip(coef, 0.0, None).sum(axis=-1)
    neg = np.clip(-coef, 0.0, None).sum(axis=-1)
    return np.maximum(pos, neg)


def bound_violations(psi: SgameParams, rtol: float = 1e-9) -> list[str]:
    """Names every bounded-class constraint ``psi`` violates (empty when in class).

    Uses the exact suprema over ``[0, 1]^p``, so rows that pass here may still be
    rescaled by :func:`project_to_bounds`, which enforces a sufficient condition.
    """
    b = psi.bounds
    out = []
    gsup = np.abs(psi.gating.intercepts) + _sup_abs_linear(psi.gating.slopes)
    for k in np.flatnonzero(gsup > b.a_gamma_sup * (1 + rtol)):
        out.append(f"gating component {k}: |gamma_k0| + sup_x |gamma_k^T x| = {gsup[k]:.6g} > A_gamma = {b.a_gamma_sup:.6g}")
    esup = np.abs(psi.experts.intercepts) + _sup_abs_linear(psi.experts.slopes)
    for k, z in zip(*np.nonzero(esup > b.a_beta_sup * (1 + rtol))):
        out.append(
            f"expert component {k}, output {z}: |beta_k0| + sup_x |beta_k x| = {esup[k, z]:.6g} > A_beta = {b.a_beta_sup:.6g}"
        )
    for k, cov in enumerate(psi.experts.covariances):
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            out.append(f"expert component {k}: covariance is not symmetric")
            continue
        eig = np.linalg.eigvalsh(cov)
        if eig[0] < b.cov_eig_min * (1 - rtol):
            out.append(
                f"expert component {k}: covariance eigenvalue {eig[0]:.6g} < 1/A_sigma = {b.cov_eig_min:.6g}"
            )
        if eig[-1] > b.cov_eig_max * (1 + rtol):
            out.append(
                f"expert component {k}: covariance eigenvalue {eig[-1]:.6g} > 1/a_sigma = {b.cov_eig_max:.6g}"
            )
    return out


def check_in_class(psi: SgameParams) -> SgameParams:
    violations = bound_violations(psi)
    if violations:
        raise BoundsViolationError("; ".join(violations))
    return psi


def clip_covariance(cov, eig_min, eig_max):
    """Clip the eigenvalues of a symmetric matrix into ``[eig_min, eig_max]``.

    Returns the input unchanged when it already satisfies the caps, so the map
    is idempotent bit for bit.
    """
    cov = np.asarray(cov, dtype=float)
    sym = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(sym)
    lo, hi = eig_min * (1 - _CAP_RTOL), eig_max * (1 + _CAP_RTOL)
    if np.array_equal(sym, cov) and vals[0] >= lo and vals[-1] <= hi:
        return cov
    vals = np.clip(vals, eig_min, eig_max)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _scale_rows(intercepts, slopes, cap):
    # |b| + ||w||_1 <= cap per row; rows already inside are left untouched
    total = np.abs(intercepts) + np.abs(slopes).sum(axis=-1)
    # rows rescaled onto the cap may land an ulp above it; do not rescale those again
    over = total > cap * (1 + _CAP_RTOL)
    if not over.any():
        return intercepts, slopes
    scale = np.where(over, cap / np.where(over, total, 1.0), 1.0)
    return intercepts * scale, slopes * scale[..., None]


def project_to_bounds(psi: SgameParams) -> SgameParams:
    """Map ``psi`` into the bounded class.

    Gating rows and expert output rows are rescaled so that
    ``|intercept| + ||slope||_1`` does not exceed its cap, and covariance
    eigenvalues are clipped into ``[1/A_sigma, 1/a_sigma]``. Feasible inputs
    come back unchanged.
    """
    b = psi.bounds
    g, e = psi.gating, psi.experts
    gi, gs = _scale_rows(g.intercepts, g.slopes, b.a_gamma_sup)
    ei, es = _scale_rows(e.intercepts, e.slopes, b.a_beta_sup)
    covs, changed_cov = [], False
    for orig in e.covariances:
        c = clip_covariance(orig, b.cov_eig_min, b.cov_eig_max)
        changed_cov |= c is not orig
        covs.append(c)
    if gi is g.intercepts and ei is e.intercepts and not changed_cov:
        return psi
    gating = g if gi is g.intercepts else GatingParams(gi, gs)
    experts = e if (ei is e.intercepts and not changed_cov) else ExpertParams(ei, es, np.stack(covs))
    return SgameParams(gating, experts, b)


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------


def _as_rows(x, width, name):
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.ndim != 2 or a.shape[1] != width:
        raise ValueError(f"{name} has shape {np.shape(x)}, expected trailing dimension {width}")
    return a, single


def gating_scores(gating: GatingParams, x) -> np.ndarray:
    xs, single = _as_rows(x, gating.p, "x")
    w = gating.intercepts + xs @ gating.slopes.T
    return w[0] if single else w


def log_softmax_gates(gating: GatingParams, x) -> np.ndarray:
    w = gating_scores(gating, x)
    return w - _logsumexp(w)[..., None]


def softmax_gates(gating: GatingParams, x) -> np.ndarray:
    """Gate probabilities ``g_k(x)``; ``x`` may be one point or an ``(n, p)`` batch."""
    w = gating_scores(gating, x)
    z = np.exp(w - w.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def expert_means(experts: ExpertParams, x) -> np.ndarray:
    """Means ``beta_k0 + beta_k x`` with shape ``(K, q)`` or ``(n, K, q)``."""
    xs, single = _as_rows(x, experts.p, "x")
    m = experts.intercepts[None] + np.einsum("kqp,np->nkq", experts.slopes, xs)
    return m[0] if single else m


def cholesky_factors(covariances) -> np.ndarray:
    try:
        return np.linalg.cholesky(covariances)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("expert covariance is not positive definite") from exc


def component_log_pdf(experts: ExpertParams, x, y, chol=None) -> np.ndarray:
    """Gaussian log-densities ``ln phi(y; m_k(x), Sigma_k)`` for every component.

    Returns ``(K,)`` for a single pair or ``(n, K)`` for batches.
    """
    xs, single = _as_rows(x, experts.p, "x")
    ys, _ = _as_rows(y, experts.q, "y")
    if xs.shape[0] != ys.shape[0]:
        if xs.shape[0] != 1:
            raise ValueError(f"x has {xs.shape[0]} rows but y has {ys.shape[0]}")
        # one x against many y: the means broadcast below
        single = False
    if chol is None:
        chol = cholesky_factors(experts.covariances)
    q = experts.q
    resid = ys[:, None, :] - expert_means(experts, xs)
    out = np.empty(resid.shape[:2])
    for k in range(experts.k):
        z = solve_triangular(chol[k], resid[:, k, :].T, lower=True, check_finite=False)
        logdet = 2.0 * np.log(np.diag(chol[k])).sum()
        out[:, k] = -0.5 * ((z * z).sum(axis=0) + logdet + q * _LOG_2PI)
    return out[0] if single else out


def _logsumexp(a):
    """Log-sum-exp over the last (component) axis."""
    # column loops beat ufunc reductions along a short trailing axis
    cols = np.moveaxis(a, -1, 0)
    m = cols[0].copy()
    for c in cols[1:]:
        m = np.maximum(m, c)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.zeros_like(m)
    for c in cols:
        s = s + np.exp(c - m)
    return m + np.log(s)


def joint_log_terms(psi: SgameParams, x, y, chol=None) -> np.ndarray:
    """``ln g_k(x) + ln phi(y; m_k(x), Sigma_k)`` per component."""
    lp = component_log_pdf(psi.experts, x, y, chol)
    lg = log_softmax_gates(psi.gating, x)
    return lg + lp


def log_density(psi: SgameParams, x, y) -> np.ndarray | float:
    """Conditional log-density ``ln s_psi(y | x)``.

    Accepts one ``(x, y)`` pair or ``(n, p)`` / ``(n, q)`` batches; a single
    ``x`` is broadcast against many ``y`` rows.
    """
    terms = joint_log_terms(psi, x, y)
    out = _logsumexp(terms)
    return float(out) if np.ndim(out) == 0 else out


def density(psi: SgameParams, x, y):
    return np.exp(log_density(psi, x, y))


def conditional_mean(psi: SgameParams, x) -> np.ndarray:
    g = softmax_gates(psi.gating, x)
    m = expert_means(psi.experts, x)
    return np.einsum("...k,...kq->...q", g, m)


def sample(psi: SgameParams, x, rng, size=None, return_components=False):
    """Draw responses from ``s_psi(. | x)``.

    With a single ``x`` and ``size=None`` one ``q``-vector is returned; with
    ``size=N`` an ``(N, q)`` array. A batch ``x`` of shape ``(n, p)`` yields one
    draw per row. ``rng`` is a :class:`numpy.random.Generator` or a seed.
    """
    rng = np.random.default_rng(rng)
    xs, single = _as_rows(x, psi.p, "x")
    m = xs.shape[0]
    if size is not None:
        if not single:
            raise ValueError("size is only supported for a single design point")
        m = int(size)
    chol = cholesky_factors(psi.experts.covariances)
    # gates and means are computed per distinct x and broadcast to the draws
    gates = np.broadcast_to(softmax_gates(psi.gating, xs), (m, psi.k))
    u = rng.random(m)
    cdf = np.cumsum(gates, axis=1)
    comp = (u[:, None] >= cdf[:, :-1]).sum(axis=1) if psi.k > 1 else np.zeros(m, dtype=int)
    eps = rng.standard_normal((m, psi.q))
    all_means = np.broadcast_to(expert_means(psi.experts, xs), (m, psi.k, psi.q))
    means = all_means[np.arange(m), comp]
    y = means + np.einsum("nij,nj->ni", chol[comp], eps)
    if single and size is None:
        y, comp = y[0], comp[0]
    return (y, comp) if return_components else y


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------


def flat_layout(k: int, p: int, q: int) -> dict[str, slice]:
    """Slices of the flat gradient vector, in storage order."""
    sizes = [
        ("gating_intercepts", k),
        ("gating_slopes", k * p),
        ("expert_intercepts", k * q),
        ("expert_slopes", k * q * p),
        ("covariances", k * q * q),
    ]
    out, start = {}, 0
    for name, size in sizes:
        out[name] = slice(start, start + size)
        start += size
    return out


def flatten_params(psi: SgameParams) -> np.ndarray:
    g, e = psi.gating, psi.experts
    return np.concatenate(
        [g.intercepts.ravel(), g.slopes.ravel(), e.intercepts.ravel(), e.slopes.ravel(), e.covariances.ravel()]
    )


def unflatten_params(vec, like: SgameParams) -> SgameParams:
    k, p, q = like.k, like.p, like.q
    lay = flat_layout(k, p, q)
    vec = np.asarray(vec, dtype=float)
    return SgameParams(
        GatingParams(vec[lay["gating_intercepts"]], vec[lay["gating_slopes"]].reshape(k, p)),
        ExpertParams(
            vec[lay["expert_intercepts"]].reshape(k, q),
            vec[lay["expert_slopes"]].reshape(k, q, p),
            vec[lay["covariances"]].reshape(k, q, q),
        ),
        like.bounds,
    )


def log_density_gradient(psi: SgameParams, x, y) -> np.ndarray:
    """Analytic gradient of ``ln s_psi(y | x)`` at one ``(x, y)`` pair.

    Flat layout (see :func:`flat_layout`): gating intercepts, gating slopes
    (row-major ``K x p``), expert intercepts (``K x q``), expert slopes
    (``K x q x p``), covariance entries (``K x q x q``). Covariance entries are
    treated as free coordinates, so each block is the unsymmetrized matrix
    derivative.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (psi.p,) or y.shape != (psi.q,):
        raise ValueError(f"expected x of shape ({psi.p},) and y of shape ({psi.q},)")
    chol = cholesky_factors(psi.experts.covariances)
    terms = joint_log_terms(psi, x, y, chol)
    resp = np.exp(terms - _logsumexp(terms))
    gates = softmax_gates(psi.gating, x)
    k, p, q = psi.k, psi.p, psi.q

    d_w = resp - gates
    resid = y - expert_means(psi.experts, x)
    eye = np.eye(q)
    d_mean = np.empty((k, q))
    d_cov = np.empty((k, q, q))
    for l in range(k):
        prec = solve_triangular(chol[l].T, solve_triangular(chol[l], eye, lower=True), lower=False)
        u = prec @ resid[l]
        d_mean[l] = resp[l] * u
        d_cov[l] = resp[l] * 0.5 * (np.outer(u, u) - prec)

    return np.concatenate(
        [
            d_w,
            np.outer(d_w, x).ravel(),
            d_mean.ravel(),
            (d_mean[:, :, None] * x[None, None, :]).ravel(),
            d_cov.ravel(),
        ]
    )


def gradient_envelope(y_inf_norm: float, bounds: ParameterBounds, q: int, k: int | None = None) -> float:
    """Uniform bound ``G(y)`` on the sup-norm of the log-density gradient."""
    if y_inf_norm < 0:
        raise ValueError("y_inf_norm must be non-negative")
    k = bounds.k if k is None else int(k)
    a_g = math.exp(2.0 * bounds.a_gamma_sup) / k
    lead = max(bounds.a_sigma_max, 1.0 + k * a_g)
    return lead * (1.0 + q * math.sqrt(q) * (y_inf_norm + bounds.a_beta_sup) ** 2 * bounds.a_sigma_max)


def penalty(psi: SgameParams, lam: float) -> float:
    """Lasso penalty on gating and expert slopes; intercepts and covariances are free."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return float(lam) * psi.l1_norm()


# ---------------------------------------------------------------------------
# random draws inside the class
# ---------------------------------------------------------------------------


def random_params(bounds: ParameterBounds, p: int, q: int, rng, sparsity: float = 0.0, spread: float = 1.5):
    """Random parameters projected into the bounded class.

    ``spread`` > 1 deliberately overshoots the caps before projection so that
    many draws land on the boundary. ``sparsity`` is the probability that a
    slope coordinate is zeroed.
    """
    rng = np.random.default_rng(rng)
    k = bounds.k
    g_raw = rng.uniform(-1, 1, size=(k, p + 1))
    g_raw *= spread * bounds.a_gamma_sup / np.maximum(np.abs(g_raw).sum(axis=1, keepdims=True), 1e-300)
    e_raw = rng.uniform(-1, 1, size=(k, q, p + 1))
    e_raw *= spread * bounds.a_beta_sup / np.maximum(np.abs(e_raw).sum(axis=2, keepdims=True), 1e-300)
    if sparsity > 0:
        g_raw[:, 1:] *= rng.random((k, p)) >= sparsity
        e_raw[:, :, 1:] *= rng.random((k, q, p)) >= sparsity
    covs = np.empty((k, q, q))
    lo, hi = math.log(bounds.cov_eig_min), math.log(bounds.cov_eig_max)
    for j in range(k):
        basis, _ = np.linalg.qr(rng.standard_normal((q, q)))
        eig = np.exp(rng.uniform(lo - 0.3, hi + 0.3, size=q))
        covs[j] = (basis * eig) @ basis.T
        covs[j] = 0.5 * (covs[j] + covs[j].T)
    psi = SgameParams(
        GatingParams(g_raw[:, 0], g_raw[:, 1:]),
        ExpertParams(e_raw[:, :, 0], e_raw[:, :, 1:], covs),
        bounds,
    )
    return project_to_bounds(psi)
