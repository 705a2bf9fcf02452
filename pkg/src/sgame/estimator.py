"""Penalized EM for the Lasso SGaME estimator and the l1-ball constrained variants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import EmptyComponentError, FitFailedError, SgameError
from .model import (
    Dataset,
    ExpertParams,
    GatingParams,
    ParameterBounds,
    SgameParams,
    clip_covariance,
    component_log_pdf,
    joint_log_terms,
    log_density,
    log_softmax_gates,
    penalty,
)

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("kmeans", "random")
# minimum total responsibility a component may carry
EMPTY_COMPONENT_MASS = 1e-10
# above this many columns the expert solver works on residuals instead of a Gram matrix
GRAM_MAX_COLUMNS = 1024


@dataclass(frozen=True)
class FitConfig:
    max_em_iters: int = 500
    em_tol: float = 1e-7
    inner_iters: int = 25
    restarts: int = 5
    seed: int = 0
    init_strategy: str = "kmeans"
    cd_tol: float = 1e-10
    cd_max_sweeps: int = 1000

    def __post_init__(self):
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be >= 1")
        if not self.em_tol > 0:
            raise ValueError("em_tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}, got {self.init_strategy!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FitResult:
    params: SgameParams
    penalized_nll_trace: tuple
    final_penalized_nll: float
    active_gating: np.ndarray
    active_experts: np.ndarray
    converged: bool
    iterations: int
    lam: float = 0.0
    nll: float = float("nan")
    ball_radius: float | None = None
    restart: int = 0
    restart_errors: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "lambda": self.lam,
            "ball_radius": self.ball_radius,
            "penalized_nll_trace": list(self.penalized_nll_trace),
            "final_penalized_nll": self.final_penalized_nll,
            "nll": self.nll,
            "l1_norm": self.params.l1_norm(),
            "active_gating": self.active_gating.astype(int).tolist(),
            "active_experts": self.active_experts.astype(int).tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "restart": self.restart,
            "restart_errors": list(self.restart_errors),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        params = SgameParams.from_dict(d["params"])
        return cls(
            params=params,
            penalized_nll_trace=tuple(d["penalized_nll_trace"]),
            final_penalized_nll=d["final_penalized_nll"],
            active_gating=np.asarray(d["active_gating"], dtype=bool).reshape(params.k, params.p),
            active_experts=np.asarray(d["active_experts"], dtype=bool).reshape(params.k, params.q, params.p),
            converged=d["converged"],
            iterations=d["iterations"],
            lam=d["lambda"],
            nll=d["nll"],
            ball_radius=d.get("ball_radius"),
            restart=d.get("restart", 0),
            restart_errors=tuple(d.get("restart_errors", ())),
        )


# ---------------------------------------------------------------------------
# objective and E-step
# ---------------------------------------------------------------------------


def _check_lambda(lam):
    if not (lam >= 0 and np.isfinite(lam)):
        raise ValueError(f"lambda must be a finite non-negative real, got {lam!r}")


def nll(psi: SgameParams, data: Dataset) -> float:
    return -float(np.mean(log_density(psi, data.design, data.responses)))


def penalized_nll(psi: SgameParams, data: Dataset, lam: float) -> float:
    """Empirical negative conditional log-likelihood plus the Lasso penalty."""
    _check_lambda(lam)
    if psi.p != data.p or psi.q != data.q:
        raise ValueError(f"parameters (p={psi.p}, q={psi.q}) do not match data (p={data.p}, q={data.q})")
    return nll(psi, data) + penalty(psi, lam)


def e_step(psi: SgameParams, data: Dataset) -> np.ndarray:
    """Posterior component probabilities, shape ``(n, K)``, rows summing to one."""
    terms = joint_log_terms(psi, data.design, data.responses)
    terms = np.atleast_2d(terms)
    terms -= terms.max(axis=1, keepdims=True)
    r = np.exp(terms)
    r /= r.sum(axis=1, keepdims=True)
    return r


# ---------------------------------------------------------------------------
# l1 ball
# ---------------------------------------------------------------------------


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{w : ||w||_1 <= radius}`` (sort-based).

    Points already inside the ball are returned unchanged.
    """
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    a = np.abs(v).ravel()
    if a.sum() <= radius:
        return v
    if radius == 0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u * idx > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return soft_threshold(v, theta)


# ---------------------------------------------------------------------------
# gating M-step
# ---------------------------------------------------------------------------


def gating_surrogate(resp, design, gating: GatingParams, lam: float) -> float:
    """``-(1/n) sum_ik r_ik ln g_k(x_i) + lam * ||slopes||_1``."""
    lg = log_softmax_gates(gating, design)
    return float(-(resp * lg).sum() / resp.shape[0] + lam * np.abs(gating.slopes).sum())


def _gating_prox(intercepts, slopes, t, lam, cap):
    slopes = soft_threshold(slopes, t * lam)
    rows = np.concatenate([intercepts[:, None], slopes], axis=1)
    out = np.vstack([project_l1_ball(r, cap) for r in rows])
    return out[:, 0].copy(), out[:, 1:].copy()


def m_step_gating(resp, design, init: GatingParams, lam: float, cfg: FitConfig, bounds: ParameterBounds,
                  step: float | None = None) -> GatingParams:
    """Proximal-gradient steps on the weighted multinomial-logistic surrogate.

    The prox combines soft-thresholding of the slopes with projection of every
    row onto ``|intercept| + ||slopes||_1 <= A_gamma``, so iterates never leave
    the bounded class and slopes hit exact zeros. Backtracking enforces
    sufficient decrease; the result is never worse than ``init``.
    """
    _check_lambda(lam)
    resp = np.asarray(resp, dtype=float)
    design = np.asarray(design, dtype=float)
    n = resp.shape[0]
    if not np.allclose(resp.sum(axis=1), 1.0, atol=1e-8):
        raise ValueError("responsibility rows must sum to one")
    cap = bounds.a_gamma_sup

    def smooth(b, w):
        lg = log_softmax_gates(GatingParams(b, w), design)
        f = -(resp * lg).sum() / n
        if not np.isfinite(f):
            raise SgameError("non-finite gating loss")
        return f, np.exp(lg)

    b, w = np.array(init.intercepts), np.array(init.slopes)
    if (np.abs(b) + np.abs(w).sum(axis=1) > cap).any():
        b, w = _gating_prox(b, w, 0.0, 0.0, cap)
    f, g = smooth(b, w)
    obj = f + lam * np.abs(w).sum()
    # Hessian of the averaged softmax loss is bounded by 0.5 * max ||(1, x_i)||^2
    lip = 0.5 * (1.0 + (design * design).sum(axis=1).max(initial=0.0))
    t = 1.0 / lip if step is None else step
    for _ in range(cfg.inner_iters):
        d = (g - resp) / n
        gb, gw = d.sum(axis=0), d.T @ design
        while True:
            nb, nw = _gating_prox(b - t * gb, w - t * gw, t, lam, cap)
            nf, ng = smooth(nb, nw)
            db, dw = nb - b, nw - w
            quad = f + gb @ db + (gw * dw).sum() + ((db * db).sum() + (dw * dw).sum()) / (2 * t)
            if nf <= quad + 1e-12 * max(1.0, abs(f)) or t < 1e-12:
                break
            t *= 0.5
        nobj = nf + lam * np.abs(nw).sum()
        if nobj > obj:
            break
        moved = max(np.abs(db).max(initial=0.0), np.abs(dw).max(initial=0.0))
        b, w, f, g, obj = nb, nw, nf, ng, nobj
        if moved < 1e-12:
            break
        t *= 2.0
    return GatingParams(b, w)


# ---------------------------------------------------------------------------
# expert M-step
# ---------------------------------------------------------------------------


def _weighted_moments(resp_k, xt, y):
    mass = resp_k.sum()
    mean = (resp_k @ y) / mass
    resid = y - mean
    cov = (resid * resp_k[:, None]).T @ resid / mass
    return mass, mean, cov


def _cd_lasso_gram(coef, gram, cross, prec, lam, cap, tol, max_sweeps):
    """Coordinate descent for ``0.5 tr(P (B G B^T - 2 B H^T)) + lam ||B[:, 1:]||_1``.

    ``coef`` is ``(q, p+1)`` with the unpenalized intercept in column 0. Each
    coordinate is minimized exactly on the interval that keeps
    ``|B[z, 0]| + ||B[z, 1:]||_1 <= cap``.
    """
    q, m = coef.shape
    grad_lin = coef @ gram - cross  # (q, m)
    diag = np.diag(gram)
    rowabs = np.abs(coef).sum(axis=1)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(m):
            if diag[j] <= 0:
                continue
            for z in range(q):
                c = prec[z, z] * diag[j]
                old = coef[z, j]
                g = prec[z] @ grad_lin[:, j]
                raw = c * old - g
                new = raw / c if j == 0 else soft_threshold(raw, lam) / c
                room = cap - (rowabs[z] - abs(old))
                room = max(room, 0.0)
                new = min(max(new, -room), room)
                delta = new - old
                if delta != 0.0:
                    coef[z, j] = new
                    rowabs[z] += abs(new) - abs(old)
                    grad_lin[z] += delta * gram[j]
                    biggest = max(biggest, abs(delta) * math.sqrt(c))
        if biggest < tol:
            break
    return coef


def _cd_lasso_resid(coef, xt, y, w, prec, lam, cap, tol, max_sweeps):
    """Residual-update twin of :func:`_cd_lasso_gram` for very wide designs."""
    q, m = coef.shape
    resid = y - xt @ coef.T  # (n, q)
    rp = resid @ prec  # (n, q)
    wx = xt * w[:, None]
    diag = (wx * xt).sum(axis=0)
    rowabs = np.abs(coef).sum(axis=1)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(m):
            if diag[j] <= 0:
                continue
            for z in range(q):
                c = prec[z, z] * diag[j]
                old = coef[z, j]
                g = -(wx[:, j] @ rp[:, z])
                raw = c * old - g
                new = raw / c if j == 0 else soft_threshold(raw, lam) / c
                room = max(cap - (rowabs[z] - abs(old)), 0.0)
                new = min(max(new, -room), room)
                delta = new - old
                if delta != 0.0:
                    coef[z, j] = new
                    rowabs[z] += abs(new) - abs(old)
                    step = delta * xt[:, j]
                    resid[:, z] -= step
                    rp -= np.outer(step, prec[z])
                    biggest = max(biggest, abs(delta) * math.sqrt(c))
        if biggest < tol:
            break
    return coef


def expert_surrogate(resp, data: Dataset, experts: ExpertParams, lam: float) -> float:
    """``-(1/n) sum_ik r_ik ln phi(y_i; m_k(x_i), Sigma_k) + lam * ||expert slopes||_1``."""
    lp = np.atleast_2d(component_log_pdf(experts, data.design, data.responses))
    return float(-(resp * lp).sum() / data.n + lam * np.abs(experts.slopes).sum())


def m_step_experts(resp, data: Dataset, lam: float, cfg: FitConfig, bounds: ParameterBounds,
                   init: ExpertParams | None = None, gram_max_columns: int = GRAM_MAX_COLUMNS) -> ExpertParams:
    """Weighted Lasso regression per expert followed by the covariance update.

    Mean coefficients are updated by exact coordinate descent (with the
    current precision as metric, intercept unpenalized, and the per-row cap
    ``A_beta`` enforced coordinate-wise); the covariance is then the weighted
    residual covariance with eigenvalues clipped into ``[1/A_sigma, 1/a_sigma]``,
    which is the exact constrained minimizer. Without ``init`` the solver
    starts from the intercept-only weighted fit.
    """
    _check_lambda(lam)
    resp = np.asarray(resp, dtype=float)
    if resp.ndim != 2 or resp.shape[0] != data.n:
        raise ValueError("responsibility matrix must have one row per observation")
    if not np.allclose(resp.sum(axis=1), 1.0, atol=1e-8):
        raise ValueError("responsibility rows must sum to one")
    k = resp.shape[1]
    n, p, q = data.n, data.p, data.q
    x, y = data.design, data.responses
    xt = np.hstack([np.ones((n, 1)), x])
    use_gram = p + 1 <= gram_max_columns
    intercepts = np.empty((k, q))
    slopes = np.empty((k, q, p))
    covs = np.empty((k, q, q))
    for c in range(k):
        rk = resp[:, c]
        mass = rk.sum()
        if mass < EMPTY_COMPONENT_MASS:
            raise EmptyComponentError(f"component {c} has total responsibility {mass:.3g}", component=c)
        if init is None:
            _, mean, cov = _weighted_moments(rk, xt, y)
            coef = np.zeros((q, p + 1))
            coef[:, 0] = np.clip(mean, -bounds.a_beta_sup, bounds.a_beta_sup)
            sigma = clip_covariance(cov + np.outer(mean - coef[:, 0], mean - coef[:, 0]),
                                    bounds.cov_eig_min, bounds.cov_eig_max)
        else:
            coef = np.concatenate([init.intercepts[c][:, None], init.slopes[c]], axis=1).copy()
            sigma = init.covariances[c]
        prec = np.linalg.inv(sigma)
        prec = 0.5 * (prec + prec.T)
        w = rk / n
        if use_gram:
            wx = xt * w[:, None]
            gram = wx.T @ xt
            cross = (wx.T @ y).T
            coef = _cd_lasso_gram(coef, gram, cross, prec, lam, bounds.a_beta_sup, cfg.cd_tol, cfg.cd_max_sweeps)
        else:
            coef = _cd_lasso_resid(coef, xt, y, w, prec, lam, bounds.a_beta_sup, cfg.cd_tol, cfg.cd_max_sweeps)
        resid = y - xt @ coef.T
        s = (resid * rk[:, None]).T @ resid / mass
        covs[c] = clip_covariance(0.5 * (s + s.T), bounds.cov_eig_min, bounds.cov_eig_max)
        intercepts[c] = coef[:, 0]
        slopes[c] = coef[:, 1:]
    return ExpertParams(intercepts, slopes, covs)


def expert_lambda_max(resp, data: Dataset, bounds: ParameterBounds) -> float:
    """Smallest ``lam`` at which zero expert slopes solve the expert M-step.

    Evaluated at the intercept-only weighted fit with its clipped covariance,
    i.e. the largest absolute precision-weighted correlation between the
    responsibility-weighted residuals and a covariate.
    """
    resp = np.asarray(resp, dtype=float)
    x, y, n = data.design, data.responses, data.n
    out = 0.0
    for c in range(resp.shape[1]):
        rk = resp[:, c]
        mass = rk.sum()
        mean = (rk @ y) / mass
        resid = y - mean
        cov = clip_covariance((resid * rk[:, None]).T @ resid / mass, bounds.cov_eig_min, bounds.cov_eig_max)
        grad = ((resid @ np.linalg.inv(cov)) * rk[:, None]).T @ x / n  # (q, p)
        out = max(out, float(np.abs(grad).max(initial=0.0)))
    return out


def lambda_max(data: Dataset, bounds: ParameterBounds, k: int = 1) -> float:
    """Data-driven penalty level above which slopes are shrunk to exactly zero.

    For ``k = 1`` this is exact: the intercept-only fit is the penalized
    optimum for every ``lam >= lambda_max``. For ``k > 1`` the pooled expert
    threshold is combined with the gating gradient bound ``max_j mean_i x_ij``;
    it is a heuristic scale rather than a guarantee.
    """
    val = expert_lambda_max(np.ones((data.n, 1)), data, bounds)
    if k > 1:
        val = max(val, float(data.design.mean(axis=0).max(initial=0.0)))
    return val


# ---------------------------------------------------------------------------
# EM driver
# ---------------------------------------------------------------------------


def _initial_resp(data: Dataset, k: int, strategy: str, rng) -> np.ndarray:
    n = data.n
    if k == 1:
        return np.ones((n, 1))
    if strategy == "kmeans":
        from sklearn.cluster import KMeans

        feats = np.hstack([data.design, data.responses])
        labels = KMeans(n_clusters=k, n_init=1, random_state=int(rng.integers(2**31 - 1))).fit_predict(feats)
        if np.bincount(labels, minlength=k).min() > 0:
            return np.eye(k)[labels]
        logger.debug("k-means produced an empty cluster; falling back to random soft assignment")
    return rng.dirichlet(np.ones(k), size=n)


def _mask(psi: SgameParams):
    return psi.gating.slopes != 0, psi.experts.slopes != 0


def _params_blend(a: SgameParams, b: SgameParams, t: float) -> SgameParams:
    # convex combination; every constraint set involved is convex
    ga, gb, ea, eb = a.gating, b.gating, a.experts, b.experts
    return SgameParams(
        GatingParams((1 - t) * ga.intercepts + t * gb.intercepts, (1 - t) * ga.slopes + t * gb.slopes),
        ExpertParams(
            (1 - t) * ea.intercepts + t * eb.intercepts,
            (1 - t) * ea.slopes + t * eb.slopes,
            (1 - t) * ea.covariances + t * eb.covariances,
        ),
        a.bounds,
    )


def project_params_l1_ball(psi: SgameParams, radius: float) -> SgameParams:
    """Project the concatenated (gating slopes, expert slopes) onto an l1 ball."""
    g, e = psi.gating, psi.experts
    flat = np.concatenate([g.slopes.ravel(), e.slopes.ravel()])
    proj = project_l1_ball(flat, radius)
    if proj is flat:
        return psi
    ng = g.slopes.size
    return SgameParams(
        GatingParams(g.intercepts, proj[:ng].reshape(g.slopes.shape)),
        ExpertParams(e.intercepts, proj[ng:].reshape(e.slopes.shape), e.covariances),
        psi.bounds,
    )


def _run_em(data, k, lam, bounds, cfg, rng, radius=None):
    resp = _initial_resp(data, k, cfg.init_strategy, rng)
    inner_lam = lam if radius is None else 0.0
    gating = m_step_gating(resp, data.design, GatingParams.zeros(k, data.p), inner_lam, cfg, bounds)
    experts = m_step_experts(resp, data, inner_lam, cfg, bounds)
    psi = SgameParams(gating, experts, bounds)
    if radius is not None:
        psi = project_params_l1_ball(psi, radius)

    value = penalized_nll(psi, data, lam)
    trace = [value]
    converged = False
    it = 0
    for it in range(1, cfg.max_em_iters + 1):
        resp = e_step(psi, data)
        gating = m_step_gating(resp, data.design, psi.gating, inner_lam, cfg, bounds)
        experts = m_step_experts(resp, data, inner_lam, cfg, bounds, init=psi.experts)
        cand = SgameParams(gating, experts, bounds)
        new = penalized_nll(cand, data, lam) if radius is None else None
        if radius is not None:
            cand = project_params_l1_ball(cand, radius)
            new = penalized_nll(cand, data, lam)
            t = 1.0
            while new > value and t > 1e-6:
                t *= 0.5
                cand = _params_blend(psi, cand, 0.5)
                new = penalized_nll(cand, data, lam)
        if not new <= value:
            # numerical noise at a fixed point; keep the previous iterate
            logger.debug("iteration %d did not decrease the objective (%.17g > %.17g)", it, new, value)
            converged = True
            it -= 1
            break
        decrease = value - new
        psi, value = cand, new
        trace.append(value)
        if decrease <= cfg.em_tol * max(1.0, abs(value)):
            converged = True
            break
    return psi, trace, converged, it


def _fit(data: Dataset, k: int, lam: float, bounds: ParameterBounds, cfg: FitConfig, radius=None) -> FitResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    if data.n < k:
        raise ValueError(f"need at least k={k} observations, got n={data.n}")
    _check_lambda(lam)
    bounds = bounds if bounds.k == k else bounds.with_k(k)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best, errors = None, []
    for r, ss in enumerate(seeds):
        try:
            psi, trace, converged, iters = _run_em(data, k, lam, bounds, cfg, np.random.default_rng(ss), radius)
        except EmptyComponentError as exc:
            exc.restart = r
            errors.append(f"restart {r}: {exc}")
            logger.info("restart %d failed: %s", r, exc)
            continue
        res = (trace[-1], r, psi, trace, converged, iters)
        if best is None or res[0] < best[0]:
            best = res
    if best is None:
        raise FitFailedError("all restarts failed: " + "; ".join(errors), errors)
    value, r, psi, trace, converged, iters = best
    ag, ae = _mask(psi)
    return FitResult(
        params=psi,
        penalized_nll_trace=tuple(trace),
        final_penalized_nll=value,
        active_gating=ag,
        active_experts=ae,
        converged=converged,
        iterations=iters,
        lam=float(lam),
        nll=nll(psi, data),
        ball_radius=None if radius is None else float(radius),
        restart=r,
        restart_errors=tuple(errors),
    )


def fit_lasso(data: Dataset, k: int, lam: float, bounds: ParameterBounds, cfg: FitConfig = FitConfig()) -> FitResult:
    """Lasso-penalized maximum likelihood by penalized EM, best of ``cfg.restarts`` runs."""
    return _fit(data, k, lam, bounds, cfg)


def fit_ball_constrained(data: Dataset, k: int, m: float, bounds: ParameterBounds,
                         cfg: FitConfig = FitConfig()) -> FitResult:
    """Maximum likelihood over ``||slopes||_1 <= m`` inside the bounded class.

    Each EM iteration runs unpenalized M-steps, projects the concatenated
    slopes onto the l1 ball, and backtracks toward the previous iterate until
    the likelihood does not get worse. The achieved NLL is reported in
    ``FitResult.nll`` so the optimization slack can be measured.
    """
    if not m > 0:
        raise ValueError("ball radius m must be positive")
    return _fit(data, k, 0.0, bounds, cfg, radius=m)


@dataclass(frozen=True)
class BallSelection:
    m_hat: float
    fit: FitResult
    grid: tuple
    criteria: tuple
    eta: float
    lam: float

    def to_dict(self) -> dict:
        return {
            "m_hat": self.m_hat,
            "lambda": self.lam,
            "eta": self.eta,
            "grid": list(self.grid),
            "criteria": list(self.criteria),
            "fit": self.fit.to_dict(),
        }


def selection_criterion(fit: FitResult, lam: float) -> float:
    return fit.nll + lam * fit.ball_radius


def select_ball(data: Dataset, k: int, m_grid, lam: float, eta: float, bounds: ParameterBounds,
                cfg: FitConfig = FitConfig(), fits=None) -> BallSelection:
    """Pick the l1 radius by penalized likelihood ``nll(m) + lam * m``.

    Returns the smallest radius whose criterion is within ``eta`` of the grid
    minimum. Precomputed ``fits`` (one per grid entry) may be supplied.
    """
    grid = [float(m) for m in m_grid]
    if not grid:
        raise ValueError("m_grid must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("m_grid must be strictly increasing")
    _check_lambda(lam)
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if fits is None:
        fits = [fit_ball_constrained(data, k, m, bounds, cfg) for m in grid]
    crit = [selection_criterion(f, lam) for f in fits]
    best = min(crit)
    idx = next(i for i, c in enumerate(crit) if c <= best + eta)
    return BallSelection(grid[idx], fits[idx], tuple(grid), tuple(crit), float(eta), float(lam))


def with_overrides(cfg: FitConfig, **kw) -> FitConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
