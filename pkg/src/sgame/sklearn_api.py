"""scikit-learn compatible front end for the penalized SGaME estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import model
from .estimator import FitConfig, fit_ball_constrained, fit_lasso
from .model import Dataset, ParameterBounds


def check_unit_cube(X):
    """Validate a design matrix and require every entry to lie in [0, 1]."""
    X = check_array(X, dtype=np.float64)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError("X must have all entries in [0, 1]; rescale covariates (e.g. MinMaxScaler) first")
    return X


class SGaMERegressor(RegressorMixin, BaseEstimator):
    """Soft-max gated mixture of Gaussian experts with an l1 penalty.

    Parameters
    ----------
    n_components : int
        Number of experts K.
    alpha : float
        Lasso penalty on gating and expert slopes. Ignored when
        ``ball_radius`` is set.
    ball_radius : float or None
        If given, maximize the likelihood over slopes with l1 norm at most
        this radius instead of penalizing.
    a_gamma, a_beta, a_sigma_min, a_sigma_max : float
        Caps of the bounded parameter class (gating scores, expert means,
        precision eigenvalues).
    max_iter, tol, inner_iter, n_restarts, init, random_state
        Solver controls, see :class:`sgame.estimator.FitConfig`.

    Attributes
    ----------
    params_ : SgameParams
    fit_result_ : FitResult
    coef_ : ndarray of shape (n_components, n_targets, n_features)
        Expert slopes.
    gate_coef_ : ndarray of shape (n_components, n_features)
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, n_components=2, alpha=0.0, ball_radius=None, a_gamma=5.0, a_beta=10.0,
                 a_sigma_min=1e-2, a_sigma_max=1e2, max_iter=500, tol=1e-7, inner_iter=25,
                 n_restarts=5, init="kmeans", random_state=None):
        self.n_components = n_components
        self.alpha = alpha
        self.ball_radius = ball_radius
        self.a_gamma = a_gamma
        self.a_beta = a_beta
        self.a_sigma_min = a_sigma_min
        self.a_sigma_max = a_sigma_max
        self.max_iter = max_iter
        self.tol = tol
        self.inner_iter = inner_iter
        self.n_restarts = n_restarts
        self.init = init
        self.random_state = random_state

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.multi_output = True
        return tags

    def _more_tags(self):
        # scikit-learn < 1.6
        return {"multioutput": True}

    def _bounds(self):
        return ParameterBounds(self.a_gamma, self.a_beta, self.a_sigma_min, self.a_sigma_max, self.n_components)

    def _config(self):
        seed = self.random_state
        if seed is None or isinstance(seed, np.random.RandomState):
            seed = np.random.mtrand._rand.randint(2**31 - 1) if seed is None else seed.randint(2**31 - 1)
        return FitConfig(
            max_em_iters=self.max_iter,
            em_tol=self.tol,
            inner_iters=self.inner_iter,
            restarts=self.n_restarts,
            seed=int(seed),
            init_strategy=self.init,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
        X = check_unit_cube(X)
        if X.shape[0] < self.n_components:
            raise ValueError(f"n_samples={X.shape[0]} is smaller than n_components={self.n_components}")
        self._y_1d = y.ndim == 1
        data = Dataset(X, y if y.ndim == 2 else y[:, None])
        if self.ball_radius is None:
            res = fit_lasso(data, self.n_components, self.alpha, self._bounds(), self._config())
        else:
            res = fit_ball_constrained(data, self.n_components, self.ball_radius, self._bounds(), self._config())
        self.fit_result_ = res
        self.params_ = res.params
        self.coef_ = np.array(res.params.experts.slopes)
        self.intercept_ = np.array(res.params.experts.intercepts)
        self.gate_coef_ = np.array(res.params.gating.slopes)
        self.gate_intercept_ = np.array(res.params.gating.intercepts)
        self.covariances_ = np.array(res.params.experts.covariances)
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.n_features_in_ = X.shape[1]
        return self

    def _check_X(self, X):
        check_is_fitted(self, "params_")
        X = check_unit_cube(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        """Conditional mean ``E[Y | x]`` of the fitted mixture."""
        X = self._check_X(X)
        mean = model.conditional_mean(self.params_, X)
        return mean[:, 0] if self._y_1d else mean

    def predict_gates(self, X):
        return model.softmax_gates(self.params_.gating, self._check_X(X))

    def predict_responsibilities(self, X, y):
        """Posterior expert probabilities given both ``x`` and ``y``."""
        from .estimator import e_step

        X = self._check_X(X)
        y = np.asarray(y, dtype=float)
        return e_step(self.params_, Dataset(X, y if y.ndim == 2 else y[:, None]))

    def conditional_log_density(self, X, y):
        """Conditional log-density ``ln s(y | x)`` per row."""
        X = self._check_X(X)
        y = np.asarray(y, dtype=float)
        return model.log_density(self.params_, X, y if y.ndim == 2 else y[:, None])

    def sample_y(self, X, random_state=None):
        X = self._check_X(X)
        out = model.sample(self.params_, X, np.random.default_rng(random_state))
        return out[:, 0] if self._y_1d else out
