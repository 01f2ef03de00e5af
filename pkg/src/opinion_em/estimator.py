"""scikit-learn style front end for the online EM fit."""
import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_scalar, check_trace
from .em import FitConfig, complete_log_likelihood, fit
from .model import MacroParams, action_distribution
from .state import LatentState, opinion_trajectory


class OpinionDynamicsEM(TransformerMixin, BaseEstimator):
    """Infer latent opinions, action positions and interaction signs.

    ``fit`` takes a :class:`~opinion_em.trace.Trace` (or a trace directory)
    and estimates x0, w, sigma and one sign per interaction under fixed
    macro parameters. ``transform`` returns the opinion trajectory of the
    fitted trace and ``score`` its complete-data log-likelihood.

    Parameters
    ----------
    eps_plus, eps_minus : float
        Latitudes of acceptance and contrast, ``0 <= eps_plus < eps_minus <= 2``.
    mu_plus, mu_minus : float
        Influence speeds of positive and negative interactions.
    rho_g, rho_z : float
        Steepness of the interaction and action sigmoids.
    epochs, restarts : int
        Passes over the timesteps per restart; number of random restarts.
    lr_actions, lr_interactions : float
        Step sizes for the action-likelihood and interaction-likelihood gradients.
    inner_iterations : int
        Cap on E/M alternations per timestep.
    convergence_tol : float
        Stop a timestep once the M-step objective moves less than this.
    anchors : dict, optional
        Action ID -> fixed position in [-1, 1].
    sigma_prior : bool
        Add a Beta(8, 8) log-prior on each sigma.
    normalized_posterior : bool
        Use Bayes-normalized sign posteriors as M-step weights.
    random_state : int
        Base seed; restart ``r`` uses ``random_state + r``.
    n_jobs : int, optional
        Restarts run in parallel through joblib.

    Attributes
    ----------
    x0_, w_, sigma_ : ndarray
    signs_ : ndarray of {-1, +1}, aligned with the trace interactions
    trajectory_ : ndarray of shape (T + 1, n_actors)
    log_likelihood_ : float
    alpha_series_ : ndarray of shape (T,)
    restart_index_ : int
    fit_result_ : FitResult
    """

    def __init__(self, eps_plus=0.6, eps_minus=1.2, mu_plus=0.1, mu_minus=0.1, rho_g=8.0,
                 rho_z=16.0, epochs=2, restarts=4, lr_actions=1e-3, lr_interactions=1e-4,
                 inner_iterations=30, convergence_tol=1e-4, anchors=None, sigma_prior=False,
                 normalized_posterior=False, random_state=0, n_jobs=None):
        self.eps_plus = eps_plus
        self.eps_minus = eps_minus
        self.mu_plus = mu_plus
        self.mu_minus = mu_minus
        self.rho_g = rho_g
        self.rho_z = rho_z
        self.epochs = epochs
        self.restarts = restarts
        self.lr_actions = lr_actions
        self.lr_interactions = lr_interactions
        self.inner_iterations = inner_iterations
        self.convergence_tol = convergence_tol
        self.anchors = anchors
        self.sigma_prior = sigma_prior
        self.normalized_posterior = normalized_posterior
        self.random_state = random_state
        self.n_jobs = n_jobs

    @classmethod
    def from_params(cls, params, **kwargs):
        return cls(**vars(params), **kwargs)

    def _macro_params(self):
        return MacroParams(self.eps_plus, self.eps_minus, self.mu_plus, self.mu_minus,
                           self.rho_g, self.rho_z)

    def _fit_config(self):
        check_scalar(self.epochs, "epochs", numbers.Integral, min_val=1)
        check_scalar(self.restarts, "restarts", numbers.Integral, min_val=1)
        check_scalar(self.inner_iterations, "inner_iterations", numbers.Integral, min_val=1)
        check_scalar(self.lr_actions, "lr_actions", min_val=0, include_min=False)
        check_scalar(self.lr_interactions, "lr_interactions", min_val=0, include_min=False)
        check_scalar(self.convergence_tol, "convergence_tol", min_val=0)
        check_scalar(self.random_state, "random_state", numbers.Integral)
        return FitConfig(
            epochs=self.epochs, restarts=self.restarts, lr_actions=self.lr_actions,
            lr_interactions=self.lr_interactions, inner_iterations=self.inner_iterations,
            convergence_tol=self.convergence_tol, seed=self.random_state,
            anchors=dict(self.anchors or {}), sigma_prior_enabled=self.sigma_prior,
            normalized_posterior=self.normalized_posterior)

    def fit(self, X, y=None):
        trace = check_trace(X)
        params = self._macro_params()
        result = fit(trace, params, self._fit_config(), n_jobs=self.n_jobs)
        self.trace_ = trace
        self.params_ = params
        self.fit_result_ = result
        self.latent_ = result.latent
        self.x0_ = result.latent.x0
        self.w_ = result.latent.w
        self.sigma_ = result.latent.sigma
        self.signs_ = result.latent.signs
        self.trajectory_ = result.trajectory
        self.log_likelihood_ = result.log_likelihood
        self.alpha_series_ = result.alpha_series
        self.restart_index_ = result.restart_index
        return self

    def _latent_for(self, X):
        check_is_fitted(self, "latent_")
        trace = self.trace_ if X is None else check_trace(X)
        if trace is not self.trace_ and trace != self.trace_:
            raise ValueError("the fitted signs only cover the trace passed to fit")
        return trace

    def transform(self, X=None):
        """Opinion trajectory x_0 ... x_T of the fitted trace."""
        trace = self._latent_for(X)
        return opinion_trajectory(trace, self.latent_, self.params_)

    def score(self, X=None, y=None):
        """Complete-data log-likelihood of the fitted latent state."""
        trace = self._latent_for(X)
        return complete_log_likelihood(trace, self.latent_, self.params_)

    def action_probabilities(self, t):
        """n_actors x n_actions probabilities of each actor's actions at step ``t``."""
        check_is_fitted(self, "latent_")
        x_t = self.trajectory_[t]
        return np.vstack([action_distribution(x, self.w_, self.sigma_, self.params_) for x in x_t])

    def get_latent(self):
        check_is_fitted(self, "latent_")
        return LatentState(self.x0_, self.w_, self.sigma_, self.signs_)
