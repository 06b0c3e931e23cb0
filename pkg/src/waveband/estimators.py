"""Estimator-style wrappers: a simulator producing ``C`` and a recovery
estimator fitted on ``C``."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import DiscreteOperator, Grid
from .pipeline import run_from_connecting, simulate_connecting
from .potentials import channel_count, make_potential
from .validation import check_controls, check_operator_matrix, check_positive_int
from .wave_model import recovery_error


class WaveSimulator(BaseEstimator, TransformerMixin):
    """Forward map ``f -> u^f(., T)`` for a builtin or file potential.

    ``fit`` assembles ``W`` and ``C``; ``transform`` applies ``W`` to controls
    given as rows.
    """

    def __init__(self, potential="const:1", N=128, T=1.0, method="kernel"):
        self.potential = potential
        self.N = N
        self.T = T
        self.method = method

    def fit(self, X=None, y=None):
        N = check_positive_int(self.N, "N", 8)
        self.n_channels_ = channel_count(self.potential)
        self.grid_ = Grid.from_horizon(N, self.T, self.n_channels_)
        self.potential_ = make_potential(self.potential, self.grid_)
        self.W_, self.C_ = simulate_connecting(self.potential_, self.grid_, self.method)
        return self

    def transform(self, X):
        check_is_fitted(self, "W_")
        F = check_controls(X, self.grid_.N, self.grid_.n)
        return F @ self.W_.matrix.T

    def connecting_operator(self):
        check_is_fitted(self, "C_")
        return self.C_.matrix


class PotentialRecovery(BaseEstimator, TransformerMixin):
    """Recover ``q`` from a connecting operator.

    ``fit(C)`` runs factorization, the model operator and blockwise
    extraction. ``predict(tau)`` interpolates the recovered potential;
    ``transform(F)`` applies the model control operator.
    """

    def __init__(self, n=1, T=1.0, route="cholesky", margin=None, reject=True):
        self.n = n
        self.T = T
        self.route = route
        self.margin = margin
        self.reject = reject

    def fit(self, X, y=None):
        n = check_positive_int(self.n, "n")
        A = check_operator_matrix(X, n, hermitian=True)
        N = A.shape[0] // n
        self.grid_ = Grid.from_horizon(N, self.T, n)
        C = DiscreteOperator(A, self.grid_.h, n, "C")
        b = run_from_connecting(C, self.grid_, self.route, self.margin, reject=self.reject)
        self.bundle_ = b
        self.report_ = b.report["decomposability"]
        self.q_hat_ = b.q_hat
        return self

    def predict(self, X):
        """Recovered ``q(tau)`` at points ``X`` (clipped to the recovery window)."""
        check_is_fitted(self, "q_hat_")
        tau = np.clip(np.asarray(X, float), self.q_hat_.x[0], self.q_hat_.x[-1])
        return self.q_hat_.at(tau)

    def transform(self, X):
        check_is_fitted(self, "bundle_")
        F = check_controls(X, self.grid_.N, self.grid_.n)
        return F @ self.bundle_.Wt.matrix.T

    def score(self, X, y=None):
        """Negative interior off-diagonal mass of ``Q`` (higher is better)."""
        check_is_fitted(self, "report_")
        return -float(self.report_["offdiag_mass"])

    def error_against(self, potential):
        check_is_fitted(self, "q_hat_")
        return recovery_error(self.q_hat_, potential)
