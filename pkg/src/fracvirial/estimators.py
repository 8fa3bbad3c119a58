"""scikit-learn style wrappers around the numerical kernels."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .evolve import fit_collapse
from .fracops import FieldOnGrid, Grid, frac_laplacian


class FractionalLaplacianTransformer(BaseEstimator, TransformerMixin):
    """Apply (-Delta)^s to a batch of periodic fields.

    X has shape (n_samples, M**dim) (flattened, C order) or
    (n_samples, M, ..., M). fit only records the grid.
    """

    def __init__(self, s=0.8, dim=1, half_length=16.0, points=256):
        self.s = s
        self.dim = dim
        self.half_length = half_length
        self.points = points

    def fit(self, X=None, y=None):
        self.grid_ = Grid(self.dim, self.half_length, self.points)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = np.asarray(X)
        shape = self.grid_.shape
        batch = X.reshape((X.shape[0],) + shape)
        out = np.stack([frac_laplacian(FieldOnGrid(self.grid_, row), self.s).values for row in batch])
        if not np.iscomplexobj(X):
            out = out.real
        return out.reshape(X.shape)


class CollapseLawRegressor(BaseEstimator, RegressorMixin):
    """Fit M_R(t) = -C |t - t*|^exponent with the exponent fixed (default 1 - 2s)."""

    def __init__(self, s=0.8, exponent=None, window="final-decade"):
        self.s = s
        self.exponent = exponent
        self.window = window

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).ravel()
        res = fit_collapse(t, np.asarray(y, dtype=float), self.s, self.exponent, self.window)
        self.C_ = res["C"]
        self.t_star_ = res["t_star"]
        self.exponent_ = res["exponent"]
        self.residual_ = res["residual"]
        self.n_fit_ = res["n"]
        return self

    def predict(self, X):
        check_is_fitted(self, "C_")
        t = np.asarray(X, dtype=float).ravel()
        return -self.C_ * np.abs(t - self.t_star_) ** self.exponent_
