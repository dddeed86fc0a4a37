"""scikit-learn compatible estimators wrapping the choice and trip models."""
from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._design import CompiledDataset
from .estimation import estimate
from .likelihood import JointLikelihood
from .tripgen import INTERCEPT, PoissonModel, fit_poisson_arrays
from .validation import check_choice_dataset, check_params, check_spec


class NestedLogitChoiceModel(TransformerMixin, BaseEstimator):
    """RP/SP nested logit of destination and mode choice.

    ``fit`` takes a :class:`~intercity.structures.ChoiceDataset` with recorded
    choices; ``transform`` returns the accessibility (expected maximum
    utility) of each observation, the input of the trip-generation model.

    Parameters
    ----------
    spec : ModelSpec
    init_params : ParameterVector, optional
        Starting values and fixed flags for ``fit``.
    ll0_convention : {"equal-shares", "constants-only"}
    max_iter : int
    gtol, ftol : float
    accessibility_context : {"SP", "RP"} or None
        Context in which ``transform`` evaluates utilities; ``None`` keeps
        each observation's own context.
    """

    def __init__(self, spec=None, init_params=None, ll0_convention="equal-shares",
                 max_iter=1000, gtol=1e-6, ftol=1e-10, accessibility_context="SP"):
        self.spec = spec
        self.init_params = init_params
        self.ll0_convention = ll0_convention
        self.max_iter = max_iter
        self.gtol = gtol
        self.ftol = ftol
        self.accessibility_context = accessibility_context

    @classmethod
    def from_params(cls, spec, params, **kwargs):
        """An already-fitted model with given coefficients (e.g. published values)."""
        model = cls(spec=spec, **kwargs)
        model.params_ = check_params(params, check_spec(spec))
        return model

    def fit(self, X, y=None):
        spec = check_spec(self.spec)
        check_choice_dataset(X, spec)
        self.result_ = estimate(spec, X, self.init_params, ll0_convention=self.ll0_convention,
                                max_iter=self.max_iter, gtol=self.gtol, ftol=self.ftol)
        self.params_ = self.result_.params
        self.std_errors_ = self.result_.std_errors
        return self

    def _compiled(self, X, context=None):
        check_is_fitted(self, "params_")
        check_choice_dataset(X, self.spec, require_choice=False)
        data = X
        if context is not None:
            from dataclasses import replace
            data = replace(X, observations=tuple(replace(o, context=context)
                                                 for o in X.observations))
        return CompiledDataset(self.spec, data, self.params_.names)

    def predict_proba(self, X):
        """Long-format probabilities: one row per available (observation, zone, mode)."""
        c = self._compiled(X)
        ev = c.evaluate(self.params_.values())
        pd_rows = np.exp(ev["logPd"])[c.row_nest]
        pm = np.exp(ev["logPm"])
        obs = [X.observations[i] for i in c.nest_obs[c.row_nest]]
        return pd.DataFrame({
            "obs_id": [o.obs_id for o in obs],
            "individual_id": [o.individual_id for o in obs],
            "context": [o.context for o in obs],
            "zone": [k[0] for k in c.row_keys],
            "mode": [k[1] for k in c.row_keys],
            "p_zone": pd_rows,
            "p_mode_given_zone": pm,
            "probability": pd_rows * pm,
        })

    def predict(self, X):
        """Most probable ``(zone, mode)`` per observation."""
        proba = self.predict_proba(X)
        best = proba.loc[proba.groupby(["individual_id", "obs_id"], sort=False)["probability"].idxmax()]
        return list(zip(best["zone"], best["mode"]))

    def transform(self, X):
        c = self._compiled(X, self.accessibility_context)
        return c.evaluate(self.params_.values())["access"].reshape(-1, 1)

    def score(self, X, y=None):
        """Weighted mean log-likelihood per observation."""
        check_is_fitted(self, "params_")
        check_choice_dataset(X, self.spec)
        f = JointLikelihood(self.spec, X, self.params_)
        value = f.value(self.params_.values(f.free_names)).total
        return value / float(np.sum(f.compiled.weights))


class PoissonTripRegressor(RegressorMixin, BaseEstimator):
    """Log-link Poisson regression of trip counts, fitted by Newton-Raphson.

    Attributes
    ----------
    coef_, intercept_ : fitted coefficients
    bse_ : standard errors (same order as ``feature_names_``, intercept first)
    model_ : PoissonModel with pseudo-R2 and chi-square
    """

    def __init__(self, fit_intercept=True, tol=1e-8, max_iter=100):
        self.fit_intercept = fit_intercept
        self.tol = tol
        self.max_iter = max_iter

    @staticmethod
    def _names(X):
        if isinstance(X, pd.DataFrame):
            return [str(c) for c in X.columns]
        return [f"x{i}" for i in range(np.shape(X)[1])]

    def fit(self, X, y, sample_weight=None):
        names = self._names(X)
        Xa, ya = check_X_y(X, y, dtype=float, y_numeric=True)
        if self.fit_intercept:
            Xa = np.column_stack([np.ones(len(Xa)), Xa])
            names = [INTERCEPT] + names
        self.model_ = fit_poisson_arrays(Xa, ya, names, weights=sample_weight,
                                         tol=self.tol, max_iter=self.max_iter)
        beta = np.array(list(self.model_.coefficients.values()))
        self.intercept_ = float(beta[0]) if self.fit_intercept else 0.0
        self.coef_ = beta[1:] if self.fit_intercept else beta
        self.bse_ = np.array(list(self.model_.std_errors.values()))
        self.feature_names_ = names
        self.n_features_in_ = Xa.shape[1] - int(self.fit_intercept)
        self.pseudo_r2_ = self.model_.pseudo_r2
        self.chi2_ = self.model_.chi2
        return self

    @classmethod
    def from_model(cls, model: PoissonModel):
        names = list(model.coefficients)
        est = cls(fit_intercept=INTERCEPT in names)
        est.model_ = model
        est.intercept_ = model.coefficients.get(INTERCEPT, 0.0)
        est.feature_names_ = names
        est.coef_ = np.array([model.coefficients[n] for n in names if n != INTERCEPT])
        est.n_features_in_ = len(est.coef_)
        return est

    def predict(self, X):
        check_is_fitted(self, "coef_")
        if isinstance(X, pd.DataFrame):
            cols = [n for n in self.feature_names_ if n != INTERCEPT]
            X = X[cols]
        Xa = check_array(X, dtype=float)
        return np.exp(self.intercept_ + Xa @ self.coef_)
