"""Poisson trip-generation model: annual trip counts on individual covariates
and accessibility."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .exceptions import ConfigurationError, DomainError, NumericError

INTERCEPT = "intercept"


@dataclass(frozen=True)
class TripGenRecord:
    individual_id: str
    trip_count: int
    covariates: dict
    weight: float = 1.0


@dataclass
class PoissonModel:
    coefficients: dict
    std_errors: dict = field(default_factory=dict)
    llf: float = float("nan")
    llnull: float = float("nan")
    pseudo_r2: float = float("nan")
    chi2: float = float("nan")
    n_obs: int = 0
    converged: bool = True
    n_iter: int = 0

    @property
    def features(self):
        return list(self.coefficients)

    def to_dict(self):
        return {"coefficients": dict(self.coefficients),
                "std_errors": dict(self.std_errors),
                "llf": self.llf, "llnull": self.llnull, "pseudo_r2": self.pseudo_r2,
                "chi2": self.chi2, "n_obs": self.n_obs, "converged": self.converged,
                "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d):
        def num(key):
            v = d.get(key)
            return float("nan") if v is None else float(v)

        return cls(coefficients={k: float(v) for k, v in d["coefficients"].items()},
                   std_errors={k: float("nan") if v is None else float(v)
                               for k, v in d.get("std_errors", {}).items()},
                   llf=num("llf"), llnull=num("llnull"), pseudo_r2=num("pseudo_r2"),
                   chi2=num("chi2"), n_obs=int(d.get("n_obs", 0)),
                   converged=bool(d.get("converged", True)), n_iter=int(d.get("n_iter", 0)))


def collinear_columns(X, names, tol=1e-10):
    """Names of columns involved in an exact linear dependency (empty if full rank)."""
    X = np.asarray(X, dtype=float)
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    _, sv, vt = np.linalg.svd(X / scale, full_matrices=True)
    sv = np.concatenate([sv, np.zeros(X.shape[1] - len(sv))])
    null = vt[sv <= tol * max(sv.max(), 1.0)]
    if len(null) == 0:
        return []
    involved = np.any(np.abs(null) > 1e-8, axis=0)
    return [n for n, flag in zip(names, involved) if flag]


def poisson_loglik(y, mu, w):
    return float(np.sum(w * (y * np.log(mu) - mu - gammaln(y + 1.0))))


def fit_poisson_arrays(X, y, names, weights=None, tol=1e-8, max_iter=100):
    """Newton-Raphson maximum likelihood for a log-link Poisson regression."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if n == 0:
        raise DomainError("no records")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise DomainError("trip counts must be finite and nonnegative")
    if not np.all(np.isfinite(X)):
        raise DomainError("covariates must be finite")
    if n < k:
        raise DomainError(f"{n} records cannot identify {k} coefficients")
    bad = collinear_columns(X, names)
    if bad:
        raise DomainError(f"design matrix is rank deficient; collinear columns: {bad}")
    mean = float(np.sum(w * y) / np.sum(w))
    if mean <= 0:
        raise DomainError("all trip counts are zero; the Poisson MLE does not exist")

    beta = np.zeros(k)
    const_cols = np.flatnonzero(np.all(X == 1.0, axis=0))
    if len(const_cols):
        beta[const_cols[0]] = math.log(mean)
    mu = np.exp(X @ beta)
    ll = poisson_loglik(y, mu, w)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        score = X.T @ (w * (y - mu))
        if np.linalg.norm(score) < tol:
            converged = True
            it -= 1
            break
        info = X.T @ (X * (w * mu)[:, None])
        step = np.linalg.solve(info, score)
        t = 1.0
        while True:
            cand = beta + t * step
            with np.errstate(over="ignore"):
                mu_c = np.exp(X @ cand)
            ll_c = poisson_loglik(y, mu_c, w) if np.all(np.isfinite(mu_c)) else -np.inf
            if ll_c >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, mu, ll = cand, mu_c, ll_c
        if not np.isfinite(ll):
            raise NumericError("Poisson log-likelihood diverged")
    else:
        converged = np.linalg.norm(X.T @ (w * (y - mu))) < tol
    info = X.T @ (X * (w * mu)[:, None])
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    llnull = poisson_loglik(y, np.full(n, mean), w)
    return PoissonModel(coefficients=dict(zip(names, map(float, beta))),
                        std_errors=dict(zip(names, map(float, se))),
                        llf=ll, llnull=llnull,
                        pseudo_r2=1.0 - ll / llnull if llnull != 0 else float("nan"),
                        chi2=2.0 * (ll - llnull), n_obs=n, converged=bool(converged),
                        n_iter=it)


def design_from_records(records, features=None, intercept=True):
    records = list(records)
    if features is None:
        features = []
        for r in records:
            for key in r.covariates:
                if key not in features and key != INTERCEPT:
                    features.append(key)
    features = [f for f in features if f != INTERCEPT]
    names = ([INTERCEPT] if intercept else []) + list(features)
    X = np.empty((len(records), len(names)))
    missing = []
    for i, r in enumerate(records):
        row = [1.0] if intercept else []
        for f in features:
            if f not in r.covariates:
                missing.append(f"record {r.individual_id}: missing covariate {f!r}")
                row.append(np.nan)
            else:
                row.append(float(r.covariates[f]))
        X[i] = row
    if missing:
        raise ConfigurationError("; ".join(missing[:20]))
    return X, names


def fit_poisson(records, features=None, intercept=True):
    """Fit trip counts of ``records`` on their covariates (plus an intercept)."""
    records = list(records)
    X, names = design_from_records(records, features, intercept)
    y = np.array([r.trip_count for r in records], dtype=float)
    w = np.array([r.weight for r in records], dtype=float)
    return fit_poisson_arrays(X, y, names, weights=w)


def predict_rate(model, covariates):
    """``exp`` of the linear index; a missing ``intercept`` covariate counts as 1."""
    eta = 0.0
    for name, coef in model.coefficients.items():
        if name == INTERCEPT and name not in covariates:
            eta += coef
            continue
        if name not in covariates:
            raise ConfigurationError(f"covariate {name!r} missing for trip-rate prediction")
        eta += coef * float(covariates[name])
    return math.exp(eta)


def shift_intercept(model, current_mean, target_mean):
    """Copy of ``model`` whose intercept moves every predicted rate by the
    factor ``target_mean / current_mean``."""
    if current_mean <= 0 or target_mean <= 0:
        raise DomainError("mean rates must be positive")
    coefs = dict(model.coefficients)
    coefs[INTERCEPT] = coefs.get(INTERCEPT, 0.0) + math.log(target_mean / current_mean)
    return PoissonModel(coefficients=coefs, std_errors=dict(model.std_errors), llf=model.llf,
                        llnull=model.llnull, pseudo_r2=model.pseudo_r2, chi2=model.chi2,
                        n_obs=model.n_obs, converged=model.converged, n_iter=model.n_iter)


def poisson_pmf(k, rate):
    return math.exp(-rate + k * math.log(rate) - math.lgamma(k + 1)) if rate > 0 else float(k == 0)


def one_hot(values, levels, base, prefix):
    """Dummy columns for ``levels`` other than ``base``.

    >>> one_hot(["gov", "business"], ["business", "gov"], "business", "occ")
    {'occ_gov': [1.0, 0.0]}
    """
    if base not in levels:
        raise ConfigurationError(f"base level {base!r} not among {levels}")
    unknown = sorted(set(values) - set(levels))
    if unknown:
        raise ConfigurationError(f"unknown levels {unknown} for {prefix!r}")
    return {f"{prefix}_{lvl}": [1.0 if v == lvl else 0.0 for v in values]
            for lvl in levels if lvl != base}
