"""Joint RP + SP log-likelihood of the nested destination-and-mode model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._design import CompiledDataset
from .exceptions import NumericError


@dataclass
class LikelihoodValue:
    total: float
    per_context: dict
    per_observation: np.ndarray | None = field(default=None, repr=False)


class JointLikelihood:
    """Log-likelihood and score of one dataset as functions of the free parameters.

    Compiles the dataset once; ``params`` supplies the names, the fixed
    values and the free/fixed split.
    """

    def __init__(self, spec, data, params):
        self.spec = spec
        self.params = params
        self.free_names = params.free_names
        self.compiled = CompiledDataset(spec, data, params.names)
        all_names = params.names
        self._free_idx = np.array([all_names.index(n) for n in self.free_names], dtype=int)
        self._base = params.values()

    def full_vector(self, x):
        beta = self._base.copy()
        beta[self._free_idx] = x
        return beta

    def value(self, x, per_observation=False):
        c = self.compiled
        ll = c.chosen_loglik(c.evaluate(self.full_vector(x))) * c.weights
        # fixed-order sums keep results bit-stable
        rp = float(np.sum(ll[c.is_rp]))
        sp = float(np.sum(ll[~c.is_rp]))
        return LikelihoodValue(total=rp + sp, per_context={"RP": rp, "SP": sp},
                               per_observation=ll if per_observation else None)

    def __call__(self, x):
        return self.value(x).total

    def scores(self, x):
        """Weighted per-observation scores over the free parameters."""
        c = self.compiled
        s = c.scores(self.full_vector(x))[:, self._free_idx]
        return s * c.weights[:, None]

    def gradient(self, x):
        g = self.scores(x).sum(axis=0)
        bad = ~np.isfinite(g)
        if bad.any():
            names = [self.free_names[i] for i in np.flatnonzero(bad)]
            raise NumericError(f"non-finite gradient for parameters {names}")
        return g

    def numeric_gradient(self, x, rel_step=1e-6):
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        for i in range(len(x)):
            h = rel_step * max(1.0, abs(x[i]))
            up, dn = x.copy(), x.copy()
            up[i] += h
            dn[i] -= h
            g[i] = (self(up) - self(dn)) / (2 * h)
        bad = ~np.isfinite(g)
        if bad.any():
            names = [self.free_names[i] for i in np.flatnonzero(bad)]
            raise NumericError(f"non-finite gradient for parameters {names}")
        return g


def log_likelihood(spec, params, data, per_observation=False):
    """Weighted ``ln L_RP + ln L_SP`` of the recorded choices."""
    f = JointLikelihood(spec, data, params)
    return f.value(params.values(f.free_names), per_observation=per_observation)


def gradient(spec, params, data, method="analytic"):
    """Gradient over ``params.free_names``; ``method`` is ``"analytic"`` or ``"numeric"``."""
    f = JointLikelihood(spec, data, params)
    x = params.values(f.free_names)
    if method == "analytic":
        return f.gradient(x)
    if method == "numeric":
        return f.numeric_gradient(x)
    raise ValueError(f"unknown gradient method {method!r}")


def equal_shares_null(data):
    """Log-likelihood with every destination and every mode within a zone
    equally likely."""
    total = 0.0
    for obs in data.observations:
        z, _ = obs.chosen
        total += obs.weight * (-np.log(len(obs.zones())) - np.log(len(obs.modes_at(z))))
    return float(total)
