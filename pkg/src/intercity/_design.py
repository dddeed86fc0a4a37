"""Array form of a (spec, dataset) pair for fast likelihood evaluation.

Rows are available ``(observation, zone, mode)`` triples grouped
contiguously by nest (``observation, zone``), and nests are grouped
contiguously by observation, so segment reductions use ``reduceat``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .exceptions import ConfigurationError, DomainError, NumericError

PROB_FLOOR = 1e-300


def term_value(term, obs, zone, mode, zones):
    """Product of the term's factors for one alternative (1.0 for a constant)."""
    value = 1.0
    for source, name in term.factors:
        try:
            if source == "los":
                value *= obs.los[(zone, mode)][name]
            elif source == "cov":
                value *= obs.covariates[name]
            else:
                value *= zones[zone].attributes[name]
        except KeyError:
            where = {"los": f"level-of-service of ({zone}, {mode})",
                     "cov": "covariates",
                     "zone": f"attributes of zone {zone}"}[source]
            raise ConfigurationError(
                f"term {term.coef!r}: {source}.{name} missing from {where} "
                f"(observation {obs.obs_id})") from None
    return float(value)


def segment_logsumexp(values, starts):
    """Max-shifted log-sum-exp over contiguous segments beginning at ``starts``."""
    shift = np.maximum.reduceat(values, starts)
    lengths = np.diff(np.append(starts, len(values)))
    rep = np.repeat(shift, lengths)
    with np.errstate(invalid="ignore", over="ignore"):
        total = np.add.reduceat(np.exp(values - rep), starts)
    return shift + np.log(total)


class CompiledDataset:

    def __init__(self, spec, dataset, names):
        self.spec = spec
        self.names = list(names)
        index = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in spec.coefficient_names() if n not in index]
        if missing:
            raise ConfigurationError(f"coefficients referenced but undeclared: {missing}")
        P = len(self.names)
        zones = dataset.zones
        scale_ctx = spec.scale.context if spec.scale is not None else None
        self.mu_index = index[spec.scale.coef] if spec.scale is not None else None
        self.theta_fixed = spec.theta.fixed

        obs_list = list(dataset.observations)
        n_rows = sum(len(o.los) for o in obs_list)
        n_nests = sum(len(o.zones()) for o in obs_list)
        self.Xs = np.zeros((n_rows, P))
        self.Xu = np.zeros((n_rows, P))
        self.Xd = np.zeros((n_nests, P))
        self.Kt = np.zeros((n_nests, P))
        self.row_nest = np.empty(n_rows, dtype=np.int64)
        self.row_scaled = np.zeros(n_rows, dtype=bool)
        self.nest_obs = np.empty(n_nests, dtype=np.int64)
        self.nest_start = np.empty(n_nests, dtype=np.int64)
        self.obs_start = np.empty(len(obs_list), dtype=np.int64)
        self.chosen_row = np.full(len(obs_list), -1, dtype=np.int64)
        self.chosen_nest = np.full(len(obs_list), -1, dtype=np.int64)
        self.weights = np.array([o.weight for o in obs_list], dtype=float)
        self.is_rp = np.array([o.context == "RP" for o in obs_list])
        self.obs_ids = [o.obs_id for o in obs_list]
        self.row_keys = []
        self.nest_zone = []

        mode_cache = {}
        dest_cache = {}
        r = 0
        k = 0
        for n, obs in enumerate(obs_list):
            if not obs.los:
                raise DomainError(f"observation {obs.obs_id} has no available alternatives")
            self.obs_start[n] = k
            ctx = obs.context
            for zone in obs.zones():
                self.nest_obs[k] = n
                self.nest_start[k] = r
                self.nest_zone.append(zone)
                key = (ctx, zone)
                if key not in dest_cache:
                    dest_cache[key] = (
                        [t for t in spec.destination_terms if t.applies(ctx, zone)],
                        [t for t in spec.theta.terms if t.applies(ctx, zone)])
                dterms, tterms = dest_cache[key]
                for t in dterms:
                    self.Xd[k, index[t.coef]] += term_value(t, obs, zone, None, zones)
                for t in tterms:
                    self.Kt[k, index[t.coef]] += term_value(t, obs, zone, None, zones)
                for mode in obs.modes_at(zone):
                    mkey = (ctx, zone, mode)
                    if mkey not in mode_cache:
                        mode_cache[mkey] = [t for t in spec.mode_terms
                                            if t.applies(ctx, zone, mode)]
                    for t in mode_cache[mkey]:
                        scaled = t.scaled and ctx == scale_ctx
                        target = self.Xs if scaled else self.Xu
                        target[r, index[t.coef]] += term_value(t, obs, zone, mode, zones)
                    self.row_nest[r] = k
                    self.row_scaled[r] = ctx == scale_ctx
                    self.row_keys.append((zone, mode))
                    if obs.chosen == (zone, mode):
                        self.chosen_row[n] = r
                        self.chosen_nest[n] = k
                    r += 1
                k += 1
            if obs.chosen is not None and self.chosen_row[n] < 0:
                raise DomainError(f"observation {obs.obs_id}: chosen alternative "
                                  f"{obs.chosen} is not available")
        self.n_obs = len(obs_list)
        self.n_nests = n_nests
        self.n_rows = n_rows
        self.nest_len = np.diff(np.append(self.nest_start, n_rows))
        self.obs_len = np.diff(np.append(self.obs_start, n_nests))

    # -- evaluation ---------------------------------------------------------

    def _mu_rows(self, beta):
        if self.mu_index is None:
            return np.ones(self.n_rows)
        return np.where(self.row_scaled, beta[self.mu_index], 1.0)

    def evaluate(self, beta):
        """Utilities, logsums and log-probabilities at full coefficient vector ``beta``."""
        beta = np.asarray(beta, dtype=float)
        mu_rows = self._mu_rows(beta)
        with np.errstate(over="ignore", invalid="ignore"):
            xs_b = self.Xs @ beta
            V = self.Xu @ beta + mu_rows * xs_b
        if self.theta_fixed is not None:
            theta = np.full(self.n_nests, self.theta_fixed)
        else:
            theta = expit(self.Kt @ beta)
        theta_rows = theta[self.row_nest]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            s = V / theta_rows
        if not np.all(np.isfinite(s)):
            bad = int(np.flatnonzero(~np.isfinite(s))[0])
            n = self.nest_obs[self.row_nest[bad]]
            raise NumericError(f"non-finite scaled utility for {self.row_keys[bad]} "
                               f"in observation {self.obs_ids[n]}")
        gamma = segment_logsumexp(s, self.nest_start)
        Vd = self.Xd @ beta + theta * gamma
        if not np.all(np.isfinite(Vd)):
            bad = int(np.flatnonzero(~np.isfinite(Vd))[0])
            raise NumericError(f"non-finite destination utility for zone "
                               f"{self.nest_zone[bad]} in observation "
                               f"{self.obs_ids[self.nest_obs[bad]]}")
        log_denom = segment_logsumexp(Vd, self.obs_start)
        logPd = Vd - np.repeat(log_denom, self.obs_len)
        logPm = s - np.repeat(gamma, self.nest_len)
        return {"V": V, "xs_b": xs_b, "mu_rows": mu_rows, "theta": theta, "s": s,
                "gamma": gamma, "Vd": Vd, "logPd": logPd, "logPm": logPm,
                "access": log_denom}

    def joint_probabilities(self, beta):
        ev = self.evaluate(beta)
        p = np.exp(ev["logPd"][self.row_nest] + ev["logPm"])
        p[p < PROB_FLOOR] = 0.0
        return p

    def chosen_loglik(self, ev):
        if np.any(self.chosen_row < 0):
            n = int(np.flatnonzero(self.chosen_row < 0)[0])
            raise DomainError(f"observation {self.obs_ids[n]} has no recorded choice")
        ll = ev["logPd"][self.chosen_nest] + ev["logPm"][self.chosen_row]
        if not np.all(np.isfinite(ll)):
            bad = [self.obs_ids[i] for i in np.flatnonzero(~np.isfinite(ll))]
            raise NumericError(f"chosen alternative has zero probability in observations {bad}")
        return ll

    def scores(self, beta, ev=None):
        """Per-observation gradient of the log-likelihood, shape (n_obs, P)."""
        beta = np.asarray(beta, dtype=float)
        if ev is None:
            ev = self.evaluate(beta)
        theta = ev["theta"]
        theta_rows = theta[self.row_nest]
        dV = self.Xu + ev["mu_rows"][:, None] * self.Xs
        if self.mu_index is not None:
            dV[:, self.mu_index] += np.where(self.row_scaled, ev["xs_b"], 0.0)
        if self.theta_fixed is not None:
            dtheta = np.zeros_like(self.Kt)
        else:
            dtheta = (theta * (1.0 - theta))[:, None] * self.Kt
        ds = dV / theta_rows[:, None] - (ev["V"] / theta_rows ** 2)[:, None] * dtheta[self.row_nest]
        Pm = np.exp(ev["logPm"])
        dgamma = np.add.reduceat(Pm[:, None] * ds, self.nest_start)
        dVd = self.Xd + ev["gamma"][:, None] * dtheta + theta[:, None] * dgamma
        Pd = np.exp(ev["logPd"])
        expected = np.add.reduceat(Pd[:, None] * dVd, self.obs_start)
        cn = self.chosen_nest
        return ds[self.chosen_row] - dgamma[cn] + dVd[cn] - expected
