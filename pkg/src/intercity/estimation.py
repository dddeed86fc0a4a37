"""Maximum likelihood estimation, fit statistics and values of time."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .exceptions import DomainError, NumericError, ValidationError
from .likelihood import JointLikelihood, equal_shares_null
from .structures import ParameterVector, ThetaSpec

logger = logging.getLogger(__name__)

LL0_CONVENTIONS = ("equal-shares", "constants-only")


@dataclass
class EstimationResult:
    params: ParameterVector
    std_errors: dict
    ll0: float
    ll1: float
    rho: float
    rho_adjusted: float
    n_free_params: int
    n_observations: int
    converged: bool
    iterations: int
    vot: dict = field(default_factory=dict)
    std_errors_available: bool = True
    std_error_method: str = "hessian"
    ll0_convention: str = "equal-shares"
    gradient_norm: float = float("nan")
    message: str = ""

    def t_ratio(self, name):
        se = self.std_errors.get(name, float("nan"))
        return self.params[name] / se if se and np.isfinite(se) else float("nan")


def fit_statistics(ll0, ll1, n_free_params):
    """McFadden rho-squared and its adjusted version.

    >>> [round(v, 4) for v in fit_statistics(-4043.026, -2826.928, 0)]
    [0.3008, 0.3008]
    """
    if ll0 == 0:
        raise DomainError("ll0 must be nonzero")
    rho = 1.0 - ll1 / ll0
    rho_adj = 1.0 - (ll1 - n_free_params) / ll0
    return rho, rho_adj


def value_of_time(params, time_coef, cost_coef):
    """Value of time in VND per hour from a time coefficient (per minute) and a
    cost coefficient (per million VND)."""
    cost = params[cost_coef]
    if cost == 0:
        raise DomainError(f"cost coefficient {cost_coef!r} is zero")
    return params[time_coef] / cost * 60.0 * 1e6


def significance_stars(t):
    a = abs(t)
    if not np.isfinite(a):
        return ""
    if a >= 1.96:
        return "**"
    if a >= 1.645:
        return "*"
    return ""


def numerical_hessian(grad, x, rel_step=1e-5):
    """Central differences of an analytic gradient, symmetrised."""
    x = np.asarray(x, dtype=float)
    k = len(x)
    H = np.empty((k, k))
    for i in range(k):
        h = rel_step * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        H[:, i] = (grad(up) - grad(dn)) / (2 * h)
    return 0.5 * (H + H.T)


def _invert_information(info):
    if not np.all(np.isfinite(info)):
        return None
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return None
    if np.linalg.cond(info) > 1e14:
        return None
    return np.linalg.inv(info)


def _newton_polish(f, x, ll, grad, H, max_steps=5):
    """Newton steps from the quasi-Newton optimum while the Hessian is negative
    definite and the log-likelihood improves."""
    for _ in range(max_steps):
        if _invert_information(-H) is None or np.linalg.norm(grad) < 1e-8:
            break
        step = np.linalg.solve(-H, grad)
        try:
            ll_new = f(x + step)
        except NumericError:
            break
        if not ll_new >= ll:
            break
        x, ll = x + step, ll_new
        grad = f.gradient(x)
        H = numerical_hessian(f.gradient, x)
    return x, ll, grad, H


def constants_only_spec(spec):
    """The model specification restricted to its alternative-specific constants, theta = 1 and
    no scale parameter."""
    return replace(spec,
                   destination_terms=tuple(t for t in spec.destination_terms if t.is_constant),
                   mode_terms=tuple(t for t in spec.mode_terms if t.is_constant),
                   theta=ThetaSpec(fixed=1.0), scale=None, vot=())


def null_log_likelihood(spec, data, convention="equal-shares", max_iter=1000):
    if convention == "equal-shares":
        return equal_shares_null(data)
    if convention == "constants-only":
        restricted = constants_only_spec(spec)
        names = restricted.coefficient_names()
        if not names:
            return equal_shares_null(data)
        init = ParameterVector.from_values({n: 0.0 for n in names})
        return estimate(restricted, data, init, compute_std_errors=False,
                        max_iter=max_iter).ll1
    raise ValueError(f"ll0 convention must be one of {LL0_CONVENTIONS}, got {convention!r}")


def _check_data(data):
    msgs = [f"observation {o.obs_id} has no recorded choice"
            for o in data.observations if o.chosen is None]
    msgs += [f"observation {o.obs_id}: chosen {o.chosen} not available"
             for o in data.observations if o.chosen is not None and o.chosen not in o.los]
    if not data.observations:
        msgs.append("no observations")
    if msgs:
        raise ValidationError(msgs)


def estimate(spec, data, init=None, ll0_convention="equal-shares", max_iter=1000,
             gtol=1e-6, ftol=1e-10, compute_std_errors=True):
    """Maximise the joint RP + SP log-likelihood.

    Parameters
    ----------
    spec : ModelSpec
    data : ChoiceDataset
        Every observation must carry a recorded choice.
    init : ParameterVector, optional
        Starting values and fixed flags. Defaults to
        :meth:`ParameterVector.defaults`.
    ll0_convention : {"equal-shares", "constants-only"}
    max_iter : int
    gtol, ftol : float
        Stop when the largest free-gradient component falls below ``gtol`` or
        the relative log-likelihood change falls below ``ftol``.
    compute_std_errors : bool

    Returns
    -------
    EstimationResult
    """
    spec.validate()
    _check_data(data)
    if init is None:
        init = ParameterVector.defaults(spec)
    missing = init.check_against(spec)
    if missing:
        raise ValidationError(missing)
    f = JointLikelihood(spec, data, init)
    x0 = init.values(f.free_names)
    try:
        ll_start = f(x0)
    except NumericError as exc:
        raise NumericError(f"log-likelihood at the starting values is not finite: {exc}") from exc
    if not np.isfinite(ll_start):
        raise NumericError(f"log-likelihood at the starting values is {ll_start}")

    def objective(x):
        try:
            return -f(x), -f.gradient(x)
        except NumericError:
            return np.inf, np.zeros_like(x)

    if len(x0):
        res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol,
                                "maxcor": 30, "maxls": 50})
        x_hat, converged, iterations, message = res.x, bool(res.success), int(res.nit), str(res.message)
    else:
        x_hat, converged, iterations, message = x0, True, 0, "no free parameters"
    params = init.with_free_values(x_hat)
    ll1 = f(x_hat)
    grad = f.gradient(x_hat) if len(x0) else np.zeros(0)
    logger.info("estimation finished: ll=%.6f iterations=%d converged=%s", ll1, iterations, converged)

    std_errors = {n: float("nan") for n in f.free_names}
    available = False
    method = "none"
    if compute_std_errors and len(x0):
        H = numerical_hessian(f.gradient, x_hat)
        x_hat, ll1, grad, H = _newton_polish(f, x_hat, ll1, grad, H)
        params = init.with_free_values(x_hat)
        cov = _invert_information(-H)
        method = "hessian"
        if cov is None:
            S = f.scores(x_hat)
            w = f.compiled.weights
            cov = _invert_information(S.T @ (S / w[:, None]))
            method = "bhhh"
        if cov is not None:
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
            std_errors = dict(zip(f.free_names, map(float, se)))
            available = True
        else:
            method = "unavailable"

    ll0 = null_log_likelihood(spec, data, ll0_convention)
    k = len(f.free_names)
    rho, rho_adj = fit_statistics(ll0, ll1, k)
    vot = {}
    for v in spec.vot:
        try:
            vot[v.label] = value_of_time(params, v.time, v.cost)
        except DomainError:
            vot[v.label] = float("nan")
    return EstimationResult(
        params=params, std_errors=std_errors, ll0=ll0, ll1=ll1, rho=rho,
        rho_adjusted=rho_adj, n_free_params=k, n_observations=len(data.observations),
        converged=converged, iterations=iterations, vot=vot,
        std_errors_available=available, std_error_method=method,
        ll0_convention=ll0_convention,
        gradient_norm=float(np.linalg.norm(grad)) if len(grad) else 0.0,
        message=message)


def _context_tag(spec, name):
    if spec.scale is not None and spec.scale.coef == name:
        return spec.scale.context
    contexts = set()
    for t in list(spec.destination_terms) + list(spec.mode_terms) + list(spec.theta.terms):
        if t.coef == name:
            contexts |= set(t.contexts)
    if contexts == {"RP", "SP"}:
        return "All"
    return "/".join(sorted(contexts))


def format_report(result, spec=None):
    """Plain-text coefficient table with fit statistics and values of time."""
    lines = []
    width = max([len(n) for n in result.params.names] + [24])
    lines.append(f"{'Parameter':<{width}}  {'Ctx':>5}  {'Estimate':>12}  {'Std.err':>10}  {'t':>8}")
    for name in result.params.names:
        value = result.params[name]
        tag = _context_tag(spec, name) if spec is not None else ""
        if result.params.is_fixed(name):
            lines.append(f"{name:<{width}}  {tag:>5}  {value:>12.6g}  {'(fixed)':>10}")
            continue
        se = result.std_errors.get(name, float("nan"))
        t = result.t_ratio(name)
        lines.append(f"{name:<{width}}  {tag:>5}  {value:>12.6g}  {se:>10.4g}  {t:>8.3f} "
                     f"{significance_stars(t)}")
    lines.append("")
    lines.append(f"{'LL0':<{width}}  {result.ll0:.3f}  ({result.ll0_convention})")
    lines.append(f"{'LL1':<{width}}  {result.ll1:.3f}")
    lines.append(f"{'rho':<{width}}  {result.rho:.4f}")
    lines.append(f"{'rho.adj':<{width}}  {result.rho_adjusted:.4f}")
    for label, v in result.vot.items():
        lines.append(f"{'VOT (' + label + ')':<{width}}  {v:,.2f}")
    lines.append(f"{'Number of observation':<{width}}  {result.n_observations}")
    lines.append(f"{'Free parameters':<{width}}  {result.n_free_params}")
    lines.append(f"{'Converged':<{width}}  {result.converged} ({result.iterations} iterations)")
    if not result.std_errors_available:
        lines.append("standard errors unavailable: information matrix is singular")
    lines.append("(*) significant at 90% level, (**) significant at 95% level")
    return "\n".join(lines)
