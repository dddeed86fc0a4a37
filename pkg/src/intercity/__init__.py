"""Integrated inter-city travel demand modelling: RP/SP nested logit of
destination and mode choice, logsum accessibility, Poisson trip generation
and scenario simulation."""

from .choice import (accessibility, destination_probabilities, eval_mode_utility, eval_theta,
                     inclusive_value, joint_probabilities, mode_probabilities_given_destination,
                     simulate_choices)
from .estimation import EstimationResult, estimate, fit_statistics, value_of_time
from .estimators import NestedLogitChoiceModel, PoissonTripRegressor
from .exceptions import ConfigurationError, DomainError, NumericError, ValidationError
from .likelihood import LikelihoodValue, gradient, log_likelihood
from .scenarios import (Scenario, ScenarioResult, Transformation, apply_scenario,
                        induced_travel_table, simulate_shares)
from .structures import (ChoiceDataset, Mode, ModelSpec, Observation, ParameterVector,
                         ThetaSpec, UtilityTerm, Zone)
from .tripgen import PoissonModel, TripGenRecord, fit_poisson, predict_rate

__version__ = "0.1.0"
