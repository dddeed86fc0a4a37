"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import math

from .exceptions import ValidationError
from .structures import CONTEXTS, ChoiceDataset, ModelSpec, ParameterVector


def dataset_messages(dataset, spec=None, require_choice=True):
    msgs = []
    if not dataset.observations:
        return ["no observations"]
    for o in dataset.observations:
        where = f"observation {o.obs_id}"
        if o.context not in CONTEXTS:
            msgs.append(f"{where}: unknown context {o.context!r}")
        if not o.los:
            msgs.append(f"{where}: no available alternatives")
        if not (o.weight > 0 and math.isfinite(o.weight)):
            msgs.append(f"{where}: weight must be positive and finite")
        if o.chosen is None:
            if require_choice:
                msgs.append(f"{where}: no recorded choice")
        elif o.chosen not in o.los:
            msgs.append(f"{where}: chosen {o.chosen} is not available")
        for key, cell in o.los.items():
            for name, v in cell.items():
                if not math.isfinite(v) or v < 0:
                    msgs.append(f"{where}: {key} {name}={v} must be finite and nonnegative")
        for name, v in o.covariates.items():
            if not math.isfinite(v):
                msgs.append(f"{where}: covariate {name}={v} is not finite")
        if spec is not None:
            for z, m in o.los:
                if z not in spec.zones:
                    msgs.append(f"{where}: unknown zone {z!r}")
                if m not in spec.modes:
                    msgs.append(f"{where}: unknown mode {m!r}")
    return msgs


def check_choice_dataset(dataset, spec=None, require_choice=True):
    """Raise :class:`ValidationError` listing every problem with ``dataset``."""
    if not isinstance(dataset, ChoiceDataset):
        raise TypeError(f"expected a ChoiceDataset, got {type(dataset).__name__}")
    msgs = dataset_messages(dataset, spec, require_choice)
    if msgs:
        raise ValidationError(msgs)
    return dataset


def check_params(params, spec):
    if not isinstance(params, ParameterVector):
        params = ParameterVector.from_values(params)
    msgs = params.check_against(spec)
    if msgs:
        raise ValidationError(msgs)
    return params


def check_spec(spec):
    if not isinstance(spec, ModelSpec):
        spec = ModelSpec.from_dict(spec)
    return spec.validate()
