"""Draw choice data from a known model, for recovery experiments and fixtures."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Dataset, ModelKind, Parameters, UtilitySpec, build_design
from .model import predict_proba


def simulate_choices(attributes: np.ndarray, attribute_names: Sequence[str], alt_names: Sequence[str],
                     spec: UtilitySpec, params: Parameters, kind: ModelKind,
                     rng: np.random.Generator) -> Dataset:
    """Sample one choice per attribute row from the model's probabilities."""
    attributes = np.asarray(attributes, dtype=float)
    placeholder = Dataset(tuple(attribute_names), attributes, np.zeros(len(attributes), dtype=int), tuple(alt_names))
    design = build_design(placeholder, spec)
    P = predict_proba(params, placeholder, design, kind)
    u = rng.random(len(attributes))[:, None]
    choices = (u > np.cumsum(P, axis=1)).sum(axis=1)
    choices = np.minimum(choices, len(alt_names) - 1)
    return Dataset(tuple(attribute_names), attributes, choices, tuple(alt_names))


def mnl_dataset(n_obs: int, betas: np.ndarray, seed: int, n_alts: int = 3,
                include_asc: bool = True) -> tuple[Dataset, UtilitySpec, Parameters]:
    """Gaussian attributes and MNL choices for a known beta vector.

    ``betas`` follows the usual layout for ``K = len(betas) / (J - 1) - asc``
    standard-normal variables named ``x1..xK``.
    """
    betas = np.asarray(betas, dtype=float)
    n_slots = betas.size // (n_alts - 1)
    k = n_slots - int(include_asc)
    rng = np.random.default_rng(seed)
    names = tuple(f"x{i + 1}" for i in range(k))
    spec = UtilitySpec(names, reference_alt=0, include_asc=include_asc)
    params = Parameters(betas)
    attrs = rng.normal(size=(n_obs, k))
    alts = tuple(f"alt{j}" for j in range(n_alts))
    return simulate_choices(attrs, names, alts, spec, params, ModelKind.mnl(), rng), spec, params
