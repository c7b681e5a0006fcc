"""Domain types shared by every model family.

Coefficient layout
------------------
Every listed variable gets one coefficient per non-reference alternative.
When alternative-specific constants are enabled they occupy the first
"variable" slot, named ``ASC``.  The beta vector is ordered variable-major,
then alternative::

    [ASC/alt1, ASC/alt2, ..., x1/alt1, x1/alt2, ..., xK/alt(J-1)]

where the alternatives skip the reference one, whose coefficients are
pinned to zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ASC_NAME = "ASC"


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Wide-format choice data: one row per observation.

    Args:
        attribute_names: Ordered names of the K attribute columns.
        attributes: N x K matrix of finite attribute values.
        choices: N chosen-alternative indices in ``[0, J)``.
        alt_names: J alternative labels.
    """

    attribute_names: tuple[str, ...]
    attributes: np.ndarray
    choices: np.ndarray
    alt_names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.attribute_names)
        alts = tuple(str(a) for a in self.alt_names)
        attrs = np.asarray(self.attributes, dtype=float)
        if attrs.ndim == 1 and len(names) == 0:
            attrs = attrs.reshape(-1, 0)
        choices = np.asarray(self.choices)
        if attrs.ndim != 2:
            raise ValueError("attributes must be a 2-d matrix")
        if len(alts) < 2:
            raise ValueError(f"a choice set needs at least 2 alternatives, got {len(alts)}")
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        if attrs.shape[1] != len(names):
            raise ValueError(
                f"attributes has {attrs.shape[1]} columns but {len(names)} names were given"
            )
        if choices.ndim != 1 or choices.shape[0] != attrs.shape[0]:
            raise ValueError("choices must be a vector with one entry per attribute row")
        if attrs.shape[0] == 0:
            raise ValueError("dataset has no observations")
        if not np.all(np.isfinite(attrs)):
            raise ValueError("attributes contain non-finite values")
        if choices.size and not np.issubdtype(choices.dtype, np.integer):
            if not np.all(np.equal(np.mod(choices, 1), 0)):
                raise ValueError("choices must be integer alternative indices")
        choices = choices.astype(np.int64)
        bad = (choices < 0) | (choices >= len(alts))
        if np.any(bad):
            row = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"choice {choices[row]} at row {row} is not a valid alternative index"
            )
        object.__setattr__(self, "attribute_names", names)
        object.__setattr__(self, "alt_names", alts)
        object.__setattr__(self, "attributes", _frozen(attrs))
        object.__setattr__(self, "choices", _frozen(choices, dtype=np.int64))

    @property
    def n_obs(self) -> int:
        return self.attributes.shape[0]

    @property
    def n_alts(self) -> int:
        return len(self.alt_names)

    def column(self, name: str) -> np.ndarray:
        return self.attributes[:, self.attribute_names.index(name)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.attribute_names, self.attributes[rows], self.choices[rows], self.alt_names)

    def with_attributes(self, attributes: np.ndarray) -> "Dataset":
        return Dataset(self.attribute_names, attributes, self.choices, self.alt_names)


@dataclass(frozen=True)
class UtilitySpec:
    """Which variables enter the utilities and how the model is identified."""

    variables: tuple[str, ...]
    reference_alt: int = 0
    include_asc: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("utility variables must be unique")
        if ASC_NAME in self.variables:
            raise ValueError(f"{ASC_NAME!r} is reserved for the alternative-specific constants")

    def validate(self, dataset: Dataset) -> None:
        missing = [v for v in self.variables if v not in dataset.attribute_names]
        if missing:
            raise ValueError(f"unknown variable(s): {', '.join(missing)}")
        if not 0 <= self.reference_alt < dataset.n_alts:
            raise ValueError(
                f"reference alternative {self.reference_alt} out of range for J={dataset.n_alts}"
            )

    def n_slots(self) -> int:
        return len(self.variables) + int(self.include_asc)

    def beta_length(self, n_alts: int) -> int:
        return self.n_slots() * (n_alts - 1)


class ModelTag(str, enum.Enum):
    MNL = "mnl"
    RESLOGIT = "reslogit"
    MLP = "mlp"


@dataclass(frozen=True)
class ModelKind:
    tag: ModelTag
    depth: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tag", ModelTag(self.tag))
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if self.tag is ModelTag.MNL and self.depth != 0:
            raise ValueError("an MNL model has depth 0")

    @classmethod
    def mnl(cls) -> "ModelKind":
        return cls(ModelTag.MNL, 0)

    @classmethod
    def reslogit(cls, depth: int) -> "ModelKind":
        return cls(ModelTag.RESLOGIT, depth)

    @classmethod
    def mlp(cls, depth: int) -> "ModelKind":
        return cls(ModelTag.MLP, depth)

    @property
    def label(self) -> str:
        if self.tag is ModelTag.MNL:
            return "MNL"
        prefix = "RL" if self.tag is ModelTag.RESLOGIT else "MLP"
        return f"{prefix}-{self.depth}"


@dataclass(frozen=True)
class Parameters:
    """Coefficient vector plus the per-layer J x J matrices.

    For ResLogit the matrices are the residual parameters; for the MLP
    baseline they are the hidden-layer weights.  An empty ``thetas`` is a
    plain MNL.
    """

    beta: np.ndarray
    thetas: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        beta = _frozen(self.beta)
        if beta.ndim != 1:
            raise ValueError("beta must be a vector")
        thetas = tuple(_frozen(t) for t in self.thetas)
        for m, t in enumerate(thetas):
            if t.ndim != 2 or t.shape[0] != t.shape[1]:
                raise ValueError(f"layer {m + 1} matrix must be square, got shape {t.shape}")
            if t.shape != thetas[0].shape:
                raise ValueError("all layer matrices must share one shape")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"layer {m + 1} matrix has non-finite entries")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "thetas", thetas)

    @property
    def depth(self) -> int:
        return len(self.thetas)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.beta] + [t.ravel() for t in self.thetas])

    def unflatten(self, flat: np.ndarray) -> "Parameters":
        """Parameters with this object's shapes, filled from ``flat``."""
        k = self.beta.size
        thetas = []
        pos = k
        for t in self.thetas:
            thetas.append(flat[pos:pos + t.size].reshape(t.shape))
            pos += t.size
        if pos != flat.size:
            raise ValueError(f"expected {pos} values, got {flat.size}")
        return Parameters(flat[:k], tuple(thetas))

    def with_beta(self, beta) -> "Parameters":
        return Parameters(beta, self.thetas)

    def check(self, design: "DesignIndex", kind: ModelKind) -> None:
        if self.beta.size != design.n_beta:
            raise ValueError(f"beta has length {self.beta.size}, layout needs {design.n_beta}")
        if self.depth != kind.depth:
            raise ValueError(f"{kind.label} needs {kind.depth} layer matrices, got {self.depth}")
        for t in self.thetas:
            if t.shape != (design.n_alts, design.n_alts):
                raise ValueError(f"layer matrices must be {design.n_alts}x{design.n_alts}")


@dataclass(frozen=True)
class DesignIndex:
    """Maps (variable, alternative) pairs to positions in the beta vector."""

    slot_names: tuple[str, ...]
    columns: tuple[int, ...]
    n_alts: int
    reference_alt: int
    include_asc: bool
    free_alts: tuple[int, ...] = field(init=False)
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        free = tuple(j for j in range(self.n_alts) if j != self.reference_alt)
        object.__setattr__(self, "free_alts", free)
        lookup = {}
        for s, name in enumerate(self.slot_names):
            for a, alt in enumerate(free):
                lookup[(name, alt)] = s * len(free) + a
        object.__setattr__(self, "_lookup", lookup)

    @property
    def n_beta(self) -> int:
        return len(self.slot_names) * (self.n_alts - 1)

    @property
    def n_slots(self) -> int:
        return len(self.slot_names)

    def index(self, variable: str, alternative: int) -> int:
        if alternative == self.reference_alt:
            raise KeyError(f"alternative {alternative} is the reference; its coefficients are fixed at 0")
        return self._lookup[(variable, alternative)]

    def pair(self, index: int) -> tuple[str, int]:
        if not 0 <= index < self.n_beta:
            raise IndexError(index)
        slot, a = divmod(index, self.n_alts - 1)
        return self.slot_names[slot], self.free_alts[a]

    def pairs(self) -> list[tuple[str, int]]:
        return [self.pair(i) for i in range(self.n_beta)]

    def coef_matrix(self, beta: np.ndarray) -> np.ndarray:
        """Expand beta to an (n_slots x J) matrix with a zero reference column."""
        coef = np.zeros((self.n_slots, self.n_alts))
        coef[:, list(self.free_alts)] = np.asarray(beta).reshape(self.n_slots, self.n_alts - 1)
        return coef

    def collapse(self, coef_grad: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`coef_matrix` for gradients: drop the reference column."""
        return coef_grad[..., list(self.free_alts)].reshape(*coef_grad.shape[:-2], -1)

    def regressors(self, attributes: np.ndarray) -> np.ndarray:
        """Per-observation regressors: a leading column of ones for the ASCs,
        then the selected attribute columns."""
        attributes = np.atleast_2d(np.asarray(attributes, dtype=float))
        cols = attributes[:, list(self.columns)]
        if self.include_asc:
            cols = np.hstack([np.ones((attributes.shape[0], 1)), cols])
        return cols


def build_design(dataset: Dataset, spec: UtilitySpec) -> DesignIndex:
    spec.validate(dataset)
    slots = ((ASC_NAME,) if spec.include_asc else ()) + spec.variables
    columns = tuple(dataset.attribute_names.index(v) for v in spec.variables)
    return DesignIndex(slots, columns, dataset.n_alts, spec.reference_alt, spec.include_asc)


def count_parameters(spec: UtilitySpec, kind: ModelKind, n_alts: int) -> int:
    """Number of estimated parameters: the beta block plus M J x J matrices."""
    return spec.beta_length(n_alts) + kind.depth * n_alts * n_alts


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring fitted on training attributes.

    Columns are only centred when the utilities carry constants, so that the
    transform can always be folded back into raw-scale coefficients exactly.
    Constant columns are left unscaled.
    """

    means: np.ndarray
    scales: np.ndarray

    @classmethod
    def fit(cls, attributes: np.ndarray, center: bool = True) -> "Standardizer":
        attributes = np.asarray(attributes, dtype=float)
        scales = attributes.std(axis=0)
        scales[scales <= 1e-12 * np.maximum(1.0, np.abs(attributes).max(axis=0))] = 1.0
        means = attributes.mean(axis=0) if center else np.zeros(attributes.shape[1])
        return cls(_frozen(means), _frozen(scales))

    @classmethod
    def identity(cls, n_columns: int) -> "Standardizer":
        return cls(_frozen(np.zeros(n_columns)), _frozen(np.ones(n_columns)))

    def transform(self, attributes: np.ndarray) -> np.ndarray:
        return (np.asarray(attributes, dtype=float) - self.means) / self.scales

    def beta_to_raw(self, design: DesignIndex) -> np.ndarray:
        """Linear map T with ``beta_raw = T @ beta_standardized``.

        V_j = a_j + sum_k s_kj (x_k - mu_k) / sd_k
            = (a_j - sum_k s_kj mu_k / sd_k) + sum_k (s_kj / sd_k) x_k
        """
        n_free = design.n_alts - 1
        T = np.eye(design.n_beta)
        offset = 1 if design.include_asc else 0
        for v, col in enumerate(design.columns):
            slot = v + offset
            for a in range(n_free):
                i = slot * n_free + a
                T[i, i] = 1.0 / self.scales[col]
                if design.include_asc:
                    T[a, i] = -self.means[col] / self.scales[col]
        return T
