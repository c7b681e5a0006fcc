from pathlib import Path

import numpy as np
import pytest

from reslogit.core import Dataset, ModelKind, ModelTag, Parameters, UtilitySpec, build_design

DATA_DIR = Path(__file__).parent / "data"


def random_instance(rng, tag, J=3, K=2, M=2, N=16, scale=1.0, include_asc=True, reference=0):
    """Random (params, dataset, design, kind) with entries drawn in [-scale, scale]."""
    names = tuple(f"x{k + 1}" for k in range(K))
    attrs = rng.normal(size=(N, K))
    choices = rng.integers(0, J, size=N)
    ds = Dataset(names, attrs, choices, tuple(f"a{j}" for j in range(J)))
    spec = UtilitySpec(names, reference_alt=reference, include_asc=include_asc)
    design = build_design(ds, spec)
    tag = ModelTag(tag)
    kind = ModelKind(tag, 0 if tag is ModelTag.MNL else M)
    beta = rng.uniform(-scale, scale, design.n_beta)
    thetas = tuple(rng.uniform(-scale, scale, (J, J)) for _ in range(kind.depth))
    return Parameters(beta, thetas), ds, design, kind


def rel_err(analytic, oracle, floor=1e-8):
    """Max error: relative where |oracle| >= floor, absolute below it."""
    analytic = np.asarray(analytic, dtype=float)
    oracle = np.asarray(oracle, dtype=float)
    big = np.abs(oracle) >= floor
    err = np.zeros_like(oracle)
    err[big] = np.abs(analytic[big] - oracle[big]) / np.abs(oracle[big])
    err[~big] = np.abs(analytic[~big] - oracle[~big])
    return float(err.max(initial=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def fixture_csv():
    return DATA_DIR / "synthetic_500.csv"


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
