"""Shared builders for hand-rolled test streams."""

import numpy as np
import pytest

from earlywarn.stream import CaseRecord, PredictionStream


def make_case(case_id, deltas, rhos=None, y=None, deviation=False):
    if rhos is None:
        rhos = [1.0] * len(deltas)
    if y is None:
        y = 1.0 if deviation else 0.0
    return CaseRecord.from_values(case_id, deltas, rhos, y, deviation)


def make_stream(cases, expected_outcome=0.5):
    return PredictionStream(cases=tuple(cases), expected_outcome=expected_outcome)


def random_stream(rng, n_cases, max_length=8, deviation_rate=0.4, rho_step=0.1):
    """Unstructured random stream; rhos land on a coarse grid so ties happen."""
    cases = []
    n_rho = int(0.5 / rho_step)
    for k in range(n_cases):
        length = int(rng.integers(1, max_length + 1))
        deltas = rng.uniform(-1.0, 1.0, length).tolist()
        rhos = (0.5 + rho_step * rng.integers(0, n_rho + 1, length)).tolist()
        deviation = bool(rng.random() < deviation_rate)
        cases.append(make_case(f"c{k}", deltas, rhos, deviation=deviation))
    return make_stream(cases)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
