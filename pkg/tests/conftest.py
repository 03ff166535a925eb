from __future__ import annotations

import numpy as np
import pytest

import sepwalk as sw


@pytest.fixture(scope="session")
def intro_rates() -> sw.LocalRate:
    return sw.LocalRate.intro()


@pytest.fixture(scope="session")
def half() -> sw.DensityProfile:
    return sw.DensityProfile.constant(0.5)


def assert_within_z(estimate: float, reference: float, stderr: float,
                    z: float, label: str) -> None:
    zz = abs(estimate - reference) / stderr if stderr > 0 else 0.0
    assert zz <= z, (f"{label}: {estimate} vs {reference} "
                     f"(z = {zz:.2f} > {z})")
