from __future__ import annotations

import pytest

from planmix.planner import VARIANT_STANDARD, VARIANT_VOLUME, load_template


@pytest.fixture(scope="session")
def standard_template():
    return load_template(VARIANT_STANDARD)


@pytest.fixture(scope="session")
def volume_template():
    return load_template(VARIANT_VOLUME)


@pytest.fixture(scope="session")
def standard_envelopes(standard_template):
    """Assistant-side plan envelopes of the standard in-context examples."""
    return [assistant for _, assistant in standard_template.in_context_examples]


@pytest.fixture(scope="session")
def volume_envelopes(volume_template):
    return [assistant for _, assistant in volume_template.in_context_examples]
