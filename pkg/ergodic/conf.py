"""
Access to the lab's engineering constants.

Values live in ``settings.RETURNLAB``; anything missing there falls back to
``DEFAULTS`` so that a bare settings module still works.
"""
from typing import Any

from django.conf import settings

DEFAULTS = {
    "VERSION": "0.1.0",
    "DIGIT_CAP": 4096,
    "CF_QUOTIENT_CAP": 512,
    "CF_SAMPLER_BITS": 4096,
    "CF_SAMPLER_MAX_BITS": 1 << 22,
    "SCAN_HORIZON": 10**8,
    "BLOCK_SIZE": 1 << 16,
    "ROTATION_GUARD_BITS": 64,
    "EXACT_COVARIANCE_LIMIT": 10**4,
    "PROPERTY_P_MAX_N": 40,
    "PROPERTY_P_MAX_K": 4,
    "TREND_TOLERANCE": 0.05,
}


def lab_setting(name: str) -> Any:
    overrides = getattr(settings, "RETURNLAB", {})
    if name in overrides:
        return overrides[name]
    if name not in DEFAULTS:
        raise KeyError(f"Unknown lab setting {name}")
    return DEFAULTS[name]
