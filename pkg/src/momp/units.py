"""Physical constants and unit conversions (SI throughout)."""

import math

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact


def dbm_to_watts(dbm: float) -> float:
    """Power in watts; ``-inf`` dBm maps to exactly 0 W."""
    if dbm == -math.inf:
        return 0.0
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        return -math.inf
    return 10.0 * math.log10(watts) + 30.0
