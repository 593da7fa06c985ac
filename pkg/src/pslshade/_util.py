"""Small shared helpers."""

import math


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero."""
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))
