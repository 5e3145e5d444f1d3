"""Error types shared across the lab."""


class InstabilityError(RuntimeError):
    """A numerical scheme produced an invalid value (NaN, inf, negative density)."""


class TruncationViolation(RuntimeError):
    """An analysis read positions too close to the truncated edge of the system."""
