"""Exception types raised across the package."""


class PairfactError(ValueError):
    """Invalid input: bad dimensions, malformed files, undefined estimators."""


class EnumerationCapError(PairfactError):
    """The requested assignment space is larger than the enumeration cap."""

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"assignment space has {count} elements, which exceeds the "
            f"enumeration cap of {cap} (raise it with --cap or PAIRFACT_CAP)"
        )
