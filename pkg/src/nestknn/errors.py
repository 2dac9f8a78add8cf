"""Exception hierarchy. CLI exit codes are keyed on these classes."""


class NestedKnnError(Exception):
    pass


class ValidationError(NestedKnnError, ValueError):
    """A record or parameter violates a domain invariant."""


class ConfigError(NestedKnnError, ValueError):
    """A configuration file or parameter set cannot be used."""


class DataError(NestedKnnError):
    """Input data are missing, corrupt or insufficient."""


class StratumShortfallError(DataError):
    def __init__(self, shortfalls):
        # shortfalls: list of (land, atmosphere, available, quota)
        self.shortfalls = list(shortfalls)
        parts = [
            f"{land.name}/{atm.name}: {available} available, quota {quota}"
            for land, atm, available, quota in self.shortfalls
        ]
        super().__init__("under-populated strata: " + "; ".join(parts))


class FormatError(DataError):
    pass


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class UndefinedMetricError(NestedKnnError, ZeroDivisionError):
    """A verification score has a zero denominator."""


class InvariantError(NestedKnnError, AssertionError):
    """An internal consistency check failed."""
