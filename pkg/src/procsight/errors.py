"""Exception and warning types shared across the pipeline."""


class ProcsightError(Exception):
    """Base class for all input/contract errors (CLI exit code 2)."""


class MissingColumn(ProcsightError):
    def __init__(self, name):
        super().__init__(f"missing column: {name!r}")
        self.name = name


class BadTimestamp(ProcsightError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: cannot parse timestamp {value!r}")
        self.row = row
        self.value = value


class EmptyLog(ProcsightError):
    pass


class LengthOutOfRange(ProcsightError):
    def __init__(self, length, trace_len):
        super().__init__(f"prefix length {length} outside [1, {trace_len}]")
        self.length = length
        self.trace_len = trace_len


class EmptyPrefixSet(ProcsightError):
    pass


class NoUsableBucket(ProcsightError):
    pass


class SpecMismatch(ProcsightError):
    pass


class WidthMismatch(ProcsightError):
    def __init__(self, got, expected):
        super().__init__(f"row width {got} does not match expected {expected}")
        self.got = got
        self.expected = expected


class NonFiniteKernel(ProcsightError):
    pass


class UnknownFeature(ProcsightError):
    pass


class UnknownCase(ProcsightError):
    pass


class ZeroVarianceLabel(ProcsightError):
    pass


class SingleClass(ProcsightError):
    pass


class LengthMismatch(ProcsightError):
    pass


class TooFewCases(ProcsightError):
    pass


class BundleMismatch(ProcsightError):
    pass


class ConfigError(ProcsightError):
    pass


class DegenerateTargets(UserWarning):
    """All classification labels identical; the model reduces to its base score."""


class RuleActivityAbsentEverywhere(UserWarning):
    """A labeling rule produced a single class across the whole log."""
