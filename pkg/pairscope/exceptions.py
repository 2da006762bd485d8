from typing import Any, Optional


class PairScopeError(Exception):
    pass


class ConfigError(PairScopeError, ValueError):
    pass


class MapParseError(ConfigError):
    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


class EmptyRegionError(ConfigError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"region {label!r} has no pixels in the selected ensemble")


class ResourceMatchError(PairScopeError):
    pass


class UndefinedPrecisionError(PairScopeError):
    reason = "precision is undefined for this source and scheme"

    def __init__(self, report: Any, detail: Optional[str] = None):
        self.report = report
        super().__init__(detail or self.reason)


class UndefinedSnrError(PairScopeError):
    reason = "combined variance of the count ensembles is zero"

    def __init__(self, estimate: Any):
        self.estimate = estimate
        super().__init__(self.reason)
