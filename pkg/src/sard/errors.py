"""Exception types raised across the simulator."""


class SardError(Exception):
    """Base class for all simulator errors."""


class EmptyTopology(SardError):
    pass


class NoRoute(SardError):
    pass


class CapacityExceeded(SardError):
    def __init__(self, entity: str):
        super().__init__(f"capacity exceeded on {entity}")
        self.entity = entity


class StaleToken(SardError):
    pass


class NoHosts(SardError):
    pass


class UnknownProvider(SardError):
    pass


class UnknownInstance(SardError):
    pass


class ForeignInstance(SardError):
    pass


class UnknownSi(SardError):
    pass


class BadArea(SardError):
    pass


class MalformedRow(SardError):
    def __init__(self, line: int, detail: str = ""):
        super().__init__(f"malformed row at line {line}" + (f": {detail}" if detail else ""))
        self.line = line


class NonMonotoneStep(SardError):
    def __init__(self, user: str):
        super().__init__(f"steps not monotone for user {user!r}")
        self.user = user


class NoPoA(SardError):
    pass


class NoHistory(SardError):
    pass


class UnknownIntent(SardError):
    pass


class UnknownFeature(SardError):
    pass


class MergeOfCorrupt(SardError):
    def __init__(self, side: str):
        super().__init__(f"cannot merge: side {side} fails verification")
        self.side = side


class SplitOfCorrupt(SardError):
    pass


class SearchBudgetExceeded(SardError):
    pass


class ConfigInvalid(SardError):
    def __init__(self, field: str, detail: str = ""):
        super().__init__(f"invalid config field {field!r}" + (f": {detail}" if detail else ""))
        self.field = field


class MissingStrategy(SardError):
    pass
