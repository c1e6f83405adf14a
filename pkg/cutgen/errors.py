"""
Exception types raised by the pipeline.

Configuration and environment faults abort a run; everything derived from `MethodError` is
scoped to a single focal method and is recorded on that method's outcome instead.
"""


class CutgenError(Exception):
    """
    Base class for errors raised by this package.
    """

    exit_code = 1


class ConfigError(CutgenError):
    """
    Invalid or missing configuration, including a missing project root.
    """

    exit_code = 2


class EnvironmentFault(CutgenError):
    """
    Something outside the project is unusable: no compiler, no reachable provider.
    """

    exit_code = 1


class ProviderError(CutgenError):
    """
    Transport-level failure talking to an LLM or embedding endpoint.
    """


class MethodError(CutgenError):
    """
    Failure confined to one focal method.
    """

    def __init__(self, focal_id: str, message: str):
        super().__init__("{}: {}".format(focal_id, message))
        self.focal_id = focal_id
        self.message = message


class ContextExtractionError(MethodError):
    pass


class PromptBudgetError(MethodError):
    pass


class GenerationError(MethodError):
    pass


class RepairOrderError(MethodError):
    pass


class CoverageError(MethodError):
    pass
