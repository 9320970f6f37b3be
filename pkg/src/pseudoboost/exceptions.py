class PseudoboostError(Exception):
    pass


class DimensionError(PseudoboostError, ValueError):
    pass


class DegenerateInputError(PseudoboostError, ValueError):
    pass


class PreconditionError(PseudoboostError, ValueError):
    pass


class CertificationError(PseudoboostError):
    """A noise family fails one of the distributional certificates."""


class UnsupportedOracleError(PseudoboostError):
    pass


class DegeneratePseudolabelerError(PseudoboostError):
    pass


class PipelineAbortError(PseudoboostError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(PseudoboostError, ValueError):
    pass
