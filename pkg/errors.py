"""Exception hierarchy. Each failure carries the exit code the CLI reports."""


class BenchError(Exception):
    exit_code = 1


class ConfigError(BenchError):
    """Bad flags, missing paths, malformed oracle spec or invalid partition."""

    exit_code = 2


class DataError(BenchError):
    """Unparseable or schema-inconsistent input data."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class AttributeLookupError(DataError):
    """Attribute index out of range, or a fixed value asked of a varying attribute."""


class MetricUndefinedError(BenchError):
    """Every conditioning set of a metric is empty."""

    exit_code = 4


class SelfCheckError(BenchError):
    exit_code = 5
