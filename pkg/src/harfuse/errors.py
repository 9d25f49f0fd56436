"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class HarfuseError(Exception):
    exit_code = 1


class ConfigError(HarfuseError):
    exit_code = 2


class DataError(HarfuseError):
    exit_code = 3


class ContractError(DataError, ValueError):
    """An argument violates an operation's stated preconditions (shape, symmetry...)."""


class InputFileError(DataError, OSError):
    def __init__(self, path, message="cannot read file"):
        super().__init__(f"{message}: {path}")
        self.path = str(path)


class ParseError(DataError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class SchemaError(DataError):
    pass


class TooShortError(DataError):
    def __init__(self, length, required, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}recording has {length} samples, need at least {required}")
        self.length = length
        self.required = required
        self.path = path


class EmptyDatasetError(DataError):
    pass


class ProvenanceError(DataError):
    pass


class DegenerateLabelsError(DataError):
    pass


class AlignmentError(DataError):
    pass


class InsufficientSamplesError(DataError):
    pass


class FormatError(DataError):
    """A model/cache container could not be deserialized."""


class NumericalError(HarfuseError):
    exit_code = 4


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, pivot, value):
        super().__init__(f"matrix not positive definite: pivot {pivot} is {value!r}")
        self.pivot = pivot
        self.value = value


class DivergenceError(NumericalError):
    def __init__(self, epoch, message="non-finite training loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class ConvergenceError(NumericalError):
    pass
