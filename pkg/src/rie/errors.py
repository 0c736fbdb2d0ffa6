"""Exception taxonomy shared across the toolkit."""


class RieError(Exception):
    """Base class for all toolkit errors."""


# audio
class UnsupportedFormat(RieError):
    pass


class CorruptFile(RieError):
    pass


class UpsampleRequested(RieError):
    pass


class SignalTooShort(RieError):
    pass


# features
class NameSetMismatch(RieError):
    pass


# corpus
class SchemaError(RieError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicatePairId(RieError):
    pass


class InsufficientRaters(RieError):
    def __init__(self, pair_id, count):
        super().__init__(f"pair {pair_id!r} has only {count} rating records")
        self.pair_id = pair_id
        self.count = count


class BadMagic(RieError):
    pass


class VersionMismatch(RieError):
    pass


class TruncatedFile(RieError):
    pass


class NonFiniteValue(RieError):
    pass


class IoError(RieError):
    pass


# regress
class TooFewSamples(RieError):
    pass


class SingularDesign(RieError):
    pass


class ConvergenceFailure(RieError):
    pass


class FeatureMismatch(RieError):
    pass


# autodiff
class DimensionMismatch(RieError):
    pass


class LayerCountMismatch(RieError):
    pass


class FiniteCheckFailure(RieError):
    pass


class DivergenceDetected(RieError):
    pass


# eval
class ConstantInput(RieError):
    pass


class TooFewPairs(RieError):
    pass


# mllm
class TemplateNotFound(RieError):
    pass


class ProviderError(RieError):
    pass


class ParseError(RieError):
    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class RateLimited(RieError):
    pass


# cli
class ConfigError(RieError):
    pass
