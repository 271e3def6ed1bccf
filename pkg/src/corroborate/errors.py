"""Exception hierarchy shared by every layer of the pipeline."""


class CorroborationError(ValueError):
    """Base class for all errors raised by this package."""


class FormatError(CorroborationError):
    pass


class DictionaryError(CorroborationError):
    pass


class IntegrityError(CorroborationError):
    pass


class FeatureError(CorroborationError):
    pass


class SplitError(CorroborationError):
    pass


class BalanceError(CorroborationError):
    pass


class TrainingError(CorroborationError):
    pass


class InputError(CorroborationError):
    pass


class ProtocolError(CorroborationError):
    pass


class SimulationError(CorroborationError):
    pass


class ConfigError(CorroborationError):
    pass


class ScoringError(CorroborationError):
    pass


class ComparisonError(CorroborationError):
    pass
