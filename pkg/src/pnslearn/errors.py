class MalformedInputError(ValueError):
    pass


class UnsupportedForKindError(ValueError):
    """Operation needs a structural term the SCM kind does not have."""


class InsufficientDataError(ValueError):
    pass


class UndefinedConditionalError(ZeroDivisionError):
    """A PN/PS ratio has a zero-probability denominator."""


class EmptyDatasetError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass
