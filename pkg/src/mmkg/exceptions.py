"""Exception hierarchy shared across the toolkit."""


class MMKGError(Exception):
    """Base class for all toolkit errors."""


# graph storage
class UnknownNode(MMKGError, KeyError):
    pass


class ModalityViolation(MMKGError, ValueError):
    pass


class DuplicateTriple(MMKGError, ValueError):
    pass


class GraphFrozen(MMKGError, RuntimeError):
    pass


class ParseError(MMKGError, ValueError):
    def __init__(self, reason, line=None, source=None):
        self.reason = reason
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {reason}" if where else reason)


# construction
class AnnotatorUnavailable(MMKGError, RuntimeError):
    pass


class MalformedResponse(MMKGError, ValueError):
    pass


class InvalidSelection(MMKGError, ValueError):
    pass


class UnknownRelation(MMKGError, KeyError):
    pass


# filtering
class StaleOutcome(MMKGError, ValueError):
    pass


# embeddings / training
class InvalidDimension(MMKGError, ValueError):
    pass


class IndexOutOfRange(MMKGError, IndexError):
    pass


class TooFewTriples(MMKGError, ValueError):
    pass


class EmptySplit(MMKGError, ValueError):
    pass


class NonFiniteLoss(MMKGError, FloatingPointError):
    pass


class NonFiniteParameter(MMKGError, FloatingPointError):
    pass


class CheckpointMismatch(MMKGError, ValueError):
    pass


# evaluation
class EmptyInput(MMKGError, ValueError):
    pass


class InvalidK(MMKGError, ValueError):
    pass


class EmptyRelevant(MMKGError, ValueError):
    pass


class LengthMismatch(MMKGError, ValueError):
    pass


# synthetic data
class InfeasibleSpec(MMKGError, ValueError):
    pass
