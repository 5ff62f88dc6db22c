"""Exception hierarchy shared by every stage of the pipeline."""


class CausalLPError(Exception):
    """Base class for all toolkit errors."""


class CyclicGraph(CausalLPError):
    pass


class DuplicateKey(CausalLPError):
    pass


class KindConflict(CausalLPError):
    pass


class InvalidQuad(CausalLPError):
    pass


class MalformedInput(CausalLPError):
    """Raised for schema violations in an input file.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class DanglingEdge(MalformedInput):
    pass


class MalformedQuadLine(CausalLPError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"malformed quad at line {line_no}" + (f": {reason}" if reason else ""))


class OutOfRange(CausalLPError):
    pass


class UnpreprocessedInput(CausalLPError):
    pass


class EmptyGraph(CausalLPError):
    pass


class ShallowCeg(CausalLPError):
    pass


class UnknownEntity(CausalLPError, KeyError):
    def __str__(self):
        return f"unknown entity: {self.args[0]}"


class UnknownRelation(CausalLPError, KeyError):
    def __str__(self):
        return f"unknown relation: {self.args[0]}"


class LengthMismatch(CausalLPError, ValueError):
    pass


class DivergedTraining(CausalLPError):
    pass


class EmptyTestSet(CausalLPError):
    pass


class Unsatisfiable(CausalLPError):
    pass


class ConfigError(CausalLPError):
    pass


class IoFailure(CausalLPError):
    pass
