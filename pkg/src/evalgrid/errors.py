"""Exception hierarchy shared across the platform.

Every error raised by evalgrid derives from EvalGridError so callers can
catch platform failures in one place; wire and REST layers map these onto
protocol error codes by class name.
"""

from __future__ import annotations

import re


class EvalGridError(Exception):
    """Base class for all evalgrid errors."""

    #: symbolic code used on the wire / in REST bodies
    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


def _err(name: str, base=EvalGridError) -> type:
    cls = type(name, (base,), {"code": name})
    cls.__module__ = __name__
    return cls


# --- manifest ---------------------------------------------------------------

class ManifestSyntaxError(EvalGridError):
    """The manifest document is not well-formed."""

    code = "SyntaxError"


class SchemaError(EvalGridError):
    """A known manifest field has the wrong type or an unparsable value."""

    code = "SchemaError"

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


NoContainerForArch = _err("NoContainerForArch")

# --- pipeline ---------------------------------------------------------------

UnsupportedFormat = _err("UnsupportedFormat")
CorruptImage = _err("CorruptImage")
InvalidPercentage = _err("InvalidPercentage")
InvalidDims = _err("InvalidDims")
ChannelMismatch = _err("ChannelMismatch")
RankError = _err("RankError")
EmptyOutput = _err("EmptyOutput")


class StepError(EvalGridError):
    """A pipeline step failed; carries the step index and the cause."""

    code = "StepError"

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"step {index}: {cause}")
        self.index = index
        self.cause = cause


# --- predictor --------------------------------------------------------------

NoPredictorForFramework = _err("NoPredictorForFramework")
BadWeights = _err("BadWeights")
DeviceUnavailable = _err("DeviceUnavailable")
ClosedHandle = _err("ClosedHandle")
ShapeMismatch = _err("ShapeMismatch")

# --- registry ---------------------------------------------------------------

UnknownAgent = _err("UnknownAgent")
DuplicateKey = _err("DuplicateKey")

# --- agent ------------------------------------------------------------------

BindFailure = _err("BindFailure")
FetchError = _err("FetchError")
ChecksumMismatch = _err("ChecksumMismatch")
NoPredictor = _err("NoPredictor")
PipelineError = _err("PipelineError")
PredictError = _err("PredictError")
ProtocolError = _err("ProtocolError")

# --- orchestrator -----------------------------------------------------------

NoAgentSatisfiesConstraints = _err("NoAgentSatisfiesConstraints")
UnknownEvaluation = _err("UnknownEvaluation")
NoSuccessfulResults = _err("NoSuccessfulResults")

# --- tracer -----------------------------------------------------------------

UnknownSpan = _err("UnknownSpan")
EndBeforeStart = _err("EndBeforeStart")
IncompleteTrace = _err("IncompleteTrace")
TraceError = _err("TraceError")


_BY_CODE = {
    cls.code: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, EvalGridError)
}


def error_for_code(code: str, message: str) -> EvalGridError:
    """Rebuild a typed error from its wire representation."""
    cls = _BY_CODE.get(code)
    if cls is None:
        err = EvalGridError(message)
        err.code = code
        return err
    if cls is SchemaError:
        path, _, rest = message.partition(": ")
        return SchemaError(path, rest or message)
    if cls is StepError:
        m = re.match(r"step (\d+): (.*)", message, re.S)
        if m:
            return StepError(int(m.group(1)), EvalGridError(m.group(2)))
        return StepError(0, EvalGridError(message))
    return cls(message)
