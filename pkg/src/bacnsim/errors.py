"""Exception hierarchy shared by all bacnsim modules."""


class BacnError(Exception):
    """Base class for every error raised by the package."""

    code = "BacnError"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


def _make(name, base, doc):
    cls = type(name, (base,), {"__doc__": doc, "code": name})
    return cls


class TopologyError(BacnError, ValueError):
    code = "TopologyError"


class BadParameter(BacnError, ValueError):
    code = "BadParameter"


DuplicateId = _make("DuplicateId", TopologyError, "Two nodes or links share an id.")
MissingSourceOrDestination = _make(
    "MissingSourceOrDestination", TopologyError,
    "The graph needs exactly one Source and one Destination.")
CycleDetected = _make("CycleDetected", TopologyError, "Data links contain a directed cycle.")
DanglingNode = _make(
    "DanglingNode", TopologyError,
    "A node lies on no Source->Destination path, or a link points the wrong way.")
UnknownNode = _make("UnknownNode", BacnError, "Node id not present in the graph.")
UnknownLink = _make("UnknownLink", BacnError, "Link id not present in the graph.")
NotAnAgent = _make("NotAnAgent", BacnError, "Only the Source and Relays act as agents.")

BufferFull = _make("BufferFull", BacnError, "Enqueue on a full buffer (upstream scheduling bug).")
BufferEmpty = _make("BufferEmpty", BacnError, "Dequeue on an empty buffer (upstream scheduling bug).")

BadConfig = _make("BadConfig", BacnError, "Environment configuration is inconsistent.")
IllegalAction = _make("IllegalAction", BacnError, "Action names a link that does not qualify.")
TooLarge = _make("TooLarge", BacnError, "Instance too large for exhaustive enumeration.")
NotTwoHop = _make("NotTwoHop", BacnError, "Operation requires a single-layer two-hop graph.")
SingularChain = _make("SingularChain", BacnError, "Stationary distribution could not be determined.")

ShapeMismatch = _make("ShapeMismatch", BacnError, "Array shape does not match the network layout.")
Divergence = _make("Divergence", BacnError, "Training produced a non-finite loss.")
LayoutMismatch = _make("LayoutMismatch", BacnError, "Policy observation layout differs from the environment.")

ParseError = _make("ParseError", BacnError, "Configuration file could not be parsed.")
UnknownKey = _make("UnknownKey", BacnError, "Key path does not name a sweepable parameter.")
EmptyValues = _make("EmptyValues", BacnError, "Sweep was given no values.")


class ValidationError(BacnError, ValueError):
    """Aggregated configuration validation failure."""

    code = "ValidationError"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in self.errors))

    def to_dict(self):
        return {"error": self.code, "message": str(self),
                "errors": [{"key": loc, "message": msg} for loc, msg in self.errors]}
