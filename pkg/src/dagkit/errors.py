"""Exception types shared across the package."""


class DagKitError(Exception):
    """Base class for all domain errors raised by dagkit."""


class CycleDetected(DagKitError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"directed cycle detected: {' -> '.join(map(str, self.cycle))}")


class SelfLoop(DagKitError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"self-loop on node {node}")


class DuplicateEdge(DagKitError):
    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"duplicate edge {edge}")


class OutOfRangeNode(DagKitError):
    def __init__(self, node, n):
        self.node = node
        super().__init__(f"node id {node} outside 0..{n - 1}")


class FeatureShapeMismatch(DagKitError):
    pass


class ShapeMismatch(DagKitError):
    pass


class NonFiniteInput(DagKitError):
    pass


class ParseError(DagKitError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class InvalidSpec(DagKitError):
    pass


class InvalidAlpha(DagKitError):
    pass


class InvalidTolerance(DagKitError):
    pass


class UnregisteredPrimitive(DagKitError):
    pass


class DivergenceDetected(DagKitError):
    def __init__(self, message, state=None):
        self.state = state or {}
        super().__init__(message)
