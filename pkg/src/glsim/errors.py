"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GLSimError(Exception):
    exit_code = 1


class InvalidConfigError(GLSimError, ValueError):
    exit_code = 1


class ShapeError(GLSimError, ValueError):
    exit_code = 2


class DecodeError(GLSimError, ValueError):
    """Malformed image or weight file. ``offset`` is the byte position of the fault."""

    exit_code = 2

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(GLSimError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"{message} (layer {layer})"
        super().__init__(message)
        self.layer = layer
