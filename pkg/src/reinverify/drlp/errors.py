"""Exceptions raised by the DRLP front end."""


class DrlpError(Exception):
    """Base class for every DRLP front-end error."""


class DrlpSyntaxError(DrlpError):
    def __init__(self, line, column, expected, found=None):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        msg = f"line {line}, column {column}: expected {expected}"
        if found is not None:
            msg += f", found {found!r}"
        super().__init__(msg)


class SemanticError(DrlpError):
    pass


class ExpansionError(DrlpError):
    pass


class UnknownParameter(DrlpError):
    pass


class ClassificationError(DrlpError):
    pass
