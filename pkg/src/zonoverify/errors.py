"""Exception types raised by the library."""


class VerifierError(Exception):
    """Base class for all verifier errors."""


class ContractError(VerifierError, ValueError):
    """Shape, dimension or finiteness violation of an operation's precondition."""


class ParseError(VerifierError, ValueError):
    """Malformed network or property file.

    `location` is a line number, a JSON path or an s-expression path.
    """

    def __init__(self, message: str, location: str | int | None = None) -> None:
        self.message = message
        self.location = location
        super().__init__(f"{location}: {message}" if location is not None else message)
