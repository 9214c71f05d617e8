class RfMissingError(Exception):
    pass


class InvalidInputError(RfMissingError, ValueError):
    pass


class ConsistencyError(RfMissingError):
    pass


class ParseError(RfMissingError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column

        location = []
        if row is not None:
            # header is line 1, first data row is line 2
            location.append(f"line {row + 2}")
        if column is not None:
            location.append(f"column {column}")

        if location:
            message = f"{message} ({', '.join(location)})"

        super().__init__(message)
