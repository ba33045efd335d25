"""Exception hierarchy.

Each class carries the CLI exit code and a short category string so the
command-line front end can map any failure to a single machine-parsable line.
"""


class RadlocError(Exception):
    exit_code = 3
    category = "error"


class ConfigError(RadlocError, ValueError):
    """Bad configuration, unknown preset or missing input file."""

    exit_code = 1
    category = "usage"


class SchemaError(RadlocError, ValueError):
    """Structural mismatch: wrong header, width, dimension or container kind."""

    exit_code = 2
    category = "schema"


class HeaderError(SchemaError):
    category = "schema.header"


class WidthError(SchemaError):
    category = "schema.width"


class KindError(SchemaError):
    category = "schema.kind"


class CorruptFileError(SchemaError):
    category = "schema.corrupt"


class DataError(RadlocError, ValueError):
    """Well-formed input whose values cannot be used."""

    exit_code = 2
    category = "data"


class CellError(DataError):
    category = "data.cell"


class GeometryError(DataError):
    category = "data.geometry"


class NumericError(RadlocError, ArithmeticError):
    """Degenerate numerical situation (zero IQR, zero-norm vector, ...)."""

    exit_code = 3
    category = "numeric"
