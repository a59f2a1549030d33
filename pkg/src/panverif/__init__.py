"""panverif: a verification front-end for the Pancake systems language.

Parse annotated Pancake, run it under a reference big-step interpreter with
an explicit I/O-event trace, and transpile it to Viper-style intermediate
verification language text for an external SMT-based backend.
"""

__version__ = "0.1.0"

from .ast import Program, program_to_json, shape_size  # noqa: F401
from .parser import ParseError, SourceFile, parse_program  # noqa: F401
from .printer import pretty_print  # noqa: F401
from .validate import validate_program  # noqa: F401
