"""The ``.i2d`` modeling language: parsing, printing and schema imports."""

from .imports import ImportError_, file_loader, resolve_imports, search_path
from .lexer import Location, ParseError
from .parser import (
    ScriptStatement,
    SourceModel,
    parse,
    parse_file,
    parse_raw,
    parse_script,
)
from .printer import print_diagram

__all__ = [
    "ImportError_",
    "Location",
    "ParseError",
    "ScriptStatement",
    "SourceModel",
    "file_loader",
    "parse",
    "parse_file",
    "parse_raw",
    "parse_script",
    "print_diagram",
    "resolve_imports",
    "search_path",
]
