"""DRLP property language: parsing, printing, and concretization."""
from .classify import PartitionedProperty, classify_parts
from .errors import (ClassificationError, DrlpError, DrlpSyntaxError, ExpansionError,
                     SemanticError, UnknownParameter)
from .printer import to_source
from .script import (DrlpScript, DrlpTemplate, concretize, concretize_many,
                     expand_iterables, load, parse)

__all__ = [
    "ClassificationError", "DrlpError", "DrlpScript", "DrlpSyntaxError", "DrlpTemplate",
    "ExpansionError", "PartitionedProperty", "SemanticError", "UnknownParameter",
    "classify_parts", "concretize", "concretize_many", "expand_iterables", "load", "parse",
    "to_source",
]
