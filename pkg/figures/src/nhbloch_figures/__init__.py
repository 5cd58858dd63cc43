"""Figure scripts for nhbloch CLI artifacts."""

from .render import render
from .schemas import SchemaError

__all__ = ["render", "SchemaError"]
