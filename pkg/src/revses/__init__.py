"""Reversible session calculi: execution, typing, and analysis.

The package splits along the lines of the theory it implements:

- `syntax`, `types`, `parser`: terms, session types, concrete syntax
- `congruence`, `host`: structural congruence and the plain forward calculus
- `typecheck`: binary session typing, the single-session discipline, and
  typing of tagged running configurations
- `single_session`: the six memory-stack reversibility disciplines
- `respi`, `respic`: tag-and-memory reversibility, without and with commit
- `analysis`: loop, diamond, causal-equivalence and cost checks
- `cli`, `trace`: the `revses` command and its trace file format
"""

from .parser import ParseError, parse_process, parse_type, print_process, print_type
from .primitives import PrimitiveTable, load_primitives
from .typecheck import TypingError, check_simple, is_simple, typecheck_process

__all__ = [
    "ParseError",
    "PrimitiveTable",
    "TypingError",
    "check_simple",
    "is_simple",
    "load_primitives",
    "parse_process",
    "parse_type",
    "print_process",
    "print_type",
    "typecheck_process",
]

__version__ = "0.1.0"
