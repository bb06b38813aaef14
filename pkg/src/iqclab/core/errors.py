"""Base exception hierarchy shared by the numerical modules and the CLI.

Modules declare their own specific errors next to the code that raises them;
they only need to pick the right base here so the CLI can map them to an exit status:

  ValidationFailure -> exit 2 (bad input, nothing computed)
  NumericalFailure  -> exit 3 (the computation ran but could not be trusted)
"""
from __future__ import annotations


class IqcLabError(Exception):
    pass


class ValidationFailure(IqcLabError, ValueError):
    pass


class NumericalFailure(IqcLabError, RuntimeError):
    pass
