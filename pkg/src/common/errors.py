"""
errors.py
---------
Error taxonomy shared by every part of the lab.

Each error carries a machine-readable ``category`` and the process exit code
the CLI returns for it.  Most also derive from the builtin exception a caller
would naturally catch (ValueError / RuntimeError).
"""

from __future__ import annotations


class LabError(Exception):
    category = "lab_error"
    exit_code = 1


class ConfigError(LabError, ValueError):
    category = "config_error"
    exit_code = 2


class ShapeError(LabError, ValueError):
    category = "shape_error"
    exit_code = 3


class NonFiniteError(LabError, ValueError):
    category = "non_finite"
    exit_code = 4


class LabelError(LabError, ValueError):
    category = "label_error"
    exit_code = 5


class IdxFormatError(LabError, ValueError):
    category = "data_error"
    exit_code = 6


class BadMagicError(IdxFormatError):
    pass


class TruncatedError(IdxFormatError):
    pass


class DimMismatchError(IdxFormatError):
    pass


class MissingFileError(IdxFormatError):
    pass


class PixelRangeError(IdxFormatError):
    pass


class TrainingDivergedError(LabError, RuntimeError):
    category = "diverged"
    exit_code = 7
