"""
Exceptions shared by the library and the command line, plus small helpers
for seeded randomness and input coercion.
"""
from __future__ import annotations

import numpy as np


class DcorException(Exception):
    exit_code = 2

    def __init__(self, message, exit_code=None, payload=None):
        Exception.__init__(self, message)
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        self.payload = payload

    def to_dict(self):
        rv = dict(self.payload or ())
        rv['message'] = self.message
        rv['error'] = type(self).__name__
        return rv


class UsageError(DcorException):
    exit_code = 1


class InvalidInputError(DcorException):
    exit_code = 2


class DimensionError(DcorException):
    exit_code = 2


class DumpError(DcorException):
    """Malformed or inconsistent DCFD container; `code` names the failure."""
    exit_code = 2

    def __init__(self, message, code, payload=None):
        payload = dict(payload or ())
        payload['code'] = code
        DcorException.__init__(self, message, payload=payload)
        self.code = code


class DegenerateError(DcorException):
    exit_code = 3


class TrainingDivergedError(DcorException):
    exit_code = 3


# Absolute threshold under which products of variances / squared norms are
# treated as zero.
DEGENERATE_EPS = 1e-14


def make_rng(seed, *stream):
    """Counter-based generator keyed by `seed` and an optional stream path.

    `make_rng(7, 1)` and `make_rng(7, 2)` are independent; neither touches
    global numpy state.
    """
    key = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(key))


def as_matrix(values, name="batch"):
    """Promote vectors to n×1 matrices and validate a real, finite 2-D array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must have n >= 1 and p >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def same_n(*arrays, minimum=1):
    n = arrays[0].shape[0]
    for arr in arrays[1:]:
        if arr.shape[0] != n:
            raise DimensionError(
                f"sample counts differ: {n} vs {arr.shape[0]}",
                payload={'n': [a.shape[0] for a in arrays]})
    if n < minimum:
        raise DimensionError(f"need at least {minimum} samples, got {n}",
                             payload={'n': n, 'minimum': minimum})
    return n
