"""Localization masks from similarity maps."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadArea, EmptyInput, NaNInput, TooFewSamples, ValidationError

NEGATIVE_CONDITIONS = ("silence", "noise", "offscreen")


def quantile(xs, q):
    """Quantile with linear interpolation between order statistics."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise EmptyInput("quantile of an empty list")
    if np.isnan(xs).any():
        raise NaNInput("quantile input contains NaN")
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"q={q} outside [0, 1]")
    s = np.sort(xs)
    p = (s.size - 1) * q
    lo = math.floor(p)
    if lo + 1 >= s.size:
        return float(s[lo])
    return float(s[lo] + (p - lo) * (s[lo + 1] - s[lo]))


@dataclass(frozen=True)
class UniversalThreshold:
    theta: float
    n_calibration: int
    source_conditions: tuple = NEGATIVE_CONDITIONS


def universal_threshold(negative_maxima, source_conditions=NEGATIVE_CONDITIONS):
    """Third quartile of the max-pooled similarity over negative cases."""
    xs = np.asarray(negative_maxima, dtype=np.float64).ravel()
    if xs.size < 4:
        raise TooFewSamples(f"need at least 4 negative maxima, got {xs.size}")
    return UniversalThreshold(
        theta=quantile(xs, 0.75),
        n_calibration=int(xs.size),
        source_conditions=tuple(source_conditions),
    )


def binarize_fixed(s, theta):
    return np.asarray(s, dtype=np.float64) > theta


def binarize_adaptive(s, area):
    """Keep the ``area`` largest cells; ties go to the earliest row-major cell."""
    s = np.asarray(s, dtype=np.float64)
    if not 1 <= area <= s.size:
        raise BadArea(f"area {area} outside [1, {s.size}]")
    order = np.argsort(-s.ravel(), kind="stable")
    bits = np.zeros(s.size, dtype=bool)
    bits[order[:area]] = True
    return bits.reshape(s.shape)
