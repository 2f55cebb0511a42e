"""Learnable Gaussian input corruption and its mutual-information bound.

Each input series ``j`` is corrupted as ``x + eta * eps`` with
``eta[j, l] = chi[j] * std[j, l]``: the relative amplitude ``chi`` is shared
across the ``K*M`` entries of a window and stored as ``log_chi`` so that it
stays positive. The Gaussian-channel bound on ``I(x + eta*eps; x)`` then only
depends on ``chi``::

    0.5 * sum_l log(1 + std[j, l]**2 / eta[j, l]**2) = (L/2) * log(1 + chi[j]**-2)

which makes the regularizer invariant to rescaling any individual series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

CHI_FLOOR = 1e-6
LOG_CHI_FLOOR = math.log(CHI_FLOOR)


@dataclass
class NoiseAmplitudes:
    """Relative noise amplitudes for ``P`` input series of ``L`` entries each.

    Attributes
    ----------
    log_chi : ndarray, shape (P,) or (P, L)
        Log relative amplitude, shared over a window by default. The
        ``(P, L)`` form parameterizes every window entry separately.
    std : ndarray, shape (P, L)
        Training-split standard deviation of every input entry. Frozen.
    """

    log_chi: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.log_chi = np.asarray(self.log_chi, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.std.ndim != 2:
            raise ShapeError("std must have shape (n_inputs, window_size)")
        if self.log_chi.shape not in (self.std.shape[:1], self.std.shape):
            raise ShapeError(f"log_chi shape {self.log_chi.shape} incompatible with std {self.std.shape}")
        if np.any(self.std <= 0):
            raise ShapeError("std entries must be positive")

    @classmethod
    def init(cls, std, eta0=0.01, per_entry=False):
        std = np.asarray(std, dtype=np.float64)
        shape = std.shape if per_entry else std.shape[:1]
        return cls(np.full(shape, math.log(eta0)), std)

    @property
    def n_inputs(self):
        return self.std.shape[0]

    @property
    def window_size(self):
        return self.std.shape[1]

    @property
    def per_entry(self):
        return self.log_chi.ndim == 2

    @property
    def chi(self):
        return np.exp(np.maximum(self.log_chi, LOG_CHI_FLOOR))

    @property
    def eta(self):
        chi = self.chi
        if not self.per_entry:
            chi = chi[:, None]
        return chi * self.std

    @property
    def at_floor(self):
        """Series whose amplitude sits on the ``CHI_FLOOR`` clamp."""
        hit = self.log_chi <= LOG_CHI_FLOOR
        return hit.any(axis=-1) if self.per_entry else hit


@dataclass
class BoundValue:
    contributions: np.ndarray
    total: float
    capped: np.ndarray


def corrupt(x_window, amps, rng, eps=None):
    """Add ``eta * eps`` to flattened windows.

    ``x_window`` has shape ``(..., P*L)``. A fresh standard-normal ``eps`` is
    drawn unless one is supplied; it is returned with the corrupted input
    because ``d x_tilde / d eta = eps``.
    """
    x_window = np.asarray(x_window, dtype=np.float64)
    eta = amps.eta.ravel()
    if x_window.shape[-1] != eta.size:
        raise ShapeError(f"window has {x_window.shape[-1]} entries, amplitudes cover {eta.size}")
    if eps is None:
        eps = rng.standard_normal(x_window.shape)
    else:
        eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), x_window.shape)
    return x_window + eta * eps, eps


def _entry_bound(log_chi):
    # 0.5 * log(1 + chi**-2), computed from log_chi for range safety
    return 0.5 * np.log1p(np.exp(-2.0 * np.maximum(log_chi, LOG_CHI_FLOOR)))


def mi_upper_bound(amps):
    """Per-series Gaussian-channel bound on ``I(X_tilde; X)`` in nats."""
    per = _entry_bound(amps.log_chi)
    if amps.per_entry:
        contributions = per.sum(axis=-1)
    else:
        contributions = amps.window_size * per
    return BoundValue(contributions, float(contributions.sum()), amps.at_floor)


def mi_upper_bound_grad(amps):
    """Derivative of the bound total with respect to ``log_chi``."""
    chi2 = np.exp(2.0 * np.maximum(amps.log_chi, LOG_CHI_FLOOR))
    grad = -1.0 / (chi2 + 1.0)
    return grad if amps.per_entry else amps.window_size * grad
