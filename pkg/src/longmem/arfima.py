"""Simulation of Gaussian ARFIMA(p, d, 0) series with a sparse AR part.

The model is ``(1 - sum_k phi_k L^k) (1 - L)^d x_t = eps_t``. Fractional
noise is built as a truncated MA(inf) filter of the innovations using the
expansion weights of ``(1 - L)^(-d)``, then passed through the AR recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .errors import ConfigError
from .series import ReturnSeries

MAX_AR_LAG = 10
MIN_TRUNCATION = 1000


@dataclass(frozen=True)
class ArfimaSpec:
    """Sparse AR coefficients ``{lag: phi}``, fractional order ``d`` and the
    standard deviation of the Gaussian innovations."""

    ar_coeffs: Mapping[int, float] = field(default_factory=dict)
    d: float = 0.0
    innovation_sd: float = 1.0

    def __post_init__(self):
        coeffs = {int(k): float(v) for k, v in dict(self.ar_coeffs).items() if float(v) != 0.0}
        if any(k < 1 or k > MAX_AR_LAG for k in coeffs):
            raise ConfigError(f"AR lags must lie in 1..{MAX_AR_LAG}, got {sorted(coeffs)}")
        if not abs(self.d) < 0.5:
            raise ConfigError(f"|d| must be < 0.5, got d={self.d}")
        if not self.innovation_sd > 0:
            raise ConfigError("innovation_sd must be positive")
        object.__setattr__(self, "ar_coeffs", dict(sorted(coeffs.items())))
        if coeffs and not _is_stationary(self.ar_polynomial()):
            raise ConfigError(f"AR polynomial {self.ar_coeffs} is not stationary")

    def ar_polynomial(self) -> np.ndarray:
        """Coefficients ``[1, -phi_1, ..., -phi_p]`` of the AR operator."""
        p = max(self.ar_coeffs, default=0)
        a = np.zeros(p + 1)
        a[0] = 1.0
        for lag, phi in self.ar_coeffs.items():
            a[lag] = -phi
        return a

    def to_dict(self) -> dict:
        return {
            "ar_coeffs": {str(k): v for k, v in self.ar_coeffs.items()},
            "d": self.d,
            "innovation_sd": self.innovation_sd,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ArfimaSpec":
        return cls({int(k): v for k, v in data.get("ar_coeffs", {}).items()}, data.get("d", 0.0),
                   data.get("innovation_sd", 1.0))


def _is_stationary(a: np.ndarray) -> bool:
    # roots of z^p a(1/z) must lie strictly inside the unit circle
    roots = np.roots(a)
    return bool(np.all(np.abs(roots) < 1.0))


@dataclass(frozen=True)
class SimConfig:
    """Output length ``T``, discarded warm-up ``burn_in`` (``None`` means the
    MA truncation length) and the RNG seed."""

    T: int
    seed: int
    burn_in: Optional[int] = None

    def __post_init__(self):
        if int(self.T) < 16:
            raise ConfigError(f"T must be >= 16, got {self.T}")
        if self.burn_in is not None and int(self.burn_in) < 0:
            raise ConfigError("burn_in must be >= 0")


def _psi_recursion(d: float, M: int) -> np.ndarray:
    psi = np.empty(M + 1)
    psi[0] = 1.0
    for j in range(1, M + 1):
        psi[j] = psi[j - 1] * (j - 1 + d) / j
    return psi


def frac_coeffs(d: float, M: int) -> np.ndarray:
    """MA(inf) weights ``psi_0..psi_M`` of ``(1 - L)^(-d)``.

    ``psi_0 = 1`` and ``psi_j = psi_{j-1} (j - 1 + d) / j``.
    """
    if not abs(d) < 0.5:
        raise ConfigError(f"|d| must be < 0.5, got d={d}")
    if M < 1:
        raise ConfigError("M must be >= 1")
    return _psi_recursion(d, int(M))


def truncation_length(T: int) -> int:
    return max(MIN_TRUNCATION, int(T))


def simulate(spec: ArfimaSpec, cfg: SimConfig) -> ReturnSeries:
    """Draw one ARFIMA(p, d, 0) path of length ``cfg.T``.

    Innovations are standard Gaussian scaled by ``spec.innovation_sd``. The
    MA(inf) filter is truncated at ``M = max(1000, T)`` lags and, unless
    overridden, ``M`` leading values are discarded as burn-in. The same seed
    always yields the same innovations, so paths for different ``d`` and AR
    coefficients share their random numbers.
    """
    T = int(cfg.T)
    M = truncation_length(T)
    burn = M if cfg.burn_in is None else int(cfg.burn_in)
    rng = np.random.default_rng(cfg.seed)
    eps = rng.standard_normal(M + burn + T) * spec.innovation_sd

    if spec.d == 0.0:
        u = eps[M:]
    else:
        u = fftconvolve(eps, frac_coeffs(spec.d, M), mode="valid")

    if spec.ar_coeffs:
        x = lfilter([1.0], spec.ar_polynomial(), u)
    else:
        x = u
    x = np.ascontiguousarray(x[burn:])
    assert len(x) == T and np.all(np.isfinite(x))
    return ReturnSeries(x)


def simulate_gaussian(T: int, seed: int) -> ReturnSeries:
    """i.i.d. standard Normal returns; identical to ``simulate`` with d = 0."""
    return simulate(ArfimaSpec(), SimConfig(T, seed))
