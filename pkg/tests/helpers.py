"""Small shared test oracles."""

import math

import numpy as np
from scipy.special import ndtr, ndtri


def erfc_cdf(z: float) -> float:
    """Independent normal CDF through libm's erfc."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def fd_power_deriv(gamma: float, eta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite difference of the power curve, written as a
    difference of upper tails so it keeps full relative precision even
    where the power saturates near 1 (large gamma, tiny eta)."""
    a_lo = gamma + ndtri(eta - step)
    a_hi = gamma + ndtri(eta + step)
    return (ndtr(-a_lo) - ndtr(-a_hi)) / (2.0 * step)
