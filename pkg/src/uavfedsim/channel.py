"""Air-to-ground channel model: line-of-sight mixing, lognormal shadowing,
packet-error bounds, a logistic surrogate over elevation angle, and seeded
uplink outcome sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erf

LOS = "los"
NLOS = "nlos"

# Clamp applied to packet-error samples before the logit transform so the
# regression never sees infinities.
PER_CLAMP = 1e-6

# Largest exponent magnitude fed to exp() inside logistic evaluations.
_EXP_CLIP = 500.0


def db_to_linear(value_db: float) -> float:
    """Convert a decibel quantity to a linear power ratio."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Convert a linear power ratio to decibels."""
    return 10.0 * np.log10(value)


@dataclass(frozen=True)
class PropagationParams:
    """Radio constants of the air-to-ground link, all in linear units.

    ``beta_los``/``beta_nlos`` are channel gains at 1 m reference distance,
    ``alpha_*`` path-loss exponents, ``sigma_*`` the log-scale shadowing
    standard deviations, and ``a1`` (per degree) / ``a2`` shape the
    line-of-sight probability curve. ``tx_power`` and ``noise`` are watts;
    ``snr_threshold`` is the linear SNR below which a packet is lost.
    """

    beta_los: float = db_to_linear(-40.0)
    beta_nlos: float = db_to_linear(-45.0)
    alpha_los: float = 2.2
    alpha_nlos: float = 3.0
    sigma_los: float = 1.0
    sigma_nlos: float = 2.0
    a1: float = 0.3
    a2: float = 5.0
    tx_power: float = db_to_linear(-20.0)
    noise: float = db_to_linear(-95.0)
    snr_threshold: float = 10.0

    def __post_init__(self) -> None:
        for key in ("beta_los", "beta_nlos", "tx_power", "noise", "snr_threshold"):
            if not getattr(self, key) > 0.0:
                raise ValueError(f"{key} must be positive")
        for key in ("sigma_los", "sigma_nlos"):
            if not getattr(self, key) > 0.0:
                raise ValueError(f"{key} must be positive")
        if self.alpha_nlos < self.alpha_los:
            raise ValueError("alpha_nlos must be >= alpha_los")


@dataclass(frozen=True)
class LogisticPerFit:
    """Logistic surrogate 1/(1+exp(slope*theta+offset)) for the average PER.

    ``fit_domain`` is the elevation-angle range (degrees) the fit was built
    over and ``max_abs_error`` the largest deviation from the exact bound
    observed on the fitting grid.
    """

    slope: float
    offset: float
    fit_domain: tuple[float, float] = (0.0, 90.0)
    max_abs_error: float = 0.0

    def __post_init__(self) -> None:
        if not self.slope > 0.0:
            raise ValueError("slope must be positive (PER falls as elevation grows)")


def elevation_angle(uav: np.ndarray, altitude: float, device: np.ndarray) -> np.ndarray:
    """Elevation angle in degrees from a ground device to the UAV.

    Both positions are horizontal [x, y] coordinates (broadcastable arrays
    with last axis 2); the UAV flies at ``altitude`` meters. Directly
    overhead yields exactly 90 degrees.
    """
    if altitude <= 0.0:
        raise ValueError("altitude must be positive")
    uav = np.asarray(uav, dtype=float)
    device = np.asarray(device, dtype=float)
    horiz = np.linalg.norm(uav - device, axis=-1)
    return np.degrees(np.arctan2(altitude, horiz))


def los_probability(theta_deg: np.ndarray, params: PropagationParams) -> np.ndarray:
    """Probability of a line-of-sight link at elevation angle ``theta_deg``."""
    theta_deg = np.asarray(theta_deg, dtype=float)
    z = np.clip(-params.a1 * theta_deg + params.a2, -_EXP_CLIP, _EXP_CLIP)
    return 1.0 / (1.0 + np.exp(z))


def snr_log_mean(distance: np.ndarray, segment: str, params: PropagationParams) -> np.ndarray:
    """Log-scale mean of the lognormal SNR at slant ``distance`` meters."""
    distance = np.asarray(distance, dtype=float)
    if segment == LOS:
        beta, alpha = params.beta_los, params.alpha_los
    elif segment == NLOS:
        beta, alpha = params.beta_nlos, params.alpha_nlos
    else:
        raise ValueError(f"segment must be {LOS!r} or {NLOS!r}, got {segment!r}")
    return np.log(params.tx_power * beta / params.noise) - alpha * np.log(distance)


def phi_cdf(snr_threshold: float, log_mean: np.ndarray, log_std: float) -> np.ndarray:
    """Lognormal CDF at ``snr_threshold``: probability the SNR falls below it."""
    if log_std <= 0.0:
        raise ValueError("log_std must be positive")
    if snr_threshold <= 0.0:
        raise ValueError("snr_threshold must be positive")
    log_mean = np.asarray(log_mean, dtype=float)
    z = (np.log(snr_threshold) - log_mean) / (log_std * np.sqrt(2.0))
    return 0.5 * (1.0 + erf(z))


def per_upper_bound(
    uav: np.ndarray,
    device: np.ndarray,
    params: PropagationParams,
    altitude: float,
) -> np.ndarray:
    """Average packet-error probability of the uplink at the given geometry.

    Mixes the below-threshold probabilities of the LoS and NLoS lognormal
    segments with the LoS-probability weight. Exact (not just an upper
    bound) under the simulated all-or-nothing packet decision.
    """
    uav = np.asarray(uav, dtype=float)
    device = np.asarray(device, dtype=float)
    horiz = np.linalg.norm(uav - device, axis=-1)
    slant = np.hypot(horiz, altitude)
    theta = np.degrees(np.arctan2(altitude, horiz))
    p_los = los_probability(theta, params)
    fail_los = phi_cdf(params.snr_threshold, snr_log_mean(slant, LOS, params), params.sigma_los)
    fail_nlos = phi_cdf(params.snr_threshold, snr_log_mean(slant, NLOS, params), params.sigma_nlos)
    return p_los * fail_los + (1.0 - p_los) * fail_nlos


def approx_per(theta_deg: np.ndarray, fit: LogisticPerFit) -> np.ndarray:
    """Logistic surrogate of the average PER at elevation ``theta_deg``."""
    theta_deg = np.asarray(theta_deg, dtype=float)
    z = np.clip(fit.slope * theta_deg + fit.offset, -_EXP_CLIP, _EXP_CLIP)
    return 1.0 / (1.0 + np.exp(z))


def fit_logistic_per(
    params: PropagationParams,
    altitude: float,
    horizontal_distances: np.ndarray,
) -> LogisticPerFit:
    """Fit the logistic PER surrogate over a grid of horizontal distances.

    Samples the exact average-PER bound on the grid, clamps it away from
    {0, 1}, runs a variance-weighted least squares in logit space for the
    starting point, and polishes with a Levenberg-Marquardt pass on the
    direct residuals. The weighting keeps clamped tail samples from tilting
    the line, so data generated by an exact logistic is recovered to
    machine precision.

    Raises ValueError when the grid is degenerate (all samples equal after
    clamping) or the fitted slope is not positive.
    """
    horizontal_distances = np.asarray(horizontal_distances, dtype=float)
    if horizontal_distances.size < 20:
        raise ValueError("need at least 20 grid samples")
    uav = np.zeros(2)
    devices = np.stack([horizontal_distances, np.zeros_like(horizontal_distances)], axis=-1)
    theta = elevation_angle(uav, altitude, devices)
    per = per_upper_bound(uav, devices, params, altitude)
    clamped = np.clip(per, PER_CLAMP, 1.0 - PER_CLAMP)
    if np.ptp(clamped) == 0.0:
        raise ValueError("degenerate grid: all PER samples equal after clamping")

    logit = np.log(clamped / (1.0 - clamped))
    weights = clamped * (1.0 - clamped)
    design = np.column_stack([-theta, -np.ones_like(theta)])
    start, *_ = np.linalg.lstsq(design * weights[:, None], logit * weights, rcond=None)

    def residuals(coeffs: np.ndarray) -> np.ndarray:
        z = np.clip(coeffs[0] * theta + coeffs[1], -_EXP_CLIP, _EXP_CLIP)
        return 1.0 / (1.0 + np.exp(z)) - per

    solution = least_squares(residuals, x0=start, method="lm")
    slope, offset = solution.x
    if not slope > 0.0:
        raise ValueError("degenerate fit: non-positive slope")
    max_err = float(np.max(np.abs(residuals(solution.x))))
    return LogisticPerFit(
        slope=float(slope),
        offset=float(offset),
        fit_domain=(float(np.min(theta)), float(np.max(theta))),
        max_abs_error=max_err,
    )


@dataclass(frozen=True)
class UplinkSample:
    """Outcome of one uplink attempt: success flag plus link diagnostics."""

    success: bool
    segment: str
    snr: float


def sample_uplink(
    uav: np.ndarray,
    device: np.ndarray,
    params: PropagationParams,
    altitude: float,
    rng: np.random.Generator,
) -> UplinkSample:
    """Draw one uplink outcome at the given geometry.

    The link segment is drawn with the LoS probability, then a lognormal
    SNR for that segment; the packet succeeds iff the SNR clears the
    threshold. Consumes exactly two draws from ``rng``.
    """
    uav = np.asarray(uav, dtype=float)
    device = np.asarray(device, dtype=float)
    horiz = float(np.linalg.norm(uav - device))
    slant = float(np.hypot(horiz, altitude))
    theta = float(np.degrees(np.arctan2(altitude, horiz)))
    p_los = float(los_probability(theta, params))
    if rng.random() < p_los:
        segment, sigma = LOS, params.sigma_los
    else:
        segment, sigma = NLOS, params.sigma_nlos
    mu = float(snr_log_mean(slant, segment, params))
    snr = float(np.exp(rng.normal(mu, sigma)))
    return UplinkSample(success=snr >= params.snr_threshold, segment=segment, snr=snr)
