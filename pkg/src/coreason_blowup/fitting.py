# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from coreason_blowup.equations import FloatArray
from coreason_blowup.exceptions import InsufficientDataError
from coreason_blowup.models import DiagnosticsRow, ScalingFit
from coreason_blowup.utils.logger import logger

# RMS of the log-log residual above which a fit is not used for any claim.
RELIABLE_RMS = 0.05
MIN_SCALE_ROWS = 20
MIN_SCALE_DECADES = 2.0


def fit_power_law(
    x: Sequence[float] | FloatArray,
    y: Sequence[float] | FloatArray,
    window: Optional[Tuple[float, float]] = None,
) -> ScalingFit:
    """
    Least-squares fit of log y = log C + k log x.

    Args:
        x: Abscissae (positive).
        y: Ordinates (positive).
        window: Inclusive abscissa range to fit; points outside are reported as excluded.

    Returns:
        The fit with its exponent k, prefactor C, RMS log residual and window.

    Raises:
        InsufficientDataError: If fewer than two usable points fall inside the window.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    usable = np.isfinite(xa) & np.isfinite(ya) & (xa > 0.0) & (ya > 0.0)
    if window is not None:
        usable &= (xa >= window[0]) & (xa <= window[1])
    if np.count_nonzero(usable) < 2:
        raise InsufficientDataError("A power-law fit needs at least two positive points inside the window")

    log_x, log_y = np.log(xa[usable]), np.log(ya[usable])
    slope, intercept = np.polyfit(log_x, log_y, 1)
    residual = float(np.sqrt(np.mean((log_y - (slope * log_x + intercept)) ** 2)))
    reliable = residual <= RELIABLE_RMS
    if not reliable:
        logger.warning(f"Power-law fit unreliable: RMS log residual {residual:.3g} > {RELIABLE_RMS}")
    return ScalingFit(
        abscissae=xa[usable].tolist(),
        ordinates=ya[usable].tolist(),
        exponent=float(slope),
        prefactor=float(math.exp(intercept)),
        residual=residual,
        window=(float(xa[usable].min()), float(xa[usable].max())),
        excluded=xa[~usable].tolist(),
        reliable=reliable,
    )


def fit_scale_law(t: FloatArray, lam: FloatArray, decades: float = 1.0) -> ScalingFit:
    """
    Fits lambda(t) = C (T - t)^p over the last `decades` decades of lambda.

    The blowup time is parametrized as T = t_last + exp(s) so that it always lies beyond the
    data; the starting point is the linear extrapolation of the last two samples.

    Returns:
        A fit with exponent p, prefactor C, offset T and abscissae T - t.
    """
    if t.shape[0] < 3:
        raise InsufficientDataError("A scale-law fit needs at least three samples")
    keep = lam <= lam[-1] * 10.0**decades
    # The window is the final contiguous stretch below the cut.
    start = int(np.flatnonzero(~keep)[-1]) + 1 if np.any(~keep) else 0
    tw, lw = t[start:], lam[start:]
    if tw.shape[0] < 3:
        raise InsufficientDataError("Fewer than three samples in the fit window of lambda")

    slope = (lw[-1] - lw[-2]) / (tw[-1] - tw[-2])
    gap = lw[-1] / -slope if slope < 0.0 else tw[-1] - tw[0]
    gap = max(gap, 1e-3 * (tw[-1] - tw[0]), np.finfo(float).tiny)

    t_last = tw[-1]
    log_l = np.log(lw)

    def residuals(theta: FloatArray) -> FloatArray:
        log_c, p, s = theta
        return np.asarray(log_c + p * np.log(t_last + np.exp(s) - tw) - log_l, dtype=np.float64)

    theta0 = np.array([math.log(lw[-1] / gap), 1.0, math.log(gap)])
    solution = least_squares(residuals, theta0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    log_c, p, s = solution.x
    horizon = float(t_last + math.exp(s))
    rms = float(np.sqrt(np.mean(solution.fun**2)))
    return ScalingFit(
        abscissae=(horizon - tw).tolist(),
        ordinates=lw.tolist(),
        exponent=float(p),
        prefactor=float(math.exp(log_c)),
        residual=rms,
        window=(float(lw.min()), float(lw.max())),
        reliable=rms <= RELIABLE_RMS,
        offset=horizon,
    )


def scale_rows(rows: Sequence[DiagnosticsRow]) -> Tuple[FloatArray, FloatArray]:
    """Times and scales of the rows where lambda is defined."""
    pairs = [(row.t, row.lam) for row in rows if row.lam is not None and row.lam > 0.0]
    if not pairs:
        return np.empty(0), np.empty(0)
    t, lam = np.array(pairs, dtype=np.float64).T
    return t, lam


def check_scale_span(lam: FloatArray) -> None:
    if lam.shape[0] < MIN_SCALE_ROWS:
        raise InsufficientDataError(
            f"Blowup time estimation needs >= {MIN_SCALE_ROWS} rows with lambda defined, got {lam.shape[0]}"
        )
    span = math.log10(lam.max() / lam.min())
    if span < MIN_SCALE_DECADES:
        raise InsufficientDataError(
            f"Blowup time estimation needs lambda to span >= {MIN_SCALE_DECADES} decades, got {span:.2f}"
        )


def estimate_blowup_time(rows: Sequence[DiagnosticsRow], d: int) -> Tuple[float, float]:
    """
    Estimates the blowup time T and the rate exponent p from lambda = C (T - t)^p, fitted over the
    last decade of lambda.

    Args:
        rows: Diagnostics rows in time order.
        d: Spatial dimension (p is expected near 1 for d = 5, above 1 for d = 4).

    Returns:
        The pair (T, p).

    Raises:
        InsufficientDataError: If fewer than 20 rows define lambda or lambda spans < 2 decades.
    """
    t, lam = scale_rows(rows)
    check_scale_span(lam)
    fit = fit_scale_law(t, lam)
    assert fit.offset is not None
    if d >= 5 and abs(fit.exponent - 1.0) > 0.05:
        logger.warning(f"Rate exponent p={fit.exponent:.4f} is not linear in d={d}")
    return fit.offset, fit.exponent
