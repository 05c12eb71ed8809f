"""Scalar building blocks: perspective rate, per-stream power, DC penalty."""

from __future__ import annotations

import numpy as np

from ..channel import PhysicalConfig

LN2 = np.log(2.0)


def rate(t, e, h, phys: PhysicalConfig):
    """Achievable rate ``(B/T) t log2(1 + e h / (t n0))`` in bits/s.

    ``t`` is airtime in seconds and ``e`` energy in Joules within one frame.
    The perspective extension gives 0 wherever ``t == 0``. Array inputs
    broadcast.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.any(t < 0) or np.any(e < 0):
        raise ValueError("airtime and energy must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(t > 0, e * h / (np.where(t > 0, t, 1.0) * phys.noise_power), 0.0)
    out = phys.bandwidth / phys.frame_duration * t * np.log1p(snr) / LN2
    return out if out.ndim else float(out)


def optimal_power(a: np.ndarray, b: np.ndarray, rtol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Minimiser over ``p >= 0`` of ``p - sum_k a_k ln(1 + p / b_k)``.

    Solves the stationarity condition ``sum_k a_k / (b_k + p) = 1`` along the
    last axis. The left side is convex and decreasing in ``p``, so Newton's
    method started at ``max_k (a_k - b_k)`` (where the sum is still >= 1)
    increases monotonically to the root. Entries with ``sum_k a_k / b_k <= 1``
    return 0. ``a == 0`` entries are inactive; ``b`` may be ``inf``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    active = a > 0
    bb = np.where(active, b, 1.0)
    slope0 = np.sum(np.where(active, a / bb, 0.0), axis=-1)
    moving = slope0 > 1.0
    p = np.where(moving, np.max(np.where(active, a - bb, -np.inf), axis=-1, initial=-np.inf), 0.0)
    p = np.maximum(p, 0.0)
    for _ in range(max_iter):
        frac = np.where(active, a / (bb + p[..., None]), 0.0)
        f = frac.sum(axis=-1) - 1.0
        df = np.sum(np.where(active, frac / (bb + p[..., None]), 0.0), axis=-1)
        with np.errstate(over="ignore"):  # masked-out entries may overflow
            step = np.where(moving & (df > 0), f / np.where(df > 0, df, 1.0), 0.0)
        step = np.maximum(step, 0.0)
        p = p + step
        if not np.any(step > rtol * np.maximum(p, 1e-300)):
            break
    return p


def stream_values(weights: np.ndarray, gains: np.ndarray):
    """Optimal normalised power and unit value for every (state, stream).

    Parameters
    ----------
    weights : (G, L, K) array
        Non-negative multipliers in normalised units.
    gains : (H, K) array
        Normalised channel gains.

    Returns
    -------
    power, value : (H, G, L) arrays
        ``power`` minimises ``phi(p) = p - sum_k w_k log2(1 + p g_k)`` and
        ``value = phi(power) <= 0``.
    """
    w = weights[None, :, :, :]
    g = gains[:, None, None, :]
    with np.errstate(divide="ignore"):
        b = 1.0 / g
    power = optimal_power(w / LN2, b)
    value = power - np.sum(w * np.log1p(power[..., None] * g) / LN2, axis=-1)
    return power, np.minimum(value, 0.0)


def penalty(y) -> float:
    """``sum y (1 - y)``: zero exactly on binary points."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("selector entries must lie in [0, 1]")
    return float(np.sum(y * (1.0 - y)))


def linearized_penalty(y, y_prev) -> float:
    """First-order expansion of :func:`penalty` at ``y_prev``; bounds it from above."""
    y = np.asarray(y, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    for arr in (y, y_prev):
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("selector entries must lie in [0, 1]")
    return float(np.sum((1.0 - 2.0 * y_prev) * y + y_prev**2))


def block_vertices(levels: int, lo: float, hi: float, cuts=()) -> np.ndarray:
    """Candidate minimisers of a piecewise-affine cost over one selector block.

    The block is ``{y in [0,1]^L : sum y = 1, lo <= sum l y <= hi}``. Its
    vertices lie on edges of the simplex: unit vectors whose level is in
    range, and two-level mixtures hitting ``lo`` or ``hi``. Extra ``cuts``
    (breakpoints of a hinge term) add the mixtures hitting those values, so
    a cost that is affine between breakpoints attains its minimum at one of
    the returned rows.
    """
    bounds = [lo, hi] + [c for c in cuts if lo <= c <= hi]
    rows = []
    for i in range(1, levels + 1):
        if lo - 1e-12 <= i <= hi + 1e-12:
            v = np.zeros(levels)
            v[i - 1] = 1.0
            rows.append(v)
    for i in range(1, levels + 1):
        for j in range(i + 1, levels + 1):
            for bnd in set(bounds):
                if i < bnd < j:
                    v = np.zeros(levels)
                    v[i - 1] = (j - bnd) / (j - i)
                    v[j - 1] = (bnd - i) / (j - i)
                    rows.append(v)
    if not rows:
        raise ValueError(f"empty selector block: levels={levels}, range=[{lo}, {hi}]")
    return np.array(rows)
