"""Per-link Gibbs update kernels.

Each update draws a link's next transmit power from a Boltzmann-type
distribution with log-weight -beta/U over candidate powers, where U is the
system utility the link predicts for each candidate. Everything is
computed in log-domain with max-subtraction so large beta cannot
underflow. beta = 0 explores uniformly; beta = inf is handled symbolically
as a uniform draw over the argmax-utility candidate set.
"""

import math
from dataclasses import dataclass

import numpy as np

from gibbspower import channel
from gibbspower.channel import StaleBaseError


def validate_beta(beta) -> float:
    """Temperature parameter: nonnegative float, inf allowed."""
    b = float(beta)
    if math.isnan(b) or b < 0.0:
        raise ValueError(f"beta must be >= 0 or inf, got {beta!r}")
    return b


@dataclass(frozen=True)
class PowerGrid:
    """Per-link discrete power levels {0, dP_i, 2 dP_i, ..., max_power_i},
    with dP_i = max_power_i / (L_i - 1)."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) < 1:
            raise ValueError("grid needs at least one link")
        frozen = []
        for i, lv in enumerate(self.levels):
            lv = np.array(lv, dtype=float)
            if lv.ndim != 1 or lv.size < 2:
                raise ValueError(f"link {i}: need at least 2 levels")
            if lv[0] != 0.0:
                raise ValueError(f"link {i}: levels must start at 0")
            if np.any(np.diff(lv) <= 0):
                raise ValueError(f"link {i}: levels must be strictly increasing")
            lv.setflags(write=False)
            frozen.append(lv)
        object.__setattr__(self, "levels", tuple(frozen))

    @classmethod
    def from_counts(cls, max_power, counts) -> "PowerGrid":
        max_power = np.atleast_1d(np.asarray(max_power, dtype=float))
        counts = np.broadcast_to(np.asarray(counts, dtype=int), max_power.shape)
        if np.any(counts < 2):
            raise ValueError("need at least 2 levels per link")
        return cls(tuple(np.linspace(0.0, p, int(c)) for p, c in zip(max_power, counts)))

    @property
    def n_links(self) -> int:
        return len(self.levels)

    @property
    def counts(self) -> tuple:
        return tuple(lv.size for lv in self.levels)

    def step(self, i: int) -> float:
        lv = self.levels[i]
        return float(lv[-1] / (lv.size - 1))

    @property
    def size(self) -> int:
        """Number of joint power vectors."""
        return int(np.prod([lv.size for lv in self.levels], dtype=object))


@dataclass(frozen=True)
class DiscreteDistribution:
    """Categorical update distribution over a link's power levels."""

    levels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if probs.shape != levels.shape or probs.ndim != 1:
            raise ValueError("levels and probs must be matching 1-D arrays")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    def sample_index(self, rng) -> int:
        # one uniform draw per sample keeps parallel runs rng-aligned
        u = rng.random()
        return min(int(np.searchsorted(self._cum, u, side="right")), self.probs.size - 1)

    def sample(self, rng) -> float:
        return float(self.levels[self.sample_index(rng)])


@dataclass(frozen=True)
class ContinuousDistribution:
    """Normalized density tabulated on a uniform power grid, sampled by
    inverse transform on the piecewise-linear CDF."""

    points: np.ndarray
    density: np.ndarray
    cdf: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        den = np.asarray(self.density, dtype=float)
        cdf = np.asarray(self.cdf, dtype=float)
        if not (pts.shape == den.shape == cdf.shape) or pts.ndim != 1:
            raise ValueError("points, density, cdf must be matching 1-D arrays")
        if np.any(den < 0) or abs(cdf[-1] - 1.0) > 1e-9 or np.any(np.diff(cdf) < 0):
            raise ValueError("density must be nonnegative with a valid CDF")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "density", den)
        object.__setattr__(self, "cdf", cdf)

    def sample(self, rng) -> float:
        return float(np.interp(rng.random(), self.cdf, self.points))


def sample(dist, rng) -> float:
    """Draw one power value from an update distribution."""
    return dist.sample(rng)


def gibbs_weight(u_value: float, beta) -> float:
    """Log-domain Gibbs weight -beta/u for one candidate's utility.

    u = 0 returns -inf (weight 0, the U -> 0+ limit) except at beta = 0,
    which weights every candidate equally. Infinite beta also returns
    -inf for finite u; the distribution builders never use this scalar
    form there, they take the argmax set instead.
    """
    beta = validate_beta(beta)
    if u_value < 0 or math.isnan(u_value):
        raise ValueError(f"utility must be >= 0, got {u_value}")
    if beta == 0.0:
        return 0.0
    if u_value == 0.0:
        return -math.inf
    return -beta / u_value


def log_weights(utilities: np.ndarray, beta) -> np.ndarray:
    """Vectorized gibbs_weight with the symbolic-infinity convention:
    beta = inf gives 0 on the argmax-utility set and -inf elsewhere."""
    utilities = np.asarray(utilities, dtype=float)
    if np.any(utilities < 0) or np.any(np.isnan(utilities)):
        raise ValueError("utilities must be nonnegative")
    beta = validate_beta(beta)
    if beta == 0.0:
        return np.zeros(utilities.shape)
    if math.isinf(beta):
        out = np.full(utilities.shape, -np.inf)
        out[utilities == utilities.max()] = 0.0
        return out
    out = np.full(utilities.shape, -np.inf)
    np.divide(-beta, utilities, out=out, where=utilities > 0.0)
    return out


def boltzmann_probs(utilities: np.ndarray, beta) -> np.ndarray:
    """Normalized categorical probabilities proportional to exp(-beta/U),
    max-subtracted. All-zero weights (every utility 0 at beta > 0) fall
    back to uniform."""
    lw = log_weights(utilities, beta)
    m = lw.max()
    if m == -np.inf:
        return np.full(lw.shape, 1.0 / lw.size)
    w = np.exp(lw - m)
    return w / w.sum()


def density_distribution(points: np.ndarray, utilities: np.ndarray, beta) -> object:
    """Continuous update distribution on a uniform candidate grid.

    Normalizes exp(-beta/U) by trapezoid quadrature and tabulates the CDF
    for inverse-transform sampling. All-zero weights fall back to the
    uniform density. At beta = inf the density degenerates to point
    masses, returned as a uniform DiscreteDistribution over the tabulated
    argmax set.
    """
    points = np.asarray(points, dtype=float)
    lw = log_weights(utilities, beta)
    if math.isinf(validate_beta(beta)):
        sel = np.nonzero(lw == 0.0)[0]
        return DiscreteDistribution(levels=points[sel],
                                    probs=np.full(sel.size, 1.0 / sel.size))
    m = lw.max()
    if m == -np.inf:
        w = np.ones(points.shape)
    else:
        w = np.exp(lw - m)
    seg = 0.5 * (w[1:] + w[:-1]) * np.diff(points)
    raw = np.concatenate([[0.0], np.cumsum(seg)])
    z = raw[-1]
    if z == 0.0:
        w = np.ones(points.shape)
        seg = 0.5 * (w[1:] + w[:-1]) * np.diff(points)
        raw = np.concatenate([[0.0], np.cumsum(seg)])
        z = raw[-1]
    density = w / z
    cdf = raw / z
    cdf[-1] = 1.0
    return ContinuousDistribution(points=points, density=density, cdf=cdf)


def discrete_update(i, beta, grid: PowerGrid, candidate_sinrs, u, link_ids=None):
    """Per-link conditional over grid levels: one candidate SINR vector
    per level of link i, scored by u."""
    levels = grid.levels[i]
    cand = np.asarray(candidate_sinrs, dtype=float)
    if cand.ndim != 2 or cand.shape[0] != levels.size:
        raise ValueError(
            f"need one SINR row per level: got {cand.shape}, expected ({levels.size}, M)"
        )
    utilities = u.value_rows(cand, ids=link_ids)
    return DiscreteDistribution(levels=levels, probs=boltzmann_probs(utilities, beta))


def continuous_update(i, beta, n_points: int, sinr_fn, u, max_power_i: float,
                      link_ids=None):
    """Continuous per-link conditional tabulated on n_points uniform
    candidates in [0, max_power_i]. sinr_fn maps one candidate power for
    link i to the predicted full SINR vector."""
    if n_points < 16:
        raise ValueError("need n_points >= 16")
    x = np.linspace(0.0, max_power_i, n_points)
    first = np.asarray(sinr_fn(float(x[0])), dtype=float)
    rows = np.empty((n_points, first.size))
    rows[0] = first
    for k in range(1, n_points):
        rows[k] = sinr_fn(float(x[k]))
    utilities = u.value_rows(rows, ids=link_ids)
    return density_distribution(x, utilities, beta)


def iglad_sinr_estimate(i, p_candidate, p_old_i, announced_gamma,
                        announced_signal, gain_row) -> np.ndarray:
    """Predicted SINR vector if link i moved to p_candidate, using the
    last-heard announcements, which may be stale. Strict: raises
    StaleBaseError on the same degenerate inputs as the fresh
    reconstruction (it is the identical formula, only the inputs age)."""
    return channel.sinr_after_own_change(
        i, p_candidate, p_old_i, announced_gamma, announced_signal, gain_row
    )


def _stale_candidate_rows(i, x, p_old_i, announced_gamma, announced_signal,
                          gain_row, cols) -> np.ndarray:
    """Strict vectorized form of iglad_sinr_estimate over candidates x,
    restricted to the link columns in cols."""
    announced_gamma = np.asarray(announced_gamma, dtype=float)
    announced_signal = np.asarray(announced_signal, dtype=float)
    gain_row = np.asarray(gain_row, dtype=float)
    x = np.asarray(x, dtype=float)
    rows = np.empty((x.size, len(cols)))
    delta = x - p_old_i
    for k, j in enumerate(cols):
        if j == i:
            if p_old_i == 0.0 and np.any(x > 0.0):
                raise StaleBaseError(f"link {i}: cannot scale own SINR up from zero power")
            rows[:, k] = announced_gamma[i] * x / p_old_i if p_old_i > 0 else 0.0
        else:
            if announced_gamma[j] == 0.0:
                raise StaleBaseError(
                    f"link {j}: announced SINR is zero, interference not reconstructible"
                )
            denom = announced_signal[j] / announced_gamma[j] + gain_row[j] * delta
            if np.any(denom <= 0.0):
                raise StaleBaseError(f"link {j}: reconstructed denominator <= 0")
            rows[:, k] = announced_signal[j] / denom
    return rows


def iglad_update(i, beta, n_points: int, p_old_i, announced_gamma,
                 announced_signal, gain_row, max_power_i: float, u):
    """Continuous update driven by last-heard (possibly stale)
    announcements instead of fresh ones."""
    if n_points < 16:
        raise ValueError("need n_points >= 16")
    x = np.linspace(0.0, max_power_i, n_points)
    cols = list(range(len(np.asarray(gain_row))))
    rows = _stale_candidate_rows(i, x, p_old_i, announced_gamma,
                                 announced_signal, gain_row, cols)
    utilities = u.value_rows(rows, ids=tuple(cols))
    return density_distribution(x, utilities, beta)


def niglad_update(i, neighborhood, beta, n_points: int, p_old_i,
                  announced_gamma, announced_signal, gain_row,
                  max_power_i: float, u):
    """As iglad_update, but the utility sees only the SINR subvector of
    the links in neighborhood (which must contain i)."""
    if i not in neighborhood:
        raise ValueError(f"link {i} must belong to its own neighborhood")
    if n_points < 16:
        raise ValueError("need n_points >= 16")
    cols = sorted(neighborhood)
    x = np.linspace(0.0, max_power_i, n_points)
    rows = _stale_candidate_rows(i, x, p_old_i, announced_gamma,
                                 announced_signal, gain_row, cols)
    utilities = u.value_rows(rows, ids=tuple(cols))
    return density_distribution(x, utilities, beta)


def candidate_sinr_matrix(i, candidates, p_current_i, direct_gain_i,
                          announced_signal, interference, gain_row, noise,
                          cols=None) -> np.ndarray:
    """Best-effort candidate SINR rows from possibly stale announcements.

    Robust counterpart of _stale_candidate_rows for the running engine:
    interference[j] is the listener's lazily maintained estimate of the
    interference-plus-noise power at receiver j (s_j / gamma_j from the
    last nonzero announcement, noise[j] before any), so silent or
    never-heard links never divide by zero. Their columns are zero, since
    an announced signal power of zero means the link radiates nothing.
    Column i comes from the locally measured own-receiver estimate, which
    stays defined when this link currently transmits nothing. Stale
    denominators are floored at the receiver noise power.
    """
    x = np.asarray(candidates, dtype=float)
    gain_row = np.asarray(gain_row, dtype=float)
    if cols is None:
        cols = np.arange(gain_row.size)
    else:
        cols = np.asarray(cols, dtype=int)
    s = np.asarray(announced_signal, dtype=float)[cols]
    base = np.asarray(interference, dtype=float)[cols]
    g = gain_row[cols]
    denom = base[None, :] + g[None, :] * (x - p_current_i)[:, None]
    denom = np.maximum(denom, np.asarray(noise, dtype=float)[cols][None, :])
    out = s[None, :] / denom
    own = np.nonzero(cols == i)[0]
    if own.size:
        own_base = max(float(interference[i]), float(noise[i]))
        out[:, own[0]] = direct_gain_i * x / own_base
    return out
