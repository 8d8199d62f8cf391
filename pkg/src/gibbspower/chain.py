"""Exact finite-state analysis of the discrete update process.

Enumerates the joint power lattice, builds the event-averaged transition
matrix from the same per-link kernel the simulator samples from, and
evaluates the closed-form stationary law exp(-beta/U)/Z together with its
mean, variance, variance bound, threshold solvers, and spectral mixing
rate. Everything here is a desk-scale verification tool, hence the hard
state-space caps.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from gibbspower import channel, sampler

STATE_CAP_MATRIX = 4096          # dense transition-matrix / spectral work
STATE_CAP_DISTRIBUTION = 65536   # closed-form stationary law only


class StateSpaceCapError(ValueError):
    def __init__(self, size: int, cap: int, what: str):
        self.size = size
        self.cap = cap
        super().__init__(
            f"{what} needs {size} states but the cap is {cap}; "
            f"pass cap={size} explicitly to override"
        )


@dataclass(frozen=True)
class StateSpace:
    """All joint power vectors of a grid, mixed-radix indexed with link 0
    as the most significant digit."""

    grid: sampler.PowerGrid
    counts: tuple = field(init=False)
    strides: np.ndarray = field(init=False)
    powers: np.ndarray = field(init=False)       # (S, M)
    digits: np.ndarray = field(init=False)       # (S, M) level indices

    def __post_init__(self):
        counts = self.grid.counts
        size = int(np.prod(counts, dtype=object))
        strides = np.ones(len(counts), dtype=np.int64)
        for i in range(len(counts) - 2, -1, -1):
            strides[i] = strides[i + 1] * counts[i + 1]
        idx = np.arange(size, dtype=np.int64)
        digits = np.empty((size, len(counts)), dtype=np.int64)
        powers = np.empty((size, len(counts)))
        for i, c in enumerate(counts):
            digits[:, i] = (idx // strides[i]) % c
            powers[:, i] = self.grid.levels[i][digits[:, i]]
        for name, arr in (("strides", strides), ("powers", powers), ("digits", digits)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "counts", counts)

    @property
    def size(self) -> int:
        return self.powers.shape[0]

    @property
    def n_links(self) -> int:
        return len(self.counts)

    def index_of(self, p) -> int:
        return int(self.indices_of(np.asarray(p, dtype=float)[None, :])[0])

    def indices_of(self, rows: np.ndarray) -> np.ndarray:
        """Map exact on-grid power vectors (rows) to state indices."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.n_links:
            raise ValueError(f"expected (K, {self.n_links}) power rows")
        idx = np.zeros(rows.shape[0], dtype=np.int64)
        for i in range(self.n_links):
            lv = self.grid.levels[i]
            d = np.searchsorted(lv, rows[:, i])
            d = np.minimum(d, lv.size - 1)
            if not np.all(lv[d] == rows[:, i]):
                raise ValueError(f"link {i}: power value off the grid")
            idx += d * self.strides[i]
        return idx


def _check_cap(size: int, cap: int, what: str) -> None:
    if size > cap:
        raise StateSpaceCapError(size, cap, what)


def state_sinrs(gm: channel.GainMatrix, space: StateSpace) -> np.ndarray:
    """True SINR vector of every state, (S, M)."""
    p = space.powers
    direct = p * gm.direct
    total = p @ gm.gains
    return direct / (total - direct + gm.noise)


def state_utilities(gm: channel.GainMatrix, space: StateSpace, u) -> np.ndarray:
    ids = tuple(range(space.n_links))
    return u.value_rows(state_sinrs(gm, space), ids=ids)


def stationary_distribution(gm, grid, u, beta, cap: int = STATE_CAP_DISTRIBUTION,
                            utilities=None, space: StateSpace | None = None) -> np.ndarray:
    """Closed-form stationary law: probability proportional to
    exp(-beta/U(state)), the same kernel the per-link sampler uses, so the
    conventions (beta 0 or inf, all-zero utilities) match by construction."""
    if space is None:
        space = StateSpace(grid)
    _check_cap(space.size, cap, "stationary distribution")
    if utilities is None:
        utilities = state_utilities(gm, space, u)
    return sampler.boltzmann_probs(utilities, beta)


def build_transition_matrix(gm, grid, u, beta, cap: int = STATE_CAP_MATRIX,
                            space: StateSpace | None = None,
                            utilities=None) -> np.ndarray:
    """Event-averaged transition matrix: a uniformly random link resamples
    its own coordinate from the per-link conditional, everything else
    frozen. Rows are built by the sampler's own discrete_update so the
    analysis and the simulator share one kernel."""
    if space is None:
        space = StateSpace(grid)
    s = space.size
    _check_cap(s, cap, "transition matrix")
    m = space.n_links
    sinr_all = state_sinrs(gm, space)
    ids = tuple(range(m))
    pi = np.zeros((s, s))
    idx = np.arange(s, dtype=np.int64)
    for i in range(m):
        stride = int(space.strides[i])
        li = space.counts[i]
        base = idx - space.digits[:, i] * stride
        fibers = np.unique(base)
        offsets = stride * np.arange(li, dtype=np.int64)
        for b in fibers:
            cand = b + offsets
            dist = sampler.discrete_update(i, beta, grid, sinr_all[cand], u,
                                           link_ids=ids)
            # the conditional is the same from every state of the fiber
            pi[np.ix_(cand, cand)] += dist.probs[None, :] / m
    return pi


@dataclass(frozen=True)
class ChainModel:
    space: StateSpace
    beta: float
    utilities: np.ndarray
    pi: np.ndarray
    omega: np.ndarray
    lambda2: float
    optimal_value: float
    optimal_set: np.ndarray     # state indices, exact float-equality ties

    @property
    def size(self) -> int:
        return self.space.size


def second_eigenvalue_magnitude(pi: np.ndarray) -> float:
    """|second-largest| eigenvalue magnitude of a row-stochastic matrix,
    multiplicity-aware (the leading 1 is removed once)."""
    vals = np.linalg.eigvals(pi)
    mags = np.sort(np.abs(vals))[::-1]
    if mags.size < 2:
        return 0.0
    if not math.isclose(mags[0], 1.0, abs_tol=1e-8):
        raise ArithmeticError(
            f"leading eigenvalue magnitude {mags[0]!r} is not 1; "
            "matrix is not row-stochastic to working precision"
        )
    return float(mags[1])


def build_chain(gm, grid, u, beta, cap: int = STATE_CAP_MATRIX) -> ChainModel:
    space = StateSpace(grid)
    _check_cap(space.size, cap, "chain model")
    utilities = state_utilities(gm, space, u)
    pi = build_transition_matrix(gm, grid, u, beta, cap=cap, space=space)
    omega = stationary_distribution(gm, grid, u, beta, cap=cap,
                                    utilities=utilities, space=space)
    lam2 = second_eigenvalue_magnitude(pi)
    ustar = float(utilities.max())
    opt = np.nonzero(utilities == ustar)[0]
    return ChainModel(space=space, beta=sampler.validate_beta(beta),
                      utilities=utilities, pi=pi, omega=omega, lambda2=lam2,
                      optimal_value=ustar, optimal_set=opt)


# --- moments and bounds -----------------------------------------------------

def _utilities_of(gm, grid, u, utilities, space):
    if utilities is not None:
        return np.asarray(utilities, dtype=float)
    return state_utilities(gm, space if space is not None else StateSpace(grid), u)


def mean_utility(gm, grid, u, beta, utilities=None, space=None) -> float:
    utilities = _utilities_of(gm, grid, u, utilities, space)
    probs = sampler.boltzmann_probs(utilities, beta)
    return float(probs @ utilities)


def variance_utility(gm, grid, u, beta, utilities=None, space=None) -> float:
    utilities = _utilities_of(gm, grid, u, utilities, space)
    probs = sampler.boltzmann_probs(utilities, beta)
    mean = probs @ utilities
    return float(probs @ (utilities - mean) ** 2)


def optimal_mass(utilities: np.ndarray, beta) -> float:
    """Total stationary probability sitting on exactly-optimal states."""
    utilities = np.asarray(utilities, dtype=float)
    probs = sampler.boltzmann_probs(utilities, beta)
    return float(probs[utilities == utilities.max()].sum())


def variance_bound(gm, grid, u, beta, utilities=None, space=None) -> float:
    """Decreasing-in-beta envelope of the stationary utility variance,
    driven entirely by how much mass has not yet collected on the optimal
    set: with x = 1 - k * omega(optimal state), the bound is
    Umax^2 x^2 + (Umax - Umin)^2 x."""
    utilities = _utilities_of(gm, grid, u, utilities, space)
    x = 1.0 - optimal_mass(utilities, beta)
    x = max(x, 0.0)
    ustar = float(utilities.max())
    umin = float(utilities.min())
    return ustar * ustar * x * x + (ustar - umin) ** 2 * x


# --- threshold solvers ------------------------------------------------------

_BETA_BRACKET_MAX = 1e18
_BISECT_STEPS = 200


def beta_for_mean(target: float, gm, grid, u, utilities=None, space=None) -> float:
    """Smallest temperature whose stationary mean utility hits target.
    Valid strictly between the uniform-law mean and the maximum utility;
    bisection on the monotone mean."""
    utilities = _utilities_of(gm, grid, u, utilities, space)
    ustar = float(utilities.max())
    mean0 = float(utilities.mean())
    if not mean0 < target < ustar:
        raise ValueError(
            f"target {target} outside the attainable open interval ({mean0}, {ustar})"
        )

    def mean_at(beta):
        probs = sampler.boltzmann_probs(utilities, beta)
        return float(probs @ utilities)

    lo, hi = 0.0, 1.0
    while mean_at(hi) < target:
        lo = hi
        hi *= 2.0
        if hi > _BETA_BRACKET_MAX:
            break
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mean_at(mid) < target:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    if abs(mean_at(beta) - target) > 1e-6 * ustar:
        raise ArithmeticError("bisection on the mean failed to reach tolerance")
    return beta


def beta_for_variance(delta: float, gm, grid, u, utilities=None, space=None) -> float:
    """Smallest temperature whose variance *bound* is at most delta.
    delta at or above the zero-temperature bound needs no concentration at
    all (returns 0); only the infinite-temperature limit attains 0."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    utilities = _utilities_of(gm, grid, u, utilities, space)

    def bound_at(beta):
        return variance_bound(gm, grid, u, beta, utilities=utilities)

    if delta >= bound_at(0.0):
        return 0.0
    if delta == 0.0:
        return math.inf
    lo, hi = 0.0, 1.0
    while bound_at(hi) > delta:
        lo = hi
        hi *= 2.0
        if hi > _BETA_BRACKET_MAX:
            raise ArithmeticError(f"variance bound never reaches {delta}")
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if bound_at(mid) > delta:
            lo = mid
        else:
            hi = mid
    return hi


def optimal_mass_for_variance(delta: float, gm, grid, u, utilities=None,
                              space=None) -> float:
    """Closed-form inversion of the variance bound: the optimal-set mass
    k*omega(optimal) that makes the bound equal delta. Cross-check for the
    numeric solver."""
    utilities = _utilities_of(gm, grid, u, utilities, space)
    ustar = float(utilities.max())
    umin = float(utilities.min())
    gap2 = (ustar - umin) ** 2
    mass = 1.0 + gap2 / (2.0 * ustar * ustar) - math.sqrt(
        delta / (ustar * ustar) + gap2 * gap2 / (4.0 * ustar ** 4)
    )
    return mass


def published_zero_beta_threshold(gm, grid, u, utilities=None, space=None) -> dict:
    """The zero-temperature cutoff for the variance solver, two ways: the
    closed form as published (which exceeds the bound's attainable range;
    its sign convention looks like a typo) and the attainable value the
    numeric solver actually uses. Reported side by side, never silently
    reconciled."""
    if space is None and utilities is None:
        space = StateSpace(grid)
    utilities = _utilities_of(gm, grid, u, utilities, space)
    s = utilities.size
    k = int(np.sum(utilities == utilities.max()))
    ustar = float(utilities.max())
    umin = float(utilities.min())
    y = 1.0 + k / s
    as_published = ustar * ustar * y * y + (ustar - umin) ** 2 * y
    attainable = variance_bound(gm, grid, u, 0.0, utilities=utilities)
    return {"as_published": as_published, "attainable": attainable}


# --- distances and mixing ---------------------------------------------------

def tv_distance(d1, d2) -> float:
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if d1.shape != d2.shape:
        raise ValueError(f"distribution shapes differ: {d1.shape} vs {d2.shape}")
    return 0.5 * float(np.abs(d1 - d2).sum())


def mixing_analysis(model: ChainModel, initial, k_max: int) -> np.ndarray:
    """TV distance to stationarity after k update events, k = 0..k_max."""
    d = np.asarray(initial, dtype=float)
    if d.shape != (model.size,) or abs(d.sum() - 1.0) > 1e-9 or np.any(d < 0):
        raise ValueError("initial must be a distribution over the state space")
    tvs = np.empty(k_max + 1)
    tvs[0] = tv_distance(d, model.omega)
    for k in range(1, k_max + 1):
        d = d @ model.pi
        tvs[k] = tv_distance(d, model.omega)
    return tvs


def fit_decay_rate(tvs: np.ndarray, skip_fraction: float = 0.25,
                   floor: float = 1e-12) -> float:
    """Least-squares slope of log TV(k) over the asymptotic window (skips
    the transient head, stops where TV hits the numerical floor). Returns
    the per-step log decay rate, comparable to log of the second
    eigenvalue magnitude."""
    tvs = np.asarray(tvs, dtype=float)
    k = np.arange(tvs.size)
    valid = tvs > floor
    valid[: int(skip_fraction * tvs.size)] = False
    if valid.sum() < 2:
        raise ValueError("not enough points above the floor to fit a slope")
    slope = np.polyfit(k[valid], np.log(tvs[valid]), 1)[0]
    return float(slope)


def brute_force_optimum(gm, grid, u, cap: int = STATE_CAP_DISTRIBUTION,
                        utilities=None, space: StateSpace | None = None):
    """Exhaustive maximum of the utility over the whole lattice: the value
    and every argmax state index (exact float-equality ties)."""
    if space is None:
        space = StateSpace(grid)
    _check_cap(space.size, cap, "brute-force optimum")
    utilities = _utilities_of(gm, grid, u, utilities, space)
    ustar = float(utilities.max())
    return ustar, np.nonzero(utilities == ustar)[0]


def empirical_occupancy(power_rows: np.ndarray, space: StateSpace) -> np.ndarray:
    """State-visit frequencies of a window of trace power rows."""
    idx = space.indices_of(power_rows)
    counts = np.bincount(idx, minlength=space.size)
    return counts / counts.sum()


def analysis_table(gm, grid, u, betas, matrix_cap: int = STATE_CAP_MATRIX,
                   distribution_cap: int = STATE_CAP_DISTRIBUTION) -> list:
    """One row per temperature: stationary mean, variance, variance bound,
    optimal-set mass, and (when the state space is small enough for dense
    spectral work) the second eigenvalue magnitude."""
    space = StateSpace(grid)
    _check_cap(space.size, distribution_cap, "analysis table")
    utilities = state_utilities(gm, space, u)
    with_spectrum = space.size <= matrix_cap
    rows = []
    for beta in betas:
        beta = sampler.validate_beta(beta)
        lam2 = math.nan
        if with_spectrum:
            pi = build_transition_matrix(gm, grid, u, beta, cap=matrix_cap,
                                         space=space)
            lam2 = second_eigenvalue_magnitude(pi)
        rows.append({
            "beta": beta,
            "mean_utility": mean_utility(gm, grid, u, beta, utilities=utilities),
            "variance": variance_utility(gm, grid, u, beta, utilities=utilities),
            "variance_bound": variance_bound(gm, grid, u, beta, utilities=utilities),
            "prob_optimal": optimal_mass(utilities, beta),
            "lambda2": lam2,
        })
    return rows
