"""Interference channel model: gain matrices, SINR, and random topologies.

All quantities are linear scale and SI units (watts, meters). Gains are
dimensionless power ratios; ``gains[i, j]`` is the gain from transmitter i
to receiver j.
"""

from dataclasses import dataclass, field

import numpy as np

# Distances below this are clamped before applying the d^-4 law, so that
# near-coincident endpoints cannot produce unbounded gains.
MIN_DISTANCE_M = 0.1


class StaleBaseError(RuntimeError):
    """The announced (SINR, signal power) pair cannot support an
    incremental SINR reconstruction (zero announced SINR, or an update
    from zero power)."""


@dataclass(frozen=True)
class GainMatrix:
    """Channel gains plus per-link noise floors and power caps.

    gains : (M, M) array, gains[i, j] = power gain from transmitter i to
        receiver j. Diagonal entries are the direct-link gains.
    noise : (M,) array of receiver noise powers, watts.
    max_power : (M,) array of per-link maximum transmit powers, watts.
    """

    gains: np.ndarray
    noise: np.ndarray
    max_power: np.ndarray

    def __post_init__(self):
        g = np.array(self.gains, dtype=float)
        n = np.array(self.noise, dtype=float)
        pmax = np.array(self.max_power, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"gain matrix must be square, got shape {g.shape}")
        m = g.shape[0]
        if m < 1:
            raise ValueError("need at least one link")
        if n.shape != (m,) or pmax.shape != (m,):
            raise ValueError("noise and max_power must be length-M vectors")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("gains must be finite and nonnegative")
        if np.any(np.diag(g) <= 0):
            raise ValueError("direct gains G[i][i] must be positive")
        if np.any(n <= 0):
            raise ValueError("noise powers must be positive")
        if np.any(pmax <= 0):
            raise ValueError("max powers must be positive")
        d = np.diag(g).copy()
        for name, arr in (("gains", g), ("noise", n), ("max_power", pmax),
                          ("_direct", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_links(self) -> int:
        return self.gains.shape[0]

    @property
    def direct(self) -> np.ndarray:
        """Diagonal of the gain matrix (direct-link gains)."""
        return self._direct


@dataclass(frozen=True)
class Topology:
    """Planar link layout: transmitter and receiver coordinates in meters."""

    tx: np.ndarray          # (M, 2)
    rx: np.ndarray          # (M, 2)
    area_side: float

    def __post_init__(self):
        tx = np.array(self.tx, dtype=float)
        rx = np.array(self.rx, dtype=float)
        if tx.shape != rx.shape or tx.ndim != 2 or tx.shape[1] != 2:
            raise ValueError("tx and rx must be (M, 2) coordinate arrays")
        pts = np.vstack([tx, rx])
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if np.any(d <= 0):
            raise ValueError("link endpoints must be pairwise distinct")
        tx.setflags(write=False)
        rx.setflags(write=False)
        object.__setattr__(self, "tx", tx)
        object.__setattr__(self, "rx", rx)

    @property
    def n_links(self) -> int:
        return self.tx.shape[0]


def validate_power(g: GainMatrix, p: np.ndarray) -> np.ndarray:
    """Check that p is a feasible power vector for g and return it as an array."""
    p = np.asarray(p, dtype=float)
    if p.shape != (g.n_links,):
        raise ValueError(f"power vector has shape {p.shape}, expected ({g.n_links},)")
    if np.any(p < 0) or np.any(p > g.max_power):
        raise ValueError("powers must lie in [0, max_power] per link")
    return p


def sinr(g: GainMatrix, p: np.ndarray) -> np.ndarray:
    """Per-link SINR: direct power over (cross interference + noise).

    sinr[i] = G[i][i] p[i] / (sum_{j != i} G[j][i] p[j] + noise[i])
    """
    p = validate_power(g, p)
    direct = g.direct * p
    interference = g.gains.T @ p - direct
    return direct / (interference + g.noise)


def received_signal_power(g: GainMatrix, p: np.ndarray) -> np.ndarray:
    """Received desired-signal power per link: s[j] = G[j][j] p[j]."""
    p = validate_power(g, p)
    return g.direct * p


def sinr_after_own_change(
    i: int,
    p_new_i: float,
    p_old_i: float,
    announced_gamma: np.ndarray,
    announced_signal: np.ndarray,
    gain_row: np.ndarray,
) -> np.ndarray:
    """SINR vector after link i moves its power, reconstructed from
    announced values only.

    Link i needs no global channel knowledge: for itself the SINR scales
    linearly with its own power, and for every other link j the announced
    pair (gamma_j, s_j) yields the total interference-plus-noise
    s_j / gamma_j, which shifts by gain_row[j] * (p_new_i - p_old_i).

    Raises StaleBaseError when the reconstruction is undefined: an update
    from zero power, a zero announced SINR for an active link, or a
    nonpositive reconstructed denominator (inconsistent announcements).
    """
    announced_gamma = np.asarray(announced_gamma, dtype=float)
    announced_signal = np.asarray(announced_signal, dtype=float)
    gain_row = np.asarray(gain_row, dtype=float)
    m = gain_row.shape[0]
    if announced_gamma.shape != (m,) or announced_signal.shape != (m,):
        raise ValueError("announced vectors and gain row must share length")
    if p_new_i == p_old_i:
        return announced_gamma.copy()
    if p_old_i == 0.0 and p_new_i > 0.0:
        raise StaleBaseError(f"link {i}: cannot scale own SINR up from zero power")
    out = np.empty(m)
    out[i] = announced_gamma[i] * p_new_i / p_old_i
    delta = p_new_i - p_old_i
    for j in range(m):
        if j == i:
            continue
        if announced_gamma[j] == 0.0:
            raise StaleBaseError(
                f"link {j}: announced SINR is zero, interference not reconstructible"
            )
        denom = announced_signal[j] / announced_gamma[j] + gain_row[j] * delta
        if denom <= 0.0:
            raise StaleBaseError(f"link {j}: reconstructed denominator {denom} <= 0")
        out[j] = announced_signal[j] / denom
    return out


def generate_topology(
    seed: int,
    n_links: int,
    area_side: float,
    link_length: tuple[float, float],
    noise: float = 1e-7,
    max_power: float = 1e-3,
) -> tuple[Topology, GainMatrix]:
    """Random planar network with d^-4 path-loss gains.

    Transmitters are placed uniformly in an area_side x area_side square;
    each receiver sits at a uniform random angle and uniform random
    distance in link_length from its transmitter, clamped into the square.
    Equal seeds give bit-identical results.
    """
    lo, hi = link_length
    if n_links < 1 or area_side <= 0 or not (0 < lo <= hi):
        raise ValueError("need n_links >= 1, area_side > 0, 0 < min_len <= max_len")
    rng = np.random.default_rng(seed)
    tx = np.empty((n_links, 2))
    rx = np.empty((n_links, 2))
    placed: list[np.ndarray] = []

    def place(candidate_fn):
        # rejection step: redraw until distinct from every placed endpoint
        while True:
            pt = candidate_fn()
            if all(np.linalg.norm(pt - q) > 0.0 for q in placed):
                placed.append(pt)
                return pt

    for k in range(n_links):
        tx[k] = place(lambda: rng.uniform(0.0, area_side, size=2))
    for k in range(n_links):
        def rx_candidate(k=k):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            length = rng.uniform(lo, hi)
            pt = tx[k] + length * np.array([np.cos(angle), np.sin(angle)])
            return np.clip(pt, 0.0, area_side)
        rx[k] = place(rx_candidate)

    topo = Topology(tx=tx, rx=rx, area_side=float(area_side))
    gm = GainMatrix(
        gains=gains_from_positions(topo),
        noise=np.full(n_links, noise),
        max_power=np.full(n_links, max_power),
    )
    return topo, gm


def gains_from_positions(topo: Topology) -> np.ndarray:
    """Two-ray style path loss: G[i][j] = d(T_i, R_j)^-4, distance floored
    at MIN_DISTANCE_M."""
    d = np.linalg.norm(topo.tx[:, None, :] - topo.rx[None, :, :], axis=-1)
    return np.maximum(d, MIN_DISTANCE_M) ** -4.0


# --- structured-text persistence -------------------------------------------

_FILE_TAG = "gain-matrix/v1"


def save_gain_matrix(g: GainMatrix, path) -> None:
    """Write a gain matrix as plain text: tag, link count, gains rows,
    noise vector, max-power vector. Values use %.12g so decimal literals
    round-trip."""
    lines = [f"# {_FILE_TAG}", f"links {g.n_links}", "gains"]
    for row in g.gains:
        lines.append(" ".join(f"{v:.12g}" for v in row))
    lines.append("noise")
    lines.append(" ".join(f"{v:.12g}" for v in g.noise))
    lines.append("max_power")
    lines.append(" ".join(f"{v:.12g}" for v in g.max_power))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_gain_matrix(path) -> GainMatrix:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh]
    lines = [ln for ln in raw if ln and not ln.startswith("#")]
    try:
        if not lines[0].startswith("links "):
            raise ValueError("missing 'links' header")
        m = int(lines[0].split()[1])
        idx = lines.index("gains")
        rows = [np.fromstring(lines[idx + 1 + r], sep=" ") for r in range(m)]
        nidx = lines.index("noise")
        pidx = lines.index("max_power")
        noise = np.fromstring(lines[nidx + 1], sep=" ")
        pmax = np.fromstring(lines[pidx + 1], sep=" ")
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed gain-matrix file {path}: {exc}") from exc
    return GainMatrix(gains=np.vstack(rows), noise=noise, max_power=pmax)


# --- built-in benchmark network ---------------------------------------------

_BENCHMARK8_GAINS = [
    [0.1116, 0.0001, 0.0040, 0.0634, 0.0004, 0.0004, 0.0012, 0.0001],
    [0.0001, 0.4939, 0.0004, 0.0002, 0.0411, 0.0064, 0.0046, 0.0024],
    [0.0004, 0.0003, 0.1586, 0.0039, 0.0015, 0.0043, 0.0006, 0.0013],
    [0.0185, 0.0001, 0.0159, 0.7325, 0.0006, 0.0007, 0.0013, 0.0002],
    [0.0001, 0.0359, 0.0011, 0.0003, 0.2913, 0.1818, 0.0024, 0.0316],
    [0.0001, 0.0127, 0.0010, 0.0002, 0.0321, 0.1142, 0.0010, 0.4109],
    [0.0002, 0.0056, 0.0007, 0.0003, 0.0206, 0.0034, 0.1887, 0.0007],
    [0.0001, 0.0040, 0.0003, 0.0001, 0.0021, 0.0037, 0.0003, 0.1041],
]


def benchmark8() -> GainMatrix:
    """Built-in fully-coupled eight-link benchmark network: measured-style
    gain matrix, 1.0 mW power caps, 0.1 uW noise floors."""
    return GainMatrix(
        gains=np.array(_BENCHMARK8_GAINS),
        noise=np.full(8, 1e-7),
        max_power=np.full(8, 1e-3),
    )
