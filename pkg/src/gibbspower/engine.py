"""Asynchronous power-control simulation.

One ground-truth power vector, M links updating at random epochs. Links
never read the truth directly: every link keeps a heard-table filled only
by control packets (and its own local measurements), and predicts
candidate SINRs from those. The trace records the true SINR and utility
after every event, recomputed from the ground-truth powers.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from gibbspower import channel, sampler

VARIANTS = ("glad-discrete", "glad-continuous", "iglad", "niglad")

# which stimuli make a link emit a control packet, per variant family
_EMIT_ON = {
    "glad": frozenset({"own-update", "sensed-sinr-change", "sensed-signal-change"}),
    "iglad": frozenset({"own-update"}),
    "niglad": frozenset({"own-update"}),
}


def variant_family(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    return "glad" if variant.startswith("glad") else variant


def broadcast_rule(variant: str, event: str) -> bool:
    """Does a link emit a control packet on this stimulus?

    Stimuli: "own-update" (the link just resampled its power),
    "sensed-sinr-change" / "sensed-signal-change" (a measured quantity at
    this link moved because someone else acted).
    """
    if event not in ("own-update", "sensed-sinr-change", "sensed-signal-change"):
        raise ValueError(f"unknown stimulus {event!r}")
    return event in _EMIT_ON[variant_family(variant)]


@dataclass(frozen=True)
class ControlPacket:
    sender: int
    gamma: float
    signal_power: float
    timestamp: float

    def __post_init__(self):
        if self.gamma < 0 or self.signal_power < 0:
            raise ValueError("announced values must be nonnegative")


@dataclass(frozen=True)
class EventQueue:
    """Sorted update epochs: times[k] is when link owners[k] resamples."""

    times: np.ndarray
    owners: np.ndarray

    def __len__(self):
        return self.times.size

    def __iter__(self):
        return zip(self.times.tolist(), self.owners.tolist())


def schedule(n_links: int, rate: float, rng, events=None, seconds=None) -> EventQueue:
    """Merged per-link Poisson update epochs.

    Each link updates as an independent Poisson process of the given rate.
    Sampled by superposition: exponential(1/(M rate)) gaps, each epoch
    owned by a uniformly random link, which realizes exactly that law and
    gives every link asymptotic update share 1/M. Pass either a total
    event count or a time horizon in seconds.
    """
    if rate <= 0 or n_links < 1:
        raise ValueError("need rate > 0 and n_links >= 1")
    if (events is None) == (seconds is None):
        raise ValueError("pass exactly one of events or seconds")
    merged = n_links * rate
    if events is not None:
        if events < 0:
            raise ValueError("events must be >= 0")
        times = np.cumsum(rng.exponential(1.0 / merged, size=int(events)))
    else:
        if seconds < 0:
            raise ValueError("seconds must be >= 0")
        chunks = []
        t = 0.0
        est = max(16, int(merged * seconds * 1.1) + 16)
        while t < seconds:
            gaps = rng.exponential(1.0 / merged, size=est)
            chunks.append(t + np.cumsum(gaps))
            t = chunks[-1][-1]
        times = np.concatenate(chunks)
        times = times[times <= seconds]
    # cumsum can collapse a denormal-small gap; nudge to keep times strict
    for k in np.nonzero(np.diff(times) <= 0)[0]:
        times[k + 1] = np.nextafter(times[k], np.inf)
    owners = rng.integers(0, n_links, size=times.size)
    return EventQueue(times=times, owners=owners)


def compute_neighborhood(i: int, gm: channel.GainMatrix, ctrl_power: float,
                         gamma_bar: float) -> frozenset:
    """Links whose control packets link i accepts: itself, plus every j
    whose packet arrives above the receive-SNR threshold gamma_bar
    (linear). Packet SNR is approximated with the crossed gain G[j][i]."""
    if ctrl_power <= 0 or gamma_bar < 0:
        raise ValueError("need ctrl_power > 0 and gamma_bar >= 0")
    snr = gm.gains[:, i] * ctrl_power / gm.noise[i]
    members = set(np.nonzero(snr > gamma_bar)[0].tolist())
    members.add(i)
    return frozenset(int(j) for j in members)


@dataclass(frozen=True)
class LinkState:
    """One link's local view, assembled on demand from the simulation."""

    link: int
    own_power: float
    heard: dict            # sender -> (gamma, signal_power, last-heard time)
    neighborhood: frozenset


@dataclass
class SimTrace:
    """Per-event history. Row 0 is the initial state (link = -1); row k
    records event k. Powers and SINRs are the full ground-truth vectors
    after the event; utility is recomputed from them every row."""

    times: np.ndarray
    links: np.ndarray
    powers: np.ndarray          # (K+1, M)
    sinrs: np.ndarray           # (K+1, M)
    utility: np.ndarray
    broadcasts: np.ndarray      # cumulative
    processed: np.ndarray       # cumulative
    meta: dict = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return self.times.size - 1

    @property
    def n_links(self) -> int:
        return self.powers.shape[1]

    def tail_slice(self, fraction: float = 0.5) -> slice:
        """Row slice of the last `fraction` of events (at least one)."""
        if not 0 < fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        k = self.n_events
        n_tail = max(1, int(round(k * fraction))) if k else 0
        return slice(self.times.size - n_tail, self.times.size)

    def tail_stats(self, fraction: float = 0.5) -> dict:
        sl = self.tail_slice(fraction)
        tail_u = self.utility[sl]
        first = sl.start
        return {
            "events": self.n_events,
            "tail_events": int(tail_u.size),
            "tail_mean_utility": float(tail_u.mean()) if tail_u.size else math.nan,
            "tail_var_utility": float(tail_u.var()) if tail_u.size else math.nan,
            "broadcasts": int(self.broadcasts[-1]) if self.times.size else 0,
            "processed": int(self.processed[-1]) if self.times.size else 0,
            "tail_broadcasts": int(self.broadcasts[-1] - self.broadcasts[first - 1])
            if first >= 1 else int(self.broadcasts[-1]),
            "tail_processed": int(self.processed[-1] - self.processed[first - 1])
            if first >= 1 else int(self.processed[-1]),
        }

    def to_csv(self, path, per_link: bool = True, thin: int = 1) -> None:
        if thin < 1:
            raise ValueError("thin must be >= 1")
        m = self.n_links
        cols = "time,link,power,utility,broadcasts,processed"
        if per_link:
            cols += "," + ",".join(f"p{j}" for j in range(m))
            cols += "," + ",".join(f"sinr{j}" for j in range(m))
        rows = range(0, self.times.size, thin)
        with open(path, "w") as fh:
            fh.write("# schema=gibbspower/trace/v1\n")
            fh.write(cols + "\n")
            for r in rows:
                link = int(self.links[r])
                own = self.powers[r, link] if link >= 0 else math.nan
                parts = [f"{self.times[r]:.9g}", str(link), f"{own:.9g}",
                         f"{self.utility[r]:.12g}", str(int(self.broadcasts[r])),
                         str(int(self.processed[r]))]
                if per_link:
                    parts += [f"{v:.9g}" for v in self.powers[r]]
                    parts += [f"{v:.9g}" for v in self.sinrs[r]]
                fh.write(",".join(parts) + "\n")


class Simulation:
    """Mutable simulation state for one trial. Use run_simulation() unless
    you need stepwise control."""

    def __init__(self, gm: channel.GainMatrix, u, variant: str, beta, rng,
                 grid: sampler.PowerGrid | None = None, n_points: int = 512,
                 gamma_bar: float | None = None, ctrl_power: float | None = None,
                 track_packets: bool = False):
        self.gm = gm
        self.u = u
        self.variant = variant
        self.family = variant_family(variant)
        self.beta = sampler.validate_beta(beta)
        self.rng = rng
        self.discrete = variant == "glad-discrete"
        m = gm.n_links
        if self.discrete:
            if grid is None:
                raise ValueError("glad-discrete needs a power grid")
            if grid.n_links != m:
                raise ValueError("grid link count does not match the gain matrix")
            for i in range(m):
                if grid.levels[i][-1] > gm.max_power[i]:
                    raise ValueError(f"link {i}: grid exceeds max power")
        elif n_points < 16:
            raise ValueError("need n_points >= 16")
        self.grid = grid
        self.n_points = n_points
        self.all_ids = tuple(range(m))

        if self.family == "niglad":
            if gamma_bar is None or gamma_bar < 0:
                raise ValueError("niglad needs gamma_bar >= 0 (linear)")
            cp = float(ctrl_power) if ctrl_power is not None else float(gm.max_power.max())
            self.neighborhoods = [compute_neighborhood(i, gm, cp, gamma_bar)
                                  for i in range(m)]
            self._cols = [np.array(sorted(s)) for s in self.neighborhoods]
            # accept[listener, sender]: inbound packet passes the SNR filter
            self.accept = np.zeros((m, m), dtype=bool)
            for i, s in enumerate(self.neighborhoods):
                self.accept[i, list(s)] = True
        else:
            self.neighborhoods = [frozenset(range(m)) for _ in range(m)]
            self._cols = [None] * m
            self.accept = np.ones((m, m), dtype=bool)

        self.p = np.zeros(m)
        self.t = 0.0
        # local views, indexed [listener, sender]
        self.heard_gamma = np.zeros((m, m))
        self.heard_signal = np.zeros((m, m))
        self.heard_time = np.full((m, m), -np.inf)
        # lazily maintained interference-plus-noise estimates, [listener, receiver]
        self.interference = np.tile(gm.noise, (m, 1))
        self.broadcasts = 0
        self.processed = 0
        self.packet_log: list[ControlPacket] | None = [] if track_packets else None
        # hot-loop caches
        self._direct = gm.direct
        self._gains_t = np.ascontiguousarray(gm.gains.T)
        self._noise = gm.noise

    def _true_sinr(self) -> np.ndarray:
        dp = self._direct * self.p
        return dp / (self._gains_t @ self.p - dp + self._noise)

    # --- local information flow ---------------------------------------

    def _measure_own(self, i: int) -> None:
        """Link i measures its own current SINR, received signal power and
        receiver interference floor (the latter read directly while
        silent, derived from s/gamma otherwise; same number either way)."""
        gm = self.gm
        s = gm.direct[i] * self.p[i]
        denom = float(gm.gains[:, i] @ self.p) - s + gm.noise[i]
        self.heard_gamma[i, i] = s / denom
        self.heard_signal[i, i] = s
        self.heard_time[i, i] = self.t
        self.interference[i, i] = denom

    def _announce(self, j: int, gamma_j: float, s_j: float, count: bool = True) -> None:
        """Link j broadcasts a control packet; accepting listeners refresh
        their heard-tables. Zero-SINR packets mark the sender silent but
        leave the last nonzero interference estimate in place."""
        if self.packet_log is not None:
            self.packet_log.append(ControlPacket(j, float(gamma_j), float(s_j), self.t))
        listeners = self.accept[:, j].copy()
        listeners[j] = False
        self.heard_gamma[listeners, j] = gamma_j
        self.heard_signal[listeners, j] = s_j
        self.heard_time[listeners, j] = self.t
        if gamma_j > 0.0:
            self.interference[listeners, j] = s_j / gamma_j
        if count:
            self.broadcasts += 1
            self.processed += int(listeners.sum())

    def initialize(self, init_powers=None) -> None:
        """Draw feasible initial powers (uniform over levels, or uniform in
        [0, max]) and run one uncounted announcement round so every link
        starts with a populated heard-table."""
        m = self.gm.n_links
        if init_powers is not None:
            self.p = channel.validate_power(self.gm, init_powers).copy()
            if self.discrete:
                for i in range(m):
                    if not np.any(self.grid.levels[i] == self.p[i]):
                        raise ValueError(f"link {i}: initial power off the grid")
        elif self.discrete:
            self.p = np.array([lv[self.rng.integers(0, lv.size)]
                               for lv in self.grid.levels])
        else:
            self.p = self.rng.uniform(0.0, self.gm.max_power)
        gamma = channel.sinr(self.gm, self.p)
        s = self.gm.direct * self.p
        for j in range(m):
            self.heard_gamma[j, j] = gamma[j]
            self.heard_signal[j, j] = s[j]
            self.heard_time[j, j] = 0.0
            if gamma[j] > 0.0:
                self.interference[j, j] = s[j] / gamma[j]
            self._announce(j, gamma[j], s[j], count=False)

    def link_state(self, i: int) -> LinkState:
        heard = {int(j): (float(self.heard_gamma[i, j]), float(self.heard_signal[i, j]),
                          float(self.heard_time[i, j]))
                 for j in range(self.gm.n_links)
                 if np.isfinite(self.heard_time[i, j])}
        return LinkState(link=i, own_power=float(self.p[i]), heard=heard,
                         neighborhood=self.neighborhoods[i])

    # --- the update step ------------------------------------------------

    def update_distribution(self, i: int):
        """The distribution link i would sample its next power from, given
        what it has heard so far."""
        gm = self.gm
        if self.discrete:
            cand = self.grid.levels[i]
        else:
            cand = np.linspace(0.0, gm.max_power[i], self.n_points)
        cols = self._cols[i]
        rows = sampler.candidate_sinr_matrix(
            i, cand, self.p[i], gm.gains[i, i], self.heard_signal[i],
            self.interference[i], gm.gains[i], gm.noise, cols=cols,
        )
        ids = self.all_ids if cols is None else tuple(int(c) for c in cols)
        utilities = self.u.value_rows(rows, ids=ids)
        if self.discrete:
            return sampler.DiscreteDistribution(
                levels=cand, probs=sampler.boltzmann_probs(utilities, self.beta))
        return sampler.density_distribution(cand, utilities, self.beta)

    def step(self, t: float, i: int) -> float:
        """Process one update epoch for link i at time t; returns the new
        power. Emits control packets per the variant's broadcast rule."""
        self.t = t
        self._measure_own(i)
        dist = self.update_distribution(i)
        old = float(self.p[i])
        new = dist.sample(self.rng)
        self.p[i] = new
        gamma = self._true_sinr()
        s = self._direct * self.p
        if self.family == "glad":
            if new != old:
                self._announce_sensed(i, gamma, s)
        else:
            self._announce(i, gamma[i], s[i])
        self._last_gamma = gamma
        return new

    def _announce_sensed(self, i: int, gamma: np.ndarray, s: np.ndarray) -> None:
        """After link i's power moved, everyone who sensed a change in its
        own SINR or signal power broadcasts: the updater, plus every
        positive-power link i actually interferes with. All listeners
        accept; a sender's own row keeps its equally fresh local value."""
        mask = (self.gm.gains[i] > 0.0) & (self.p > 0.0)
        mask[i] = True
        idx = np.nonzero(mask)[0]
        self.heard_gamma[:, idx] = gamma[idx]
        self.heard_signal[:, idx] = s[idx]
        self.heard_time[:, idx] = self.t
        pos = idx[gamma[idx] > 0.0]
        self.interference[:, pos] = s[pos] / gamma[pos]
        if self.packet_log is not None:
            for j in idx:
                self.packet_log.append(
                    ControlPacket(int(j), float(gamma[j]), float(s[j]), self.t))
        self.broadcasts += idx.size
        self.processed += idx.size * (self.gm.n_links - 1)

    def run(self, queue: EventQueue) -> SimTrace:
        gm = self.gm
        k = len(queue)
        m = gm.n_links
        times = np.zeros(k + 1)
        links = np.full(k + 1, -1, dtype=np.int64)
        powers = np.zeros((k + 1, m))
        sinrs = np.zeros((k + 1, m))
        utility = np.zeros(k + 1)
        bcast = np.zeros(k + 1, dtype=np.int64)
        proc = np.zeros(k + 1, dtype=np.int64)

        gamma0 = channel.sinr(gm, self.p)
        powers[0] = self.p
        sinrs[0] = gamma0
        utility[0] = self.u.value(gamma0, ids=self.all_ids)
        bcast[0] = self.broadcasts
        proc[0] = self.processed

        for r, (t, i) in enumerate(queue, start=1):
            self.step(t, int(i))
            times[r] = t
            links[r] = i
            powers[r] = self.p
            sinrs[r] = self._last_gamma
            utility[r] = self.u.value(self._last_gamma, ids=self.all_ids)
            bcast[r] = self.broadcasts
            proc[r] = self.processed

        meta = {"variant": self.variant, "beta": self.beta, "n_links": m}
        return SimTrace(times=times, links=links, powers=powers, sinrs=sinrs,
                        utility=utility, broadcasts=bcast, processed=proc, meta=meta)


def run_simulation(gm: channel.GainMatrix, u, variant: str, beta,
                   horizon_events: int, seed: int,
                   grid: sampler.PowerGrid | None = None, n_points: int = 512,
                   gamma_bar: float | None = None, rate: float = 1.0,
                   ctrl_power: float | None = None, init_powers=None,
                   track_packets: bool = False) -> SimTrace:
    """One seeded trial: schedule the epochs, initialize, run, trace.

    A single rng drives scheduling, initial powers, and every update draw
    (exactly one uniform per event), so two variants run with the same
    seed see common random numbers throughout.
    """
    rng = np.random.default_rng(seed)
    queue = schedule(gm.n_links, rate, rng, events=horizon_events)
    sim = Simulation(gm, u, variant, beta, rng, grid=grid, n_points=n_points,
                     gamma_bar=gamma_bar, ctrl_power=ctrl_power,
                     track_packets=track_packets)
    sim.initialize(init_powers=init_powers)
    trace = sim.run(queue)
    trace.meta.update({"seed": seed, "rate": rate})
    if track_packets:
        trace.meta["packet_log"] = sim.packet_log
    return trace
