"""Experiment configuration: JSON in, validated objects out.

All unit conversions happen here (gamma_bar is configured in dB, used
linearly everywhere else). Parsing normalizes scalars to lists where a
sweep is allowed, so parse -> serialize -> parse is a fixed point.
"""

import json
import math
from dataclasses import dataclass

from gibbspower import channel, utility
from gibbspower.engine import VARIANTS
from gibbspower.sampler import PowerGrid


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""

    def __init__(self, fieldname: str, message: str):
        self.fieldname = fieldname
        super().__init__(f"config field {fieldname!r}: {message}")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _parse_beta(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError("beta", f"unrecognized value {value!r}")
    b = float(value)
    if math.isnan(b) or b < 0:
        raise ConfigError("beta", "must be >= 0 or \"inf\"")
    return b


def _serialize_beta(b: float):
    return "inf" if math.isinf(b) else b


@dataclass(frozen=True)
class ExperimentConfig:
    topology: dict
    utility_spec: dict
    grid: dict
    variant: str
    betas: tuple
    seeds: tuple
    horizon_events: int
    variants: tuple = ()
    gamma_bars_db: tuple | None = None
    rate: float = 1.0
    tail_fraction: float = 0.5
    ctrl_power: float | None = None
    record_thin: int = 1
    n_points: int = 512

    # ---- parsing --------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {
            "topology", "utility", "grid", "variant", "variants", "beta",
            "gamma_bar_db", "seeds", "horizon_events", "rate",
            "tail_fraction", "ctrl_power", "record_thin",
        }
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown field")

        topology = dict(raw.get("topology") or {})
        kind = topology.get("kind")
        if kind not in ("builtin8", "file", "generated"):
            raise ConfigError("topology.kind",
                              "must be builtin8, file, or generated")
        if kind == "file" and not topology.get("path"):
            raise ConfigError("topology.path", "required for kind=file")
        if kind == "generated":
            for req in ("seed", "links", "area_side", "link_length"):
                if req not in topology:
                    raise ConfigError(f"topology.{req}", "required for kind=generated")
            ll = topology["link_length"]
            if len(ll) != 2 or not (0 < ll[0] <= ll[1]):
                raise ConfigError("topology.link_length",
                                  "must be [min, max] with 0 < min <= max")

        uspec = dict(raw.get("utility") or {})
        if uspec.get("kind") not in ("proportional_fairness", "total_throughput",
                                     "custom"):
            raise ConfigError("utility.kind",
                              "must be proportional_fairness, total_throughput, or custom")
        if uspec["kind"] == "custom" and not uspec.get("expression"):
            raise ConfigError("utility.expression", "required for kind=custom")

        grid = dict(raw.get("grid") or {})
        gkind = grid.get("kind")
        if gkind not in ("discrete", "continuous"):
            raise ConfigError("grid.kind", "must be discrete or continuous")
        n_points = 512
        if gkind == "discrete":
            levels = grid.get("levels")
            bad = (
                levels is None
                or (isinstance(levels, int) and levels < 2)
                or (isinstance(levels, list)
                    and (not levels or any(int(l) < 2 for l in levels)))
                or not isinstance(levels, (int, list))
            )
            if bad:
                raise ConfigError("grid.levels", "need an int >= 2 or a list of them")
        else:
            n_points = int(grid.get("points", 512))
            if n_points < 16:
                raise ConfigError("grid.points", "need at least 16")
            grid["points"] = n_points

        variant = raw.get("variant")
        variants = tuple(raw.get("variants") or ())
        if variant is None and not variants:
            raise ConfigError("variant", "required (or provide a variants list)")
        for v in ((variant,) if variant else ()) + variants:
            if v not in VARIANTS:
                raise ConfigError("variant", f"{v!r} not one of {VARIANTS}")
        if variant is None:
            variant = variants[0]
        all_variants = set(variants) | {variant}
        for v in all_variants:
            needs_discrete = v == "glad-discrete"
            if needs_discrete and gkind != "discrete":
                raise ConfigError("grid.kind", f"{v} needs a discrete grid")
            if not needs_discrete and gkind != "continuous":
                raise ConfigError("grid.kind", f"{v} needs a continuous grid")

        rawbeta = raw.get("beta")
        if rawbeta is None:
            raise ConfigError("beta", "required")
        betas = tuple(_parse_beta(b) for b in
                      (rawbeta if isinstance(rawbeta, list) else [rawbeta]))

        gammas = raw.get("gamma_bar_db")
        if gammas is not None:
            gammas = tuple(float(g) for g in
                           (gammas if isinstance(gammas, list) else [gammas]))
        if "niglad" in all_variants and gammas is None:
            raise ConfigError("gamma_bar_db", "required when running niglad")

        seeds = raw.get("seeds")
        if not seeds or not isinstance(seeds, list):
            raise ConfigError("seeds", "need a nonempty list of integers")
        seeds = tuple(int(s) for s in seeds)

        horizon = raw.get("horizon_events")
        if horizon is None or int(horizon) < 0:
            raise ConfigError("horizon_events", "need an integer >= 0")

        rate = float(raw.get("rate", 1.0))
        if rate <= 0:
            raise ConfigError("rate", "must be > 0")
        tail = float(raw.get("tail_fraction", 0.5))
        if not 0 < tail <= 1:
            raise ConfigError("tail_fraction", "must be in (0, 1]")
        thin = int(raw.get("record_thin", 1))
        if thin < 1:
            raise ConfigError("record_thin", "must be >= 1")
        ctrl = raw.get("ctrl_power")
        if ctrl is not None and float(ctrl) <= 0:
            raise ConfigError("ctrl_power", "must be > 0")

        return cls(topology=topology, utility_spec=uspec, grid=grid,
                   variant=variant, variants=variants, betas=betas,
                   gamma_bars_db=gammas, seeds=seeds,
                   horizon_events=int(horizon), rate=rate, tail_fraction=tail,
                   ctrl_power=float(ctrl) if ctrl is not None else None,
                   record_thin=thin, n_points=n_points)

    def to_dict(self) -> dict:
        out = {
            "topology": dict(self.topology),
            "utility": dict(self.utility_spec),
            "grid": dict(self.grid),
            "variant": self.variant,
            "beta": [_serialize_beta(b) for b in self.betas],
            "seeds": list(self.seeds),
            "horizon_events": self.horizon_events,
            "rate": self.rate,
            "tail_fraction": self.tail_fraction,
            "record_thin": self.record_thin,
        }
        if self.variants:
            out["variants"] = list(self.variants)
        if self.gamma_bars_db is not None:
            out["gamma_bar_db"] = list(self.gamma_bars_db)
        if self.ctrl_power is not None:
            out["ctrl_power"] = self.ctrl_power
        return out

    # ---- builders -------------------------------------------------------

    def build_gain_matrix(self) -> channel.GainMatrix:
        t = self.topology
        if t["kind"] == "builtin8":
            return channel.benchmark8()
        if t["kind"] == "file":
            return channel.load_gain_matrix(t["path"])
        _, gm = channel.generate_topology(
            seed=int(t["seed"]), n_links=int(t["links"]),
            area_side=float(t["area_side"]),
            link_length=tuple(float(x) for x in t["link_length"]),
            noise=float(t.get("noise", 1e-7)),
            max_power=float(t.get("max_power", 1e-3)),
        )
        return gm

    def build_utility(self):
        return utility.make_utility(self.utility_spec["kind"],
                                    self.utility_spec.get("expression"))

    def build_grid(self, gm: channel.GainMatrix) -> PowerGrid | None:
        if self.grid["kind"] != "discrete":
            return None
        return PowerGrid.from_counts(gm.max_power, self.grid["levels"])

    def gamma_bars_linear(self) -> tuple:
        if self.gamma_bars_db is None:
            return (None,)
        return tuple(db_to_linear(g) for g in self.gamma_bars_db)

    def variant_list(self) -> tuple:
        return self.variants if self.variants else (self.variant,)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
