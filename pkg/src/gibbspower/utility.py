"""System utility functions of the SINR vector.

A utility scores a set of link SINRs with a single nonnegative number.
Every utility here is defined on arbitrary link subsets, because the
neighborhood-restricted sampler evaluates it on partial SINR vectors.
"""

import numpy as np

_LN2 = float(np.log(2.0))


def _numpy_only_import(name, *args, **kwargs):
    # ndarray methods like g.sum() lazily import a numpy submodule on first
    # use, and that lookup goes through the calling frame's builtins; expose
    # an __import__ that admits numpy internals and nothing else
    if name == "numpy" or name.startswith("numpy."):
        return __import__(name, *args, **kwargs)
    raise ImportError(f"import of {name!r} is not allowed in utility expressions")


class Utility:
    """Base: nonnegative scalar function of a SINR subset.

    value() scores one SINR vector; value_rows() scores each row of a
    matrix of SINR vectors (one candidate per row). ids carries the link
    identities of the columns, for utilities that care which links they
    are looking at. Built-ins ignore it.
    """

    name = "utility"

    def value(self, values, ids=None) -> float:
        raise NotImplementedError

    def value_rows(self, rows: np.ndarray, ids=None) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        out = np.array([self.value(r, ids) for r in rows])
        if np.any(out < 0):
            raise ValueError(f"{self.name}: negative utility value")
        return out

    def __repr__(self):
        return f"{type(self).__name__}()"


class ProportionalFairness(Utility):
    """Product of the link SINRs. Zero whenever any included link is silent."""

    name = "proportional_fairness"

    def value(self, values, ids=None) -> float:
        values = _check_subset(values)
        return float(np.prod(values))

    def value_rows(self, rows, ids=None):
        rows = np.asarray(rows, dtype=float)
        return np.prod(rows, axis=1)


class TotalThroughput(Utility):
    """Sum of per-link Shannon rates log2(1 + sinr), in bits/s/Hz."""

    name = "total_throughput"

    def value(self, values, ids=None) -> float:
        values = _check_subset(values)
        return float(np.log1p(values).sum() / _LN2)

    def value_rows(self, rows, ids=None):
        rows = np.asarray(rows, dtype=float)
        return np.log1p(rows).sum(axis=1) / _LN2


class CustomUtility(Utility):
    """User-supplied utility: a callable fn(values, ids) -> float, or a
    Python expression over the SINR array ``g`` (numpy available as ``np``).

    The author decides what a subset evaluation means; nothing additive is
    assumed. Nonnegativity is enforced at every evaluation, and probed on
    random subsets at construction to catch sign errors early.
    """

    def __init__(self, fn=None, expression: str | None = None, name: str = "custom"):
        if (fn is None) == (expression is None):
            raise ValueError("provide exactly one of fn or expression")
        self.name = name
        self.expression = expression
        if expression is not None:
            code = compile(expression, f"<utility {name}>", "eval")
            def fn(values, ids=None, _code=code):
                return float(eval(
                    _code,
                    {"np": np, "__builtins__": {"__import__": _numpy_only_import}},
                    {"g": values, "ids": ids}))
        self._fn = fn
        self._probe()

    def _probe(self):
        rng = np.random.default_rng(0)
        for size in (1, 2, 5):
            v = self.value(rng.uniform(0.0, 30.0, size=size), ids=tuple(range(size)))
            if not np.isfinite(v):
                raise ValueError(f"{self.name}: non-finite value on probe input")

    def value(self, values, ids=None) -> float:
        values = _check_subset(values)
        out = float(self._fn(values, ids))
        if not out >= 0.0:
            raise ValueError(f"{self.name}: utility {out} is negative or NaN")
        return out

    def __repr__(self):
        if self.expression is not None:
            return f"CustomUtility(expression={self.expression!r})"
        return f"CustomUtility(fn={self._fn!r})"


def _check_subset(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("utility needs a nonempty 1-D SINR subset")
    if np.any(values < 0):
        raise ValueError("SINR values must be nonnegative")
    return values


def evaluate(u: Utility, sinr_pairs) -> float:
    """Score a set of (link id, sinr) pairs. Order of the pairs is
    irrelevant for the built-ins; ids are forwarded to custom utilities."""
    pairs = list(sinr_pairs)
    if not pairs:
        raise ValueError("empty SINR subset")
    ids = tuple(p[0] for p in pairs)
    values = np.array([p[1] for p in pairs], dtype=float)
    out = u.value(values, ids)
    if not out >= 0.0:
        raise ValueError(f"{u.name}: utility {out} is negative or NaN")
    return out


_BUILTINS = {
    "proportional_fairness": ProportionalFairness,
    "total_throughput": TotalThroughput,
}


def make_utility(kind: str, expression: str | None = None) -> Utility:
    """Utility factory used by the config layer."""
    if kind in _BUILTINS:
        return _BUILTINS[kind]()
    if kind == "custom":
        if not expression:
            raise ValueError("custom utility needs an expression")
        return CustomUtility(expression=expression)
    raise ValueError(f"unknown utility kind {kind!r}")
