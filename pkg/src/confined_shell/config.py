"""Flat ``key = value`` experiment configuration.

Recognised keys (lists are comma separated)::

    chart            plate | sphere_cap | cylinder | hyperboloid
    bounds           y1a, y1b, y2a, y2b           (default: builtin)
    clamped_edges    left, right, bottom, top      (default: builtin)
    swap             true | false                  (exchange y1 and y2)
    offset           three floats added to theta
    lambda, mu       Lame constants
    eps              strictly decreasing list
    nx, ny, nz       mesh sizes (nz even)
    F11 F22 F33 F12 F13 F23
                     force components: numbers or expressions in y1, y2, x3
    q                obstacle normal (unit)
    tol, max_sweeps  VI solver settings
    interpolation    full | ans | ans-membrane     (3D strain interpolation)
    k_list           density pipeline levels
    eta1 eta2 eta3   density input field expressions in y1, y2
    n_fields, seed   randomized checks
    grid             resolution of the hypothesis checks
    out_csv, out_json, out_system
                     output paths

Lines starting with ``#`` are comments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fem.assembly import DEFAULT_INTERPOLATION, STRAIN_INTERPOLATIONS, ForceField
from .geometry import BUILTIN_CHARTS, EDGES, Chart, HalfSpace, builtin_chart
from .vi import KKT_TOL, MAX_SWEEPS

FORCE_KEYS = ("F11", "F22", "F33", "F23", "F13", "F12")


def parse_config_text(text: str) -> dict:
    """Split ``key = value`` lines into a dict (later keys win)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


def _floats(s: str, key: str) -> list[float]:
    try:
        return [float(x) for x in s.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: expected numbers, got {s!r}") from exc


def _words(s: str) -> tuple[str, ...]:
    return tuple(w for w in s.replace(",", " ").split() if w)


def _bool(s: str, key: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key!r}: expected a boolean, got {s!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment settings."""

    chart: str
    lame: tuple
    eps: tuple
    nx: int
    ny: int
    nz: int
    q: np.ndarray
    bounds: tuple | None = None
    clamped_edges: tuple | None = None
    swap: bool = False
    offset: tuple | None = None
    forces: dict = field(default_factory=dict)
    tol: float = KKT_TOL
    max_sweeps: int = MAX_SWEEPS
    interpolation: str = DEFAULT_INTERPOLATION
    k_list: tuple = (4, 8, 16, 32)
    eta: tuple | None = None
    n_fields: int = 20
    seed: int = 0
    grid: int = 200
    out_csv: str | None = None
    out_json: str | None = None
    out_system: str | None = None

    def __post_init__(self):
        if self.chart not in BUILTIN_CHARTS:
            raise ConfigError(f"unknown chart {self.chart!r}; expected one of {BUILTIN_CHARTS}")
        e = np.asarray(self.eps, dtype=float)
        if e.size == 0 or np.any(e <= 0) or np.any(np.diff(e) >= 0):
            raise ConfigError("eps must be a strictly decreasing list of positive numbers")
        if min(self.nx, self.ny, self.nz) < 2:
            raise ConfigError("mesh sizes nx, ny, nz must be >= 2")
        q = np.asarray(self.q, dtype=float)
        if q.shape != (3,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ConfigError("q must be a unit 3-vector")
        if self.clamped_edges is not None and (not self.clamped_edges
                                               or any(x not in EDGES for x in self.clamped_edges)):
            raise ConfigError(f"clamped_edges must be a non-empty subset of {EDGES}")
        if self.interpolation not in STRAIN_INTERPOLATIONS:
            raise ConfigError(f"interpolation must be one of {STRAIN_INTERPOLATIONS}")
        self.q = q / np.linalg.norm(q)

    # -- derived objects
    def make_chart(self) -> Chart:
        return builtin_chart(self.chart, self.bounds, self.clamped_edges, swap=self.swap, offset=self.offset)

    def halfspace(self) -> HalfSpace:
        return HalfSpace(self.q)

    def force(self) -> ForceField:
        return ForceField(self.forces)

    @classmethod
    def from_mapping(cls, d: dict, required=("chart", "lambda", "mu", "eps", "nx", "ny", "nz", "q")):
        """Build from parsed key/value strings; every key in ``required`` must be present."""
        for key in required:
            if key not in d:
                raise ConfigError(f"missing config key {key!r}")
        g = d.get
        kw = {}
        kw["chart"] = g("chart", "plate")
        kw["lame"] = (float(_floats(g("lambda", "1"), "lambda")[0]), float(_floats(g("mu", "1"), "mu")[0]))
        kw["eps"] = tuple(_floats(g("eps", "0.1"), "eps"))
        for key, default in (("nx", "8"), ("ny", "8"), ("nz", "4")):
            vals = _floats(g(key, default), key)
            if len(vals) != 1 or vals[0] != int(vals[0]):
                raise ConfigError(f"config key {key!r}: expected an integer")
            kw[key] = int(vals[0])
        kw["q"] = np.array(_floats(g("q", "0 0 1"), "q"))
        if "bounds" in d:
            b = _floats(d["bounds"], "bounds")
            if len(b) != 4:
                raise ConfigError("config key 'bounds': expected four numbers")
            kw["bounds"] = tuple(b)
        if "clamped_edges" in d:
            kw["clamped_edges"] = _words(d["clamped_edges"])
        if "swap" in d:
            kw["swap"] = _bool(d["swap"], "swap")
        if "offset" in d:
            o = _floats(d["offset"], "offset")
            if len(o) != 3:
                raise ConfigError("config key 'offset': expected three numbers")
            kw["offset"] = tuple(o)
        kw["forces"] = {k[1:]: d[k] for k in FORCE_KEYS if k in d}
        if "tol" in d:
            kw["tol"] = _floats(d["tol"], "tol")[0]
        if "max_sweeps" in d:
            kw["max_sweeps"] = int(_floats(d["max_sweeps"], "max_sweeps")[0])
        if "interpolation" in d:
            kw["interpolation"] = d["interpolation"]
        if "k_list" in d:
            kw["k_list"] = tuple(int(x) for x in _floats(d["k_list"], "k_list"))
        if any(f"eta{i}" in d for i in (1, 2, 3)):
            kw["eta"] = tuple(d.get(f"eta{i}", "0") for i in (1, 2, 3))
        for key in ("n_fields", "seed", "grid"):
            if key in d:
                kw[key] = int(_floats(d[key], key)[0])
        for key in ("out_csv", "out_json", "out_system"):
            if key in d:
                kw[key] = d[key]
        try:
            return cls(**kw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
