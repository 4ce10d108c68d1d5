"""File formats, data ingestion and experiment configuration.

Tabular data is CSV (floats written with 17 significant digits so files
round-trip exactly and identical runs give identical bytes); configs are
JSON.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import harmonics as sh
from .noise_op import NoiseSpec, parse_g
from .random import AngularPowerSpectrum, power_law_spectrum
from .solver import PathSample, SchemeConfig
from .timegrid import allocate, build_time_grid

SAMPLE_FILE = "gistemp_like_L40.csv"


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


class FormatError(ValueError):
    """A data file that does not parse; the message names file and line."""


def _rows(path, header: list[str]):
    """Yield ``(line_number, fields)`` after checking the header."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [h.strip() for h in first] != header:
            raise FormatError(f"{path}:1: expected header {','.join(header)}")
        for row in reader:
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{reader.line_num}: expected {len(header)} fields")
            yield reader.line_num, [f.strip() for f in row]


def _load_triangle(path, header: list[str]) -> np.ndarray:
    entries = {}
    for line, (ell, m, value) in _rows(path, header):
        try:
            key, v = (int(ell), int(m)), float(value)
        except ValueError:
            raise FormatError(f"{path}:{line}: malformed row") from None
        if key[0] < 0 or abs(key[1]) > key[0]:
            raise FormatError(f"{path}:{line}: invalid degree/order {key}")
        if not np.isfinite(v):
            raise FormatError(f"{path}:{line}: non-finite value")
        if key in entries:
            raise FormatError(f"{path}:{line}: duplicate entry {key}")
        entries[key] = v
    L = max((k[0] for k in entries), default=0)
    c = np.zeros(sh.n_coeffs(L))
    for (ell, m), v in entries.items():
        c[sh.lm_index(ell, m)] = v
    return c


def _save_triangle(path, c, header: list[str]):
    c = np.asarray(c, dtype=float)
    ells, ms = sh.lm_table(sh.degree_of(c))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for ell, m, v in zip(ells, ms, c):
            w.writerow([int(ell), int(m), fmt(v)])


def load_coeffs(path) -> np.ndarray:
    """Read ``ell,m,value`` rows; absent coefficients are zero."""
    return _load_triangle(path, ["ell", "m", "value"])


def save_coeffs(path, c):
    _save_triangle(path, c, ["ell", "m", "value"])


def load_eta(path) -> np.ndarray:
    """Read ``ell,m,eta`` rows; absent multipliers are zero."""
    return _load_triangle(path, ["ell", "m", "eta"])


def save_eta(path, eta):
    _save_triangle(path, eta, ["ell", "m", "eta"])


def load_spectrum(path) -> AngularPowerSpectrum:
    """Read ``ell,A`` rows; absent degrees are zero."""
    entries = {}
    for line, (ell, a) in _rows(path, ["ell", "A"]):
        try:
            ell, a = int(ell), float(a)
        except ValueError:
            raise FormatError(f"{path}:{line}: malformed row") from None
        if ell < 0 or ell in entries:
            raise FormatError(f"{path}:{line}: invalid or duplicate degree {ell}")
        entries[ell] = a
    a = np.zeros(max(entries, default=0) + 1)
    for ell, v in entries.items():
        a[ell] = v
    try:
        return AngularPowerSpectrum(a)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_spectrum(path, spec: AngularPowerSpectrum):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ell", "A"])
        for ell, a in enumerate(spec.a):
            w.writerow([ell, fmt(a)])


def write_path_csv(path, sample: PathSample, path_index: int | None = None):
    """``tau,ell,m,value`` rows for one path (``path_index`` selects one of a batch)."""
    states = sample.states if path_index is None else sample.states[path_index]
    if states.ndim != 2:
        raise ValueError("pass path_index for a batch of paths")
    ells, ms = sh.lm_table(sh.degree_of(states[0]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "ell", "m", "value"])
        for t, row in zip(sample.tau, states):
            tt = fmt(t)
            for ell, m, v in zip(ells, ms, row):
                w.writerow([tt, int(ell), int(m), fmt(v)])


def write_snapshot(path, tau, states):
    """Binary layout, little-endian: int64 ``L``, int64 ``K``, then ``K+1`` rows
    of ``1 + (L+1)^2`` doubles, each ``[tau_k, c_0, c_1, ...]``."""
    states = np.asarray(states, dtype=float)
    L = sh.degree_of(states[0])
    K = states.shape[0] - 1
    table = np.column_stack([np.asarray(tau, dtype=float), states]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", L, K))
        fh.write(table.tobytes(order="C"))


def read_snapshot(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    L, K = struct.unpack("<qq", raw[:16])
    nc = sh.n_coeffs(L)
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != (K + 1) * (nc + 1):
        raise FormatError(f"{path}: size does not match L={L}, K={K}")
    data = data.reshape(K + 1, nc + 1)
    return data[:, 0].copy(), data[:, 1:].copy()


def load_gridded_field(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``lat_degrees,lon_degrees,value`` rows on a regular grid.

    Returns ascending ``lat``, ``lon`` and ``values[i_lat, i_lon]``.
    """
    pts = []
    for line, row in _rows(path, ["lat_degrees", "lon_degrees", "value"]):
        try:
            pts.append([float(v) for v in row])
        except ValueError:
            raise FormatError(f"{path}:{line}: malformed row") from None
    if not pts:
        raise FormatError(f"{path}: no data rows")
    pts = np.array(pts)
    lat, ilat = np.unique(pts[:, 0], return_inverse=True)
    lon, ilon = np.unique(np.mod(pts[:, 1], 360.0), return_inverse=True)
    if np.any(np.abs(lat) > 90):
        raise FormatError(f"{path}: latitude outside [-90, 90]")
    values = np.full((lat.size, lon.size), np.nan)
    values[ilat, ilon] = pts[:, 2]
    if len(pts) != lat.size * lon.size or np.isnan(values).any():
        raise FormatError(f"{path}: points do not form a complete regular lat-lon grid")
    for axis in (lat, lon):
        if axis.size > 2 and not np.allclose(np.diff(axis), axis[1] - axis[0], rtol=1e-6):
            raise FormatError(f"{path}: grid spacing is not uniform")
    return lat, lon, values


def project_gridded_field(path, L: int) -> np.ndarray:
    """Coefficients up to degree ``L`` of a lat-lon field.

    The field is bilinearly interpolated (periodic in longitude, clamped at
    the outermost latitudes) onto a Gauss-Legendre grid and analyzed.  The
    input is not a quadrature grid, so the result carries interpolation error.
    """
    lat, lon, values = load_gridded_field(path)
    if lon.size < 2 or lat.size < 2:
        raise FormatError(f"{path}: need at least two latitudes and two longitudes")
    lon_ext = np.concatenate([lon, [lon[0] + 360.0]])
    val_ext = np.concatenate([values, values[:, :1]], axis=1)
    interp = RegularGridInterpolator((lat, lon_ext), val_ext, method="linear")
    grid = sh.build_grid(max(2 * L, 16))
    theta, phi = grid.mesh()
    qlat = np.clip(90.0 - np.degrees(theta), lat[0], lat[-1])
    qlon = np.mod(np.degrees(phi), 360.0)
    qlon = np.where(qlon < lon[0], qlon + 360.0, qlon)
    f = interp(np.column_stack([qlat.ravel(), qlon.ravel()])).reshape(grid.shape)
    return sh.analyze(f, grid, L)


def gistemp_like_coefficients(L: int = 40, seed: int = 2016, mean: float = 0.4,
                              rms: float = 1.0, power: float = 1.5) -> np.ndarray:
    """A synthetic temperature-change map in degrees: global mean ``mean``,
    anomaly RMS ``rms`` and energy per degree proportional to ``ell**-power``."""
    rng = np.random.default_rng(seed)
    ells, _ = sh.lm_table(L)
    ell = np.maximum(ells, 1)
    c = rng.standard_normal(sh.n_coeffs(L)) * np.sqrt(ell ** -power / (2 * ell + 1))
    c[0] = 0.0
    if L > 0:
        c *= np.sqrt(sh.FOUR_PI) * rms / np.linalg.norm(c)
    c[0] = np.sqrt(sh.FOUR_PI) * mean
    return c


def load_sample_coefficients() -> np.ndarray:
    """The bundled degree-40 synthetic temperature-change coefficients."""
    with resources.as_file(resources.files("spheat").joinpath("data", SAMPLE_FILE)) as p:
        return load_coeffs(p)


@dataclass
class ExperimentConfig:
    """Serializable description of a run.

    ``initial``: ``constant:v`` | ``coeffs:FILE`` | ``gridded:FILE`` | ``sample``.
    ``spectrum``: ``power:a0,amplitude,power,ellmax`` | ``file:FILE``.
    ``eta``: a number (same for every mode) or ``file:FILE``.
    Relative file names are resolved against ``base_dir``.
    """

    L: int = 10
    Lambda: int = 10
    initial: str = "sample"
    spectrum: str = "power:100,100,2,10"
    g: str = "identity"
    eta: float | str = 1.0
    alloc: str = "uniform:250"
    seeds: list = field(default_factory=lambda: [0])
    out: str = "out"
    paths_per_seed: int = 1
    ref_refine: int = 4
    L_ref: int | None = None
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.L) < 0 or int(self.Lambda) < 0:
            raise ValueError("L and Lambda must be non-negative")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]
        if any(s < 0 or s >= 2**64 for s in self.seeds):
            raise ValueError("seeds must be unsigned 64-bit integers")
        parse_g(self.g)
        for src in (self.initial, self.spectrum, self.eta):
            if isinstance(src, str) and src.split(":", 1)[0] in ("coeffs", "gridded", "file"):
                p = self.resolve(src.split(":", 1)[1])
                if not p.is_file():
                    raise FileNotFoundError(f"referenced file {p} does not exist")

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d, base_dir=str(base_dir))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from None
        return cls.from_dict(d, path.parent)

    def load_initial(self) -> np.ndarray:
        kind, _, arg = self.initial.partition(":")
        if kind == "constant":
            c = np.zeros(1)
            c[0] = np.sqrt(sh.FOUR_PI) * float(arg)
            return c
        if kind == "coeffs":
            return load_coeffs(self.resolve(arg))
        if kind == "gridded":
            return project_gridded_field(self.resolve(arg), int(self.L))
        if kind == "sample":
            return load_sample_coefficients()
        raise ValueError(f"unknown initial source {self.initial!r}")

    def load_spectrum(self) -> AngularPowerSpectrum:
        kind, _, arg = self.spectrum.partition(":")
        if kind == "file":
            return load_spectrum(self.resolve(arg))
        if kind == "power":
            a0, amp, power, ell_max = (float(v) for v in arg.split(","))
            return power_law_spectrum(a0, amp, power, int(ell_max))
        raise ValueError(f"unknown spectrum source {self.spectrum!r}")

    def load_noise(self) -> NoiseSpec:
        g = parse_g(self.g)
        if isinstance(self.eta, str):
            kind, _, arg = self.eta.partition(":")
            if kind != "file":
                return NoiseSpec.uniform(g, int(self.Lambda), float(self.eta))
            return NoiseSpec(g, sh.resize(load_eta(self.resolve(arg)), int(self.Lambda)))
        return NoiseSpec.uniform(g, int(self.Lambda), float(self.eta))

    def scheme(self) -> SchemeConfig:
        spec = self.load_spectrum()
        n = allocate(self.alloc, spec.values(int(self.Lambda)), int(self.Lambda))
        return SchemeConfig(int(self.L), int(self.Lambda), build_time_grid(n),
                            self.load_noise(), spec, self.load_initial())
