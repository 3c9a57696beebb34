"""Run configuration, result files and the steady-state cache."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import kerr, xyz

SCHEMA_VERSION = 1
CACHE_ENV = "STEADYSUSC_CACHE_DIR"
CURVE_COLUMNS = ("p", "delta_p", "chi_f", "chi_t", "solver_residual")

_XYZ_FIELDS = {f.name: f.type for f in dataclasses.fields(xyz.XYZParams)}
_KERR_FIELDS = {f.name: f.type for f in dataclasses.fields(kerr.KerrParams)}
_PARAM_FIELDS = {"xyz": _XYZ_FIELDS, "kerr": _KERR_FIELDS}
_SWEEPABLE = {"xyz": ("Jx", "Jy", "Jz"), "kerr": ("G", "U", "delta")}


class ConfigError(ValueError):
    """Invalid run configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        where = f"{source or '<config>'}:{line}: " if line else f"{source or '<config>'}: "
        super().__init__(where + message)
        self.line = line


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    param: str
    min: float | None = None
    max: float | None = None
    step: float | None = None
    values: tuple | None = None
    delta_p: float = 1e-3
    metrics: tuple = ("chi_f", "chi_t")
    chi_f_basis: str = "midpoint"
    gap: bool = False

    def grid(self):
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        n = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return np.round(self.min + self.step * np.arange(n), 12)


@dataclass(frozen=True)
class SolverSpec:
    method: str = "ed"
    dt: float | None = None
    tol: float = 1e-10
    t_max: float = 1e4
    warm_start: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: dict = field(default_factory=dict)
    sweep: SweepSpec | None = None
    solver: SolverSpec = field(default_factory=SolverSpec)
    out: str = "run"
    cache: bool = True
    resolution: int = 101

    def model_params(self):
        """Base parameter object with every configured value applied."""
        cls = xyz.XYZParams if self.model == "xyz" else kerr.KerrParams
        return cls(**self.params)

    def to_dict(self):
        d = {"model": self.model, "out": self.out, "cache": self.cache,
             "resolution": self.resolution, "params": dict(self.params)}
        if self.sweep is not None:
            d["sweep"] = _drop_none(dataclasses.asdict(self.sweep))
        d["solver"] = _drop_none(dataclasses.asdict(self.solver))
        return d


def _drop_none(d):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}


def _line_of(text, table, key):
    """Line number of ``key = ...`` inside ``[table]`` (top level if ``table`` is None)."""
    if text is None:
        return None
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == table:
                return n
            continue
        if current == table and key is not None and re.match(rf"^{re.escape(key)}\s*=", line):
            return n
    return None


def _number(value, what, err, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise err(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise err(f"{what} must be finite")
    if positive and not value > 0:
        raise err(f"{what} must be positive")
    return float(value)


def config_from_dict(data, text=None, source=None):
    """Validate a parsed document against the model-specific schema."""

    def err_at(table, key):
        return lambda msg: ConfigError(msg, _line_of(text, table, key), source)

    known_top = {"model", "out", "cache", "resolution", "params", "sweep", "solver"}
    for key in data:
        if key not in known_top:
            raise err_at(None, key)(f"unknown key {key!r}")

    model = data.get("model")
    if model not in _PARAM_FIELDS:
        raise err_at(None, "model")(f"model must be one of {sorted(_PARAM_FIELDS)}, got {model!r}")

    params = dict(data.get("params", {}))
    fields = _PARAM_FIELDS[model]
    for key, value in params.items():
        e = err_at("params", key)
        if key not in fields:
            raise e(f"unknown {model} parameter {key!r}")
        if fields[key] in ("int", int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise e(f"{key} must be an integer")
        elif key == "bond_multiplicity":
            if value not in ("unique", "wrapped"):
                raise e("bond_multiplicity must be 'unique' or 'wrapped'")
        else:
            params[key] = _number(value, key, e)
    try:
        (xyz.XYZParams if model == "xyz" else kerr.KerrParams)(**params)
    except ValueError as exc:
        raise ConfigError(str(exc), _line_of(text, "params", None), source) from None

    sweep = None
    if "sweep" in data:
        s = dict(data["sweep"])
        allowed = {f.name for f in dataclasses.fields(SweepSpec)}
        for key in s:
            if key not in allowed:
                raise err_at("sweep", key)(f"unknown sweep key {key!r}")
        param = s.get("param")
        if param not in _SWEEPABLE[model]:
            raise err_at("sweep", "param")(
                f"sweep param must be one of {list(_SWEEPABLE[model])}, got {param!r}")
        if "values" in s:
            if any(k in s for k in ("min", "max", "step")):
                raise err_at("sweep", "values")("give either values or min/max/step, not both")
            vals = s["values"]
            if not isinstance(vals, list) or not vals:
                raise err_at("sweep", "values")("empty grid")
            vals = [_number(v, "grid value", err_at("sweep", "values")) for v in vals]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise err_at("sweep", "values")("grid values must be strictly increasing")
            s["values"] = tuple(vals)
        else:
            for key in ("min", "max", "step"):
                if key not in s:
                    raise err_at("sweep", None)(f"sweep needs {key!r} (or an explicit values list)")
                s[key] = _number(s[key], key, err_at("sweep", key))
            if s["step"] <= 0:
                raise err_at("sweep", "step")("step must be positive")
            if s["max"] < s["min"]:
                raise err_at("sweep", "max")("empty grid: max is below min")
        if "delta_p" in s:
            s["delta_p"] = _number(s["delta_p"], "delta_p", err_at("sweep", "delta_p"), positive=True)
        if "metrics" in s:
            m = s["metrics"]
            if not isinstance(m, list) or not m or set(m) - {"chi_f", "chi_t"}:
                raise err_at("sweep", "metrics")("metrics must be a nonempty subset of chi_f, chi_t")
            s["metrics"] = tuple(m)
        if s.get("chi_f_basis", "midpoint") not in ("midpoint", "reference"):
            raise err_at("sweep", "chi_f_basis")("chi_f_basis must be 'midpoint' or 'reference'")
        if "gap" in s and not isinstance(s["gap"], bool):
            raise err_at("sweep", "gap")("gap must be true or false")
        sweep = SweepSpec(**s)
        grid = sweep.grid()
        if grid.size > 1 and sweep.delta_p > np.min(np.diff(grid)) * (1 + 1e-12):
            raise err_at("sweep", "delta_p")("delta_p must not exceed the grid spacing")

    sv = dict(data.get("solver", {}))
    allowed = {f.name for f in dataclasses.fields(SolverSpec)}
    for key in sv:
        if key not in allowed:
            raise err_at("solver", key)(f"unknown solver key {key!r}")
    if sv.get("method", "ed") not in ("ed", "rk4", "auto"):
        raise err_at("solver", "method")("method must be ed, rk4 or auto")
    for key in ("dt", "tol", "t_max"):
        if key in sv:
            sv[key] = _number(sv[key], key, err_at("solver", key), positive=True)
    if "warm_start" in sv and not isinstance(sv["warm_start"], bool):
        raise err_at("solver", "warm_start")("warm_start must be true or false")
    solver = SolverSpec(**sv)

    out = data.get("out", "run")
    if not isinstance(out, str) or not out:
        raise err_at(None, "out")("out must be a nonempty path")
    cache = data.get("cache", True)
    if not isinstance(cache, bool):
        raise err_at(None, "cache")("cache must be true or false")
    resolution = data.get("resolution", 101)
    if isinstance(resolution, bool) or not isinstance(resolution, int) or resolution < 2:
        raise err_at(None, "resolution")("resolution must be an integer >= 2")
    return RunConfig(model, params, sweep, solver, out, cache, resolution)


def parse_config(text, source=None):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else max(len(text.splitlines()), 1)
        raise ConfigError(f"syntax error: {exc}", line, source) from None
    return config_from_dict(data, text, source)


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def dumps_config(config):
    return tomli_w.dumps(config.to_dict())


def config_hash(config):
    return hashlib.sha256(dumps_config(config).encode()).hexdigest()


# -- result files ----------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_text_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path, obj):
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_table_csv(path, columns, rows):
    """CSV with round-trip-exact float formatting; ``None``/NaN become empty cells."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_table_csv(path):
    """Columns of a CSV written by :func:`write_table_csv` as float arrays (NaN for blanks)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) if c else math.nan for c in r] for r in reader if r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def curve_rows(curve, gaps=None):
    rows = []
    for i, pt in enumerate(curve.points):
        diag = curve.diagnostics[i] if i < len(curve.diagnostics) else {}
        row = [pt.p, pt.delta_p, pt.chi_f, pt.chi_t, diag.get("residual")]
        if gaps is not None:
            row.append(gaps[i])
        rows.append(row)
    return rows


def write_curve_csv(path, curve, gaps=None):
    columns = CURVE_COLUMNS + (("gap",) if gaps is not None else ())
    write_table_csv(path, columns, curve_rows(curve, gaps))


# -- manifest --------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    started: str
    input_hash: str
    finished: str | None = None
    points: list = field(default_factory=list)
    failed: int = 0
    truncated: bool = False
    exit_code: int | None = None
    schema_version: int = SCHEMA_VERSION

    def as_dict(self):
        return _jsonable(dataclasses.asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def jsonable(obj):
    """Convert numpy scalars and containers to JSON-safe values (non-finite -> None)."""
    return _jsonable(obj)


# -- steady-state cache ----------------------------------------------------

def default_cache_dir():
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or Path.home() / ".cache"
    return Path(base) / "steadysusc"


class SteadyStateCache:
    """Directory of steady states keyed by a hash of the Liouvillian and solver settings.

    Entries are never evicted; remove the directory to clear it.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(L, settings):
        h = hashlib.sha256()
        m = L.matrix
        if sp.issparse(m):
            m = m.tocsr(copy=True)
            m.sum_duplicates()
            m.sort_indices()
            for arr in (m.indptr, m.indices, m.data):
                h.update(np.ascontiguousarray(arr).tobytes())
        else:
            h.update(np.ascontiguousarray(m).tobytes())
        h.update(repr((m.shape, str(m.dtype), L.hilbert_dim)).encode())
        if L.basis is not None:
            b = sp.csr_matrix(L.basis, copy=True)
            b.sort_indices()
            for arr in (b.indptr, b.indices, b.data):
                h.update(np.ascontiguousarray(arr).tobytes())
        h.update(json.dumps(settings, sort_keys=True).encode())
        return h.hexdigest()

    def _path(self, key):
        return self.directory / key[:2] / f"{key}.npz"

    def load(self, key):
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        with np.load(path, allow_pickle=False) as z:
            rho = z["rho"]
            diag = json.loads(str(z["diag"]))
        self.hits += 1
        return rho, diag

    def store(self, key, rho, diag):
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
        os.close(fd)
        try:
            np.savez(tmp, rho=rho, diag=np.array(json.dumps(_jsonable(diag), sort_keys=True)))
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
