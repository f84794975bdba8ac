"""Monte-Carlo harness: configuration, the seven allocation schemes, sweeps,
aggregation and CSV/JSON output."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocator import IterateTrace, alternate, evaluate_allocation
from .baselines import elementwise_gamma_step, random_allocation
from .channels import (FadingConfig, GeometryConfig, dbm_to_watt, generate_scenario, noise_power,
                       watt_to_dbm)
from .fracprog import SolverConfig, SolverError
from .model import (Allocation, ChannelSet, CsiMode, ModelError, ObjectiveMode, RisMode,
                    SystemParams, gee, sum_rate)
from .quantize import QuantizationConfig, quantized_evaluate

SCHEMES = ("a", "b", "c", "d", "e", "f", "g")
SWEEPS = ("P_tmax", "P_c_n_active", "NEV", "quant_bits")

# tag -> (design CSI, objective, reflection step)
_SCHEME_SPECS = {
    "a": (CsiMode.PERFECT, ObjectiveMode.SEE, "sca"),
    "b": (CsiMode.STATISTICAL, ObjectiveMode.SEE, "sca"),
    "c": (CsiMode.PERFECT, ObjectiveMode.SSR, "sca"),
    "d": (CsiMode.STATISTICAL, ObjectiveMode.SSR, "sca"),
    "e": (CsiMode.PERFECT, ObjectiveMode.SEE, "grid"),
    "f": (CsiMode.STATISTICAL, ObjectiveMode.SEE, "grid"),
    "g": (CsiMode.PERFECT, ObjectiveMode.SEE, "random"),
}

_DEFAULT_GRIDS = {
    "P_tmax": (-20.0, -10.0, 0.0, 10.0, 20.0, 30.0, 40.0, 50.0),
    "P_c_n_active": (0.0, 10.0, 20.0, 30.0, 40.0),
    "NEV": (-10.0, 0.0, 10.0),
    "quant_bits": (0, 1, 2, 3, 4),
}

PRESETS = {
    "paper": dict(K=4, N_B=4, N=100, trials=1000),
    "desk": dict(K=2, N_B=2, N=16, trials=50),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep description. Powers are in W; ``grid`` keeps the user-facing units.

    Sweep grids are in dBm for ``P_tmax`` and ``P_c_n_active``, in dB of the
    error-to-estimate energy ratio for ``NEV`` and in bits (phase = modulus;
    0 means unquantized) for ``quant_bits``. ``grid_linear`` holds the same
    values converted once at construction. ``p_tmax`` is the total transmit
    budget; each user may spend at most ``p_tmax / K``.
    """

    K: int = 4
    N_B: int = 4
    N: int = 100
    bandwidth: float = 20e6
    p_0: float = 0.1
    p_0_ris: float = 1.0
    p_c_n: float = 1e-3
    p_r_max: float = 1e-2
    p_tmax: float = 1.0
    ris_mode: RisMode = RisMode.ACTIVE
    nev_db: float = 0.0
    sweep_p_0_ris_active: float = 0.1
    passive_p_c_n: float = 1e-3
    passive_p_0_ris: float = 1e-2
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 5.0
    geometry: GeometryConfig = GeometryConfig()
    fading: FadingConfig = FadingConfig()
    sweep: str = "P_tmax"
    grid: tuple = _DEFAULT_GRIDS["P_tmax"]
    schemes: tuple = SCHEMES
    trials: int = 1000
    seed: int = 0
    eps: float = 1e-4
    max_alt: int = 30
    max_sca: int = 20
    grid_phases: int = 16
    grid_moduli: int = 8
    timing: bool = True
    grid_linear: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ris_mode", RisMode(self.ris_mode))
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.sweep not in SWEEPS:
            raise ConfigError(f"unknown sweep variable {self.sweep!r}; expected one of {SWEEPS}")
        if not self.grid:
            raise ConfigError("sweep grid is empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"invalid schemes {bad or '[]'}; expected a subset of {SCHEMES}")
        if self.sweep == "quant_bits":
            if any(int(b) != b or b < 0 for b in self.grid):
                raise ConfigError("quant_bits grid must hold non-negative integers")
            lin = tuple(int(b) for b in self.grid)
        elif self.sweep == "NEV":
            lin = tuple(float(10.0 ** (v / 10.0)) for v in self.grid)
        else:
            lin = tuple(float(dbm_to_watt(v)) for v in self.grid)
        object.__setattr__(self, "grid_linear", lin)

    @property
    def error_ratio(self) -> float:
        return float(10.0 ** (self.nev_db / 10.0))

    @property
    def noise(self) -> float:
        return noise_power(self.bandwidth, self.noise_psd_dbm_hz, self.noise_figure_db)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(eps=self.eps, max_alt=self.max_alt, max_sca=self.max_sca)

    def params(self, p_tmax: float | None = None, ris_mode: RisMode | None = None,
               p_c_n: float | None = None, p_0_ris: float | None = None) -> SystemParams:
        s2 = self.noise
        return SystemParams(
            K=self.K, N_B=self.N_B, N=self.N, bandwidth=self.bandwidth,
            sigma2_b=s2, sigma2_ris=s2, sigma2_e=s2,
            p_max=(self.p_tmax if p_tmax is None else p_tmax) / self.K, p_r_max=self.p_r_max,
            ris_mode=self.ris_mode if ris_mode is None else ris_mode,
            p_c_n=self.p_c_n if p_c_n is None else p_c_n,
            p_0_ris=self.p_0_ris if p_0_ris is None else p_0_ris, p_0=self.p_0)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """JSON-ready echo in the units of the config file."""
        out = {"K": self.K, "N_B": self.N_B, "N": self.N, "bandwidth_hz": self.bandwidth}
        for key in _DBM_KEYS:
            out[key + "_dbm"] = float(watt_to_dbm(getattr(self, key)))
        out.update(ris_mode=self.ris_mode.value, nev_db=self.nev_db,
                   noise_psd_dbm_hz=self.noise_psd_dbm_hz, noise_figure_db=self.noise_figure_db,
                   geometry=dataclasses.asdict(self.geometry), fading=dataclasses.asdict(self.fading),
                   sweep={"variable": self.sweep, "grid": list(self.grid)},
                   schemes=list(self.schemes), trials=self.trials, seed=self.seed,
                   solver={"eps": self.eps, "max_alt": self.max_alt, "max_sca": self.max_sca},
                   grid_phases=self.grid_phases, grid_moduli=self.grid_moduli, timing=self.timing)
        return out


_DBM_KEYS = ("p_0", "p_0_ris", "p_c_n", "p_r_max", "p_tmax", "sweep_p_0_ris_active",
             "passive_p_c_n", "passive_p_0_ris")
_PLAIN_KEYS = ("K", "N_B", "N", "ris_mode", "nev_db", "noise_psd_dbm_hz", "noise_figure_db",
               "schemes", "trials", "seed", "grid_phases", "grid_moduli", "timing")


def config_from_dict(data: dict, preset: str = "paper") -> ExperimentConfig:
    """Parse a JSON-style mapping on top of a preset; dBm values become W here."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {tuple(PRESETS)}")
    kw: dict = dict(PRESETS[preset])
    data = dict(data)
    for key in _DBM_KEYS:
        if key + "_dbm" in data:
            kw[key] = float(dbm_to_watt(data.pop(key + "_dbm")))
    for key in _PLAIN_KEYS:
        if key in data:
            kw[key] = data.pop(key)
    if "bandwidth_hz" in data:
        kw["bandwidth"] = float(data.pop("bandwidth_hz"))
    if "geometry" in data:
        geo = dict(data.pop("geometry"))
        for key in ("user_height_range", "eve_height_range"):
            if key in geo:
                geo[key] = tuple(geo[key])
        kw["geometry"] = GeometryConfig(**geo)
    if "fading" in data:
        kw["fading"] = FadingConfig(**data.pop("fading"))
    if "sweep" in data:
        sw = dict(data.pop("sweep"))
        kw["sweep"] = sw.pop("variable", "P_tmax")
        kw["grid"] = tuple(sw.pop("grid", _DEFAULT_GRIDS.get(kw["sweep"], ())))
        if sw:
            raise ConfigError(f"unknown sweep keys {sorted(sw)}")
    if "solver" in data:
        sol = dict(data.pop("solver"))
        for key in ("eps", "max_alt", "max_sca"):
            if key in sol:
                kw[key] = sol.pop(key)
        if sol:
            raise ConfigError(f"unknown solver keys {sorted(sol)}")
    if data:
        raise ConfigError(f"unknown config keys {sorted(data)}")
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, preset: str = "paper") -> ExperimentConfig:
    if path is None:
        return config_from_dict({}, preset)
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data, preset)


# ------------------------------------------------------------ schemes

@dataclass
class SchemeOutcome:
    alloc: Allocation
    trace: IterateTrace | None = None

    @property
    def iterations(self) -> int:
        return 0 if self.trace is None else self.trace.iterations

    @property
    def flags(self) -> list[str]:
        return [] if self.trace is None else list(dict.fromkeys(self.trace.flags))


def run_scheme(tag: str, channels: ChannelSet, params: SystemParams,
               solver: SolverConfig = SolverConfig(), grid: tuple[int, int] = (16, 8),
               seed: int = 0, init: Allocation | None = None) -> SchemeOutcome:
    """Allocation produced by scheme ``tag``.

    (a)/(b) maximize SEE and (c)/(d) maximize SSR under perfect/statistical
    eavesdropper CSI; (e)/(f) maximize SEE with an element-wise grid search
    for the reflection vector; (g) draws random phases with uniform moduli
    and powers (``seed`` drives the phases). ``init`` overrides the
    starting point of the optimized schemes.
    """
    if tag not in _SCHEME_SPECS:
        raise ValueError(f"unknown scheme {tag!r}; expected one of {SCHEMES}")
    csi, obj, kind = _SCHEME_SPECS[tag]
    if kind == "random":
        return SchemeOutcome(random_allocation(channels, params, seed))
    kwargs = {}
    if kind == "grid":
        kwargs["gamma_step"] = elementwise_gamma_step(*grid)
        solver = dataclasses.replace(solver, refine=False)
    return SchemeOutcome(*alternate(channels, params, csi, obj, solver, init=init, **kwargs))


# ------------------------------------------------------------ records

@dataclass(frozen=True)
class RunRecord:
    trial: int
    seed: int
    scheme: str
    ris_mode: str
    sweep_value: float
    see_true: float
    ssr_true: float
    see_stat: float
    gee_true: float
    sr_true: float
    p_tot: float
    iterations: int
    wall_time: float
    flags: str

    @property
    def failed(self) -> bool:
        return self.flags.startswith("failed")


RECORD_FIELDS = tuple(f.name for f in dataclasses.fields(RunRecord))
_INT_FIELDS = ("trial", "seed", "iterations")
_STR_FIELDS = ("scheme", "ris_mode", "flags")
_METRICS = ("see_true", "ssr_true", "see_stat", "gee_true", "sr_true", "p_tot", "iterations")
_SOLVER_ERRORS = (ModelError, SolverError, np.linalg.LinAlgError, FloatingPointError)


def _record(trial, seed, tag, mode, value, alloc, channels, params, iterations, wall, flags):
    rep = evaluate_allocation(alloc, channels, params)
    return RunRecord(trial, seed, tag, mode.value, float(value), rep.see_true, rep.ssr_true,
                     rep.see_stat, gee(alloc, channels, params), sum_rate(alloc, channels, params),
                     rep.p_tot, iterations, wall, ";".join(flags))


def _failed(trial, seed, tag, mode, value, wall, exc) -> RunRecord:
    nan = math.nan
    return RunRecord(trial, seed, tag, mode.value, float(value), nan, nan, nan, nan, nan, nan,
                     0, wall, f"failed: {type(exc).__name__}: {exc}")


def _scored(cfg, trial, seed, tag, value, channels, params,
            prev: SchemeOutcome | None = None) -> tuple[RunRecord, SchemeOutcome | None]:
    """Run and score one scheme.

    ``prev`` is the outcome at the previous point of a sweep whose feasible
    set only grows. If the fresh run ends below it, the run is repeated from
    ``prev``, so per-trial objectives are monotone along such sweeps.
    """
    t0 = time.perf_counter()
    try:
        grid = (cfg.grid_phases, cfg.grid_moduli)
        out = run_scheme(tag, channels, params, cfg.solver, grid, seed)
        if (prev is not None and out.trace is not None and prev.trace is not None
                and prev.trace.objective[-1] > out.trace.objective[-1]):
            out = run_scheme(tag, channels, params, cfg.solver, grid, seed, init=prev.alloc)
            out.trace.flags.append("restarted from previous sweep point")
        wall = time.perf_counter() - t0 if cfg.timing else 0.0
        rec = _record(trial, seed, tag, params.ris_mode, value, out.alloc, channels, params,
                      out.iterations, wall, out.flags)
        return rec, out
    except _SOLVER_ERRORS as exc:
        wall = time.perf_counter() - t0 if cfg.timing else 0.0
        return _failed(trial, seed, tag, params.ris_mode, value, wall, exc), None


def trial_seed(base: int, trial: int) -> int:
    return int(base) ^ int(trial)


def run_trial(cfg: ExperimentConfig, trial: int) -> list[RunRecord]:
    """Every (sweep value, scheme) record of one channel realization."""
    seed = trial_seed(cfg.seed, trial)
    base = cfg.params()
    channels, _ = generate_scenario(base, cfg.geometry, cfg.fading, seed, cfg.error_ratio)
    records: list[RunRecord] = []
    if cfg.sweep == "P_tmax":
        prev: dict[str, SchemeOutcome | None] = {}
        for value, p_t in sorted(zip(cfg.grid, cfg.grid_linear)):
            params = cfg.params(p_tmax=p_t)
            for s in cfg.schemes:
                rec, prev[s] = _scored(cfg, trial, seed, s, value, channels, params, prev.get(s))
                records.append(rec)
    elif cfg.sweep == "NEV":
        for value, ratio in zip(cfg.grid, cfg.grid_linear):
            ch, _ = generate_scenario(base, cfg.geometry, cfg.fading, seed, ratio)
            records += [_scored(cfg, trial, seed, s, value, ch, base)[0] for s in cfg.schemes]
    elif cfg.sweep == "P_c_n_active":
        passive = cfg.params(ris_mode=RisMode.PASSIVE, p_c_n=cfg.passive_p_c_n,
                             p_0_ris=cfg.passive_p_0_ris)
        # The passive surface does not depend on the swept value: solve once, repeat the row.
        ref = {s: _scored(cfg, trial, seed, s, cfg.grid[0], channels, passive)[0] for s in cfg.schemes}
        for value, p_cn in zip(cfg.grid, cfg.grid_linear):
            active = cfg.params(ris_mode=RisMode.ACTIVE, p_c_n=p_cn, p_0_ris=cfg.sweep_p_0_ris_active)
            for s in cfg.schemes:
                records.append(_scored(cfg, trial, seed, s, value, channels, active)[0])
                records.append(dataclasses.replace(ref[s], sweep_value=float(value)))
    else:
        for s in cfg.schemes:
            rec, out = _scored(cfg, trial, seed, s, 0, channels, base)
            for value, bits in zip(cfg.grid, cfg.grid_linear):
                if out is None or bits == 0:
                    records.append(dataclasses.replace(rec, sweep_value=float(value)))
                    continue
                q = quantized_evaluate(out.alloc, channels, base, QuantizationConfig(bits, bits))
                flags = [f for f in rec.flags.split(";") if f]
                flags += ["quantized gamma rescaled"] if q.rescaled else []
                records.append(_record(trial, seed, s, base.ris_mode, value, q.alloc, channels, base,
                                       rec.iterations, rec.wall_time, flags))
    return records


def _order_key(cfg: ExperimentConfig):
    grid = [float(v) for v in cfg.grid]
    return lambda r: (grid.index(r.sweep_value), r.trial, cfg.schemes.index(r.scheme), r.ris_mode)


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[RunRecord]:
    """All records of the sweep, in a deterministic order independent of ``threads``."""
    trials = range(cfg.trials)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_trial, [cfg] * cfg.trials, trials))
    else:
        chunks = [run_trial(cfg, t) for t in trials]
    return sorted((r for chunk in chunks for r in chunk), key=_order_key(cfg))


# ------------------------------------------------------------ aggregation

@dataclass(frozen=True)
class AggregateRow:
    scheme: str
    ris_mode: str
    sweep_value: float
    n: int
    n_failed: int
    mean: dict
    stderr: dict


def aggregate(records) -> list[AggregateRow]:
    """Mean and standard error of every metric per (scheme, mode, sweep value).

    Failed records are excluded from the statistics and counted.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.ris_mode, float(r.sweep_value)), []).append(r)
    rows = []
    for key in sorted(groups):
        good = sorted((r for r in groups[key] if not r.failed), key=lambda r: r.trial)
        mean, err = {}, {}
        for m in _METRICS:
            x = np.array([getattr(r, m) for r in good], dtype=float)
            mean[m] = float(np.mean(x)) if x.size else math.nan
            err[m] = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
        rows.append(AggregateRow(*key, len(good), len(groups[key]) - len(good), mean, err))
    return rows


def summary_table(rows: list[AggregateRow]) -> list[dict]:
    out = []
    for r in rows:
        d = {"scheme": r.scheme, "ris_mode": r.ris_mode, "sweep_value": r.sweep_value,
             "n": r.n, "n_failed": r.n_failed}
        for m in _METRICS:
            d[f"{m}_mean"] = r.mean[m]
            d[f"{m}_stderr"] = r.stderr[m]
        out.append(d)
    return out


# ------------------------------------------------------------ output

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9e}"
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def write_table(rows: list[dict], header, path: str | Path, fmt: str = "csv",
                config: ExperimentConfig | None = None) -> Path:
    """Write dict rows as CSV (fixed header) or as JSON with a config echo."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([_fmt(row[h]) for h in header])
        elif fmt == "json":
            doc = {"config": config.to_dict() if config is not None else None,
                   "records": [{h: _json_value(row[h]) for h in header} for row in rows]}
            path.write_text(json.dumps(doc, indent=1) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}; expected csv or json")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit(records, path: str | Path, fmt: str = "csv",
         config: ExperimentConfig | None = None) -> Path:
    return write_table([dataclasses.asdict(r) for r in records], RECORD_FIELDS, path, fmt, config)


def emit_summary(rows: list[AggregateRow], path: str | Path, fmt: str = "csv",
                 config: ExperimentConfig | None = None) -> Path:
    table = summary_table(rows)
    header = list(table[0]) if table else ["scheme", "ris_mode", "sweep_value", "n", "n_failed"]
    return write_table(table, header, path, fmt, config)


def _parse_field(name: str, value):
    if name in _STR_FIELDS:
        return "" if value is None else str(value)
    if name in _INT_FIELDS:
        return int(value)
    if value is None:
        return math.nan
    return float(value)


def load_records(path: str | Path) -> list[RunRecord]:
    """Read records written by :func:`emit` (format from the file suffix)."""
    path = Path(path)
    if path.suffix == ".json":
        rows = json.loads(path.read_text())["records"]
    else:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    return [RunRecord(**{k: _parse_field(k, row[k]) for k in RECORD_FIELDS}) for row in rows]
