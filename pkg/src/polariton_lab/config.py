"""Strict YAML run configuration.

Example (dispersion mode)::

    mode: dispersion
    model:
      g_sqrt_n: 10.0
      omega_plus: 0.7071067811865476
      omega_minus: 0.7071067811865476
    dispersion:
      k_min: -0.5
      k_max: 0.5
      n_k: 201

Complex values may be written as a number or an ``[re, im]`` pair.  Unknown
keys are rejected and every problem is reported at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .model import ModelParams
from .propagation import Grid1D, PulseSpec
from .protocols import ControlSchedule


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-4``)."""


_Loader.yaml_implicit_resolvers = {k: list(v) for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()}
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)

MODES = ("transform", "dispersion", "propagate", "scenario")
SCENARIO_KINDS = ("storage", "retrieval", "custom")

REQUIRED_SECTIONS = {
    "transform": ("transform",),
    "dispersion": ("model", "dispersion"),
    "propagate": ("model", "grid", "pulse", "propagate"),
    "scenario": ("model", "grid", "schedule", "scenario"),
}


@dataclass(frozen=True)
class DispersionSettings:
    k_min: float
    k_max: float
    n_k: int = 201
    fd_step: float = 1e-4


@dataclass(frozen=True)
class PropagateSettings:
    t_final: float
    dt: float | None = None
    snapshot_interval: float | None = None


@dataclass(frozen=True)
class ScenarioSettings:
    kind: str
    dt: float | None = None
    snapshot_interval: float | None = None
    retrieval: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    mode: str
    model: ModelParams | None = None
    grid: Grid1D | None = None
    pulse: PulseSpec | None = None
    schedule: ControlSchedule | None = None
    coupling: tuple | None = None
    transform_from_model: bool = False
    dispersion: DispersionSettings | None = None
    propagate: PropagateSettings | None = None
    scenario: ScenarioSettings | None = None
    output_dir: str = "polariton_out"
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path, msg):
        self.errors.append(f"{path}: {msg}")


def _real(v, path, errs, *, minimum=None, strict_min=None, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errs.add(path, f"expected a real number, got {v!r}")
        return None
    v = float(v)
    if not math.isfinite(v):
        errs.add(path, f"must be finite, got {v!r}")
        return None
    if minimum is not None and v < minimum:
        errs.add(path, f"must be >= {minimum:g} (got {v:g})")
        return None
    if strict_min is not None and v <= strict_min:
        errs.add(path, f"must be > {strict_min:g} (got {v:g})")
        return None
    return v


def _complex(v, path, errs):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            errs.add(path, f"complex value must be [re, im], got {v!r}")
            return None
        re = _real(v[0], path + "[0]", errs)
        im = _real(v[1], path + "[1]", errs)
        return None if re is None or im is None else complex(re, im)
    re = _real(v, path, errs)
    return None if re is None else complex(re)


def _int(v, path, errs, *, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        errs.add(path, f"expected an integer, got {v!r}")
        return None
    if minimum is not None and v < minimum:
        errs.add(path, f"must be >= {minimum} (got {v})")
        return None
    return v


def _section(data, name, allowed, errs, required=()):
    sec = data.get(name)
    if not isinstance(sec, dict):
        errs.add(name, "must be a mapping")
        return None
    for key in sorted(set(sec) - set(allowed)):
        errs.add(f"{name}.{key}", f"unknown key (allowed: {', '.join(allowed)})")
    for key in required:
        if key not in sec:
            errs.add(f"{name}.{key}", "missing required key")
    return sec


def _parse_model(data, errs, mode):
    keys = ("g_sqrt_n", "omega_plus", "omega_minus", "delta_plus", "delta_minus",
            "gamma_plus", "gamma_minus", "c")
    sec = _section(data, "model", keys, errs, required=("g_sqrt_n", "omega_plus"))
    if sec is None:
        return None
    ok = True
    vals = {}
    for key in keys:
        if key not in sec:
            continue
        path = f"model.{key}"
        if key.startswith("omega"):
            val = _complex(sec[key], path, errs)
        elif key in ("g_sqrt_n", "gamma_plus", "gamma_minus"):
            val = _real(sec[key], path, errs, minimum=0.0)
        elif key == "c":
            val = _real(sec[key], path, errs, strict_min=0.0)
        else:
            val = _real(sec[key], path, errs)
        ok &= val is not None
        vals[key] = val
    if not ok or "g_sqrt_n" not in vals or "omega_plus" not in vals:
        return None
    params = ModelParams(**vals)
    if mode in ("dispersion", "propagate") and params.omega_sq == 0:
        errs.add("model", "degenerate control fields (omega_plus = omega_minus = 0)")
        return None
    return params


def _parse_grid(data, errs):
    sec = _section(data, "grid", ("n_points", "z_min", "z_max"), errs,
                   required=("n_points", "z_min", "z_max"))
    if sec is None or any(k not in sec for k in ("n_points", "z_min", "z_max")):
        return None
    n = _int(sec["n_points"], "grid.n_points", errs, minimum=16)
    if n is not None and n & (n - 1):
        errs.add("grid.n_points", f"must be a power of two (got {n})")
        n = None
    lo = _real(sec["z_min"], "grid.z_min", errs)
    hi = _real(sec["z_max"], "grid.z_max", errs)
    if lo is not None and hi is not None and hi <= lo:
        errs.add("grid.z_max", f"must exceed z_min={lo:g} (got {hi:g})")
        return None
    if None in (n, lo, hi):
        return None
    return Grid1D(n, lo, hi)


def _parse_pulse(data, errs, grid):
    sec = _section(data, "pulse", ("center", "width", "k0", "amplitude"), errs,
                   required=("center", "width"))
    if sec is None or "center" not in sec or "width" not in sec:
        return None
    center = _real(sec["center"], "pulse.center", errs)
    width = _real(sec["width"], "pulse.width", errs, strict_min=0.0)
    k0 = _real(sec.get("k0", 0.0), "pulse.k0", errs)
    amp = _complex(sec.get("amplitude", 1.0), "pulse.amplitude", errs)
    if None in (center, width, k0, amp):
        return None
    pulse = PulseSpec(center, width, k0, amp)
    if grid is not None:
        try:
            pulse.check_inside(grid)
        except ValueError as exc:
            errs.add("pulse", str(exc))
    return pulse


def _parse_levels(items, path, errs):
    if not isinstance(items, list) or not items:
        errs.add(path, "must be a non-empty list of {duration, omega_plus, omega_minus}")
        return None
    steps = []
    for i, item in enumerate(items):
        p = f"{path}[{i}]"
        if not isinstance(item, dict):
            errs.add(p, "must be a mapping")
            return None
        allowed = ("duration", "omega_plus", "omega_minus")
        for key in sorted(set(item) - set(allowed)):
            errs.add(f"{p}.{key}", f"unknown key (allowed: {', '.join(allowed)})")
        missing = [k for k in allowed if k not in item]
        for key in missing:
            errs.add(f"{p}.{key}", "missing required key")
        if missing:
            return None
        dur = _real(item["duration"], f"{p}.duration", errs, strict_min=0.0)
        op = _complex(item["omega_plus"], f"{p}.omega_plus", errs)
        om = _complex(item["omega_minus"], f"{p}.omega_minus", errs)
        if None in (dur, op, om):
            return None
        steps.append((dur, op, om))
    return steps


def _parse_schedule(data, errs):
    sec = _section(data, "schedule", ("initial", "segments"), errs, required=("initial", "segments"))
    if sec is None or "initial" not in sec or "segments" not in sec:
        return None
    init = sec["initial"]
    if not isinstance(init, list) or len(init) != 2:
        errs.add("schedule.initial", "must be [omega_plus, omega_minus]")
        return None
    op = _complex(init[0], "schedule.initial[0]", errs)
    om = _complex(init[1], "schedule.initial[1]", errs)
    steps = _parse_levels(sec["segments"], "schedule.segments", errs)
    if None in (op, om) or steps is None:
        return None
    return ControlSchedule.from_levels((op, om), steps)


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate YAML configuration text.

    ``mode`` overrides the file's ``mode`` key.

    Raises
    ------
    ConfigError
        Listing every problem found, each prefixed by its key path.
    """
    errs = _Collector()
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["<root>: must be a mapping"])

    allowed = ("mode", "model", "grid", "pulse", "schedule", "transform", "dispersion",
               "propagate", "scenario", "output_dir", "seed")
    for key in sorted(set(data) - set(allowed)):
        errs.add(key, "unknown key")

    mode = mode or data.get("mode")
    if mode not in MODES:
        errs.add("mode", f"must be one of {', '.join(MODES)} (got {mode!r})")
        raise ConfigError(errs.errors)
    for sec in REQUIRED_SECTIONS[mode]:
        if sec not in data:
            errs.add(sec, f"section required for mode={mode}")
    present = {k for k in data if k in allowed}

    out = {"mode": mode}
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str) or not data["output_dir"]:
            errs.add("output_dir", "must be a non-empty string")
        else:
            out["output_dir"] = data["output_dir"]
    if "seed" in data:
        seed = _int(data["seed"], "seed", errs, minimum=0)
        if seed is not None:
            out["seed"] = seed

    if "model" in present:
        out["model"] = _parse_model(data, errs, mode)
    if "grid" in present:
        out["grid"] = _parse_grid(data, errs)
    if "pulse" in present:
        out["pulse"] = _parse_pulse(data, errs, out.get("grid"))
    if "schedule" in present:
        out["schedule"] = _parse_schedule(data, errs)

    if "transform" in present:
        sec = _section(data, "transform", ("coupling", "from_model"), errs)
        if sec is not None:
            from_model = sec.get("from_model", False)
            if not isinstance(from_model, bool):
                errs.add("transform.from_model", "must be true or false")
            elif from_model:
                out["transform_from_model"] = True
                if "model" not in data:
                    errs.add("model", "section required when transform.from_model is true")
            if "coupling" in sec:
                rows = sec["coupling"]
                if (not isinstance(rows, list) or not rows
                        or not all(isinstance(r, list) and r for r in rows)
                        or len({len(r) for r in rows}) != 1):
                    errs.add("transform.coupling", "must be a non-empty rectangular list of rows")
                else:
                    parsed = [[_complex(x, f"transform.coupling[{i}][{j}]", errs)
                               for j, x in enumerate(r)] for i, r in enumerate(rows)]
                    if all(x is not None for r in parsed for x in r):
                        out["coupling"] = tuple(tuple(r) for r in parsed)
            elif from_model is not True:
                errs.add("transform.coupling", "missing (or set from_model: true)")

    if "dispersion" in present:
        sec = _section(data, "dispersion", ("k_min", "k_max", "n_k", "fd_step"), errs,
                       required=("k_min", "k_max"))
        if sec is not None and "k_min" in sec and "k_max" in sec:
            lo = _real(sec["k_min"], "dispersion.k_min", errs)
            hi = _real(sec["k_max"], "dispersion.k_max", errs)
            n_k = _int(sec.get("n_k", 201), "dispersion.n_k", errs, minimum=2)
            h = _real(sec.get("fd_step", 1e-4), "dispersion.fd_step", errs, strict_min=0.0)
            if lo is not None and hi is not None and hi <= lo:
                errs.add("dispersion.k_max", f"must exceed k_min={lo:g} (got {hi:g})")
            elif None not in (lo, hi, n_k, h):
                out["dispersion"] = DispersionSettings(lo, hi, n_k, h)

    if "propagate" in present:
        sec = _section(data, "propagate", ("t_final", "dt", "snapshot_interval"), errs,
                       required=("t_final",))
        if sec is not None and "t_final" in sec:
            t = _real(sec["t_final"], "propagate.t_final", errs, strict_min=0.0)
            dt = _real(sec.get("dt"), "propagate.dt", errs, strict_min=0.0, allow_none=True)
            snap = _real(sec.get("snapshot_interval"), "propagate.snapshot_interval", errs,
                         strict_min=0.0, allow_none=True)
            if t is not None:
                out["propagate"] = PropagateSettings(t, dt, snap)

    if "scenario" in present:
        sec = _section(data, "scenario", ("kind", "dt", "snapshot_interval", "retrieval"), errs,
                       required=("kind",))
        if sec is not None and "kind" in sec:
            kind = sec["kind"]
            if kind not in SCENARIO_KINDS:
                errs.add("scenario.kind", f"must be one of {', '.join(SCENARIO_KINDS)} (got {kind!r})")
            dt = _real(sec.get("dt"), "scenario.dt", errs, strict_min=0.0, allow_none=True)
            snap = _real(sec.get("snapshot_interval"), "scenario.snapshot_interval", errs,
                         strict_min=0.0, allow_none=True)
            retrieval = ()
            if kind == "retrieval":
                if "retrieval" not in sec:
                    errs.add("scenario.retrieval", "segments required for kind=retrieval")
                else:
                    steps = _parse_levels(sec["retrieval"], "scenario.retrieval", errs)
                    retrieval = tuple(steps) if steps else ()
            elif "retrieval" in sec:
                errs.add("scenario.retrieval", "only valid for kind=retrieval")
            if kind in ("storage", "custom") and "pulse" not in data:
                errs.add("pulse", f"section required for scenario kind={kind}")
            if kind in SCENARIO_KINDS:
                out["scenario"] = ScenarioSettings(kind, dt, snap, retrieval)

    if errs.errors:
        raise ConfigError(errs.errors)
    return RunConfig(raw=data, **out)


def _num(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def config_to_dict(cfg: RunConfig) -> dict:
    """Normalised mapping; ``parse_config(dump_config(cfg)) == cfg``."""
    out: dict = {"mode": cfg.mode, "output_dir": cfg.output_dir, "seed": cfg.seed}
    if cfg.model is not None:
        out["model"] = cfg.model.to_dict()
    if cfg.grid is not None:
        out["grid"] = {"n_points": cfg.grid.n_points, "z_min": cfg.grid.z_min, "z_max": cfg.grid.z_max}
    if cfg.pulse is not None:
        p = cfg.pulse
        out["pulse"] = {"center": float(p.center), "width": float(p.width), "k0": float(p.k0),
                        "amplitude": _num(p.amplitude)}
    if cfg.schedule is not None:
        out["schedule"] = cfg.schedule.to_dict()
    if cfg.coupling is not None or cfg.transform_from_model:
        sec: dict = {}
        if cfg.coupling is not None:
            sec["coupling"] = [[_num(x) for x in row] for row in cfg.coupling]
        if cfg.transform_from_model:
            sec["from_model"] = True
        out["transform"] = sec
    if cfg.dispersion is not None:
        d = cfg.dispersion
        out["dispersion"] = {"k_min": d.k_min, "k_max": d.k_max, "n_k": d.n_k, "fd_step": d.fd_step}
    if cfg.propagate is not None:
        p = cfg.propagate
        out["propagate"] = {"t_final": p.t_final, "dt": p.dt, "snapshot_interval": p.snapshot_interval}
    if cfg.scenario is not None:
        s = cfg.scenario
        sec = {"kind": s.kind, "dt": s.dt, "snapshot_interval": s.snapshot_interval}
        if s.retrieval:
            sec["retrieval"] = [
                {"duration": d, "omega_plus": _num(op), "omega_minus": _num(om)}
                for d, op, om in s.retrieval
            ]
        out["scenario"] = sec
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)
