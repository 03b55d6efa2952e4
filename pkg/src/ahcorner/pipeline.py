"""Glue, smooth, solve, deform and weigh: the corner mass computation end to end.

Configuration is YAML::

    n: 3
    inside: {family: hyperbolic, kappa: 1.0}      # R = -n(n-1) kappa^2
    outside: {family: ads_schwarzschild, m: 0.1}  # m = 0 is hyperbolic space
    corner: {area_radius: 1.0}                     # W(s0); or {s0: ...}
    nu_list: [0.2, 0.1, 0.05, 0.025]
    grid: {s_hi: 20.0, h_far: 0.0025, core_points: 64,
           inside_points: 401, outside_points: 4001}
    tolerances: {solver: 1.0e-9, deformation: 1.0e-6, wang: 1.0e-9,
                 fit_rho_max: 0.5, fit_terms: 9, aspect: 1.0e-7}
    output: {dir: out, csv: pipeline.csv, json: pipeline.json}
    allow_violation: false

Only ``nu_list`` is required.  ``AHCORNER_OUTPUT_DIR`` overrides
``output.dir``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .corner import CornerManifold, f_source, make_corner, negative_part_norm, smooth
from .green import sphere_volume
from .mass import (extract_mass_aspect, gauge_shift_law, geodesic_gauge,
                   w_expansion_check, wang_inequality)
from .solver import SolverInput, certify_deformation, second_derivative, solve
from .warped import (WarpedMetric, conformal_reparametrize, make_ads_schwarzschild,
                     scalar_curvature)

OUTPUT_ENV = "AHCORNER_OUTPUT_DIR"
CSV_COLUMNS = ("nu", "H_minus", "H_plus", "f_norm", "A_nu", "h_scalar",
               "h_tilde_scalar", "mass_lhs", "mass_rhs", "ok")

INSIDE_FAMILIES = ("hyperbolic",)
OUTSIDE_FAMILIES = ("ads_schwarzschild", "hyperbolic")


class ConfigError(ValueError):
    """Schema violation in a pipeline configuration."""


@dataclass(frozen=True)
class GridSpec:
    s_hi: float = 20.0
    h_far: float = 0.0025
    core_points: int = 64
    inside_points: int = 401
    outside_points: int = 4001


@dataclass(frozen=True)
class Tolerances:
    solver: float = 1e-9
    deformation: float = 1e-6
    wang: float = 1e-9
    fit_rho_max: float = 0.5
    fit_terms: int = 9
    aspect: float = 1e-7


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    csv: str = "pipeline.csv"
    json: str = "pipeline.json"


@dataclass(frozen=True)
class PipelineConfig:
    nu_list: tuple[float, ...]
    n: int = 3
    inside: dict = field(default_factory=lambda: {"family": "hyperbolic", "kappa": 1.0})
    outside: dict = field(default_factory=lambda: {"family": "ads_schwarzschild", "m": 0.1})
    corner: dict = field(default_factory=lambda: {"area_radius": 1.0})
    grid: GridSpec = GridSpec()
    tolerances: Tolerances = Tolerances()
    output: OutputSpec = OutputSpec()
    allow_violation: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nu_list"] = list(self.nu_list)
        return d

    @property
    def kappa(self) -> float:
        return float(self.inside.get("kappa", 1.0))

    @property
    def mass(self) -> float:
        return float(self.outside.get("m", 0.0))

    @property
    def area_radius(self) -> float:
        if "area_radius" in self.corner:
            return float(self.corner["area_radius"])
        return math.sinh(self.kappa * float(self.corner["s0"])) / self.kappa

    @property
    def s0(self) -> float:
        if "s0" in self.corner:
            return float(self.corner["s0"])
        return math.asinh(self.kappa * self.area_radius) / self.kappa

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output.dir)


def _key_lines(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    lines: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return lines


def _number(value, path: str, lines: dict, kind=float):
    where = f" (line {lines[path]})" if path in lines else ""
    if isinstance(value, bool):
        raise ConfigError(f"{path}{where}: expected a number, got {value!r}")
    try:
        out = kind(float(value)) if kind is int else kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}{where}: expected a number, got {value!r}") from None
    if kind is int and out != float(value):
        raise ConfigError(f"{path}{where}: expected an integer, got {value!r}")
    if kind is float and not math.isfinite(out):
        raise ConfigError(f"{path}{where}: must be finite")
    return out


def _section(raw: dict, name: str, cls, lines: dict):
    data = raw.get(name) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = {f.name: f.type for f in cls.__dataclass_fields__.values()}
    kwargs = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        if key not in known:
            where = f" (line {lines[path]})" if path in lines else ""
            raise ConfigError(f"{path}{where}: unknown field")
        default = getattr(cls(), key)
        if isinstance(default, str):
            kwargs[key] = str(value)
        else:
            kwargs[key] = _number(value, path, lines, type(default))
    return cls(**kwargs)


def parse_config(text: str) -> PipelineConfig:
    """Validate YAML text into a :class:`PipelineConfig`."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    lines = _key_lines(text)
    allowed = {"n", "inside", "outside", "corner", "nu_list", "grid", "tolerances",
               "output", "allow_violation"}
    for key in raw:
        if key not in allowed:
            where = f" (line {lines[key]})" if key in lines else ""
            raise ConfigError(f"{key}{where}: unknown field")
    if "nu_list" not in raw:
        raise ConfigError("nu_list: required field is missing")
    nus = raw["nu_list"]
    if not isinstance(nus, list) or not nus:
        raise ConfigError(f"nu_list (line {lines.get('nu_list', '?')}): expected a non-empty list")
    nu_list = tuple(_number(x, "nu_list", lines) for x in nus)
    if any(x <= 0.0 for x in nu_list):
        raise ConfigError(f"nu_list (line {lines.get('nu_list', '?')}): entries must be positive")
    if any(b >= a for a, b in zip(nu_list, nu_list[1:])):
        raise ConfigError(f"nu_list (line {lines.get('nu_list', '?')}): must be strictly decreasing")
    n = _number(raw.get("n", 3), "n", lines, int)
    if n < 3:
        raise ConfigError(f"n (line {lines.get('n', '?')}): dimension must be at least 3")

    inside = dict(raw.get("inside") or {"family": "hyperbolic"})
    outside = dict(raw.get("outside") or {"family": "ads_schwarzschild", "m": 0.1})
    corner = dict(raw.get("corner") or {"area_radius": 1.0})
    if inside.get("family", "hyperbolic") not in INSIDE_FAMILIES:
        raise ConfigError(f"inside.family (line {lines.get('inside.family', '?')}): "
                          f"expected one of {INSIDE_FAMILIES}")
    if outside.get("family", "ads_schwarzschild") not in OUTSIDE_FAMILIES:
        raise ConfigError(f"outside.family (line {lines.get('outside.family', '?')}): "
                          f"expected one of {OUTSIDE_FAMILIES}")
    inside.setdefault("family", "hyperbolic")
    inside["kappa"] = _number(inside.get("kappa", 1.0), "inside.kappa", lines)
    if inside["kappa"] <= 0.0:
        raise ConfigError("inside.kappa: must be positive")
    outside.setdefault("family", "ads_schwarzschild")
    outside["m"] = (0.0 if outside["family"] == "hyperbolic"
                    else _number(outside.get("m", 0.1), "outside.m", lines))
    if outside["m"] < 0.0:
        raise ConfigError("outside.m: negative mass is not supported")
    if ("area_radius" in corner) == ("s0" in corner):
        raise ConfigError("corner: give exactly one of area_radius or s0")
    key = "area_radius" if "area_radius" in corner else "s0"
    corner = {key: _number(corner[key], f"corner.{key}", lines)}
    if corner[key] <= 0.0:
        raise ConfigError(f"corner.{key}: must be positive")

    cfg = PipelineConfig(
        nu_list=nu_list, n=n, inside=inside, outside=outside, corner=corner,
        grid=_section(raw, "grid", GridSpec, lines),
        tolerances=_section(raw, "tolerances", Tolerances, lines),
        output=_section(raw, "output", OutputSpec, lines),
        allow_violation=bool(raw.get("allow_violation", False)))
    if cfg.grid.core_points < 32:
        raise ConfigError("grid.core_points: the mollifier core needs at least 32 points")
    if cfg.grid.s_hi <= cfg.s0 + 10.0:
        raise ConfigError("grid.s_hi: need at least 10 units of exterior beyond the corner")
    if cfg.outside["m"] > 0.0:
        # the horizon of AdS-Schwarzschild must lie inside the corner sphere
        r, m = cfg.area_radius, cfg.outside["m"]
        if 1.0 + r * r - 2.0 * m * r ** (2 - n) <= 0.0:
            raise ConfigError("corner.area_radius: lies inside the AdS-Schwarzschild horizon")
    return cfg


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def build_corner(cfg: PipelineConfig) -> CornerManifold:
    """Inner ball of curvature ``-kappa^2`` glued to the exterior family at ``s0``."""
    n, k, s0 = cfg.n, cfg.kappa, cfg.s0
    s_in = np.linspace(0.0, s0, cfg.grid.inside_points)

    def profile(s):
        return np.sinh(k * s) / k, np.cosh(k * s), k * np.sinh(k * s)

    inside = WarpedMetric.from_profile(n, s_in, profile, center_regular=True,
                                       label=f"hyperbolic(kappa={k})")
    outside = make_ads_schwarzschild(n, cfg.mass, cfg.area_radius, cfg.grid.s_hi,
                                     s_lo=s0, num=cfg.grid.outside_points)
    return make_corner(inside, outside, s0, allow_violation=cfg.allow_violation)


@dataclass
class NuRecord:
    nu: float
    H_minus: float
    H_plus: float
    f_norm: float = math.nan
    negative_part: float = math.nan
    A_nu: float = math.nan
    decay_order: float = math.nan
    positive: bool = False
    deformation_margin: float = math.nan
    h_scalar: float = math.nan
    h_tilde_scalar: float = math.nan
    h_tilde_direct: float = math.nan
    w_expansion_error: float = math.nan
    mass_lhs: float = math.nan
    mass_rhs: float = math.nan
    wang_ok: bool = False
    aspect_matches: bool = False
    ok: bool = False
    error: str = ""

    def csv_row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            x = getattr(self, name)
            out.append(str(bool(x)).lower() if isinstance(x, bool) else f"{x:.17g}")
        return out


@dataclass
class PipelineReport:
    config: dict
    records: list[NuRecord]
    h_reference: float
    hypothesis_ok: bool
    bound: dict
    flags: dict

    def to_dict(self) -> dict:
        return {"config": self.config, "records": [asdict(r) for r in self.records],
                "h_reference": self.h_reference, "hypothesis_ok": self.hypothesis_ok,
                "bound": self.bound, "flags": self.flags}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineReport":
        return cls(d["config"], [NuRecord(**r) for r in d["records"]], d["h_reference"],
                   d["hypothesis_ok"], d["bound"], d["flags"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(r.csv_row())
        return buf.getvalue()


def _f_norm(g: WarpedMetric, f: np.ndarray) -> float:
    n = g.n
    integrand = np.abs(f) ** (n / 2.0) * g.W ** (n - 1)
    return float(sphere_volume(n) * np.trapezoid(integrand, g.s))


def _deformed_aspect(g: WarpedMetric, res, tol: Tolerances) -> float:
    """``h̃`` read off the deformed metric itself (the second path)."""
    u = 1.0 + res.v
    deformed = conformal_reparametrize(g, u, res.dv, second_derivative(res))
    gauge = geodesic_gauge(deformed)
    return extract_mass_aspect(gauge, deformed, rho_max=tol.fit_rho_max,
                               terms=tol.fit_terms).h_scalar


def run_nu(corner: CornerManifold, nu: float, cfg: PipelineConfig,
           h_reference: float) -> NuRecord:
    """All stages for one smoothing scale; failures are recorded, not raised."""
    tol = cfg.tolerances
    rec = NuRecord(nu=float(nu), H_minus=corner.H_minus, H_plus=corner.H_plus)
    try:
        sm = smooth(corner, nu, h_far=cfg.grid.h_far, core_points=cfg.grid.core_points)
        g = sm.base
        R = scalar_curvature(g)
        f = f_source(g, R)
        rec.f_norm = _f_norm(g, f)
        rec.negative_part = negative_part_norm(g, R)
        res = solve(SolverInput(g, f, -f), rel_tol=tol.solver)
        rec.positive = res.positive or not np.any(res.v)
        if np.any(res.v):
            rec.A_nu, rec.decay_order = res.A, res.fit_order
        else:
            rec.A_nu, rec.decay_order = 0.0, math.nan
        rec.deformation_margin = certify_deformation(g, res, tol.deformation).margin
        gauge = geodesic_gauge(g)
        h = extract_mass_aspect(gauge, g, rho_max=tol.fit_rho_max, terms=tol.fit_terms)
        rec.h_scalar = h.h_scalar
        rec.aspect_matches = bool(abs(h.h_scalar - h_reference)
                                  <= tol.aspect * max(1.0, abs(h_reference)))
        h_tilde = gauge_shift_law(rec.A_nu, h)
        rec.h_tilde_scalar = h_tilde.h_scalar
        rec.h_tilde_direct = (_deformed_aspect(g, res, tol) if np.any(res.v)
                              else h.h_scalar)
        if np.any(res.v):
            rec.w_expansion_error = w_expansion_check(res.v, res.gauge, res.A)["rel_error"]
        rec.mass_lhs, rec.mass_rhs, rec.wang_ok = wang_inequality(h_tilde, tol.wang)
        if not math.isfinite(rec.A_nu):
            raise RuntimeError(res.info.get("fit_error", "decay fit failed"))
        rec.ok = bool(rec.positive and rec.deformation_margin >= -tol.deformation
                      and rec.wang_ok and rec.aspect_matches)
    except Exception as exc:  # one bad scale must not sink the sweep
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.ok = False
    return rec


def fit_nu_bound(records, n: int | None = None) -> tuple[float, float, bool]:
    """``(C, exponent, stable)`` for ``|A_nu| <= C nu^{1/(n+1)}``.

    ``C`` is the largest ``|A_nu|/nu^{1/(n+1)}``; the exponent is the
    log-log slope of ``|A_nu|`` against ``nu``; ``stable`` asks the ratio
    ``max/min`` of ``|A_nu|/nu^{1/(n+1)}`` to stay within 10.
    """
    pairs = [(float(r.nu), abs(float(r.A_nu))) for r in records
             if math.isfinite(float(r.A_nu)) and r.A_nu != 0.0]
    if len(pairs) < 3:
        raise ValueError("need at least three records with non-zero A_nu")
    n = 3 if n is None else n
    nu, A = np.array(pairs).T
    scaled = A / nu ** (1.0 / (n + 1))
    exponent = float(np.polyfit(np.log(nu), np.log(A), 1)[0])
    C = float(np.max(scaled))
    stable = bool(np.isfinite(C) and np.max(scaled) / np.min(scaled) <= 10.0)
    return C, exponent, stable


def _monotone_to(values, target) -> bool:
    gaps = [abs(v - target) for v in values]
    return all(b <= a for a, b in zip(gaps, gaps[1:]))


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """Sweep ``cfg.nu_list`` in descending order and assemble the report."""
    corner = build_corner(cfg)
    ref = extract_mass_aspect(geodesic_gauge(corner.outside), corner.outside,
                              rho_max=cfg.tolerances.fit_rho_max, terms=cfg.tolerances.fit_terms)
    nus = sorted(cfg.nu_list, reverse=True)
    records = [run_nu(corner, nu, cfg, ref.h_scalar) for nu in nus]
    good = [r for r in records if not r.error]
    bound: dict = {"C": None, "exponent": None, "stable": None,
                   "target_exponent": 1.0 / (cfg.n + 1)}
    try:
        C, exponent, stable = fit_nu_bound(good, cfg.n)
        bound.update(C=C, exponent=exponent, stable=stable,
                     exponent_ok=bool(exponent >= 1.0 / (cfg.n + 1)))
    except ValueError as exc:
        bound["note"] = str(exc)
    A_abs = [abs(r.A_nu) for r in good]
    failing = [r.nu for r in records if not r.ok]
    flags = {
        "all_ok": bool(records and all(r.ok for r in records)),
        "numerical_failure": any(bool(r.error) for r in records),
        "mass_violation": any(not r.wang_ok for r in good),
        "hypothesis_violation": not corner.hypothesis_ok,
        "A_nu_decreasing": all(b <= a for a, b in zip(A_abs, A_abs[1:])),
        "h_tilde_monotone": _monotone_to([r.h_tilde_scalar for r in good], ref.h_scalar),
        "aspect_preserved": all(r.aspect_matches for r in good),
        "smallest_failing_nu": min(failing) if failing else None,
    }
    return PipelineReport(cfg.to_dict(), records, ref.h_scalar, corner.hypothesis_ok,
                          bound, flags)


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: PipelineReport, cfg: PipelineConfig) -> tuple[Path, Path]:
    out = cfg.output_dir()
    csv_path, json_path = out / cfg.output.csv, out / cfg.output.json
    atomic_write(csv_path, report.to_csv())
    atomic_write(json_path, report.to_json() + "\n")
    return csv_path, json_path


def exit_code(report: PipelineReport) -> int:
    """0 success, 2 numerical failure, 3 mass-inequality violation."""
    if report.flags.get("mass_violation"):
        return 3
    if report.flags.get("numerical_failure") or not report.flags.get("all_ok"):
        return 2
    return 0
