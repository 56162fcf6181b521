"""
Batch front-end: ``ltrdesign design|sweep|analyze --config FILE --out DIR``.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible design,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .analysis import (
    UnstableClosedLoopError,
    design_curve,
    design_margins,
    step_response,
)
from .augment import AugmentationError, build_augmented
from .frequency import NoCrossoverError, crossover_frequency, db
from .lqg import (
    UNITY,
    LqgDesign,
    loop_eval,
    plant_realization,
    solve_kbf,
    synthesize,
    weighting_realization,
)
from .riccati import CareError
from .specsolver import (
    BoundGrid,
    DesignSpecs,
    SolutionRecord,
    boundary_residuals,
    solve_design,
    sweep,
)
from .sysmodels import (
    RationalTransferFunction,
    RootFindingError,
    SingularEvaluation,
    to_transfer_function,
)
from .weightings import WeightingOrderError, WeightingPair

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3

BODE_KINDS = ("M0", "M", "L", "G0K", "S_nom", "KS_nom", "W1", "W2", "KBF_S")
NYQUIST_KINDS = ("M0", "M", "L", "G0K")

NUMERICAL_ERRORS = (CareError, RootFindingError, SingularEvaluation, UnstableClosedLoopError,
                    NoCrossoverError, np.linalg.LinAlgError)


# ---------------------------------------------------------------------------
# configuration

class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str, line: int | None = None):
        self.field_path = field_path
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_path}: {message}")


@dataclass(frozen=True)
class RhoPolicy:
    mode: str = "auto"
    value: float | None = None
    gap_threshold_db: float = 0.1

    def describe(self) -> str:
        if self.mode == "fixed":
            return f"fixed rho = {self.value:.12g}"
        return f"auto (gap threshold {self.gap_threshold_db:g} dB)"


@dataclass(frozen=True)
class DesignConfig:
    plant: RationalTransferFunction
    frequencies: tuple[float, float, float, float]
    bounds: tuple  # four scalars or BoundGrid
    lead_order: int
    lag_order: int
    rho: RhoPolicy = RhoPolicy()
    tau: tuple | None = None
    output: str | None = None
    band: tuple[float, float] = (1e-1, 1e5)
    points_per_decade: int = 200
    step_horizon: float = 1.0
    step_dt: float = 1e-4

    @property
    def scalar_bounds(self) -> bool:
        return all(not isinstance(b, BoundGrid) for b in self.bounds)

    def specs(self, bounds=None) -> DesignSpecs:
        b = self.bounds if bounds is None else bounds
        if any(isinstance(x, BoundGrid) for x in b):
            b = tuple(x.values[0] if isinstance(x, BoundGrid) else x for x in b)
        return DesignSpecs(*self.frequencies, *b, lead_order=self.lead_order, lag_order=self.lag_order)


class _Locator:
    """Line numbers of mapping keys in the YAML source, for diagnostics."""

    def __init__(self, node):
        self.node = node

    def line(self, path: str) -> int | None:
        node = self.node
        line = None
        for part in path.split("."):
            if not isinstance(node, yaml.MappingNode):
                break
            for k, v in node.value:
                if k.value == part:
                    line = k.start_mark.line + 1
                    node = v
                    break
            else:
                break
        return line


def _num(raw, path, loc, positive=False):
    # YAML 1.1 reads "1e8" as a string, so accept numeric strings
    if isinstance(raw, bool):
        raise ConfigError(path, f"expected a number, got {raw!r}", loc.line(path))
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a number, got {raw!r}", loc.line(path)) from None
    if not np.isfinite(v):
        raise ConfigError(path, "must be finite", loc.line(path))
    if positive and v <= 0:
        raise ConfigError(path, f"must be positive, got {v:g}", loc.line(path))
    return v


def _int(raw, path, loc):
    v = _num(raw, path, loc)
    if v != int(v) or v < 1:
        raise ConfigError(path, f"expected a positive integer, got {raw!r}", loc.line(path))
    return int(v)


def _section(data, name, loc, required=True):
    if name not in data:
        if required:
            raise ConfigError(name, "missing section", None)
        return None
    sec = data[name]
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected a mapping", loc.line(name))
    return sec


def _coeffs(raw, path, loc):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(path, "expected a non-empty list of coefficients", loc.line(path))
    return [_num(c, f"{path}[{i}]", loc) for i, c in enumerate(raw)]


def _bound(raw, path, loc):
    if isinstance(raw, dict):
        rng = raw.get("range")
        if not isinstance(rng, list) or len(rng) != 2:
            raise ConfigError(f"{path}.range", "expected [a, b]", loc.line(path))
        pts = _int(raw.get("points"), f"{path}.points", loc)
        a, b = (_num(x, f"{path}.range", loc) for x in rng)
        try:
            return BoundGrid(a, b, pts)
        except ValueError as exc:
            raise ConfigError(path, str(exc), loc.line(path)) from None
    return _num(raw, path, loc)


def parse_config(text: str, source: str = "<config>") -> DesignConfig:
    """Parse and validate a YAML design configuration."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(source, f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError(source, "top level must be a mapping")
    loc = _Locator(node)

    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}",
                          loc.line("schema_version"))

    plant_sec = _section(data, "plant", loc)
    num = _coeffs(plant_sec.get("num"), "plant.num", loc)
    den = _coeffs(plant_sec.get("den"), "plant.den", loc)
    try:
        plant = RationalTransferFunction.from_coeffs(num, den)
    except ValueError as exc:
        raise ConfigError("plant", str(exc), loc.line("plant")) from None
    if not plant.is_strictly_proper:
        raise ConfigError("plant", "transfer function must be strictly proper", loc.line("plant"))

    orders = _section(data, "orders", loc)
    lead_order = _int(orders.get("lead"), "orders.lead", loc)
    lag_order = _int(orders.get("lag"), "orders.lag", loc)

    freq = _section(data, "frequencies", loc)
    names = ("omega11", "omega12", "omega21", "omega22")
    omegas = tuple(_num(freq.get(n), f"frequencies.{n}", loc, positive=True) for n in names)
    if not (omegas[0] < omegas[1] < omegas[2] < omegas[3]):
        raise ConfigError("frequencies", "need omega11 < omega12 < omega21 < omega22",
                          loc.line("frequencies"))

    bsec = _section(data, "bounds", loc, required=False) or {}
    bounds = tuple(_bound(bsec[k], f"bounds.{k}", loc) if k in bsec else None
                   for k in ("m11", "m12", "m21", "m22"))

    tau = None
    tsec = _section(data, "tau", loc, required=False)
    if tsec is not None:
        tau = tuple(_num(tsec.get(k), f"tau.{k}", loc, positive=True)
                    for k in ("tau11", "tau12", "tau21", "tau22"))
    if tau is None and any(b is None for b in bounds):
        raise ConfigError("bounds", "m11, m12, m21 and m22 are required unless tau is given",
                          loc.line("bounds"))

    rho = RhoPolicy()
    rsec = _section(data, "rho", loc, required=False)
    if rsec is not None:
        mode = rsec.get("policy", "auto")
        if mode not in ("auto", "fixed"):
            raise ConfigError("rho.policy", f"expected 'auto' or 'fixed', got {mode!r}", loc.line("rho.policy"))
        value = _num(rsec["value"], "rho.value", loc, positive=True) if "value" in rsec else None
        if mode == "fixed" and value is None:
            raise ConfigError("rho.value", "required when policy is fixed", loc.line("rho"))
        thr = _num(rsec.get("gap_threshold_db", 0.1), "rho.gap_threshold_db", loc, positive=True)
        rho = RhoPolicy(mode, value, thr)

    an = _section(data, "analysis", loc, required=False) or {}
    band = an.get("band", [1e-1, 1e5])
    if not isinstance(band, list) or len(band) != 2:
        raise ConfigError("analysis.band", "expected [lo, hi]", loc.line("analysis.band"))
    band = tuple(_num(b, "analysis.band", loc, positive=True) for b in band)
    if not band[0] < band[1]:
        raise ConfigError("analysis.band", "need lo < hi", loc.line("analysis.band"))

    output = data.get("output")
    return DesignConfig(
        plant=plant,
        frequencies=omegas,
        bounds=bounds,
        lead_order=lead_order,
        lag_order=lag_order,
        rho=rho,
        tau=tau,
        output=None if output is None else str(output),
        band=band,
        points_per_decade=_int(an.get("points_per_decade", 200), "analysis.points_per_decade", loc),
        step_horizon=_num(an.get("step_horizon", 1.0), "analysis.step_horizon", loc, positive=True),
        step_dt=_num(an.get("step_dt", 1e-4), "analysis.step_dt", loc, positive=True),
    )


def load_config(path: str) -> DesignConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read: {exc.strerror}") from None
    return parse_config(text, path)


# ---------------------------------------------------------------------------
# formatting

def fmt(x) -> str:
    """12 significant digits; blanks for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, str):
        return x
    x = float(x)
    if np.isnan(x):
        return "nan"
    return f"{x:.12g}"


def write_csv(path: str, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_text(path: str, lines):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


SOLUTION_HEADER = ["m11_db", "m12_db", "m21_db", "m22_db", "tau11", "tau12", "tau21", "tau22",
                   "lead_order", "lag_order", "omega0", "valid",
                   "residual1", "residual2", "residual3", "residual4", "reason"]


def _solution_row(rec: SolutionRecord):
    d = rec.diagnostics
    return [*rec.bounds, *rec.tau, d.get("lead_order"), d.get("lag_order"), rec.omega0, rec.valid,
            *rec.residuals, rec.reason or ""]


def read_solution(path: str) -> tuple[tuple[float, float, float, float], int, int]:
    """``(tau11, tau12, tau21, tau22), lead_order, lag_order`` from ``solution.csv``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise ConfigError(path, f"expected one solution row, found {len(rows)}")
    row = rows[0]
    try:
        tau = tuple(float(row[k]) for k in ("tau11", "tau12", "tau21", "tau22"))
        return tau, int(row["lead_order"]), int(row["lag_order"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(path, f"unreadable solution row: {exc}") from None


# ---------------------------------------------------------------------------
# commands

def _rho_arg(cfg: DesignConfig, override: str | None) -> RhoPolicy:
    if override is None:
        return cfg.rho
    if override == "auto":
        return RhoPolicy("auto", None, cfg.rho.gap_threshold_db)
    try:
        v = float(override)
    except ValueError:
        raise ConfigError("--rho", f"expected a number or 'auto', got {override!r}") from None
    if not v > 0:
        raise ConfigError("--rho", "must be positive")
    return RhoPolicy("fixed", v, cfg.rho.gap_threshold_db)


def _pairs(tau, lead_order, lag_order):
    t11, t12, t21, t22 = tau
    try:
        return WeightingPair.lead(t11, t12, lead_order), WeightingPair.lag(t21, t22, lag_order)
    except WeightingOrderError as exc:
        raise ConfigError("tau", str(exc)) from None


def _pinned_record(cfg: DesignConfig, tau, lead_order, lag_order) -> SolutionRecord:
    """Record for coefficients given directly instead of solved for."""
    lead, lag = _pairs(tau, lead_order, lag_order)
    model = plant_realization(cfg.plant)
    kbf = solve_kbf(build_augmented(model, UNITY, weighting_realization(lag)))
    omega0 = crossover_frequency(kbf)
    valid = lag.tau2 <= lag.tau1 < omega0 < lead.tau1 <= lead.tau2
    residuals = (np.nan,) * 4
    if cfg.scalar_bounds and all(b is not None for b in cfg.bounds):
        specs = cfg.specs()
        m_gains = (abs(kbf(specs.omega21)), abs(kbf(specs.omega22)))
        residuals = (*boundary_residuals("lowfreq", tau[2:], specs, cfg.plant),
                     *boundary_residuals("highfreq", tau[:2], specs, cfg.plant, m_gains))
    bounds = tuple(b if not isinstance(b, BoundGrid) else None for b in cfg.bounds)
    diag = {"lead_order": lead_order, "lag_order": lag_order, "pinned": True,
            "reason": None if valid else "coefficients violate tau22 <= tau21 < w0 < tau11 <= tau12"}
    return SolutionRecord(bounds, tuple(tau), bool(valid), residuals, omega0, diag)


def _synthesize(cfg: DesignConfig, rec: SolutionRecord, policy: RhoPolicy) -> LqgDesign:
    lead, lag = rec.lead, rec.lag
    if lead is not None and lead.is_unity:
        lead = None
    if lag is not None and lag.is_unity:
        lag = None
    if policy.mode == "fixed":
        return synthesize(cfg.plant, lead, lag, rho=policy.value)
    band = (cfg.frequencies[0], rec.omega0) if rec.omega0 and rec.omega0 > cfg.frequencies[0] else None
    return synthesize(cfg.plant, lead, lag, rho="auto", gap_band=band,
                      gap_threshold_db=policy.gap_threshold_db)


def _is_nominal(tau) -> bool:
    return tau is not None and all(t == 1.0 for t in tau)


def _spec_rows(cfg: DesignConfig, design: LqgDesign):
    w11, w12, w21, w22 = cfg.frequencies
    rows = []
    for label, kind, w, b in (("|S0|", "S_nom", w11, cfg.bounds[0]),
                              ("|S0|", "S_nom", w12, cfg.bounds[1]),
                              ("|K S0|", "KS_nom", w21, cfg.bounds[2]),
                              ("|K S0|", "KS_nom", w22, cfg.bounds[3])):
        rows.append((label, w, db(loop_eval(design, kind, w)), b if not isinstance(b, BoundGrid) else None))
    return rows


def _compensator_rows(design: LqgDesign):
    K = design.compensator
    rows = []
    for name, M in (("A", K.A), ("B", K.B), ("C", K.C), ("D", K.D)):
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                rows.append((name, i, j, M[i, j]))
    tf = to_transfer_function(K)
    n = tf.num.coeffs
    d = tf.den.coeffs
    for name, c in (("num", n), ("den", d)):
        deg = len(c) - 1
        for k, v in enumerate(c):
            rows.append((name, deg - k, None, v))
    return rows


def _report_lines(cfg, rec, design, margins, mode):
    lines = [
        "LQG/LTR design report",
        f"mode: {mode}" + (" (unity weightings, plain LQG/LTR on the plant)" if mode == "nominal" else ""),
        f"weighting orders: lead {rec.diagnostics.get('lead_order')}, lag {rec.diagnostics.get('lag_order')}",
        "coefficients: " + ", ".join(f"{n} = {fmt(t)}" for n, t in zip(("tau11", "tau12", "tau21", "tau22"), rec.tau)),
        f"filter loop crossover w0: {fmt(rec.omega0)} rad/s",
        f"coefficient conditions satisfied: {'yes' if rec.valid else 'no'}",
        f"rho: {fmt(design.rho)} ({cfg.rho.describe()})",
    ]
    for r, gap in design.rho_history:
        lines.append(f"  recovery gap at rho = {fmt(r)}: {fmt(gap)} dB")
    lines.append("")
    lines.append("spec frequency magnitudes")
    lines.append(f"  {'quantity':<8} {'omega (rad/s)':>14} {'achieved (dB)':>14} {'bound (dB)':>11}")
    for label, w, val, b in _spec_rows(cfg, design):
        lines.append(f"  {label:<8} {fmt(w):>14} {val:>14.4f} {'' if b is None else f'{b:.4f}':>11}")
    lines.append("")
    lines.append(f"gain margin: {fmt(margins.gain_margin)} at {fmt(margins.gm_frequency)} rad/s")
    lines.append(f"phase margin: {fmt(margins.phase_margin)} deg at {fmt(margins.pm_frequency)} rad/s")
    lines.append(f"compensator order: {design.order}")
    return lines


def _ensure_out(args, cfg) -> str:
    out = args.out or cfg.output or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    policy = _rho_arg(cfg, args.rho)
    cfg = replace(cfg, rho=policy)
    out = _ensure_out(args, cfg)
    nominal = _is_nominal(cfg.tau)

    if cfg.tau is not None:
        rec = _pinned_record(cfg, cfg.tau, cfg.lead_order, cfg.lag_order)
        if nominal:
            # unity weightings: the coefficient conditions do not apply
            rec = replace(rec, valid=True, diagnostics={**rec.diagnostics, "reason": None})
    else:
        if not cfg.scalar_bounds:
            raise ConfigError("bounds", "design needs scalar bounds; use the sweep command for ranges")
        rec = solve_design(cfg.specs(), cfg.plant)
    write_csv(os.path.join(out, "solution.csv"), SOLUTION_HEADER, [_solution_row(rec)])
    if not rec.valid:
        write_text(os.path.join(out, "report.txt"),
                   ["LQG/LTR design report", "status: infeasible", f"reason: {rec.reason}"])
        print(f"infeasible: {rec.reason}", file=sys.stderr)
        return EXIT_INFEASIBLE

    design = _synthesize(cfg, rec, policy)
    mode = "nominal" if nominal else "weighted"
    m = design_margins(design)
    write_csv(os.path.join(out, "compensator.csv"), ["block", "row", "col", "value"], _compensator_rows(design))
    write_text(os.path.join(out, "report.txt"), _report_lines(cfg, rec, design, m, mode))
    return EXIT_OK


SWEEP_HEADER = ["index", "m11_db", "m12_db", "m21_db", "m22_db", "tau11", "tau12", "tau21", "tau22",
                "valid", "reason"]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _ensure_out(args, cfg)
    if any(b is None for b in cfg.bounds):
        raise ConfigError("bounds", "sweep needs all four bounds")
    grids = [b if isinstance(b, BoundGrid) else BoundGrid.point(b) for b in cfg.bounds]
    records = sweep(cfg.specs(), cfg.plant, grids, jobs=max(1, args.jobs))
    rows = [(i, *r.bounds, *r.tau, r.valid, r.reason or "") for i, r in enumerate(records)]
    write_csv(os.path.join(out, "sweep.csv"), SWEEP_HEADER, rows)
    valid = sum(r.valid for r in records)
    write_text(os.path.join(out, "sweep_summary.txt"), [
        f"combinations: {len(records)}",
        f"valid: {valid}",
        f"weighting orders: lead {cfg.lead_order}, lag {cfg.lag_order}",
        "grid points: " + ", ".join(f"m{k} {g.count}" for k, g in zip(("11", "12", "21", "22"), grids)),
    ])
    print(f"{valid} of {len(records)} combinations valid")
    return EXIT_OK if valid else EXIT_INFEASIBLE


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    policy = _rho_arg(cfg, args.rho)
    cfg = replace(cfg, rho=policy)
    out = _ensure_out(args, cfg)
    if args.solution:
        tau, lead_order, lag_order = read_solution(args.solution)
    elif cfg.tau is not None:
        tau, lead_order, lag_order = cfg.tau, cfg.lead_order, cfg.lag_order
    else:
        raise ConfigError("tau", "analyze needs --solution or tau values in the config")
    rec = _pinned_record(cfg, tau, lead_order, lag_order)
    design = _synthesize(cfg, rec, policy)
    ppd = args.grid_ppd or cfg.points_per_decade

    for kind in BODE_KINDS:
        c = design_curve(design, kind, cfg.band, ppd)
        write_csv(os.path.join(out, f"bode_{kind}.csv"), ["omega", "magnitude_db", "phase_deg"],
                  zip(c.omegas, c.magnitude_db, c.phase_deg))
        if kind in NYQUIST_KINDS:
            write_csv(os.path.join(out, f"nyquist_{kind}.csv"), ["re", "im"],
                      zip(c.values.real, c.values.imag))

    step = step_response(design.closed_loop(), cfg.step_horizon, cfg.step_dt)
    write_csv(os.path.join(out, "step.csv"), ["t", "y"], zip(step.t, step.y))

    m = design_margins(design)
    final = 1.0 - loop_eval(design, "S_nom", 0.0).real
    write_text(os.path.join(out, "margins.txt"), [
        f"gain_margin: {fmt(m.gain_margin)}",
        f"gain_margin_db: {fmt(db(m.gain_margin)) if m.gm_found else 'inf'}",
        f"gm_frequency: {fmt(m.gm_frequency)}",
        f"phase_margin_deg: {fmt(m.phase_margin)}",
        f"pm_frequency: {fmt(m.pm_frequency)}",
        f"rho: {fmt(design.rho)}",
        f"step_final_value: {fmt(step.final)}",
        f"dc_complementary_sensitivity: {fmt(final)}",
        f"step_overshoot: {fmt(step.overshoot(final))}",
    ])
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltrdesign", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML design configuration")
        p.add_argument("--out", default=None, help="output directory (default: config 'output' or .)")

    p = sub.add_parser("design", help="solve for the weighting coefficients and synthesize K")
    common(p)
    p.add_argument("--rho", default=None, help="recovery parameter value or 'auto'")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("sweep", help="solve every combination of the bound grids")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="frequency responses, margins and step response")
    common(p)
    p.add_argument("--solution", default=None, help="solution.csv from a design run")
    p.add_argument("--rho", default=None, help="recovery parameter value or 'auto'")
    p.add_argument("--grid-ppd", type=int, default=None, help="Bode grid points per decade")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WeightingOrderError, AugmentationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
