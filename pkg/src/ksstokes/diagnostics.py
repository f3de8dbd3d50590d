"""Monitored functionals, blow-up detection, quench-rate fits and scaling reports."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .chemotaxis import CoupledState
from .errors import InvalidArgument
from .geometry import boundary_flux_array, face_gradient_sq, grad_y_array
from .spectral import lambda_continuous
from .stokes import buoyancy_power, enstrophy, kinetic_energy

CRITERION_EXPONENT = 2  # 4 / (4 - d) for d = 2
DEFAULT_BLOWUP_WINDOW = 10
DEFAULT_BLOWUP_FACTOR = 10.0
MIN_FIT_SAMPLES = 20
MIN_FIT_R2 = 0.99


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    l2_rho: float
    h1_rho: float
    linf_rho: float
    min_rho: float
    l2_u: float
    h1_u: float
    flux: float
    moment: float
    buoyancy_power: float
    energy_residual: float
    criterion_integral: float

    def as_row(self) -> list[str]:
        return [f"{getattr(self, f.name):.17g}" for f in fields(self)]


RECORD_FIELDS = [f.name for f in fields(DiagnosticsRecord)]


@dataclass(frozen=True)
class QuenchFit:
    """``rate`` is ``None`` when no fit was possible (see ``reason``)."""
    t_enter: float | None
    rate: float | None
    r2: float | None
    samples: int
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.rate is not None


def snapshot(state: CoupledState, prev: DiagnosticsRecord | None = None,
             energy_residual: float | None = None) -> DiagnosticsRecord:
    """Evaluate every functional on ``state``.

    ``criterion_integral`` adds the trapezoid of ``||rho||^2`` since ``prev``;
    ``energy_residual`` is the caller's running value (kept from ``prev`` if omitted).
    """
    grid = state.grid
    rho = state.density.rho.values
    psi = state.flow.psi.values
    h2 = grid.cell_area
    l2sq = float(h2 * np.sum(rho * rho))
    _, y = grid.mesh()
    if energy_residual is None:
        energy_residual = 0.0 if prev is None else prev.energy_residual
    crit = 0.0
    if prev is not None:
        crit = prev.criterion_integral + 0.5 * (state.t - prev.t) * (prev.l2_rho**2 + l2sq)
    return DiagnosticsRecord(
        t=float(state.t),
        mass=float(h2 * np.sum(rho)),
        l2_rho=math.sqrt(l2sq),
        h1_rho=math.sqrt(face_gradient_sq(rho, grid.hx, grid.hy)),
        linf_rho=float(np.max(np.abs(rho))),
        min_rho=float(np.min(rho)),
        l2_u=math.sqrt(kinetic_energy(psi, grid)),
        h1_u=math.sqrt(enstrophy(psi, grid)),
        flux=boundary_flux_array(rho, grid),
        moment=float(h2 * np.sum((y - grid.Ly) * rho)),
        buoyancy_power=buoyancy_power(rho, psi, grid),
        energy_residual=float(energy_residual),
        criterion_integral=float(crit),
    )


def weighted_moment_terms(state: CoupledState) -> dict[str, float]:
    """Instantaneous terms of the weighted-moment identity (weight ``y - Ly``)."""
    grid = state.grid
    rho = state.density.rho.values
    c = state.density.c.values
    h2 = grid.cell_area
    return {
        "rho_uy": float(h2 * np.sum(rho * state.flow.u.uy)),
        "dy_rho": float(h2 * np.sum(grad_y_array(rho, grid.hy))),
        "wall": boundary_flux_array(rho, grid, weight=lambda x, y: y - grid.Ly),
        "rho_dy_c": float(h2 * np.sum(rho * grad_y_array(c, grid.hy))),
    }


def weighted_moment_identity_residual(records: Sequence[DiagnosticsRecord],
                                      states: Sequence[CoupledState], g: float = 0.0) -> float:
    """``max |int rho u_y - (dM/dt + int d_y rho - wall - int rho d_y c)|``.

    ``M`` is ``moment`` from the records, differentiated by centered
    differences; ``states`` are the fields at the same (uniform) times.
    ``g`` is accepted for the record and does not enter the identity.
    """
    if len(records) < 3 or len(records) != len(states):
        raise InvalidArgument("need at least 3 snapshots with matching stored states")
    t = np.array([r.t for r in records])
    steps = np.diff(t)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(steps.max(), 1e-300):
        raise InvalidArgument("snapshots must be uniformly spaced in time")
    worst = 0.0
    for k in range(1, len(records) - 1):
        dmdt = (records[k + 1].moment - records[k - 1].moment) / (t[k + 1] - t[k - 1])
        term = weighted_moment_terms(states[k])
        rhs = dmdt + term["dy_rho"] - term["wall"] - term["rho_dy_c"]
        worst = max(worst, abs(term["rho_uy"] - rhs))
    return worst


def detect_blowup(records: Sequence[DiagnosticsRecord], ceiling: float = 1e8,
                  window: int = DEFAULT_BLOWUP_WINDOW,
                  factor: float = DEFAULT_BLOWUP_FACTOR) -> str:
    """``"blowup-suspected"`` on NaN, ``linf_rho > ceiling``, or when the
    per-unit-time increment of ``criterion_integral`` over the latest record
    interval is ``factor`` times the one ``window`` intervals earlier."""
    if not records:
        raise InvalidArgument("empty trajectory")
    last = records[-1]
    if any(not math.isfinite(getattr(last, f)) for f in RECORD_FIELDS):
        return "blowup-suspected"
    if last.linf_rho > ceiling:
        return "blowup-suspected"
    if len(records) > window + 1:
        now = _criterion_rate(records[-2], records[-1])
        then = _criterion_rate(records[-window - 2], records[-window - 1])
        if then > 0 and now >= factor * then:
            return "blowup-suspected"
    return "alive"


def _criterion_rate(a: DiagnosticsRecord, b: DiagnosticsRecord) -> float:
    return (b.criterion_integral - a.criterion_integral) / (b.t - a.t)


def fit_quench_rate(records: Sequence[DiagnosticsRecord], eps_quench: float) -> QuenchFit:
    """Least-squares slope of ``log ||rho||^2`` against t after the first entry below ``eps_quench``.

    A trajectory that is identically zero after entry is quenched with rate ``inf``.
    """
    t = np.array([r.t for r in records])
    e = np.array([r.l2_rho ** 2 for r in records])
    below = np.nonzero(e < eps_quench)[0]
    if below.size == 0:
        return QuenchFit(None, None, None, 0, "never entered the small regime")
    k0 = int(below[0])
    tw, ew = t[k0:], e[k0:]
    if np.all(ew == 0.0):
        return QuenchFit(float(t[k0]), math.inf, 1.0, int(ew.size), "identically zero")
    keep = ew > 0
    tw, ew = tw[keep], ew[keep]
    if tw.size < MIN_FIT_SAMPLES:
        return QuenchFit(float(t[k0]), None, None, int(tw.size), f"fewer than {MIN_FIT_SAMPLES} samples")
    logs = np.log(ew)
    slope, icpt = np.polyfit(tw, logs, 1)
    resid = logs - (slope * tw + icpt)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    if r2 < MIN_FIT_R2:
        return QuenchFit(float(t[k0]), None, r2, int(tw.size), f"poor fit r2={r2:.4f}")
    return QuenchFit(float(t[k0]), float(-slope), r2, int(tw.size))


def quench_rate_bound(Lx: float, Ly: float) -> float:
    """``1 / (4 C_p) = lambda_1 / 4`` for the squared L2 norm."""
    return 0.25 * lambda_continuous(Lx, Ly)


def default_eps_quench(Lx: float, Ly: float) -> float:
    return 0.01 * min(1.0, quench_rate_bound(Lx, Ly))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def g_scaling_report(g_values: Sequence[float], u_l2_time_integral: Sequence[float],
                     u_h1_values: Sequence[float] | None = None) -> dict:
    """Log-log slopes of ``int ||u||^2 dt`` (and optionally an H1 quantity) against g.

    Non-positive g or values are dropped; at least 4 points over 2 decades must remain.
    """
    g = np.asarray(g_values, dtype=float)
    a = np.asarray(u_l2_time_integral, dtype=float)
    keep = (g > 0) & (a > 0)
    if u_h1_values is not None:
        b = np.asarray(u_h1_values, dtype=float)
        keep &= b > 0
    if keep.sum() < 4 or np.log10(g[keep].max() / g[keep].min()) < 2 - 1e-12:
        raise InvalidArgument("need at least 4 positive g values spanning 2 decades")
    report = {"g": g[keep].tolist(), "u_l2_time_integral": a[keep].tolist(),
              "slope_u_l2": loglog_slope(g[keep], a[keep])}
    if u_h1_values is not None:
        report["u_h1"] = b[keep].tolist()
        report["slope_u_h1"] = loglog_slope(g[keep], b[keep])
    return report


def l2_inequality_constant(records: Sequence[DiagnosticsRecord]) -> float:
    """Smallest ``K`` with ``d/dt ||rho||^2 + ||grad rho||^2 <= K ||rho||^6`` between records."""
    worst = 0.0
    for a, b in zip(records[:-1], records[1:]):
        if a.l2_rho == 0.0:
            continue
        lhs = (b.l2_rho**2 - a.l2_rho**2) / (b.t - a.t) + b.h1_rho**2
        worst = max(worst, lhs / a.l2_rho**6)
    return worst


def linf_l2_constant(records: Sequence[DiagnosticsRecord]) -> float:
    """``sup ||rho||_inf / (sup ||rho||_2)^2`` over a trajectory (0 for zero data)."""
    m = max(r.l2_rho for r in records)
    return 0.0 if m == 0.0 else max(r.linf_rho for r in records) / m**CRITERION_EXPONENT


def moser_partial_product(n: int, d: int) -> float:
    """``prod_{j=1}^n (2^(j+2) - d) / (2^(j+2) - 2d)`` evaluated term by term."""
    if n < 0 or d not in (2, 3):
        raise InvalidArgument(f"need n >= 0 and d in (2, 3), got n={n}, d={d}")
    p = 1.0
    for j in range(1, n + 1):
        p *= (2.0 ** (j + 2) - d) / (2.0 ** (j + 2) - 2 * d)
    return p


def moser_closed_form(n: int, d: int) -> float:
    return (4.0 - d * 2.0 ** (-n)) / (4.0 - d)


def write_records_csv(path, records: Sequence[DiagnosticsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow(r.as_row())


def read_records_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != RECORD_FIELDS:
        raise InvalidArgument(f"{path}: unexpected CSV header")
    return [DiagnosticsRecord(*(float(v) for v in row)) for row in rows[1:]]


def record_dict(r: DiagnosticsRecord) -> dict:
    return asdict(r)


def quench_fit_dict(q: QuenchFit | None) -> dict | None:
    return None if q is None else asdict(q)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
