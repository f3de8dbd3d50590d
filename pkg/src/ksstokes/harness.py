"""Experiment orchestration: single runs, g-sweeps and threshold bisections."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .config import RunConfig, config_from_mapping, load_config
from .diagnostics import (DiagnosticsRecord, QuenchFit, fit_quench_rate, g_scaling_report,
                          write_records_csv)
from .errors import InvalidArgument
from .galerkin import write_tensors
from .geometry import write_field
from .simulate import Trajectory, config_grid, simulate

VERDICTS = ("quenched", "blowup-suspected", "inconclusive")
EXPERIMENTS = {"E-1": "e1_blowup.toml", "E-2": "e2_suppression.toml", "E-3": "e3_scaling.toml",
               "E-4": "e4_compare.toml", "E-5": "e5_quench.toml"}


@dataclass
class RunResult:
    verdict: str
    final: DiagnosticsRecord
    csv_path: str | None
    quench: QuenchFit | None
    wall_time: float
    config: dict
    stats: dict = field(default_factory=dict)
    message: str = ""

    @property
    def t_final(self) -> float:
        return self.final.t

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        d = json.loads(text)
        q = d["quench"]
        return cls(verdict=d["verdict"], final=DiagnosticsRecord(**d["final"]), csv_path=d["csv_path"],
                   quench=None if q is None else QuenchFit(**q), wall_time=d["wall_time"],
                   config=d["config"], stats=d["stats"], message=d["message"])


def experiment_path(name: str) -> Path:
    """Path of a shipped experiment config (``E-1`` ... ``E-5``)."""
    if name not in EXPERIMENTS:
        raise InvalidArgument(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    return Path(str(resources.files("ksstokes") / "experiments" / EXPERIMENTS[name]))


def resolve_config(name_or_path: str, overrides: dict | None = None) -> RunConfig:
    path = experiment_path(name_or_path) if name_or_path in EXPERIMENTS else Path(name_or_path)
    return load_config(path, overrides)


def classify(cfg: RunConfig, traj: Trajectory) -> tuple[str, QuenchFit | None]:
    if traj.verdict == "blowup-suspected":
        return "blowup-suspected", None
    fit = fit_quench_rate(traj.records, cfg.eps)
    if traj.records[-1].l2_rho ** 2 < cfg.eps and fit.ok:
        return "quenched", fit
    return "inconclusive", fit


def run(cfg: RunConfig, write: bool = True) -> RunResult:
    """Execute one configuration; a numerical abort becomes a verdict, not an exception."""
    start = time.perf_counter()
    traj = simulate(cfg)
    verdict, fit = classify(cfg, traj)
    wall = time.perf_counter() - start
    result = RunResult(verdict, traj.records[-1], None, fit, wall, cfg.to_dict(),
                       traj.stats.to_dict(), traj.message)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "diag.csv"
        write_records_csv(csv_path, traj.records)
        result.csv_path = str(csv_path)
        if cfg.dump_fields:
            fdir = out / "fields"
            fdir.mkdir(exist_ok=True)
            st = traj.final
            for name, f in (("rho", st.density.rho), ("c", st.density.c), ("psi", st.flow.psi),
                            ("omega", st.flow.omega)):
                write_field(fdir / f"{name}.dump", f, st.t, name)
        if traj.tensors is not None:
            write_tensors(out / "tensors.galten", traj.tensors, config_grid(cfg))
        (out / "summary.json").write_text(result.to_json() + "\n")
    return result


def _run_written(cfg: RunConfig) -> RunResult:
    return run(cfg, write=True)


def _g_label(g: float) -> str:
    return f"g_{g:.6g}"


@dataclass
class SweepResult:
    results: list[RunResult]
    scaling: dict | None
    monotone: bool

    def to_dict(self) -> dict:
        return {"g": [r.config["g"] for r in self.results],
                "verdicts": [r.verdict for r in self.results],
                "u_l2_time_integral": [r.stats.get("u_l2_time_integral") for r in self.results],
                "u_h1_time_integral": [r.stats.get("u_h1_time_integral") for r in self.results],
                "scaling": self.scaling, "monotone": self.monotone}


def verdicts_monotone(verdicts: Sequence[str]) -> bool:
    """True when no blow-up verdict follows a quenched one (g increasing)."""
    seen_quench = False
    for v in verdicts:
        if v == "quenched":
            seen_quench = True
        elif v == "blowup-suspected" and seen_quench:
            return False
    return True


def sweep_g(base: RunConfig, g_list: Sequence[float], workers: int = 1) -> SweepResult:
    """Independent runs per g (outputs under ``<out>/g_<value>``), concurrently if ``workers > 1``."""
    if not g_list:
        raise InvalidArgument("g_list must not be empty")
    gs = sorted(float(g) for g in g_list)
    cfgs = [base.replace(g=g, out=str(Path(base.out) / _g_label(g))) for g in gs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_written, cfgs))
    else:
        results = [_run_written(c) for c in cfgs]
    scaling = None
    positive = [r for r in results if r.config["g"] > 0]
    if len(positive) >= 4 and math.log10(positive[-1].config["g"] / positive[0].config["g"]) >= 2 - 1e-12:
        scaling = g_scaling_report([r.config["g"] for r in results],
                                   [r.stats["u_l2_time_integral"] for r in results],
                                   [r.stats["u_h1_time_integral"] + r.stats["u_l2_time_integral"]
                                    for r in results])
    sweep = SweepResult(results, scaling, verdicts_monotone([r.verdict for r in results]))
    out = Path(base.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(sweep.to_dict(), indent=2, sort_keys=True) + "\n")
    return sweep


def _midpoint(lo: float, hi: float) -> float:
    return math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)


def _bisect(make, lo: float, hi: float, iters: int, is_high) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` keeping ``is_high(hi)`` true and ``is_high(lo)`` false."""
    if not (0 <= lo < hi) or iters < 0:
        raise InvalidArgument(f"need 0 <= lo < hi and iters >= 0, got lo={lo}, hi={hi}, iters={iters}")
    if is_high(make(lo)):
        raise InvalidArgument(f"bracket invalid: the low end {lo:g} already shows the high-side verdict")
    if not is_high(make(hi)):
        raise InvalidArgument(f"bracket invalid: the high end {hi:g} does not show the high-side verdict")
    for _ in range(iters):
        mid = _midpoint(lo, hi)
        if is_high(make(mid)):
            hi = mid
        else:
            lo = mid
    return lo, hi


def find_gstar(base: RunConfig, g_lo: float, g_hi: float, iters: int) -> tuple[float, float]:
    """Bracket ``[g-, g+]`` with ``g-`` not quenched and ``g+`` quenched (geometric midpoints)."""
    return _bisect(lambda g: run(base.replace(g=g), write=False), g_lo, g_hi, iters,
                   lambda r: r.verdict == "quenched")


def find_mass_threshold(base: RunConfig, m_lo: float, m_hi: float, iters: int) -> tuple[float, float]:
    """Bracket ``[M-, M+]`` with ``M-`` alive to ``t_end`` and ``M+`` blow-up suspected."""
    return _bisect(lambda m: run(base.replace(mass=m), write=False), m_lo, m_hi, iters,
                   lambda r: r.verdict == "blowup-suspected")


def compare(cfg: RunConfig, truncations: Sequence[int] | None = None) -> list[dict]:
    """Backend comparison at ``cfg.t_end``, once per truncation ``n = m``."""
    from .galerkin import compare_backends
    levels = list(truncations) if truncations else [cfg.n_modes]
    return compare_backends(cfg, levels)


def load_result(path) -> RunResult:
    return RunResult.from_json(Path(path).read_text())


def config_from_result(result: RunResult) -> RunConfig:
    return config_from_mapping(result.config)


__all__ = ["RunResult", "SweepResult", "run", "sweep_g", "find_gstar", "find_mass_threshold", "compare",
           "resolve_config", "experiment_path", "load_result", "config_from_result", "verdicts_monotone",
           "VERDICTS"]
