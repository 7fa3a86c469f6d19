"""Batch front-end: ``canonsys <command> --config cfg.json --out dir [--jobs N]``.

A config is a JSON object holding either one scenario or ``{"scenarios": [...]}``.
Scenario keys (all optional except ``coefficients``):

    name          label used for output file names (default ``scenario<k>``)
    system        wave-potential | wave-density | dirac | jacobi-continuous |
                  jacobi-discrete | canonical-i  (default inferred from a preset)
    coefficients  preset string, number, ``{"samples": {"x": [...], "values": [...]}}``,
                  ``{"file": "path.csv"}``, ``{"p": ..., "q": ...}`` for Dirac,
                  ``{"hamiltonian": {"h11": ..., "h12": ..., "h22": ...}}``,
                  ``{"reduction": {"d1": ..., "d2": ..., "psi": ...}}`` or
                  ``{"random": {"modes": 3, "amplitude": 0.1}}``
    candidate     coefficients of the second side of an equivalence pair
    grid          {"h": 0.0025, "x_max": 2.0, "T": 2.0}
    control       {"kind": "pulse" | "delta", "center": ..., "width": ...}
    tolerance(s)  a number or a dict of named gates
    seed          integer seed for every random draw of the scenario

Presets: ``q_zero``, ``q_const:c``, ``rho_quad``, ``dirac_free``,
``jacobi_quarter_turns[:N]``, ``H_half_identity``.

Exit codes: 0 all gates passed, 1 some tolerance gate failed, 2 bad input
or solver error.  ``report.json`` is byte-identical for identical input;
wall-clock times go to ``timing.json``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time as _clock
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from scipy import integrate, interpolate

from . import bcmethod, builders, frequency
from .core import (BoundaryControl, HamiltonianField, SpaceGrid, TimeGrid, bump, hamiltonian_from_function,
                   smooth_pulse, smoothed_delta)
from .io import SCHEMA_VERSION, evolution_metadata, write_csv, write_field_csv, write_json
from .timedomain import equivalence as eq
from .timedomain import solvers, transforms

EXIT_PASS, EXIT_TOLERANCE, EXIT_ERROR = 0, 1, 2
SYSTEMS = ("wave-potential", "wave-density", "dirac", "jacobi-continuous", "jacobi-discrete", "canonical-i")


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class Coefficients:
    """Resolved coefficient data: ``kind`` is potential, density, dirac, hamiltonian, jacobi or reduction."""

    kind: str
    data: Any
    label: str


_PRESET_SYSTEM = {"q_zero": "wave-potential", "q_const": "wave-potential", "rho_quad": "wave-density",
                  "dirac_free": "dirac", "H_half_identity": "canonical-i",
                  "jacobi_quarter_turns": "jacobi-discrete"}

_SCALAR_KIND = {"wave-potential": "potential", "wave-density": "density"}


def _half_identity(x):
    x = np.asarray(x, float)
    return np.broadcast_to(0.5 * np.eye(2), x.shape + (2, 2)).copy()


def quarter_turns(n: int = 40) -> builders.JacobiSystem:
    return builders.build_jacobi_from_partition(np.ones(n), angles=np.arange(n) * np.pi / 2)


def _preset(name: str, system: str) -> Coefficients:
    head, _, arg = name.partition(":")
    if head == "q_zero":
        return Coefficients(_SCALAR_KIND.get(system, "potential"), 0.0, name)
    if head == "q_const":
        try:
            c = float(arg)
        except ValueError:
            raise ConfigError(f"q_const needs a number, got {arg!r}") from None
        return Coefficients(_SCALAR_KIND.get(system, "potential"), c, name)
    if head == "rho_quad":
        return Coefficients("density", lambda x: (1.0 + np.asarray(x, float)) ** 2, name)
    if head == "dirac_free":
        return Coefficients("dirac", (0.0, 0.0), name)
    if head == "H_half_identity":
        return Coefficients("hamiltonian", _half_identity, name)
    if head == "jacobi_quarter_turns":
        return Coefficients("jacobi", quarter_turns(int(arg) if arg else 40), name)
    raise ConfigError(f"unknown preset {name!r}")


def _spline_from(x, values, what: str) -> Callable:
    x = np.asarray(x, float)
    v = np.asarray(values, float)
    if x.ndim != 1 or x.shape != v.shape or x.size < 2:
        raise ConfigError(f"{what}: x and values must be equal-length lists with >= 2 entries")
    if np.any(np.diff(x) <= 0):
        raise ConfigError(f"{what}: x must be strictly increasing")
    return interpolate.CubicSpline(x, v)


def _read_table(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"coefficient file not found: {path}")
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return {n: np.atleast_1d(data[n]) for n in data.dtype.names}


def _scalar(spec, base: Path, what: str):
    """Number, ``{"samples": ...}`` or ``{"file": ...}`` -> float or callable."""
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, dict) and "samples" in spec:
        s = spec["samples"]
        return _spline_from(s.get("x"), s.get("values"), what)
    if isinstance(spec, dict) and "file" in spec:
        tab = _read_table(base / spec["file"])
        col = [c for c in tab if c != "x"]
        if "x" not in tab or len(col) != 1:
            raise ConfigError(f"{what}: file needs columns x and one value column")
        return _spline_from(tab["x"], tab[col[0]], what)
    raise ConfigError(f"{what}: unsupported coefficient specification {spec!r}")


def _random_reduction(opts: dict, rng: np.random.Generator):
    """Smooth positive (d1, d2, psi) as short random trigonometric sums."""
    modes = int(opts.get("modes", 3))
    amp = float(opts.get("amplitude", 0.1))
    k = np.arange(1, modes + 1)

    def series(base, scale):
        a = rng.uniform(-1, 1, modes) * scale / k
        ph = rng.uniform(0, 2 * np.pi, modes)
        return lambda x: base + np.sum(a * np.sin(np.multiply.outer(np.asarray(x, float), k) + ph), axis=-1)

    return series(0.5, amp), series(0.5, amp), series(0.0, 2 * amp)


def resolve_coefficients(spec, system: str, base: Path, rng: np.random.Generator) -> Coefficients:
    if isinstance(spec, str):
        return _preset(spec, system)
    if isinstance(spec, dict) and "preset" in spec:
        return _preset(spec["preset"], system)
    if isinstance(spec, dict) and "random" in spec:
        return Coefficients("reduction", _random_reduction(spec["random"] or {}, rng), "random")
    if isinstance(spec, dict) and "reduction" in spec:
        r = spec["reduction"]
        try:
            parts = tuple(_scalar(r[k], base, k) for k in ("d1", "d2", "psi"))
        except KeyError as exc:
            raise ConfigError(f"reduction needs d1, d2 and psi (missing {exc})") from None
        return Coefficients("reduction", parts, "reduction")
    if isinstance(spec, dict) and "hamiltonian" in spec:
        h = spec["hamiltonian"]
        ev = [_scalar(h.get(k, 0.0), base, k) for k in ("h11", "h12", "h22")]

        def func(x, ev=ev):
            x = np.asarray(x, float)
            a, b, c = (np.broadcast_to(e(x) if callable(e) else e, x.shape) for e in ev)
            return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

        return Coefficients("hamiltonian", func, "hamiltonian")
    if isinstance(spec, dict) and "lengths" in spec:
        return Coefficients("jacobi", builders.JacobiSystem.from_angles(spec["lengths"], spec["angles"],
                                                                        spec.get("q1")), "jacobi")
    if isinstance(spec, dict) and "p" in spec:
        return Coefficients("dirac", (_scalar(spec["p"], base, "p"), _scalar(spec.get("q", 0.0), base, "q")),
                            "dirac")
    if isinstance(spec, dict) and "file" in spec and str(spec["file"]).endswith(".json"):
        path = base / spec["file"]
        if not path.is_file():
            raise ConfigError(f"coefficient file not found: {path}")
        return Coefficients("jacobi", builders.JacobiSystem.from_json(path), str(spec["file"]))
    kind = {"wave-potential": "potential", "wave-density": "density"}.get(system)
    if kind is None:
        raise ConfigError(f"scalar coefficients are ambiguous for system {system!r}")
    return Coefficients(kind, _scalar(spec, base, kind), "samples")


# --------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    name: str
    system: str
    coefficients: Coefficients
    grid: dict
    control: dict
    tolerances: dict
    seed: int
    options: dict
    candidate: Optional[Coefficients] = None
    rng: np.random.Generator = field(default=None, repr=False)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, self.tolerances.get("default", default)))


def _parse_scenario(raw: dict, k: int, base: Path) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError(f"scenario {k} is not an object")
    if "coefficients" not in raw:
        raise ConfigError(f"scenario {k}: 'coefficients' is required")
    coef = raw["coefficients"]
    preset = coef if isinstance(coef, str) else (coef.get("preset") if isinstance(coef, dict) else None)
    system = raw.get("system") or _PRESET_SYSTEM.get(str(preset).partition(":")[0]) or "canonical-i"
    if system not in SYSTEMS:
        raise ConfigError(f"scenario {k}: unknown system {system!r}")
    seed = int(raw.get("seed", 0))
    rng = np.random.default_rng(seed)
    tol = raw.get("tolerances", raw.get("tolerance", {}))
    tol = {"default": tol} if isinstance(tol, (int, float)) else dict(tol)
    for key, val in tol.items():
        if not isinstance(val, (int, float)) or not val > 0:
            raise ConfigError(f"scenario {k}: tolerance {key!r} must be a positive number")
    grid = dict(raw.get("grid", {}))
    for key in ("h", "T", "x_max"):
        if key in grid and not float(grid[key]) > 0:
            raise ConfigError(f"scenario {k}: grid {key!r} must be positive")
    known = {"name", "system", "coefficients", "candidate", "grid", "control", "tolerance", "tolerances", "seed"}
    cand = raw.get("candidate")
    return Scenario(
        name=str(raw.get("name", f"scenario{k}")), system=system,
        coefficients=resolve_coefficients(coef, system, base, rng),
        grid=grid, control=dict(raw.get("control", {})), tolerances=tol, seed=seed,
        options={key: v for key, v in raw.items() if key not in known},
        candidate=None if cand is None else resolve_coefficients(cand, system, base, rng), rng=rng)


def load_config(path) -> list[Scenario]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    items = raw.get("scenarios", [raw]) if isinstance(raw, dict) else raw
    if not isinstance(items, list) or not items:
        raise ConfigError("config holds no scenarios")
    scen = [_parse_scenario(s, k, path.parent) for k, s in enumerate(items)]
    names = [s.name for s in scen]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique")
    return scen


# --------------------------------------------------------------------------
# builders shared by the commands


def space_grid(sc: Scenario, default_x: float = 2.0) -> SpaceGrid:
    return SpaceGrid.from_step(float(sc.grid.get("x_max", default_x)), float(sc.grid.get("h", 1 / 200)))


def hamiltonian_of(coef: Coefficients, grid: SpaceGrid) -> HamiltonianField:
    if coef.kind == "potential":
        return builders.build_H_from_potential(coef.data, grid)
    if coef.kind == "density":
        return builders.build_H_from_density(coef.data, grid)
    if coef.kind == "dirac":
        return builders.build_H_from_dirac(*coef.data, grid)
    if coef.kind == "hamiltonian":
        return hamiltonian_from_function(coef.data, grid)
    if coef.kind == "jacobi":
        return builders.build_H_jacobi(coef.data, grid)
    if coef.kind == "reduction":
        red = builders.DiracReduction.from_coefficients(*coef.data, grid)
        return HamiltonianField(grid, red.reconstruct(), positive_delta=red.delta)
    raise ConfigError(f"no Hamiltonian for coefficients of kind {coef.kind!r}")


def reduction_of(coef: Coefficients, grid: SpaceGrid) -> builders.DiracReduction:
    if coef.kind == "reduction":
        return builders.DiracReduction.from_coefficients(*coef.data, grid)
    return builders.diagonalize_H(hamiltonian_of(coef, grid))


def control_function(spec: dict, T: float) -> Callable:
    """Grid-free evaluator of a control spec (a delta gets unit continuous integral)."""
    kind = spec.get("kind", "pulse")
    center = float(spec.get("center", 0.3 * T))
    width = float(spec.get("width", 0.25 * T))
    if kind == "pulse":
        scale = np.e
    elif kind == "delta":
        scale = complex(spec.get("amplitude", 1.0)) / (width * integrate.quad(bump, -1, 1)[0])
    else:
        raise ConfigError(f"unknown control kind {kind!r}")
    return lambda t: scale * bump((np.asarray(t, float) - center) / width)


def make_control(spec: dict, time: TimeGrid) -> BoundaryControl:
    T = time.t_max
    kind = spec.get("kind", "pulse")
    center = float(spec.get("center", 0.3 * T))
    width = float(spec.get("width", 0.25 * T))
    if kind == "pulse":
        return smooth_pulse(center, width, time)
    if kind == "delta":
        return smoothed_delta(center, width, time, complex(spec.get("amplitude", 1.0)))
    raise ConfigError(f"unknown control kind {kind!r}")


def _gate(value: float, tol: float, below: bool = True) -> dict:
    ok = bool(value <= tol) if below else bool(value >= tol)
    return dict(value=float(value), tolerance=float(tol), passed=ok)


# --------------------------------------------------------------------------
# commands; each returns (report dict, gates dict) and writes files into ``out``


def cmd_hamiltonian(sc: Scenario, out: Path, jobs: int = 1):
    grid = space_grid(sc)
    H = hamiltonian_of(sc.coefficients, grid)
    v = H.values
    cols = dict(x=grid.x, h11=v[:, 0, 0], h12=v[:, 0, 1], h21=v[:, 1, 0], h22=v[:, 1, 1],
                det=H.det, trace=H.trace, tau=builders.eikonal(H, "simpson").tau)
    report = dict(strictly_positive=H.strictly_positive, rank_one=H.rank_one,
                  fingerprint=H.fingerprint(), n_points=grid.n_points, x_max=grid.x_max)
    if H.strictly_positive:
        red = builders.diagonalize_H(H)
        cols.update(d1=red.d1, d2=red.d2, phi=red.phi, psi=red.psi)
        report["phi0"] = float(red.phi[0])
    write_csv(out / f"{sc.name}_hamiltonian.csv", cols)
    report["files"] = [f"{sc.name}_hamiltonian.csv"]
    return report, {}


def _run_system(sc: Scenario, store_field: bool):
    T = float(sc.grid.get("T", 1.0))
    h = float(sc.grid.get("h", 1 / 200))
    coef = sc.coefficients
    if sc.system in ("jacobi-continuous", "jacobi-discrete"):
        if coef.kind != "jacobi":
            raise ConfigError(f"{sc.system} needs Jacobi coefficients")
        N = int(sc.options.get("N", min(coef.data.n, 30)))
        if sc.system == "jacobi-discrete":
            steps = int(sc.grid.get("T", 40))
            hv = sc.rng.standard_normal(steps + 1) + 1j * sc.rng.standard_normal(steps + 1)
            hv[:2] = 0.0
            res = solvers.solve_jacobi_discrete(coef.data, hv, N, discrete_dt=sc.options.get("discrete_dt", "sum"))
            return res, None
        time = TimeGrid(T, int(np.ceil(T / float(sc.grid.get("dt", 0.01)) - 1e-9)))
        return solvers.solve_jacobi_continuous(coef.data, make_control(sc.control, time), N), None
    if sc.system in ("wave-potential", "dirac"):
        speed = 1.0
    else:
        H0 = hamiltonian_of(coef, SpaceGrid.from_step(float(sc.grid.get("x_max", 4 * T + 1)), h))
        speed = 1.0 / np.sqrt(H0.det.min())
    space, time = eq.grids_for(h, T, speed, pad_cells=16)
    f = make_control(sc.control, time)
    if sc.system == "wave-potential":
        return solvers.solve_wave_potential(coef.data, f, space, time, store_field), None
    if sc.system == "wave-density":
        return solvers.solve_wave_density(coef.data, f, space, time, store_field), None
    if sc.system == "dirac":
        if coef.kind != "dirac":
            raise ConfigError("dirac system needs p, q coefficients")
        return solvers.solve_dirac(*coef.data, f, space, time, store_field), None
    H = hamiltonian_of(coef, space)
    return solvers.solve_canonical_i(H, f, space, time, sign=sc.options.get("sign", "forward"),
                                     store_field=store_field), H


def cmd_simulate(sc: Scenario, out: Path, jobs: int = 1):
    store = bool(sc.options.get("store_field", True))
    res, H = _run_system(sc, store)
    files = [f"{sc.name}_response.csv"]
    write_csv(out / files[0], dict(t=res.time.t, response=res.response.astype(complex),
                                   boundary=np.asarray(res.boundary if res.boundary.ndim == 1
                                                       else res.boundary[:, 0], dtype=complex)))
    report = dict(metadata=evolution_metadata(res), response_max=float(np.abs(res.response).max()))
    gates = {}
    if store and res.field is not None:
        stride = int(sc.options.get("field_stride", 1))
        sub = res
        if stride > 1 and res.space is not None:
            fld = res.field[::stride, ::stride]
            t_sub = TimeGrid(res.time.t[::stride][-1], fld.shape[0] - 1)
            s_sub = SpaceGrid(res.space.x[::stride][-1], fld.shape[1])
            sub = solvers.EvolutionResult(s_sub, t_sub, fld, res.boundary, res.response, res.final, res.meta)
        files.append(f"{sc.name}_field.csv")
        write_field_csv(out / files[-1], sub)
        if H is not None:
            tau = builders.eikonal(H).tau
            margin = 2 * max(res.space.h, res.time.dt)
            start = make_control(sc.control, res.time).support[0]
            ahead = tau[None, :] > (res.time.t - start)[:, None] + margin
            mag = np.linalg.norm(res.field, axis=-1) if res.field.ndim == 3 else np.abs(res.field)
            leak = float(mag[ahead].max()) if ahead.any() else 0.0
            report["ahead_of_front"] = leak
            gates["finite_speed"] = _gate(leak, sc.tol("finite_speed", 1e-7))
    report["files"] = files
    return report, gates


def _jacobi_equivalence(sc: Scenario, relation: str):
    res, _ = _run_system(sc, True)
    J_ = sc.coefficients.data
    dyn = "discrete" if sc.system == "jacobi-discrete" else "continuous"
    F = transforms.jacobi_fields_from_v(J_, res, dyn)
    xi0 = F.xi(1, [0.0])[:, 0]
    h, v2 = res.field[:, 0], res.field[:, 1]
    if relation == "stated":
        pred = transforms.jacobi_response_stated(J_, v2, h)
    else:
        pred = transforms.jacobi_response_derived(J_, v2, h, F.u[:, 0])
    t0 = 2 if dyn == "discrete" else 0
    err = float(np.abs(pred[t0:] - xi0[t0:]).max())
    return eq.PairResult(f"{sc.system}/{relation}", np.nan, res.time.dt, res.time.t, xi0, pred, err, 0.0,
                         dict(relation=relation, error_kind="max-abs",
                              field_scale=float(np.abs(res.field).max()),
                              continuity_defect=F.continuity_defect() / max(1.0, float(np.abs(res.field).max()))))


def _pair(sc: Scenario, h: float) -> eq.PairResult:
    T = float(sc.grid.get("T", 2.0))
    coef = sc.coefficients
    control = control_function(sc.control, T) if sc.control else None
    if sc.system == "wave-potential":
        q_can = None if sc.candidate is None else sc.candidate.data
        return eq.wave_potential_pair(coef.data, h, T, control, q_canonical=q_can)
    if sc.candidate is not None:
        raise ConfigError(f"'candidate' coefficients are only supported for wave-potential pairs")
    if sc.system == "wave-density":
        return eq.wave_density_pair(coef.data, h, T, control)
    if sc.system == "dirac":
        return eq.dirac_pair(*coef.data, h, T, control, route=sc.options.get("route", "diagonal"),
                             sign=sc.options.get("sign", "auxiliary"))
    if sc.system == "canonical-i":
        H_func = coef.data if coef.kind == "hamiltonian" else (
            lambda x: hamiltonian_of(coef, SpaceGrid.from_step(float(np.max(x)) + 1.0, h)).at(x))
        return eq.rotation_pair(H_func, h, T, control)
    return _jacobi_equivalence(sc, sc.options.get("relation", "derived"))


def cmd_equivalence(sc: Scenario, out: Path, jobs: int = 1):
    h = float(sc.grid.get("h", 1 / 400))
    tol = sc.tol("error", 1e-9 if sc.system.startswith("jacobi") else 1e-3)
    res = _pair(sc, h)
    write_csv(out / f"{sc.name}_traces.csv", dict(t=res.t, reference=np.asarray(res.reference, complex),
                                                 candidate=np.asarray(res.candidate, complex)))
    meta = {k: v for k, v in res.meta.items() if np.ndim(v) == 0}
    report = dict(pair=res.name, h=res.h, dt=res.dt, discrepancy=res.error, meta=meta,
                  files=[f"{sc.name}_traces.csv"])
    gates = dict(error=_gate(res.error, tol))
    steps = sc.options.get("convergence")
    if steps:
        results, slopes = eq.convergence(lambda s: _pair(sc, s), [float(s) for s in steps])
        report["convergence"] = dict(h=[r.h for r in results], error=[r.error for r in results],
                                     slopes=slopes.tolist())
        gates["slope"] = _gate(float(slopes.min()), float(sc.options.get("min_slope", 1.0)), below=False)
    return report, gates


def _lambda_grid(sc: Scenario) -> np.ndarray:
    spec = sc.options.get("lambda", {"min": -10.0, "max": 10.0, "n": 201})
    if isinstance(spec, dict):
        lam = np.linspace(float(spec.get("min", -10)), float(spec.get("max", 10)), int(spec.get("n", 201)))
    else:
        lam = np.asarray(spec, dtype=float)
    if lam.size == 0:
        raise ConfigError("empty lambda grid")
    return lam


def cmd_debranges(sc: Scenario, out: Path, jobs: int = 1):
    lam = _lambda_grid(sc)
    grid = space_grid(sc)
    H = hamiltonian_of(sc.coefficients, grid)
    x = float(sc.options.get("x", grid.x_max))
    E = frequency.DeBrangesFunction.from_hamiltonian(H, x)
    theta = frequency.transfer_matrix(H, x, lam)
    values = theta[:, 0, 0] + 1j * theta[:, 1, 0]
    write_csv(out / f"{sc.name}_lambda.csv", {"lambda": lam, "E": values, "abs_E": np.abs(values),
                                              "det_defect": np.abs(np.linalg.det(theta) - 1)})
    hb = frequency.hb_check(E)
    npts = int(sc.options.get("points", 10))
    pts = sc.rng.uniform(-3, 3, npts) + 1j * sc.rng.uniform(0.2, 2.0, npts)
    gram = frequency.kernel_gram(E, pts)
    write_json(out / f"{sc.name}_gram.json", dict(schema_version=SCHEMA_VERSION, points=pts, gram=gram.gram,
                                                  min_eigenvalue=gram.min_eig, psd=gram.psd))
    report = dict(x=x, strictly_positive=H.strictly_positive,
                  hb=dict(min_margin=hb.min_margin, passed=hb.passed, n_points=int(hb.points.size)),
                  gram=dict(n_points=npts, min_eigenvalue=gram.min_eig, psd=gram.psd),
                  files=[f"{sc.name}_lambda.csv", f"{sc.name}_gram.json"])
    gates = dict(gram_psd=dict(value=gram.min_eig, passed=gram.psd))
    if H.strictly_positive:
        gates["hermite_biehler"] = dict(value=hb.min_margin, passed=hb.passed)
    if "reference" in sc.options:
        ref = sc.options["reference"]
        if ref != "exp_half":
            raise ConfigError(f"unknown reference {ref!r}")
        err = float(np.abs(values - np.exp(-0.5j * lam * x)).max())
        report["reference_error"] = err
        gates["reference"] = _gate(err, sc.tol("reference", 1e-8))
    return report, gates


def cmd_bcmethod(sc: Scenario, out: Path, jobs: int = 1):
    T = float(sc.grid.get("T", 1.0))
    h = float(sc.grid.get("h", 1 / 100))
    coef = sc.coefficients
    probe = reduction_of(coef, SpaceGrid.from_step(float(sc.grid.get("x_max", 4 * T + 1)), h))
    cmax = 1.0 / np.sqrt((probe.d1 * probe.d2).min())
    grid = SpaceGrid.from_step(cmax * T * 1.05 + 12 * h, h)
    red = reduction_of(coef, grid)
    W = bcmethod.control_operator(red, T, "extended", jobs=jobs)
    C = bcmethod.connecting_operator(W)
    ctrl = bcmethod.controllability_check(W, floor=float(sc.options.get("floor", 1e-4)))
    Ws = bcmethod.control_operator(red, T, "single", width=W.width, n_basis=W.centers.size, time=W.time, jobs=jobs)
    defect = bcmethod.reachability_defect(Ws, W)
    sv = np.linalg.svd(W.weighted(), compute_uv=False)
    write_csv(out / f"{sc.name}_singular_values.csv",
              dict(index=np.arange(sv.size), extended=sv,
                   single=np.concatenate([defect.singular_values, np.full(sv.size - defect.singular_values.size,
                                                                           np.nan)])))
    free_dist = C.distance_to(2.0)
    report = dict(
        T=T, h=h, n_basis=int(W.centers.size),
        connecting=dict(eigen_min=float(C.eigenvalues.min()), eigen_max=float(C.eigenvalues.max()),
                        hermitian_defect=C.hermitian_defect, psd=C.psd, distance_to_2I=free_dist),
        controllability=dict(sigma_min=ctrl.sigma_min, sigma_max=ctrl.sigma_max, ratio=ctrl.ratio,
                             passed=ctrl.passed),
        single_control=dict(rank=defect.rank_single, rank_extended=defect.rank_extended, defect=defect.defect),
        files=[f"{sc.name}_singular_values.csv"])
    gates = dict(psd=dict(value=float(C.eigenvalues.min()), passed=C.psd),
                 controllability=dict(value=ctrl.ratio, passed=ctrl.passed),
                 defect=_gate(defect.defect, sc.tol("defect", 0.3), below=False))
    if "identity" in sc.tolerances:
        gates["identity"] = _gate(free_dist, sc.tolerances["identity"])
    if sc.options.get("wavefront"):
        report["wavefront"] = _wavefront(sc, red, T, out)
        report["files"].append(f"{sc.name}_wavefront.csv")
        if "wavefront" in sc.tolerances:
            gates["wavefront"] = _gate(report["wavefront"]["transport"], sc.tolerances["wavefront"])
    return report, gates


def _wavefront(sc: Scenario, red, T: float, out: Path) -> dict:
    tg = bcmethod.time_grid_for(red, T)
    width = float(sc.control.get("width", max(0.05 * T, 6 * tg.dt)))
    center = float(sc.control.get("center", 2 * width))
    res = solvers.solve_dirac_type(red, smoothed_delta(center, width, tg), red.grid, tg, "forward")
    transport = bcmethod.wavefront_amplitude(res, red, builders.transport_amplitude(red), center, width)
    stated = bcmethod.wavefront_amplitude(res, red, builders.solve_amplitude_A(red), center, width)
    write_csv(out / f"{sc.name}_wavefront.csv", dict(x=transport.x, field_ratio=transport.field_ratio,
                                                     transport_ratio=transport.amplitude_ratio,
                                                     system_ratio=stated.amplitude_ratio))
    return dict(transport=transport.max_deviation, amplitude_system=stated.max_deviation,
                ahead_of_front=transport.ahead_of_front)


COMMANDS = dict(hamiltonian=cmd_hamiltonian, simulate=cmd_simulate, equivalence=cmd_equivalence,
                debranges=cmd_debranges, bcmethod=cmd_bcmethod)


# --------------------------------------------------------------------------
# driver


def _status(gates: dict) -> int:
    return EXIT_PASS if all(g["passed"] for g in gates.values()) else EXIT_TOLERANCE


def run_scenario(command: str, sc: Scenario, out: Path, jobs: int = 1):
    """Run one scenario; returns (entry for report.json, seconds)."""
    t0 = _clock.perf_counter()
    entry = dict(name=sc.name, system=sc.system, coefficients=sc.coefficients.label, seed=sc.seed)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report, gates = COMMANDS[command](sc, out, jobs)
        entry.update(report, gates=gates, exit_code=_status(gates))
        if caught:
            entry["warnings"] = sorted({str(w.message) for w in caught})
    except (ConfigError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        entry.update(exit_code=EXIT_ERROR, error=f"{type(exc).__name__}: {exc}")
    return entry, _clock.perf_counter() - t0


def _worker(args):
    command, config, index, out, jobs = args
    return run_scenario(command, load_config(config)[index], Path(out), jobs)


def run(command: str, config, out, jobs: int = 1) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        scenarios = load_config(config)
    except ConfigError as exc:
        write_json(out / "report.json", dict(schema_version=SCHEMA_VERSION, command=command,
                                             exit_code=EXIT_ERROR, error=str(exc), scenarios=[]))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(min(jobs, len(scenarios))) as pool:
            results = list(pool.map(_worker, [(command, str(config), k, str(out), 1)
                                              for k in range(len(scenarios))]))
    else:
        results = [run_scenario(command, sc, out, jobs) for sc in scenarios]
    entries = [r[0] for r in results]
    code = max(e["exit_code"] for e in entries)
    write_json(out / "report.json", dict(schema_version=SCHEMA_VERSION, command=command,
                                         exit_code=code, scenarios=entries))
    write_json(out / "timing.json", dict(schema_version=SCHEMA_VERSION, command=command,
                                         seconds={e["name"]: round(s, 3) for e, s in results}))
    for e in entries:
        word = {EXIT_PASS: "pass", EXIT_TOLERANCE: "FAIL", EXIT_ERROR: "ERROR"}[e["exit_code"]]
        print(f"{command} {e['name']}: {word}" + (f" ({e['error']})" if "error" in e else ""))
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="canonsys", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=(fn.__doc__ or name).strip().split("\n")[0])
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--jobs", type=int, default=1, help="parallel scenarios (default 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return run(args.command, args.config, args.out, args.jobs)
    except Exception:  # last line of defence: never exit 1 on a crash
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
