"""Scenario files: surface construction, diagnostics, and reproducible output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from .constants import ConstantBundle, cap_alpha_bound
from .flow import (FlowSettings, SingularityError, cylinder_profile,
                   dumbbell_profile, estimate_gammas, parabolic_neighborhood_check,
                   r_hat_from_gammas, simulate, sphere_profile)
from .frames import validate_claim
from .models import (ModelSurface, bowl_surface, cylinder_spectrum, cylinder_surface,
                     sphere_spectrum, sphere_surface)
from .necks import calibrate_eta0, decompose, detect_neck, neck_measures
from .noncollapse import PreconditionError, alpha_profile, height_sweep, neck_inscribed_bound
from .surface import CoverageError

SCHEMA_VERSION = "1.0"
DIAGNOSTICS = ("simulate", "models", "detect-necks", "decompose", "noncollapse", "constants",
               "oracle", "gamma-estimate", "parabolic-check")
SURFACE_KINDS = ("sphere", "cylinder", "bowl", "flow")
INITIAL_KINDS = ("sphere", "cylinder", "dumbbell")
EXIT_OK, EXIT_PRECONDITION, EXIT_CHECK, EXIT_COVERAGE = 0, 2, 3, 4

DEFAULTS = {
    "detect-necks": {"eps": 0.1, "L": 5.0, "stride": 1},
    "decompose": {"eps0": 0.1, "eps1": 0.05, "L": 5.0, "C0": "measured"},
    "noncollapse": {"alpha": None, "probes": 10, "probe_samples": 50},
    "constants": {"gamma1": "measured", "gamma2": "measured", "eta0": "calibrated", "eta2": 0.01,
                  "eps0": 0.1, "L": 5.0},
    "oracle": {"n_values": [3, 4, 5, 6], "count": 1000, "tol": 1e-6},
    "gamma-estimate": {"stride": 1},
    "parabolic-check": {"centers": 20, "gamma1": "measured", "gamma2": "measured"},
    "simulate": {},
    "models": {"r0": 1.0, "t": 0.0},
}


class ScenarioError(ValueError):
    """Invalid scenario contents, detected before any computation."""


@dataclass
class Scenario:
    name: str
    surface: dict
    diagnostics: list
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a mapping")
        unknown = set(d) - {"name", "surface", "diagnostics", "seed", "out"}
        if unknown:
            raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
        diags = [x if isinstance(x, dict) else {"kind": x} for x in d.get("diagnostics", [])]
        sc = cls(name=str(d.get("name", "scenario")), surface=dict(d.get("surface", {})),
                 diagnostics=diags, seed=int(d.get("seed", 0)), out=d.get("out"))
        sc.validate()
        return sc

    def validate(self) -> "Scenario":
        _validate_surface(self.surface)
        if not self.diagnostics:
            raise ScenarioError("no diagnostics requested")
        for dg in self.diagnostics:
            _validate_diagnostic(dg, self.surface)
        return self

    def override(self, *, n=None, L=None, eps0=None, eps1=None, seed=None, only=None) -> "Scenario":
        surf = dict(self.surface)
        if n is not None:
            surf["n"] = n
            if "initial" in surf:
                surf["initial"] = {**surf["initial"], "n": n}
        diags = []
        for dg in self.diagnostics:
            if only is not None and dg["kind"] != only:
                continue
            dg = dict(dg)
            for key, val in (("L", L), ("eps0", eps0), ("eps1", eps1)):
                if val is not None and key in DEFAULTS.get(dg["kind"], {}):
                    dg[key] = val
            if dg["kind"] == "detect-necks" and eps0 is not None:
                dg["eps"] = eps0
            diags.append(dg)
        if only is not None and not diags:
            diags = [{"kind": only}]
        sc = Scenario(self.name, surf, diags, self.seed if seed is None else seed, self.out)
        return sc.validate()


def load_scenario(ref: str) -> Scenario:
    """Read a scenario from a YAML path or a bundled scenario name."""
    p = Path(ref)
    if p.is_file():
        text = p.read_text()
    else:
        try:
            text = resources.files("necklab.scenarios").joinpath(f"{ref}.yaml").read_text()
        except (FileNotFoundError, ModuleNotFoundError) as exc:
            raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed YAML: {exc}") from exc
    return Scenario.from_dict(data)


def bundled_scenarios() -> list[str]:
    root = resources.files("necklab.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


# --- validation ----------------------------------------------------------------

def _positive(d: dict, *keys):
    for k in keys:
        if k in d and not (isinstance(d[k], (int, float)) and d[k] > 0):
            raise ScenarioError(f"{k} must be a positive number, got {d[k]!r}")


def _validate_surface(s: dict):
    kind = s.get("kind")
    if kind not in SURFACE_KINDS:
        raise ScenarioError(f"surface kind must be one of {SURFACE_KINDS}, got {kind!r}")
    n = s.get("n", s.get("initial", {}).get("n"))
    if not isinstance(n, int) or n < 2:
        raise ScenarioError(f"surface needs an integer n >= 2, got {n!r}")
    _positive(s, "radius", "half_length", "points", "r_core", "r_max", "dr_tip")
    if kind == "bowl" and s.get("r_max", 2 * s.get("r_core", 30.0)) <= s.get("r_core", 30.0):
        raise ScenarioError("bowl needs r_max > r_core")
    if kind == "flow":
        init = s.get("initial", {})
        if init.get("kind") not in INITIAL_KINDS:
            raise ScenarioError(f"initial kind must be one of {INITIAL_KINDS}")
        try:
            _flow_settings(s).validate()
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"flow settings: {exc}") from exc
        snap = s.get("snapshot", "last")
        if snap != "last" and not isinstance(snap, int):
            raise ScenarioError("snapshot must be 'last' or an integer index")


def _validate_diagnostic(dg: dict, surface: dict):
    kind = dg.get("kind")
    if kind not in DIAGNOSTICS:
        raise ScenarioError(f"diagnostic kind must be one of {DIAGNOSTICS}, got {kind!r}")
    extra = set(dg) - set(DEFAULTS[kind]) - {"kind"}
    if extra:
        raise ScenarioError(f"{kind}: unknown parameters {sorted(extra)}")
    p = {**DEFAULTS[kind], **dg}
    _positive(p, "eps", "eps0", "L", "count", "tol", "centers", "probes", "probe_samples",
              "stride", "r0")
    if "eps1" in p and not 0 < p["eps1"] < p["eps0"]:
        raise ScenarioError(f"{kind}: need 0 < eps1 < eps0, got eps1={p['eps1']}, eps0={p['eps0']}")
    for key in ("C0", "gamma1", "gamma2", "eta0"):
        v = p.get(key)
        if v is None or isinstance(v, str):
            if v not in (None, "measured", "calibrated"):
                raise ScenarioError(f"{kind}: {key} must be a number, 'measured' or 'calibrated'")
        elif not v > 0:
            raise ScenarioError(f"{kind}: {key} must be positive")
    if p.get("C0") not in (None, "measured") and p["C0"] < 1:
        raise ScenarioError(f"{kind}: C0 must be >= 1")
    if kind in ("simulate", "parabolic-check") and surface.get("kind") != "flow":
        raise ScenarioError(f"{kind} needs a flow surface")
    if kind == "noncollapse" and p["alpha"] is not None and not p["alpha"] > 0:
        raise ScenarioError("alpha must be positive")


def _flow_settings(s: dict) -> FlowSettings:
    f = dict(s.get("flow", {}))
    if "stop_on" in f:
        f["stop_on"] = tuple(f["stop_on"])
    return FlowSettings(**f)


# --- surfaces --------------------------------------------------------------

class Workspace:
    """Lazily built surface, trajectory and shared intermediate results."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self._surface = None
        self._trajectory = None
        self.results = {}

    @property
    def n(self) -> int:
        s = self.sc.surface
        return int(s.get("n", s.get("initial", {}).get("n")))

    @property
    def trajectory(self):
        if self._trajectory is None:
            s = self.sc.surface
            init = dict(s["initial"])
            kind = init.pop("kind")
            maker = {"sphere": sphere_profile, "cylinder": cylinder_profile,
                     "dumbbell": dumbbell_profile}[kind]
            self._trajectory = simulate(maker(**init), _flow_settings(s))
        return self._trajectory

    @property
    def snapshot(self):
        snaps = self.trajectory.snapshots
        k = self.sc.surface.get("snapshot", "last")
        return snaps[-1] if k == "last" else snaps[k]

    @property
    def surface(self):
        if self._surface is None:
            s = dict(self.sc.surface)
            kind = s.pop("kind")
            n = s.pop("n", None)
            if kind == "sphere":
                self._surface = sphere_surface(n, s.get("radius", 1.0), s.get("points", 801))
            elif kind == "cylinder":
                self._surface = cylinder_surface(n, s.get("radius", 1.0), s.get("half_length", 10.0),
                                                 s.get("points", 401))
            elif kind == "bowl":
                kw = {k: s[k] for k in ("r_core", "r_max", "dr_tip") if k in s}
                self._surface = bowl_surface(n, **kw)
            else:
                self._surface = self.snapshot.surface
        return self._surface


# --- diagnostics -------------------------------------------------------------

def _measured_gammas(ws: Workspace):
    if ws.sc.surface["kind"] == "flow":
        return estimate_gammas(ws.trajectory)
    return estimate_gammas([ws.surface])


def _diag_models(ws, p):
    n = ws.n
    out = {}
    for name, spec in (("sphere", sphere_spectrum), ("cylinder", cylinder_spectrum)):
        m = ModelSurface(name, n, p["r0"], p["t"])
        sp = spec(n, p["r0"], p["t"])
        out[name] = {"radius": m.radius, "lambdas": list(sp.lambdas), "H": sp.H}
    b = bowl_surface(n, r_core=10.0)
    out["bowl_tip"] = {"lambdas": list(b.lambdas[0]), "H": float(b.H[0])}
    return out, [], True


def _diag_simulate(ws, p):
    tr = ws.trajectory
    rows = []
    for snap in tr.snapshots:
        r, _ = snap.min_radius()
        nr, _ = snap.neck_radius()
        rows.append({"time": snap.time, "min_radius": r,
                     "neck_radius": nr if math.isfinite(nr) else None,
                     "H_min": float(snap.H.min()), "H_max": float(snap.H.max())})
    res = {"stopped_by": tr.stopped_by, "steps": len(tr.dts), "snapshots": len(tr.snapshots),
           "final_time": float(tr.times[-1]), "events": [e.to_dict() for e in tr.events]}
    return res, [("trajectory.csv", rows)], True


# measured quantities that stand in for norms the samples cannot resolve
SURROGATES = {
    "derivative_norms": "orders 3-8 use meridional arclength derivatives",
    "graph_norm": "graph closeness checked to second order",
}


def _diag_detect(ws, p):
    surf = ws.surface
    idx = surf.core_indices[::p["stride"]]
    m = neck_measures(surf, p["L"], idx)
    q = m.quality
    acc = m.covered & (q <= p["eps"])
    certs = [detect_neck(surf, int(i), p["eps"], p["L"]).to_dict() for i in idx[acc]]
    rows = [{"node": int(i), "s": float(surf.s[i]), "x": float(surf.x[i]), "rho": float(surf.rho[i]),
             "covered": bool(c), "quality": float(v) if np.isfinite(v) else None,
             "accepted": bool(a), **{k: _num(val) for k, val in m.criteria(j).items()}}
            for j, (i, c, v, a) in enumerate(zip(idx, m.covered, q, acc))]
    res = {"eps": p["eps"], "L": p["L"], "samples": int(len(idx)), "accepted": int(acc.sum()),
           "coverage_rejections": int((~m.covered).sum()),
           "criteria_rejections": int((m.covered & ~acc).sum()), "certificates": certs[:50],
           "certificates_total": len(certs), "surrogates": SURROGATES}
    return res, [("necks.csv", rows)], True


def _diag_decompose(ws, p):
    surf = ws.surface
    C0 = None if p["C0"] == "measured" else float(p["C0"])
    rep = decompose(surf, p["eps0"], p["eps1"], p["L"], C0)
    ws.results["decomposition"] = rep
    idx = surf.core_indices
    rows = [{"node": int(i), "s": float(surf.s[i]), "x": float(surf.x[i]), "rho": float(surf.rho[i]),
             "H": float(surf.H[i]), "lambda1_over_H": float(surf.lambdas[i, 0] / surf.H[i]),
             "quality_L": _num(rep.quality[j]), "quality_2L": _num(rep.quality_2L[j]),
             "class": str(rep.classification[j])} for j, i in enumerate(idx)]
    ok = not any(c.status == "fail" for c in rep.checks)
    return rep.to_dict() | {"surrogates": SURROGATES}, [("decomposition.csv", rows)], ok


def _diag_noncollapse(ws, p):
    surf = ws.surface
    n = surf.n
    ap = alpha_profile(surf)
    res = {"profile": ap.to_dict()}
    ok = True
    H = surf.H[ap.idx]
    if p["alpha"] is not None:
        margin = ap.r_in - p["alpha"] / H + 2.0 * surf.spacing[ap.idx]
        res["verify"] = {"alpha": p["alpha"], "holds": bool(np.nanmin(margin) >= 0),
                         "worst_margin": float(np.nanmin(margin))}
        ok &= res["verify"]["holds"]
    rep = ws.results.get("decomposition")
    if rep is not None:
        cls = dict(zip(surf.core_indices.tolist(), rep.classification.tolist()))
        neck = np.array([cls.get(int(i)) == "neck" for i in ap.idx])
        if neck.any():
            bound = neck_inscribed_bound(n, H[neck])
            res["neck_bound"] = {"bound_alpha": (n - 1) / 8.0,
                                 "min_alpha": float(np.nanmin(ap.alpha[neck])),
                                 "holds": bool(np.all(ap.r_in[neck] >= bound))}
            ok &= res["neck_bound"]["holds"]
        finite = [c for c in rep.caps if np.isfinite(c.C0) and c.transition is not None]
        for k, cap in enumerate(finite, 1):
            at = cap_alpha_bound(cap.C0)[0]
            sel = np.isin(ap.idx, cap.indices)
            entry = {"C0": cap.C0, "alpha_tilde": at, "min_alpha": float(np.nanmin(ap.alpha[sel])),
                     "holds": bool(np.nanmin(ap.alpha[sel]) >= at)}
            rng = np.random.default_rng(ws.sc.seed)
            probe = np.sort(rng.choice(cap.indices, size=min(p["probes"], cap.indices.size),
                                       replace=False))
            try:
                sw = height_sweep(surf, probe, cap.C0, H_ref=surf.H[cap.transition],
                                  samples=p["probe_samples"])
                entry["height"] = sw.to_dict() | {"directions": "meridians only (partial)"}
                entry["holds"] &= sw.violations == 0
            except PreconditionError as exc:
                entry["height"] = {"skipped": str(exc)}
            res[f"cap{k}"] = entry
            ok &= entry["holds"]
    rows = [{"node": int(i), "s": float(surf.s[i]), "H": float(surf.H[i]), "r_in": _num(r),
             "alpha": _num(a)} for i, r, a in zip(ap.idx, ap.r_in, ap.alpha)]
    return res, [("noncollapse.csv", rows)], ok


def _diag_constants(ws, p):
    g = None
    if "measured" in (p["gamma1"], p["gamma2"]):
        g = _measured_gammas(ws)
    g1 = g.gamma1 if p["gamma1"] == "measured" else float(p["gamma1"])
    g2 = g.gamma2 if p["gamma2"] == "measured" else float(p["gamma2"])
    eta0 = p["eta0"]
    cal = None
    if eta0 == "calibrated":
        cal = calibrate_eta0(ws.surface, p["eps0"], p["L"])
        eta0 = cal.eta0 if np.isfinite(cal.eta0) and cal.eta0 > 0 else 1.0
    if g1 <= 0:
        raise PreconditionError("measured gamma1 is zero: the ball-search constant is undefined")
    b = ConstantBundle.build(ws.n, g1, g2, float(eta0), float(p["eta2"]), float(p["L"]))
    res = {"bundle": b.to_dict(), "gamma_source": p["gamma1"], "eta0_source":
           p["eta0"] if isinstance(p["eta0"], str) else "given",
           "eta0_calibration": cal.to_dict() if cal else None,
           "gammas": g.to_dict() if g else None}
    return res, [], True


def _diag_oracle(ws, p):
    rows = validate_claim(tuple(p["n_values"]), p["count"], ws.sc.seed, p["tol"])
    out = [r.__dict__ | {"passed": r.passed} for r in rows]
    return {"rows": out}, [("oracle.csv", out)], all(r.passed for r in rows)


def _diag_gamma(ws, p):
    if ws.sc.surface["kind"] == "flow":
        g = estimate_gammas(ws.trajectory, stride=p["stride"])
    else:
        g = estimate_gammas([ws.surface])
    r1, r2, rh = r_hat_from_gammas(ws.n, g.gamma1, g.gamma2, g.sup_A2_over_H2)
    return ({"gammas": g.to_dict(), "r1": r1, "r2": r2, "r_hat": rh,
             "surrogates": {"derivative_norms": SURROGATES["derivative_norms"]}}, [], True)


def _diag_parabolic(ws, p):
    tr = ws.trajectory
    g = estimate_gammas(tr)
    g1 = g.gamma1 if p["gamma1"] == "measured" else float(p["gamma1"])
    g2 = g.gamma2 if p["gamma2"] == "measured" else float(p["gamma2"])
    _, _, rh = r_hat_from_gammas(tr.n, g1, g2, g.sup_A2_over_H2)
    rng = np.random.default_rng(ws.sc.seed)
    rows = []
    for _ in range(p["centers"]):
        k = int(rng.integers(1, len(tr.snapshots)))
        m = tr.snapshots[k].surface.core_indices.size
        i = int(rng.integers(0, m))
        chk = parabolic_neighborhood_check(tr, k, i, rh)
        rows.append({"snapshot": k, "node": i, **chk.to_dict()})
    viol = sum(not r["holds"] for r in rows)
    return {"r_hat": rh, "gamma1": g1, "gamma2": g2, "centers": len(rows), "violations": viol,
            "rows": rows}, [("parabolic.csv", rows)], viol == 0


RUNNERS = {"models": _diag_models, "simulate": _diag_simulate, "detect-necks": _diag_detect,
           "decompose": _diag_decompose, "noncollapse": _diag_noncollapse,
           "constants": _diag_constants, "oracle": _diag_oracle, "gamma-estimate": _diag_gamma,
           "parabolic-check": _diag_parabolic}


# --- output ------------------------------------------------------------------

def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def load_schema(name: str) -> dict:
    return json.loads(resources.files("necklab.schemas").joinpath(f"{name}.json").read_text())


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        cols = list(rows[0])
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k])
                        for k in cols})
    return buf.getvalue()


@dataclass
class RunResult:
    exit_code: int
    reports: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    files: dict = field(default_factory=dict)  # name -> text
    manifest: dict = field(default_factory=dict)


def run_scenario(sc: Scenario, out_dir: str | Path | None = None) -> RunResult:
    """Run every diagnostic in order; write reports when out_dir is given."""
    sc.validate()
    ws = Workspace(sc)
    report_schema = load_schema("report")
    res = RunResult(EXIT_OK)
    codes = []
    for dg in sc.diagnostics:
        kind = dg["kind"]
        p = {**DEFAULTS[kind], **{k: v for k, v in dg.items() if k != "kind"}}
        try:
            result, tables, ok = RUNNERS[kind](ws, p)
        except CoverageError as exc:
            res.errors.append({"module": _module_of(kind), "operation": kind, "reason": str(exc),
                               "code": EXIT_COVERAGE})
            codes.append(EXIT_COVERAGE)
            continue
        except (PreconditionError, SingularityError, ValueError) as exc:
            res.errors.append({"module": _module_of(kind), "operation": kind, "reason": str(exc),
                               "code": EXIT_PRECONDITION})
            codes.append(EXIT_PRECONDITION)
            continue
        report = {"schema_version": SCHEMA_VERSION, "kind": kind, "scenario": sc.name,
                  "seed": sc.seed, "passed": bool(ok), "params": p, "result": result}
        report = clean(report)
        jsonschema.validate(report, report_schema)
        res.reports[kind] = report
        res.files[f"{kind}.json"] = dumps(report)
        for name, rows in tables:
            res.files[name] = _csv_text(clean(rows))
        if not ok:
            codes.append(EXIT_CHECK)
    for c in (EXIT_PRECONDITION, EXIT_COVERAGE, EXIT_CHECK):
        if c in codes:
            res.exit_code = c
            break
    res.manifest = clean({
        "schema_version": SCHEMA_VERSION, "necklab_version": __version__, "scenario": sc.name,
        "seed": sc.seed, "surface": sc.surface, "diagnostics": sc.diagnostics,
        "status": "ok" if res.exit_code == 0 else "failed", "exit_code": res.exit_code,
        "errors": res.errors, "tolerances": _tolerances(),
        "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(res.files.items())},
    })
    jsonschema.validate(res.manifest, load_schema("manifest"))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in res.files.items():
            (out / name).write_text(text)
        (out / "manifest.json").write_text(dumps(res.manifest))
    return res


def _module_of(kind: str) -> str:
    return {"simulate": "rotsym_flow", "gamma-estimate": "rotsym_flow",
            "parabolic-check": "rotsym_flow", "detect-necks": "neck_analysis",
            "decompose": "neck_analysis", "noncollapse": "noncollapsing",
            "constants": "constants_ledger", "oracle": "frame_oracle",
            "models": "model_solutions"}[kind]


def _tolerances() -> dict:
    from . import constants, curvature, flow, necks, noncollapse, surface
    return {
        "curvature.SYMMETRY_TOL": curvature.SYMMETRY_TOL,
        "curvature.MULTIPLICITY_GAP": curvature.MULTIPLICITY_GAP,
        "surface.FIT_MIN_NODES": surface.FIT_MIN_NODES,
        "surface.FIT_DEGREE": surface.FIT_DEGREE,
        "flow.REDISTRIBUTE_RATIO": flow.REDISTRIBUTE_RATIO,
        "necks.BALL_PAD": necks.BALL_PAD,
        "necks.CHECK_RTOL": necks.CHECK_RTOL,
        "necks.CRITICAL_TOL": necks.CRITICAL_TOL,
        "noncollapse.PRECONDITION_RTOL": noncollapse.PRECONDITION_RTOL,
        "noncollapse.HEIGHT_TOL": noncollapse.HEIGHT_TOL,
        "constants.A_HAT_MARGIN": constants.A_HAT_MARGIN,
    }
