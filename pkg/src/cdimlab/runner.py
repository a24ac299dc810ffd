"""Experiment configuration, cached spaces and the (p, n) sweep."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cover import build_cover
from .modulus import EndpointSeparation, ExplicitList, JoinPoints, solve_modulus
from .space import CircleTreeSpec, build_space, load_space, save_space, space_key
from .weights import (WeightParams, build_paper_weight, calibrate, lemma34_check,
                      toy_recursion, verify_admissibility, verify_max_bound, volume_diagnostics)

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "space": {"a": 3, "copies": [12, 3, 9, 27], "max_level": 4, "level": 4, "resolution": None},
    "n_range": [2, 3, 4],
    "p_grid": [1.5],
    "family": {"kind": "EndpointSeparation", "delta_prime": 0.5},
    "solver": {"tol": 0.02, "max_iters": 300, "batch": 2000},
    "weights": {"delta": 0.5, "delta_prime": 0.5, "p": 1.5},
    "recursion": {"p": 1.5, "depth": 6, "C": 2.0},
    "seed": 0,
    "jobs": 1,
    "out": "out",
    "cache": None,
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    """One experiment.  ``weights`` is a parameter dict or ``"solver-only"``."""

    space: dict
    n_range: list
    p_grid: list
    family: dict
    solver: dict
    weights: dict | str
    recursion: dict | None
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    cache: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = cls(**_merge(DEFAULT_CONFIG, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def spec(self) -> CircleTreeSpec:
        s = self.space
        return CircleTreeSpec(a=int(s["a"]), copies=tuple(s["copies"]),
                              max_level=int(s.get("max_level", s["level"])),
                              offsets=None if s.get("offsets") is None else tuple(s["offsets"]))

    def resolution(self) -> float:
        r = self.space.get("resolution")
        return float(self.space["a"]) ** -int(self.space["level"]) / 4 if r is None else float(r)

    def validate(self) -> None:
        level = int(self.space["level"])
        margin = int(self.space.get("margin", 0))
        for n in self.n_range:
            if not 0 <= int(n) <= level - margin:
                raise ValueError(f"scale {n} outside the valid range 0..{level - margin}")
            if float(self.space["a"]) ** -int(n) < 4 * self.resolution() * (1 - 1e-12):
                raise ValueError(f"scale {n} below the resolution floor")
        if any(float(p) <= 1 for p in self.p_grid):
            raise ValueError("solver exponents must exceed 1")
        if self.family.get("kind") not in ("EndpointSeparation", "JoinPoints", "ExplicitList"):
            raise ValueError(f"unknown family kind {self.family.get('kind')!r}")
        if int(self.jobs) < 1:
            raise ValueError("jobs must be >= 1")

    def digest(self) -> str:
        """Hash of everything that determines the results (not output paths
        or the worker count)."""
        d = self.to_dict()
        for k in ("out", "cache", "jobs"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    started: str
    finished: str = ""
    space: dict = field(default_factory=dict)
    covers: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    calibration: dict = field(default_factory=dict)
    recursion: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.checks.values())


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def get_space(cfg: ExperimentConfig):
    """Build the configured space, or load it from the cache directory when a
    cached copy with a matching content hash exists (a mismatch rebuilds)."""
    spec, level, res = cfg.spec(), int(cfg.space["level"]), cfg.resolution()
    key = space_key(spec, level, res)
    if cfg.cache:
        path = Path(cfg.cache) / f"space-{key}.npz"
        if path.exists():
            try:
                return load_space(path, expected_key=key)
            except (ValueError, OSError, KeyError) as exc:
                log.warning("cache entry %s unusable (%s); rebuilding", path, exc)
        space = build_space(spec, level, res)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_space(space, path)
        return space
    return build_space(spec, level, res)


def make_family(cfg: ExperimentConfig):
    f = cfg.family
    if f["kind"] == "EndpointSeparation":
        return EndpointSeparation(float(f["delta_prime"]))
    if f["kind"] == "JoinPoints":
        return JoinPoints(f.get("x_minus"), f.get("x_plus"))
    return ExplicitList([list(c) for c in f["paths"]])


def _solve_cell(cover, family, p, solver, digest):
    t = time.perf_counter()
    try:
        sol = solve_modulus(cover, family, float(p), tol=float(solver["tol"]),
                            max_iters=int(solver["max_iters"]), batch=int(solver["batch"]))
        return {"p": float(p), "n": cover.n, "value": sol.value, "iterations": sol.iterations,
                "certificate_low": sol.certificate_low, "certificate_high": sol.certificate_high,
                "status": sol.status, "min_length": sol.min_length, "sets": cover.size,
                "seconds": round(time.perf_counter() - t, 3), "config_hash": digest}
    except Exception as exc:  # a failed cell is recorded and the sweep goes on
        log.exception("cell p=%s n=%s failed", p, cover.n)
        return {"p": float(p), "n": cover.n, "status": f"failed: {exc}", "config_hash": digest}


def run_sweep(cfg: ExperimentConfig, stages=("solver", "weights", "recursion")) -> RunRecord:
    """Space -> covers -> per-(p, n) modulus cells and the paper-weight
    pipeline.  Identical configurations give identical numbers; an empty
    ``p_grid`` stops after the covers."""
    np.random.seed(int(cfg.seed) % 2 ** 32)
    digest = cfg.digest()
    rec = RunRecord(config_hash=digest, config=cfg.to_dict(), started=_now())
    space = get_space(cfg)
    rec.space = {"key": space.content_hash(), "circles": space.n_circles, "nodes": space.n_nodes,
                 "total_length": space.total_length(), "resolution": space.resolution,
                 "config_hash": digest}
    covers = {}
    for n in cfg.n_range:
        covers[int(n)] = build_cover(space, int(n))
        c = covers[int(n)]
        chk = c.check()
        rec.covers.append({"n": int(n), "sets": c.size, "degree_bound": chk["degree_bound"],
                           "separated": chk["separated"], "covering": chk["covering"],
                           "config_hash": digest})

    if not cfg.p_grid:
        # nothing to solve: the record carries the space and cover stats only
        rec.finished = _now()
        return rec

    if "solver" in stages:
        family = make_family(cfg)
        jobs = [(covers[int(n)], p) for p in cfg.p_grid for n in cfg.n_range]
        if int(cfg.jobs) > 1:
            with ThreadPoolExecutor(int(cfg.jobs)) as pool:
                rec.cells = list(pool.map(lambda j: _solve_cell(j[0], family, j[1], cfg.solver,
                                                                digest), jobs))
        else:
            rec.cells = [_solve_cell(c, family, p, cfg.solver, digest) for c, p in jobs]
        rec.checks["cells_converged"] = all(c.get("status") == "converged" for c in rec.cells)
        for p in cfg.p_grid:
            rows = sorted((c for c in rec.cells if c["p"] == float(p) and "value" in c),
                          key=lambda c: c["n"])
            rec.checks[f"mod_decreasing_p{p}"] = len(rows) == len(cfg.n_range) and all(
                rows[i + 1]["certificate_high"] < rows[i]["certificate_low"]
                for i in range(len(rows) - 1))

    if "weights" in stages and cfg.weights != "solver-only" and len(cfg.n_range) >= 1:
        w = cfg.weights
        base = WeightParams(a=space.a, delta=float(w.get("delta", 0.5)),
                            delta_prime=float(w.get("delta_prime", 0.5)),
                            p=float(w.get("p", 1.5)))
        if "E1" in w:
            params = base.replace(E1=float(w["E1"]), E2=float(w.get("E2", 3.0)),
                                  E3=float(w.get("E3", 1.0)))
            rec.calibration = {"fixed": True}
        else:
            params, clog = calibrate(space, covers, base,
                                     train=w.get("train"), E3_grid=tuple(w.get("E3_grid",
                                                                              (1.0, 1.5, 2.0, 3.0))))
            rec.calibration = {"fixed": False, "log": clog}
        rec.calibration["params"] = asdict(params)
        built = {}
        for n in cfg.n_range:
            pw = build_paper_weight(space, covers[int(n)], params)
            built[int(n)] = pw
            adm = verify_admissibility(pw, params.delta_prime)
            vd = volume_diagnostics(pw, params.p)
            l34 = [lemma34_check(pw.values, params.p, e)[2] for e in (0.1, 0.5)]
            rec.weights.append({"n": int(n), "max": float(pw.values.max()),
                                "n_max": int(n) * float(pw.values.max()), "vol": vd.vol,
                                "vol_tree": vd.vol_tree, "min_length": adm.min_length,
                                "admissible": adm.admissible, "lemma34": all(l34),
                                "V_hat": {str(k): v for k, v in vd.V_hat.items()},
                                "config_hash": digest})
        rec.checks["weights_admissible"] = all(r["admissible"] for r in rec.weights)
        rec.checks["lemma34"] = all(r["lemma34"] for r in rec.weights)
        if len(built) >= 3:
            mb = verify_max_bound([built[int(n)] for n in cfg.n_range])
            rec.checks["max_bound"] = mb.bounded
            vols = [r["vol"] for r in rec.weights]
            rec.checks["volume_bound"] = max(vols) / min(vols) <= 10 and not vols[-1] > vols[-2]
        for c in rec.cells:
            if "value" in c and c["p"] == params.p:
                vol = next(r["vol"] for r in rec.weights if r["n"] == c["n"])
                rec.checks[f"coupling_n{c['n']}"] = c["certificate_low"] <= vol

    if "recursion" in stages and cfg.recursion:
        r = cfg.recursion
        rr = toy_recursion(float(r["p"]), int(r["depth"]), C=float(r.get("C", 2.0)))
        from .weights import eventually_nonincreasing
        rec.recursion = {"a": rr.a.tolist(), "C_prime": rr.C_prime, "C": rr.C, "p": rr.p,
                         "config_hash": digest}
        rec.checks["recursion"] = bool(rr.a[0] == 1.0 and eventually_nonincreasing(rr.a))
    rec.finished = _now()
    return rec
