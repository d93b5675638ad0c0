"""Configuration-driven experiment runner and CSV/JSON emitters."""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from . import __version__, kernels
from .averaging import Damped, FiniteTime, LimitAverage, StochasticDamped, difference_field, transform
from .bounds import (
    BoundInputs,
    bound_damped,
    bound_finite_time,
    bound_stochastic,
    bound_w1,
    estimate_lower_constants,
    inequality_suite,
    lower_bound_w1_damped,
    lower_bound_w1_finite_time,
)
from .errors import BoundDomainWarning, ConfigError, ErgoregError, QuadratureError, ResolutionWarning
from .fourier_core import (
    ActionDomain,
    CoefficientFn,
    FrequencyModel,
    PhaseSpaceFunction,
    ResonancePoint,
    affine_coefficient,
    affine_model,
    cosine_function,
    default_test_function,
    evaluate,
    find_resonance,
    linear_model,
)
from .norms import compute_norms, make_grid, resolution_nodes
from .stochastic_oracle import max_stable_dt, mc_estimate_many

CSV_HEADER = ("param1", "param2", "norm_inf", "norm_0", "norm_1", "bound_0", "bound_1",
              "lower_bound_1", "mc_mean", "mc_stderr")
EXPERIMENTS = ("sweep_T", "sweep_munu", "mc_validate", "lower_bounds", "inequalities", "norms")
SEQUENCE_RULES = ("mu=nu^2", "mu=nu", "nu=mu^2", "custom")
ERROR_CELL = "error"


def load_schema() -> dict:
    return json.loads(resources.files("ergoreg").joinpath("config_schema.json").read_text(encoding="utf-8"))


DEFAULTS: Dict[str, Any] = {
    "schema": 1,
    "experiment": "sweep_T",
    "dimension": 1,
    "model": {"type": "linear"},
    "spectrum": {"family": "default", "gradients": "analytic"},
    "quadrature": {"scheme": "gauss_legendre", "nodes_per_dim": None},
    "T": [10.0, 100.0, 1000.0],
    "sequence": {"rule": "mu=nu^2", "i": [2, 3, 4, 5, 6, 7, 8]},
    "mc": {"mu_nu": [[0.1, 0.1]], "random_points": 0, "points": [[[0.0], [0.0]]], "paths": 10000, "dt": None},
    "lower_bounds": {"k": None, "I_bar": None, "delta": 0.25, "T": [10.0, 100.0, 1000.0],
                     "mu": [0.1, 0.01, 0.001]},
    "norms": {"average": "finite_time", "difference": True, "T": 100.0},
    "inequalities": {"points": 200001, "y_max": 1000.0},
    "seed": 0,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def classify_sequence(pairs: Sequence[Tuple[float, float]]) -> str:
    """``mu/nu->0``, ``ratio-constant``, ``nu/mu->0`` or ``indeterminate`` from the ratio trend."""
    if len(pairs) < 2:
        return "indeterminate"
    r = np.array([mu / nu for mu, nu in pairs])
    d = np.diff(np.log(r))
    if np.all(np.abs(d) <= 1e-9):
        return "ratio-constant"
    if np.all(d < 0) and r[-1] <= 0.5 * r[0]:
        return "mu/nu->0"
    if np.all(d > 0) and r[-1] >= 2.0 * r[0]:
        return "nu/mu->0"
    return "indeterminate"


def sequence_pairs(seq: dict) -> List[Tuple[float, float]]:
    rule = seq.get("rule", "mu=nu^2")
    if rule == "custom":
        pairs = seq.get("pairs")
        if not pairs:
            raise ConfigError("sequence.pairs", "custom rule needs a non-empty list of [mu, nu] pairs")
        return [(float(a), float(b)) for a, b in pairs]
    idx = seq.get("i") or [2, 3, 4, 5, 6, 7, 8]
    out = []
    for i in idx:
        h = 2.0 ** (-int(i))
        if rule == "mu=nu^2":
            out.append((h * h, h))
        elif rule == "mu=nu":
            out.append((h, h))
        elif rule == "nu=mu^2":
            out.append((h, h * h))
        else:
            raise ConfigError("sequence.rule", f"unknown rule {rule!r}; expected one of {SEQUENCE_RULES}")
    return out


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def _without_gradients(f: PhaseSpaceFunction) -> PhaseSpaceFunction:
    modes = {k: CoefficientFn(c.value, None, c.sup_norm, c.grad_sup_norms) for k, c in f.modes.items()}
    return PhaseSpaceFunction(modes, f.domain, f.truncation_radius, real=f.real, name=f.name)


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the merged JSON document."""

    raw: Dict[str, Any]

    @classmethod
    def from_dict(cls, doc: dict, experiment: Optional[str] = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        if "schema" not in doc:
            raise ConfigError("schema", "missing required field (expected schema: 1)")
        try:
            jsonschema.validate(doc, load_schema())
        except jsonschema.ValidationError as exc:
            where = ".".join(str(p) for p in exc.absolute_path) or str(exc.validator)
            raise ConfigError(where or "<root>", exc.message) from None
        merged = _merge(DEFAULTS, doc)
        if experiment is not None:
            merged["experiment"] = experiment
        cfg = cls(merged)
        cfg._check()
        return cfg

    @classmethod
    def from_json(cls, path, experiment: Optional[str] = None) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from None
        return cls.from_dict(doc, experiment)

    @classmethod
    def default(cls, experiment: str = "sweep_T", **overrides) -> "ExperimentConfig":
        return cls.from_dict(_merge({"schema": 1, "experiment": experiment}, overrides))

    # -- accessors -------------------------------------------------------
    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    @property
    def n(self) -> int:
        return int(self.raw["dimension"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return ExperimentConfig(raw)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def _check(self):
        raw = self.raw
        if raw["experiment"] not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {raw['experiment']!r}")
        n = self.n
        dom = raw.get("domain")
        if dom is not None and (len(dom["lower"]) != n or len(dom["upper"]) != n):
            raise ConfigError("domain", f"lower/upper must have {n} entries")
        if dom is not None and not all(a < b for a, b in zip(dom["lower"], dom["upper"])):
            raise ConfigError("domain", "lower must be below upper in every coordinate")
        model = raw["model"]
        if model["type"] == "user":
            mat = model.get("matrix")
            if mat is None:
                raise ConfigError("model.matrix", "user model needs a square matrix")
            if len(mat) != n or any(len(row) != n for row in mat):
                raise ConfigError("model.matrix", f"matrix must be {n}x{n}")
            if abs(np.linalg.det(np.asarray(mat, dtype=float))) == 0.0:
                raise ConfigError("model.matrix", "frequency map must be invertible")
            off = model.get("offset")
            if off is not None and len(off) != n:
                raise ConfigError("model.offset", f"offset must have {n} entries")
        spec = raw["spectrum"]
        if spec.get("family") == "custom":
            modes = spec.get("modes")
            if not modes:
                raise ConfigError("spectrum.modes", "custom family needs at least one mode")
            for i, m in enumerate(modes):
                if len(m["k"]) != n:
                    raise ConfigError(f"spectrum.modes.{i}.k", f"mode must have {n} entries")
                if "slope" in m and len(m["slope"]) != n:
                    raise ConfigError(f"spectrum.modes.{i}.slope", f"slope must have {n} entries")
        if raw["experiment"] == "sweep_munu":
            sequence_pairs(raw["sequence"])
        if raw["experiment"] == "mc_validate":
            for i, pt in enumerate(raw["mc"].get("points") or []):
                if len(pt[0]) != n or len(pt[1]) != n:
                    raise ConfigError(f"mc.points.{i}", f"I and phi must have {n} entries")
        lb = raw["lower_bounds"]
        for key in ("k", "I_bar"):
            if lb.get(key) is not None and len(lb[key]) != n:
                raise ConfigError(f"lower_bounds.{key}", f"must have {n} entries")
        nspec = raw["norms"]
        avg = nspec.get("average", "finite_time")
        need = {"finite_time": ("T",), "damped": ("mu",), "stochastic": ("mu", "nu")}.get(avg, ())
        if raw["experiment"] == "norms":
            for key in need:
                if key not in nspec:
                    raise ConfigError(f"norms.{key}", f"required for average={avg}")
        # build once so model/spectrum errors surface as config errors
        self.build()

    # -- builders --------------------------------------------------------
    def domain(self) -> ActionDomain:
        dom = self.raw.get("domain")
        if dom is None:
            return ActionDomain.cube(self.n)
        return ActionDomain(np.asarray(dom["lower"], dtype=float), np.asarray(dom["upper"], dtype=float))

    def build(self) -> Tuple[FrequencyModel, PhaseSpaceFunction]:
        dom = self.domain()
        model = self.raw["model"]
        try:
            if model["type"] == "linear":
                gm = linear_model(self.n, dom)
            else:
                gm = affine_model(model["matrix"], model.get("offset"), dom, name="user")
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None
        spec = self.raw["spectrum"]
        fam = spec.get("family", "default")
        K = self.raw.get("truncation")
        try:
            if fam == "default":
                f = default_test_function(dom, K, self.n)
            elif fam == "cosine":
                f = cosine_function(dom, self.n, float(spec.get("amplitude", 1.0)))
            else:
                modes = {}
                for m in spec["modes"]:
                    slope = [_complex(s) for s in m.get("slope", [0.0] * self.n)]
                    modes[tuple(int(v) for v in m["k"])] = affine_coefficient(_complex(m["c0"]), slope, dom)
                Kc = max(max(abs(v) for v in k) for k in modes)
                f = PhaseSpaceFunction(modes, dom, int(K or max(1, Kc)), real=bool(spec.get("real", False)),
                                       name="custom")
        except ValueError as exc:
            raise ConfigError("spectrum", str(exc)) from None
        if spec.get("gradients", "analytic") != "analytic":
            f = _without_gradients(f)
        return gm, f

    @property
    def allow_fd(self) -> bool:
        return self.raw["spectrum"].get("gradients", "analytic") != "none"


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def violations(self) -> List[str]:
        return list(self.metadata.get("violations", []))


def row_seed(seed: int, index: int) -> int:
    """64-bit seed for row ``index`` mixed from the run seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def emit_csv(result: SweepResult, path) -> Path:
    """Write the result table: UTF-8, LF line endings, 17 significant digits."""
    path = Path(path)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in result.rows:
        w.writerow([_fmt(row.get(c)) for c in CSV_HEADER])
    try:
        path.write_bytes(buf.getvalue().encode("utf-8"))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV to {path}: {exc.strerror}") from None
    return path


def emit_metadata(result: SweepResult, path) -> Path:
    path = Path(path)
    text = json.dumps(result.metadata, indent=2, sort_keys=True, default=_json_default) + "\n"
    try:
        path.write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write metadata to {path}: {exc.strerror}") from None
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------- row tasks

def _empty_row(p1=None, p2=None) -> Dict[str, Any]:
    row = {c: None for c in CSV_HEADER}
    row["param1"], row["param2"] = p1, p2
    return row


def _norm_row(row, field_, grid_nodes, scheme, allow_fd, meta):
    try:
        grid = make_grid(field_.domain, grid_nodes, scheme) if grid_nodes else None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ResolutionWarning)
            rep = compute_norms(field_, grid, allow_fd=allow_fd, scheme=scheme)
        if any(issubclass(c.category, ResolutionWarning) for c in caught):
            meta["resolution_capped"] = True
    except QuadratureError as exc:
        row["norm_inf"] = row["norm_0"] = row["norm_1"] = ERROR_CELL
        meta["error"] = str(exc)
        return None
    row["norm_inf"], row["norm_0"], row["norm_1"] = rep.norm_inf, rep.norm_0, rep.norm_1
    meta.update(nodes_per_dim=rep.nodes_per_dim, refinement_estimate=rep.refinement_estimate,
                refinement_0=rep.refinement_0, refinement_1=rep.refinement_1,
                boundary_modes=[list(k) for k in rep.boundary_modes])
    return rep


def _witness(gm, f, lb: dict) -> ResonancePoint:
    k = tuple(lb["k"]) if lb.get("k") else tuple([1] + [0] * (f.n - 1))
    if lb.get("I_bar") is not None:
        I_bar = np.asarray(lb["I_bar"], dtype=float)
        return ResonancePoint(k, I_bar, abs(float(gm.g(I_bar[None, :])[0] @ np.asarray(k, float))),
                              float(abs(f.modes[k](I_bar[None, :])[0])))
    rp = find_resonance(gm, f, k)
    if rp is None:
        raise ConfigError("lower_bounds.k", f"no resonance of mode {k} in the action box")
    return rp


class _Runner:
    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.gm, self.f = cfg.build()
        q = cfg.raw["quadrature"]
        self.scheme = q.get("scheme", "gauss_legendre")
        self.nodes = q.get("nodes_per_dim")
        self.violations: List[str] = []
        self._bi = None

    @property
    def bi(self) -> BoundInputs:
        if self._bi is None:
            self._bi = BoundInputs.from_function(self.gm, self.f)
        return self._bi

    def _map(self, fn: Callable[[int], Any], count: int) -> List[Any]:
        if self.threads == 1 or count <= 1:
            return [fn(i) for i in range(count)]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, range(count)))

    def _check_upper(self, row, meta, label):
        est = meta.get("refinement_estimate", 0.0)
        for nk, bk in (("norm_0", "bound_0"), ("norm_1", "bound_1")):
            a, b = row.get(nk), row.get(bk)
            if isinstance(a, float) and isinstance(b, float) and a > b:
                self.violations.append(f"{label}: {nk}={a:.6g} exceeds {bk}={b:.6g}")
        a, b = row.get("norm_1"), row.get("lower_bound_1")
        if isinstance(a, float) and isinstance(b, float) and a < b - est:
            self.violations.append(f"{label}: norm_1={a:.6g} below lower_bound_1={b:.6g} - {est:.3g}")

    # -- experiments -------------------------------------------------------
    def sweep_T(self):
        Ts = [float(t) for t in self.cfg.raw["T"]]
        lb = self.cfg.raw["lower_bounds"]
        lc = None
        try:
            lc = estimate_lower_constants(self.gm, self.f, _witness(self.gm, self.f, lb), float(lb["delta"]))
        except ErgoregError as exc:
            lc_err = str(exc)
        else:
            lc_err = None

        def task(i):
            T = Ts[i]
            row, meta = _empty_row(T), {"T": T}
            d = difference_field(transform(self.f, self.gm, FiniteTime(T)))
            _norm_row(row, d, self.nodes, self.scheme, self.cfg.allow_fd, meta)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundDomainWarning)
                row["bound_0"] = bound_finite_time(self.bi, T)
            if lc is not None:
                row["lower_bound_1"] = lower_bound_w1_finite_time(lc, T)
            return row, meta

        out = self._map(task, len(Ts))
        extra = {"lower_constants": _lc_meta(lc) if lc else {"error": lc_err}}
        return out, extra

    def sweep_munu(self):
        pairs = sequence_pairs(self.cfg.raw["sequence"])

        def task(i):
            mu, nu = pairs[i]
            row, meta = _empty_row(mu, nu), {"mu": mu, "nu": nu}
            d = difference_field(transform(self.f, self.gm, StochasticDamped(mu, nu)))
            _norm_row(row, d, self.nodes, self.scheme, self.cfg.allow_fd, meta)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundDomainWarning)
                row["bound_0"] = bound_stochastic(self.bi, mu, nu)
                row["bound_1"] = bound_w1(self.bi, mu, nu)
            return row, meta

        out = self._map(task, len(pairs))
        cls = classify_sequence(pairs)
        expectation = {"mu/nu->0": "norm_1 -> 0", "ratio-constant": "norm_1 bounded away from 0",
                       "nu/mu->0": "no convergence in norm_1"}.get(cls, "none")
        return out, {"rule": self.cfg.raw["sequence"].get("rule"), "classification": cls,
                     "expectation": expectation}

    def mc_validate(self):
        mc = self.cfg.raw["mc"]
        groups = [(float(a), float(b)) for a, b in mc["mu_nu"]]
        paths = int(mc["paths"])
        f, gm = self.f, self.gm
        if not f.real:
            raise ConfigError("spectrum", "mc_validate needs a real-valued function")

        def points_for(g):
            pts = [(list(map(float, I)), list(map(float, p))) for I, p in (mc.get("points") or [])]
            extra = int(mc.get("random_points") or 0)
            if extra:
                rng = np.random.default_rng(row_seed(self.cfg.seed, 10_000 + g))
                dom = gm.domain
                for _ in range(extra):
                    I = dom.lower + (0.05 + 0.9 * rng.random(f.n)) * dom.widths
                    phi = 2 * math.pi * rng.random(f.n)
                    pts.append((I.tolist(), phi.tolist()))
            if not pts:
                raise ConfigError("mc.points", "no evaluation points (give points or random_points)")
            return pts

        def task(g):
            mu, nu = groups[g]
            dt = mc.get("dt") or min(0.01, 0.1 / (mu + nu))
            if dt >= max_stable_dt(f, mu, nu):
                dt = 0.5 * max_stable_dt(f, mu, nu)
            pts = points_for(g)
            seed = row_seed(self.cfg.seed, g)
            ests = mc_estimate_many(f, gm, pts, mu, nu, paths, dt, seed=seed)
            closed = transform(f, gm, StochasticDamped(mu, nu))
            res = []
            for (I, phi), est in zip(pts, ests):
                cf = evaluate(closed, I, phi)
                row = _empty_row(mu, nu)
                row["mc_mean"], row["mc_stderr"] = est.mean, est.std_error
                meta = {"mu": mu, "nu": nu, "I": I, "phi": phi, "closed_form": cf, "dt": dt,
                        "horizon": est.horizon, "tail_bound": est.tail_bound, "paths": paths, "seed": seed}
                if abs(cf - est.mean) > 3 * est.std_error + est.tail_bound:
                    meta["z"] = abs(cf - est.mean) / est.std_error
                res.append((row, meta))
            return res

        out = [item for grp in self._map(task, len(groups)) for item in grp]
        for row, meta in out:
            if "z" in meta:
                self.violations.append(f"mc (mu={meta['mu']}, nu={meta['nu']}) at I={meta['I']}, phi={meta['phi']}:"
                                       f" |closed - mean| = {meta['z']:.2f} std errors")
        return out, {"paths": paths, "backend": kernels.BACKEND}

    def lower_bounds(self):
        lb = self.cfg.raw["lower_bounds"]
        rp = _witness(self.gm, self.f, lb)
        lc = estimate_lower_constants(self.gm, self.f, rp, float(lb["delta"]))
        Ts = [float(t) for t in lb.get("T") or []]
        mus = [float(m) for m in lb.get("mu") or []]

        def task(i):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundDomainWarning)
                if i < len(Ts):
                    T = Ts[i]
                    row, meta = _empty_row(T, None), {"T": T}
                    d = difference_field(transform(self.f, self.gm, FiniteTime(T)))
                    _norm_row(row, d, self.nodes, self.scheme, self.cfg.allow_fd, meta)
                    row["bound_0"] = bound_finite_time(self.bi, T)
                    row["lower_bound_1"] = lower_bound_w1_finite_time(lc, T)
                else:
                    mu = mus[i - len(Ts)]
                    row, meta = _empty_row(None, mu), {"mu": mu}
                    d = difference_field(transform(self.f, self.gm, Damped(mu)))
                    _norm_row(row, d, self.nodes, self.scheme, self.cfg.allow_fd, meta)
                    row["bound_0"] = bound_damped(self.bi, mu)
                    row["lower_bound_1"] = lower_bound_w1_damped(lc, mu)
            return row, meta

        out = self._map(task, len(Ts) + len(mus))
        return out, {"lower_constants": _lc_meta(lc)}

    def inequalities(self):
        spec = self.cfg.raw["inequalities"]
        rep = inequality_suite(int(spec["points"]), float(spec["y_max"]), raise_on_failure=False)
        values = [rep["quartic_gap"].detail["worst_margin"], rep["chord_identity"].detail["max_error"],
                  rep.l0, rep.l1]
        checks = ["quartic_gap", "chord_identity", "log_constants", "log_constants"]
        out = []
        for i, (name, val) in enumerate(zip(checks, values), start=1):
            out.append((_empty_row(i, val), {"check": name, "passed": rep[name].passed, **rep[name].detail}))
            if not rep[name].passed and (i < 4):
                self.violations.append(f"inequality check {name} failed: {rep[name].detail}")
        return out, {"checks": {c.name: c.passed for c in rep.checks}}

    def norms(self):
        spec = self.cfg.raw["norms"]
        avg = spec.get("average", "finite_time")
        p1 = p2 = None
        if avg == "finite_time":
            kind = FiniteTime(float(spec["T"]))
            p1 = kind.T
        elif avg == "damped":
            kind = Damped(float(spec["mu"]))
            p2 = kind.mu
        elif avg == "stochastic":
            kind = StochasticDamped(float(spec["mu"]), float(spec["nu"]))
            p1, p2 = kind.mu, kind.nu
        elif avg == "limit":
            kind = LimitAverage()
        else:
            kind = None
        if kind is None:
            field_ = self.f
        else:
            field_ = transform(self.f, self.gm, kind)
            if spec.get("difference", True) and not isinstance(kind, LimitAverage):
                field_ = difference_field(field_)
        row, meta = _empty_row(p1, p2), {"average": avg}
        rep = _norm_row(row, field_, self.nodes, self.scheme, self.cfg.allow_fd, meta)
        if rep is not None:
            meta["per_mode"] = {",".join(map(str, k)): list(v) for k, v in rep.per_mode.items()}
        return [(row, meta)], {}


def _lc_meta(lc) -> dict:
    return {"k": list(lc.k), "I_bar": lc.I_bar.tolist(), "delta": lc.delta, "lambda1": lc.lambda1,
            "lambda2": lc.lambda2, "delta_tilde": lc.delta_tilde, "M": lc.M, "capped": lc.capped}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads:
        return int(threads)
    env = os.environ.get("ERGOREG_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigError("ERGOREG_THREADS", f"not an integer: {env!r}") from None


def run(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    """Execute ``config`` and return rows in grid order plus run metadata.

    Rows run on a thread pool; results are deterministic given the seed
    because every row draws from its own ``(seed, row)`` generator.
    """
    started = _now()
    runner = _Runner(config, resolve_threads(threads))
    pairs, extra = getattr(runner, config.experiment)()
    rows = [r for r, _ in pairs]
    for i, (row, meta) in enumerate(pairs):
        runner._check_upper(row, meta, f"row {i}")
    metadata = {
        "version": __version__,
        "experiment": config.experiment,
        "config": config.raw,
        "config_hash": config.hash,
        "seed": config.seed,
        "row_seeds": [row_seed(config.seed, i) for i in range(len(rows))],
        "grid_sizes": [m.get("nodes_per_dim") for _, m in pairs],
        "rows": [m for _, m in pairs],
        "backend": kernels.BACKEND,
        "threads": runner.threads,
        "started": started,
        "finished": _now(),
        "violations": runner.violations,
        **extra,
    }
    return SweepResult(rows, metadata)
