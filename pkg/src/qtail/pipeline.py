"""Configuration ingestion and end-to-end orchestration.

A single JSON document drives every run: build the truncated kernel, apply
the column augmentations and monotone envelopes, solve the four stationary
laws, solve the per-segment QoS exponents, and assemble the piecewise tail.
All emitted CSV files carry a comment header with the config hash (and seed
where randomness is involved) and round-trip bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import augment, kernel, lql, models, sim
from .errors import ConfigError
from .models import LOG2_E

FIGURES = {
    "fig2": (2.0, 6.0),
    "fig3": (2.0, 9.0),
    "fig4": (2.0, 12.0),
    "fig5": (4.0, 6.0),
    "fig6": (4.0, 9.0),
    "fig7": (4.0, 12.0),
}

THETA_METHODS = ("auto", "binary_search", "theorem6", "corollary1", "loose")


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration plus the raw document it came from."""

    raw: dict
    params: models.SystemParams
    fade: models.FadingModel
    arrival: models.ArrivalModel
    policy: object  # LyapunovPolicy or PolicySpec
    alpha: float
    lql_segments: int
    theta_method: str
    q_max: float
    q_step: float
    sim_section: Optional[dict]

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()[:16]

    @property
    def is_drift_policy(self) -> bool:
        return isinstance(self.policy, models.LyapunovPolicy)


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing '{key}' in config section '{where}'")
    return section[key]


def parse_config(doc: dict) -> RunConfig:
    """Validate the JSON document and convert units (dB only here)."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    system = _require(doc, "system", "top level")
    n0_dbm = _require(system, "N0_dBm_per_Hz", "system")
    s_max = system.get("S_max")
    params = models.SystemParams(
        bandwidth_hz=float(_require(system, "B", "system")),
        slot_s=float(_require(system, "T", "system")),
        noise_psd_w_per_hz=10.0 ** (float(n0_dbm) / 10.0 - 3.0),
        packet_bits=float(_require(system, "A", "system")),
        s_max_packets=math.inf if s_max is None else float(s_max),
        kappa_sql=float(system.get("kappa_sql", 1.0)),
        kappa_lql=float(system.get("kappa_lql", 1.0)),
    )

    channel = _require(doc, "channel", "top level")
    kind = _require(channel, "kind", "channel")
    if kind == "rayleigh":
        if "mean_gain" in channel:
            gain = float(channel["mean_gain"])
        else:
            gain = models.path_loss_mean_gain(
                float(_require(channel, "D_m", "channel")),
                float(_require(channel, "fc_GHz", "channel")))
        fade = models.Rayleigh(mean_gain=gain)
    else:
        raise ConfigError(f"unknown channel kind {kind!r} (custom pdfs are library-only)")

    arrival_sec = _require(doc, "arrival", "top level")
    akind = _require(arrival_sec, "kind", "arrival")
    if akind == "deterministic":
        arrival = models.DeterministicArrivals(lam=float(_require(arrival_sec, "lambda", "arrival")))
    elif akind == "pmf":
        arrival = models.PmfArrivals(probs=tuple(_require(arrival_sec, "pmf", "arrival")))
    else:
        raise ConfigError(f"unknown arrival kind {akind!r}")

    policy_sec = _require(doc, "policy", "top level")
    pkind = _require(policy_sec, "kind", "policy")
    analysis = _require(doc, "analysis", "top level")
    alpha = float(_require(analysis, "alpha", "analysis"))
    if pkind == "lyapunov":
        if akind != "deterministic":
            raise ConfigError("the drift policy requires deterministic arrivals")
        policy = models.LyapunovPolicy(
            v_param=float(_require(policy_sec, "V", "policy")),
            delta=int(_require(policy_sec, "delta", "policy")),
            lam=arrival.mean)
        if alpha <= 0 or (alpha / policy.delta) % 1 != 0:
            raise ConfigError(
                f"alpha={alpha!r} must be a positive integer multiple of delta={policy.delta}")
    elif pkind == "piecewise":
        thresholds = tuple(float(t) for t in policy_sec.get("thresholds", ()))
        rates = policy_sec.get("rates")
        if rates is None or len(rates) != len(thresholds) + 1:
            raise ConfigError("piecewise policy needs one constant rate per segment")
        segments = tuple(_constant_rate(float(r)) for r in rates)
        policy = models.PolicySpec(thresholds=thresholds, segments=segments)
        if alpha <= 0:
            raise ConfigError("alpha must be positive")
    else:
        raise ConfigError(f"unknown policy kind {pkind!r}")

    models._lattice_index(alpha, params.kappa_sql, "alpha")
    theta_method = analysis.get("theta_method", "auto")
    if theta_method not in THETA_METHODS:
        raise ConfigError(f"theta_method must be one of {THETA_METHODS}")
    lql_segments = int(analysis.get("segments", 4))
    if lql_segments < 1:
        raise ConfigError("need at least one tail segment")
    default_span = (lql_segments * policy.delta if pkind == "lyapunov"
                    else max(3.0 * alpha, alpha + 10))
    q_max = float(analysis.get("q_max") or alpha + default_span)
    q_step = float(analysis.get("q_step") or params.kappa_sql)

    return RunConfig(raw=doc, params=params, fade=fade, arrival=arrival,
                     policy=policy, alpha=alpha, lql_segments=lql_segments,
                     theta_method=theta_method, q_max=q_max, q_step=q_step,
                     sim_section=doc.get("sim"))


def _constant_rate(r: float):
    def rate(gain: float) -> float:
        return r

    rate.cutoff = None
    return rate


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(doc)


def sim_config(cfg: RunConfig, slots: Optional[int] = None) -> sim.SimConfig:
    if cfg.sim_section is None:
        raise ConfigError("config has no 'sim' section")
    sec = cfg.sim_section
    return sim.SimConfig(
        params=cfg.params, fade=cfg.fade, arrival=cfg.arrival, policy=cfg.policy,
        alpha=cfg.alpha,
        slots=int(slots if slots is not None else _require(sec, "slots", "sim")),
        seed=int(_require(sec, "seed", "sim")),
        warmup=None if sec.get("warmup") is None else int(sec["warmup"]),
        replicas=int(sec.get("replicas", 8)),
        record_max_q=sec.get("record_max_q"))


@dataclass
class AnalysisResult:
    config: RunConfig
    kernel_raw: kernel.TruncatedKernel
    kernels: dict
    stationaries: dict
    sql: augment.SqlBounds
    boundaries: tuple
    thetas: tuple          # QosExponent per tail segment
    tails: dict            # method name -> TailApprox used for that curve
    timings: dict = field(default_factory=dict)

    def curve(self, method: str, q: float) -> float:
        return self.tails[method].eval_upper(q)

    def summary(self) -> dict:
        return {
            "config_hash": self.config.config_hash,
            "alpha": self.config.alpha,
            "psi_u": self.sql.psi_u,
            "psi_l": self.sql.psi_l,
            "segment_boundaries": list(self.boundaries),
            "theta": [t.theta for t in self.thetas],
            "theta_method": [t.method.value for t in self.thetas],
            "theta_residual": [t.residual for t in self.thetas],
            "timings_s": dict(self.timings),
        }


def lql_segment_plan(cfg: RunConfig):
    """Boundaries and rate maps of the tail segments above alpha."""
    if cfg.is_drift_policy:
        pol = cfg.policy
        base = int(round(cfg.alpha / pol.delta))
        bounds = [cfg.alpha + i * pol.delta for i in range(cfg.lql_segments)]
        omegas = [base + i for i in range(cfg.lql_segments)]
        return tuple(bounds), tuple(omegas), None
    pol = cfg.policy
    cuts = [float(cfg.alpha)] + [t for t in pol.thresholds if t > cfg.alpha]
    maps = [pol.rate_map(b) for b in cuts]
    return tuple(cuts), None, tuple(maps)


def solve_segment_thetas(cfg: RunConfig):
    """QoS exponent per tail segment using the configured method."""
    bounds, omegas, maps = lql_segment_plan(cfg)
    method = cfg.theta_method
    if method == "auto":
        method = "theorem6" if (cfg.is_drift_policy
                                and isinstance(cfg.fade, models.Rayleigh)) else "binary_search"
    thetas = []
    for i in range(len(bounds)):
        if cfg.is_drift_policy:
            pol = cfg.policy
            omega = omegas[i]
            if method == "theorem6":
                thetas.append(lql.solve_theta_theorem6(pol, cfg.params, cfg.fade,
                                                       omega, cfg.arrival))
                continue
            if method in ("corollary1", "loose"):
                psi = lql.psi_norm(pol, cfg.params, cfg.fade, omega)
                bt = cfg.params.blocklength / cfg.params.packet_bits * LOG2_E
                if method == "corollary1":
                    thetas.append(lql.corollary1_theta(psi, pol.lam, bt))
                else:
                    thetas.append(lql.loose_theta(psi, pol.lam))
                continue
            rate = models.lyapunov_rate_map(pol, cfg.params,
                                            int(round(bounds[i] / pol.delta)),
                                            cfg.params.kappa_lql)
        else:
            rate = maps[i]
        thetas.append(lql.solve_qos_exponent(
            lambda t, r=rate: lql.effective_capacity(r, cfg.fade, t),
            lambda t: lql.effective_bandwidth(cfg.arrival, t)))
    return bounds, tuple(thetas)


def run_analysis(cfg: RunConfig) -> AnalysisResult:
    """Kernel -> augmentations -> envelopes -> stationary laws -> tail."""
    timings = {}
    t0 = time.perf_counter()
    if cfg.is_drift_policy and isinstance(cfg.fade, models.Rayleigh):
        raw = kernel.build_qaa_lyapunov(cfg.policy, cfg.params, cfg.fade, cfg.alpha)
    else:
        pol = cfg.policy
        if cfg.is_drift_policy:
            pol = models.lyapunov_as_policy(pol, cfg.params, cfg.params.kappa_sql, cfg.alpha)
        raw = kernel.build_qaa_generic(pol, cfg.arrival, cfg.fade, cfg.params, cfg.alpha)
    timings["build_kernel"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lca = augment.last_column_augment(raw)
    fca = augment.first_column_augment(raw)
    sub = augment.monotone_upper_envelope(lca)
    slb = augment.monotone_lower_envelope(fca)
    kernels = {"lca": lca, "fca": fca, "sub": sub, "slb": slb}
    timings["augment"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stationaries = {name: augment.solve_stationary(k) for name, k in kernels.items()}
    sql = augment.sql_bounds(stationaries["sub"], stationaries["slb"],
                             cfg.alpha, cfg.params.kappa_sql)
    timings["stationary"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    bounds, thetas = solve_segment_thetas(cfg)
    segments = tuple(zip(bounds, (t.theta for t in thetas)))
    timings["qos_exponents"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tails = {}
    for name in ("lca", "fca", "sub", "slb"):
        eps = _curve_of(stationaries[name])
        one_sided = augment.SqlBounds(eps_upper=eps, eps_lower=eps,
                                      alpha=cfg.alpha, kappa=cfg.params.kappa_sql)
        tails[name] = lql.assemble_tail(one_sided, segments, cfg.alpha)
    tails["bounds_pair"] = lql.assemble_tail(sql, segments, cfg.alpha)
    timings["assemble_tail"] = time.perf_counter() - t0

    return AnalysisResult(config=cfg, kernel_raw=raw, kernels=kernels,
                          stationaries=stationaries, sql=sql,
                          boundaries=tuple(bounds), thetas=thetas, tails=tails,
                          timings=timings)


def _curve_of(dist: augment.StationaryDist) -> np.ndarray:
    eps = 1.0 - np.concatenate(([0.0], np.cumsum(dist.probs[:-1])))
    return np.minimum.accumulate(np.clip(eps, 0.0, 1.0))


def q_grid(cfg: RunConfig) -> np.ndarray:
    n = int(math.floor(cfg.q_max / cfg.q_step + 1e-9))
    return np.arange(0, n + 1) * cfg.q_step


def analysis_rows(res: AnalysisResult):
    """Column dict for the analyze CSV: the four curves on the q grid."""
    qs = q_grid(res.config)
    cols = {"q_th": qs}
    for name in ("lca", "fca", "sub", "slb"):
        cols[f"eps_{name}"] = np.array([res.tails[name].eval_upper(q) for q in qs])
    return cols


def write_csv(path, columns: dict, header: dict) -> None:
    """Plain CSV with '# key=value' comment lines; floats via repr for
    bit-identical round-trips."""
    keys = list(columns)
    n = len(next(iter(columns.values())))
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        fh.write(",".join(keys) + "\n")
        for i in range(n):
            fh.write(",".join(_cell(columns[k][i]) for k in keys) + "\n")


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def read_csv(path):
    """Inverse of write_csv: (header dict, column dict of float lists)."""
    header, names, rows = {}, None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                header[k.strip()] = v.strip()
            elif names is None:
                names = line.split(",")
            else:
                rows.append(line.split(","))
    if names is None:
        raise ConfigError(f"{path} contains no CSV body")
    cols = {name: [] for name in names}
    for row in rows:
        for name, cell in zip(names, row):
            try:
                cols[name].append(float(cell))
            except ValueError:
                cols[name].append(cell)
    return header, cols


def default_drift_config(v_param: float, alpha: float, delta: int = 3,
                         slots: int = 10**7, seed: int = 20240801,
                         segments: int = 4) -> dict:
    """Config document for the urban-microcell drift-policy case study."""
    return {
        "system": {"B": 500e3, "T": 2e-3, "N0_dBm_per_Hz": -174.0, "A": 1000.0,
                   "S_max": None, "kappa_sql": 1.0, "kappa_lql": 1e-3},
        "channel": {"kind": "rayleigh", "mean_gain": 5.0 * 10.0 ** (-15.4)},
        "arrival": {"kind": "deterministic", "lambda": 1},
        "policy": {"kind": "lyapunov", "V": v_param, "delta": delta},
        "analysis": {"alpha": alpha, "segments": segments, "theta_method": "auto"},
        "sim": {"slots": slots, "seed": seed, "warmup": None, "replicas": 8,
                "record_max_q": None},
    }
