"""Replica experiments checking finite-n runs against the scaling limit.

Each runner simulates independent copies of the rank-based system at
gamma = (1,) and compares replica statistics against the analytic profile
or gap-equilibrium predictions at stated tolerances.  Results aggregate
into a VerificationReport; emit_report serializes it for the CLI/service.

Simulations always run in unscaled coordinates; the diffusive scale b
enters only through the horizon s = b**-2 and the analysis rescaling.
Monte Carlo tolerances and replica counts below were frozen from pilot
runs; see the individual runners.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import dynamics, measure, model, stefan
from .errors import TruncationViolation

TAGS = (
    "leftmost-scaling",
    "density-profile",
    "particle-count",
    "quantile-law",
    "spacings-equilibrium",
    "domination",
)
_EXP_CODE = {tag: i + 1 for i, tag in enumerate(TAGS)}

# pooled two-sided KS critical value at the 1% level, D < crit / sqrt(N)
KS_CRIT_1PCT = 1.628


@dataclass(frozen=True)
class ExperimentConfig:
    """One verification run: model parameters plus the analysis grid.

    b is the diffusive scale; runners that work at fixed (unscaled) times
    leave it at 1.  For quantile-law the x_bins entries are read as mass
    fractions q rather than spatial bin edges.
    """

    tag: str
    lam: float = 1.0
    n: int = 2000
    dt: float = 0.05
    b: float = 0.01
    replicas: int = 50
    seed: int = 0
    times: tuple = ()
    x_bins: tuple = ()
    out_dir: str | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown experiment tag {self.tag!r}; expected one of {TAGS}")
        if not self.lam > 0.0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.b <= 1.0:
            raise ValueError(f"b must lie in (0, 1], got {self.b}")
        if self.replicas < 1:
            raise ValueError(f"replicas must be at least 1, got {self.replicas}")
        times = tuple(float(t) for t in self.times)
        if any(t <= 0.0 for t in times) or any(
                t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("times must be positive and strictly increasing")
        bins = tuple(float(x) for x in self.x_bins)
        if any(x2 <= x1 for x1, x2 in zip(bins, bins[1:])):
            raise ValueError("x_bins must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "x_bins", bins)

    @property
    def s(self) -> float:
        """Diffusive horizon b**-2."""
        return self.b ** -2

    def canonical(self) -> dict:
        out = asdict(self)
        out["times"] = list(self.times)
        out["x_bins"] = list(self.x_bins)
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class ClaimRecord:
    """One checked prediction: the anchor states the limit being probed."""

    claim_id: str
    anchor: str
    statistic: float
    tolerance: float
    passed: bool
    replicas: int
    seeds: str
    detail: str = ""


@dataclass
class VerificationReport:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    created: str = ""  # ISO timestamp; never part of the config hash

    def __post_init__(self):
        if not self.created:
            self.created = datetime.now(timezone.utc).isoformat()

    @property
    def tag(self) -> str:
        return self.config.tag

    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def config_hash(self) -> str:
        return self.config.config_hash()

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "config": self.config.canonical(),
            "config_hash": self.config_hash(),
            "created": self.created,
            "passed": self.passed(),
            "records": [asdict(r) for r in self.records],
        }


def report_to_json(report: VerificationReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)


def report_from_json(text: str) -> VerificationReport:
    raw = json.loads(text)
    cfg_raw = dict(raw["config"])
    cfg_raw["times"] = tuple(cfg_raw.get("times", ()))
    cfg_raw["x_bins"] = tuple(cfg_raw.get("x_bins", ()))
    cfg = ExperimentConfig(**cfg_raw)
    records = [ClaimRecord(**r) for r in raw["records"]]
    return VerificationReport(config=cfg, records=records, created=raw["created"])


_REPORT_COLUMNS = ("claim_id", "anchor", "statistic", "tolerance",
                   "passed", "replicas", "seeds", "detail")


def resolve_out_dir(cfg: ExperimentConfig | None = None,
                    out_dir: str | Path | None = None) -> Path:
    """Precedence: explicit argument, config, ATLASLAB_OUT, cwd."""
    if out_dir is not None:
        return Path(out_dir)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    env = os.environ.get("ATLASLAB_OUT")
    return Path(env) if env else Path(".")


def emit_report(report: VerificationReport, fmt: str = "json",
                out_dir: str | Path | None = None) -> Path:
    """Write the report as json, csv, or markdown; returns the path.

    csv and markdown outputs carry no timestamp, so identical config and
    seed reproduce identical bytes; json keeps the created field.
    """
    if fmt not in ("json", "csv", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    directory = resolve_out_dir(report.config, out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    ext = {"json": "json", "csv": "csv", "markdown": "md"}[fmt]
    path = directory / f"report-{report.tag}-{report.config_hash()[:12]}.{ext}"

    if fmt == "json":
        path.write_text(report_to_json(report) + "\n")
    elif fmt == "csv":
        import csv as _csv

        with open(path, "w", newline="") as fh:
            fh.write(f"# tag={report.tag}\n")
            fh.write(f"# config_hash={report.config_hash()}\n")
            fh.write(f"# seed={report.config.seed}\n")
            writer = _csv.writer(fh)
            writer.writerow(_REPORT_COLUMNS)
            for rec in report.records:
                row = asdict(rec)
                writer.writerow([row[c] for c in _REPORT_COLUMNS])
    else:
        lines = [
            f"# Verification report: {report.tag}",
            "",
            f"- config hash: `{report.config_hash()}`",
            f"- seed: {report.config.seed}",
            f"- overall: {'PASS' if report.passed() else 'FAIL'}",
            "",
            "| claim | statistic | tolerance | pass | replicas |",
            "|---|---|---|---|---|",
        ]
        for rec in report.records:
            lines.append(
                f"| {rec.claim_id} | {rec.statistic:.6g} | {rec.tolerance:.6g} "
                f"| {'yes' if rec.passed else 'no'} | {rec.replicas} |")
        lines.append("")
        for rec in report.records:
            lines.append(f"- `{rec.claim_id}`: {rec.anchor}")
            if rec.detail:
                lines.append(f"  - {rec.detail}")
        path.write_text("\n".join(lines) + "\n")
    return path


# --- seeding and sizing -------------------------------------------------

def _lam_key(lam: float) -> int:
    return int(round(lam * 1000))


def _seed_seq(cfg: ExperimentConfig, replica: int, role: int) -> np.random.SeedSequence:
    # role 0 draws the initial configuration, role 1 drives the dynamics
    return np.random.SeedSequence(
        [cfg.seed, _EXP_CODE[cfg.tag], _lam_key(cfg.lam), replica, role])


def _seed_label(cfg: ExperimentConfig) -> str:
    return (f"SeedSequence([{cfg.seed}, {_EXP_CODE[cfg.tag]}, {_lam_key(cfg.lam)}, "
            f"r, role]); r in 0..{cfg.replicas - 1}, role 0=init 1=noise")


def required_n(lam: float, horizon: float, extent: float | None = None) -> int:
    """Smallest n whose initial cloud keeps all reads out of the buffer.

    Reads up to extent*sqrt(T) must clear the rightmost initial particle
    (near n/lam) by the 5*sqrt(T) buffer; the 1.1 covers cloud fluctuation.
    extent defaults to |kappa| + 5, the front-tracking case.
    """
    if extent is None:
        extent = abs(stefan.solve_kappa(lam).kappa) + 5.0
    return math.ceil(1.1 * lam * (extent + 5.0) * math.sqrt(horizon))


def _guard_reads(horizon: float, max_read: float, rightmost0: float) -> None:
    # reads within 5*sqrt(T) of the rightmost initial particle see the
    # missing far-field mass, which invalidates the replica
    clearance = 5.0 * math.sqrt(horizon)
    if max_read > rightmost0 - clearance:
        raise TruncationViolation(
            f"analysis reads up to {max_read:.4g} but the rightmost initial "
            f"particle sits at {rightmost0:.4g}; the {clearance:.4g} buffer "
            f"is violated, increase n")


def _run_one(cfg: ExperimentConfig, replica: int, horizon: float,
             init_state: model.ParticleSystemState,
             recorder: dynamics.TrajectoryRecorder | None = None,
             engine: str = "windowed", sync_every: float = 25.0,
             dt: float | None = None):
    step_cfg = dynamics.StepConfig(dt=dt if dt is not None else cfg.dt,
                                   engine=engine, sync_every=sync_every)
    noise = dynamics.NoiseSource(_seed_seq(cfg, replica, 1), init_state.n)
    return dynamics.run(init_state, model.DriftSpec.atlas(), step_cfg,
                        horizon, noise, recorder)


def _ks_exponential(samples: np.ndarray, rate: float) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    cdf = -np.expm1(-rate * x)
    grid = np.arange(n + 1) / n
    return float(max((grid[1:] - cdf).max(), (cdf - grid[:-1]).max()))


# --- runners ------------------------------------------------------------

def run_leftmost_scaling(cfg: ExperimentConfig,
                         tolerance: float = 0.05) -> VerificationReport:
    """Mean of Y_1(s)/sqrt(s) over replicas against kappa(lambda).

    Pilot at the frozen acceptance configuration (n=10^4, dt=0.05, b=0.01,
    R=50): per-replica sd of Y_1(s)/sqrt(s) is about 0.08-0.13 across
    lambda in {1,2,4}, so the replica mean carries a ~0.013-0.018 standard
    error against the 0.05 tolerance.
    """
    sol = stefan.solve_kappa(cfg.lam)
    s = cfg.s
    if cfg.n < required_n(cfg.lam, s):
        raise TruncationViolation(
            f"n={cfg.n} below the sizing rule {required_n(cfg.lam, s)} "
            f"for horizon {s:g}")
    vals = np.empty(cfg.replicas)
    for r in range(cfg.replicas):
        init = model.sample_ppp_half_line(cfg.lam, cfg.n, _seed_seq(cfg, r, 0))
        rightmost0 = init.ranked_positions()[-1]
        final, _ = _run_one(cfg, r, s, init)
        y1 = final.leftmost()
        _guard_reads(s, y1, rightmost0)
        vals[r] = y1 / math.sqrt(s)
    err = float(vals.mean() - sol.kappa)
    rec = ClaimRecord(
        claim_id=f"leftmost-scaling:lam={cfg.lam:g}",
        anchor=("Y_1(s)/sqrt(s) -> kappa(lambda) as s -> infinity, where "
                "kappa solves kappa*(1-Phi(kappa))/phi(kappa) = 1 - lambda/2"),
        statistic=err, tolerance=tolerance, passed=abs(err) <= tolerance,
        replicas=cfg.replicas, seeds=_seed_label(cfg),
        detail=(f"mean={vals.mean():.6f} sd={vals.std(ddof=1):.6f} "
                f"kappa={sol.kappa:.6f}"))
    return VerificationReport(config=cfg, records=[rec])


def _default_bin_edges(sol: stefan.StefanSolution) -> np.ndarray:
    if abs(sol.lam - 2.0) < 1e-12:
        return np.linspace(1.0, 5.0, 9)
    return sol.kappa + np.linspace(0.5, 3.0, 6)


def _reference_measure(sol: stefan.StefanSolution, b: float,
                       r_max: float = 10.0) -> measure.EmpiricalMeasure:
    """Atom-size-b discretization of the analytic mass profile at t=1."""
    total = stefan.integrated_profile(sol, 1.0, r_max)
    count = int(total / b)
    qs = (np.arange(count) + 0.5) * b
    atoms = np.array([stefan.profile_quantile(sol, 1.0, q) for q in qs])
    return measure.EmpiricalMeasure(atoms=atoms, b=b)


def _final_clouds(cfg: ExperimentConfig, horizon: float, max_read: float):
    """Yield final ranked positions per replica, guarding every read."""
    for r in range(cfg.replicas):
        init = model.sample_ppp_half_line(cfg.lam, cfg.n, _seed_seq(cfg, r, 0))
        rightmost0 = init.ranked_positions()[-1]
        _guard_reads(horizon, max_read, rightmost0)
        final, _ = _run_one(cfg, r, horizon, init)
        yield final.ranked_positions()


def run_density_profile(cfg: ExperimentConfig,
                        bin_tolerance: float | None = None,
                        r_max: float = 10.0) -> VerificationReport:
    """Binned density at the finest scale plus d* decay along a b-sweep.

    The sweep runs b_grid = (10b, 5b, 2b, b); per-replica d* against the
    discretized analytic profile must decrease along it.  Bin masses are
    pooled over replicas at the finest b and compared with the integrated
    profile.  Tolerances: 5% per bin at lam=2 (flat profile), else 7%;
    both frozen from pilots at R=50, b=0.01.
    """
    sol = stefan.solve_kappa(cfg.lam)
    flat = abs(cfg.lam - 2.0) < 1e-12
    if bin_tolerance is None:
        bin_tolerance = 0.05 if flat else 0.07
    edges = np.asarray(cfg.x_bins, dtype=float) if cfg.x_bins else _default_bin_edges(sol)
    if edges.size < 2:
        raise ValueError("need at least two bin edges")
    extent = max(float(edges[-1]), r_max)
    b_grid = tuple(cfg.b * f for f in (10.0, 5.0, 2.0, 1.0))
    if b_grid[0] > 1.0:
        raise ValueError("b must be at most 0.1 so the sweep stays in (0, 1]")
    if cfg.n < required_n(cfg.lam, cfg.s, extent):
        raise TruncationViolation(
            f"n={cfg.n} below the sizing rule "
            f"{required_n(cfg.lam, cfg.s, extent)} for reads up to "
            f"{extent:g}*sqrt(s)")

    seeds = _seed_label(cfg)
    records = []
    dstar_means = []
    for b_i in b_grid:
        s_i = b_i ** -2
        ref = _reference_measure(sol, b_i, r_max)
        # b is not part of the seed derivation, so the sweep reuses one set
        # of replica streams: common random numbers across b levels cut the
        # variance of the consecutive d* differences the decay claim checks
        sub = ExperimentConfig(**{**cfg.canonical(), "b": b_i})
        dstars = np.empty(cfg.replicas)
        mass = np.zeros(edges.size - 1)
        for r, ranked in enumerate(_final_clouds(sub, s_i, extent * math.sqrt(s_i))):
            emp = measure.EmpiricalMeasure(atoms=b_i * ranked, b=b_i)
            dstars[r] = measure.dstar_surrogate(emp, ref, r_max=int(r_max))
            counts = np.diff(np.searchsorted(emp.atoms, edges, side="right"))
            mass += b_i * counts
        dstar_means.append(float(dstars.mean()))
        if b_i == b_grid[-1]:
            mass /= cfg.replicas
            target = np.diff([stefan.integrated_profile(sol, 1.0, e) for e in edges])
            rel = np.abs(mass - target) / target
            worst = int(np.argmax(rel))
            records.append(ClaimRecord(
                claim_id=f"density-bins:lam={cfg.lam:g}:b={b_i:g}",
                anchor=("b*#{i: b*X_i(b^-2) in (x1, x2]} -> integral of "
                        "u*(1, .) over (x1, x2] as b -> 0"),
                statistic=float(rel.max()), tolerance=bin_tolerance,
                passed=bool(rel.max() <= bin_tolerance),
                replicas=cfg.replicas, seeds=seeds,
                detail=(f"edges={np.round(edges, 4).tolist()} "
                        f"mass={np.round(mass, 4).tolist()} "
                        f"target={np.round(target, 4).tolist()} "
                        f"worst_bin={worst}")))
    steps = np.diff(dstar_means)
    records.append(ClaimRecord(
        claim_id=f"density-dstar-decay:lam={cfg.lam:g}",
        anchor=("d*(Q^b(1,.), Q*(1,.)) -> 0 as b -> 0, where d* sums "
                "2^-r * min(1, int_0^r |F_b - F*|) over r = 1..10"),
        statistic=float(steps.max()), tolerance=0.0,
        passed=bool(steps.max() <= 0.0),
        replicas=cfg.replicas, seeds=seeds,
        detail=(f"b_grid={[round(x, 6) for x in b_grid]} "
                f"dstar={[round(x, 6) for x in dstar_means]}")))
    return VerificationReport(config=cfg, records=records)


def run_particle_count(cfg: ExperimentConfig,
                       tolerance: float = 0.07) -> VerificationReport:
    """Pooled scaled counts per interval against the integrated profile.

    Intervals default to width-1/2 cells on [kappa+0.25, kappa+2.25].
    The 7% tolerance was frozen from a pilot at R=50, b=0.01 (per-interval
    pooled mass fluctuates ~1.5-2.5% there; finite-b bias dominates).
    """
    sol = stefan.solve_kappa(cfg.lam)
    edges = (np.asarray(cfg.x_bins, dtype=float) if cfg.x_bins
             else sol.kappa + np.linspace(0.25, 2.25, 5))
    if edges.size < 2:
        raise ValueError("need at least two interval edges")
    s = cfg.s
    extent = float(edges[-1])
    if cfg.n < required_n(cfg.lam, s, extent):
        raise TruncationViolation(
            f"n={cfg.n} below the sizing rule {required_n(cfg.lam, s, extent)}")
    mass = np.zeros(edges.size - 1)
    for ranked in _final_clouds(cfg, s, extent * math.sqrt(s)):
        counts = np.diff(np.searchsorted(ranked, edges * math.sqrt(s), side="right"))
        mass += cfg.b * counts
    mass /= cfg.replicas
    target = np.diff([stefan.integrated_profile(sol, 1.0, e) for e in edges])
    rel = np.abs(mass - target) / target
    rec = ClaimRecord(
        claim_id=f"particle-count:lam={cfg.lam:g}",
        anchor=("b * #{i: X_i(b^-2) <= x/b} -> integral of u*(1, .) up to "
                "x; interval counts match the mass profile as b -> 0"),
        statistic=float(rel.max()), tolerance=tolerance,
        passed=bool(rel.max() <= tolerance),
        replicas=cfg.replicas, seeds=_seed_label(cfg),
        detail=(f"edges={np.round(edges, 4).tolist()} "
                f"mass={np.round(mass, 4).tolist()} "
                f"target={np.round(target, 4).tolist()}"))
    return VerificationReport(config=cfg, records=[rec])


def run_quantile_law(cfg: ExperimentConfig, tolerance: float = 0.05,
                     eps_pair: tuple = (0.2, 0.1),
                     gap_tolerance: float = 0.10) -> VerificationReport:
    """Scaled order statistics at mass fractions q, plus windowed mean gaps.

    The local-gap limit strictly needs eps -> 0 after b -> 0; at fixed b
    we instead report the windowed mean at two eps values and require both
    within gap_tolerance of 1/u*(1, y*(1, q)).
    """
    sol = stefan.solve_kappa(cfg.lam)
    qs = tuple(cfg.x_bins) if cfg.x_bins else (0.5, 1.0)
    if any(q <= 0.0 for q in qs):
        raise ValueError("mass fractions must be positive")
    s = cfg.s
    sqrt_s = math.sqrt(s)
    targets = {q: stefan.profile_quantile(sol, 1.0, q) for q in qs}
    extent = max(targets.values()) + max(eps_pair) + 1.0
    if cfg.n < required_n(cfg.lam, s, extent):
        raise TruncationViolation(
            f"n={cfg.n} below the sizing rule {required_n(cfg.lam, s, extent)}")

    pos = {q: np.empty(cfg.replicas) for q in qs}
    gaps = {(q, eps): np.empty(cfg.replicas) for q in qs for eps in eps_pair}
    for r, ranked in enumerate(_final_clouds(cfg, s, extent * sqrt_s)):
        for q in qs:
            k = min(cfg.n, max(1, math.ceil(q * sqrt_s)))
            pos[q][r] = ranked[k - 1] / sqrt_s
            for eps in eps_pair:
                w = max(1, int(round(eps * sqrt_s / 2.0)))
                lo = max(0, k - 1 - w)
                hi = min(cfg.n - 1, k - 1 + w)
                gaps[(q, eps)][r] = (ranked[hi] - ranked[lo]) / (hi - lo)

    seeds = _seed_label(cfg)
    records = []
    for q in qs:
        err = float(pos[q].mean() - targets[q])
        records.append(ClaimRecord(
            claim_id=f"quantile:lam={cfg.lam:g}:q={q:g}",
            anchor=("b * Y_ceil(q/b)(b^-2) -> y*(1, q), the point where the "
                    "integrated profile u*(1, .) first accumulates mass q"),
            statistic=err, tolerance=tolerance, passed=abs(err) <= tolerance,
            replicas=cfg.replicas, seeds=seeds,
            detail=(f"mean={pos[q].mean():.6f} sd={pos[q].std(ddof=1):.6f} "
                    f"target={targets[q]:.6f}")))
        u_local = float(stefan.u_star(sol, 1.0, targets[q]))
        for eps in eps_pair:
            g = gaps[(q, eps)]
            rel = float(g.mean() * u_local - 1.0)
            records.append(ClaimRecord(
                claim_id=f"local-gap:lam={cfg.lam:g}:q={q:g}:eps={eps:g}",
                anchor=("the mean gap over ranks within eps/(2b) of q/b at "
                        "time b^-2 -> 1/u*(1, y*(1, q)) as b -> 0 then "
                        "eps -> 0; reported at two fixed eps"),
                statistic=rel, tolerance=gap_tolerance,
                passed=abs(rel) <= gap_tolerance,
                replicas=cfg.replicas, seeds=seeds,
                detail=(f"mean_gap={g.mean():.6f} sd={g.std(ddof=1):.6f} "
                        f"target={1.0 / u_local:.6f}")))
    return VerificationReport(config=cfg, records=records)


def run_spacings_equilibrium(cfg: ExperimentConfig, m_trend: int = 50,
                             m_eq: int = 6,
                             z1_tolerance: float = 0.10) -> VerificationReport:
    """Leading-gap equilibration: KS against Exp(2) along the time grid.

    lam = 2 starts from iid Exp(2) gaps, which are stationary: the pooled
    first m_trend gaps must pass the 1% KS test at every sampled time.
    lam < 2 starts from the Poisson cloud: the pooled KS statistic over
    the first m_trend gaps must decrease along the grid (the bulk is still
    out of equilibrium, so it does not pass), while the first m_eq gaps,
    which sit inside the equilibrated zone at the final time, must pass.
    The mean of the leading gap, pooled over the tail snapshots, must land
    within z1_tolerance of 1/2.
    """
    times = cfg.times if cfg.times else (1.0, 10.0, 100.0)
    horizon = times[-1]
    stationary = abs(cfg.lam - 2.0) < 1e-12
    # tail window: the final ~20 sync snapshots pool the Z_1 mean without
    # extra replicas (gap autocorrelation decays within O(1) time)
    sync = 1.0
    tail = [t for t in np.arange(max(sync, horizon - 19.0), horizon + sync / 2, sync)]
    sample_times = np.unique(np.concatenate([np.asarray(times, float), tail]))
    if cfg.n < required_n(cfg.lam, horizon, 0.0) + m_trend:
        raise TruncationViolation(
            f"n={cfg.n} too small to keep {m_trend} leading gaps clear of "
            f"the buffer at horizon {horizon:g}")

    pooled = {t: [] for t in times}
    z1_tail = []
    for r in range(cfg.replicas):
        if stationary:
            init = model.sample_spacings_law(cfg.lam, cfg.n, _seed_seq(cfg, r, 0))
        else:
            init = model.sample_ppp_half_line(cfg.lam, cfg.n, _seed_seq(cfg, r, 0))
        rightmost0 = init.ranked_positions()[-1]
        rec = dynamics.TrajectoryRecorder(sample_times=sample_times,
                                          keep_full_state=True)
        _run_one(cfg, r, horizon, init, recorder=rec, sync_every=sync)
        if len(rec.times) != sample_times.size:
            raise RuntimeError("snapshot times collided on the step grid; "
                               "decrease dt")
        for t_req in times:
            i = int(np.argmin(np.abs(np.asarray(rec.times) - t_req)))
            _guard_reads(horizon, rec.full_states[i][m_trend], rightmost0)
            gaps = np.diff(rec.full_states[i][:m_trend + 1])
            pooled[t_req].append(gaps)
        for i, t_snap in enumerate(rec.times):
            if t_snap >= tail[0] - 1e-9:
                z1_tail.append(rec.full_states[i][1] - rec.full_states[i][0])

    seeds = _seed_label(cfg)
    records = []
    ks_by_time = {}
    for t_req in times:
        sample = np.concatenate(pooled[t_req])
        ks_by_time[t_req] = _ks_exponential(sample, 2.0)
    if stationary:
        crit = KS_CRIT_1PCT / math.sqrt(cfg.replicas * m_trend)
        for t_req in times:
            records.append(ClaimRecord(
                claim_id=f"gap-stationarity:lam=2:t={t_req:g}",
                anchor=("from iid Exp(2) gaps the gap process is stationary: "
                        "the leading gaps remain iid Exp(2) at every time"),
                statistic=ks_by_time[t_req], tolerance=crit,
                passed=ks_by_time[t_req] < crit,
                replicas=cfg.replicas, seeds=seeds,
                detail=f"pooled over {cfg.replicas} replicas x {m_trend} gaps"))
    else:
        ks_seq = [ks_by_time[t] for t in times]
        steps = np.diff(ks_seq)
        records.append(ClaimRecord(
            claim_id=f"gap-equilibration-trend:lam={cfg.lam:g}",
            anchor=("from the Poisson cloud with lambda < 2 the law of the "
                    "leading gaps converges to iid Exp(2); the pooled KS "
                    "distance decreases along the time grid"),
            statistic=float(steps.max()), tolerance=0.0,
            passed=bool(steps.max() <= 0.0),
            replicas=cfg.replicas, seeds=seeds,
            detail=(f"times={list(times)} ks={[round(k, 5) for k in ks_seq]} "
                    f"m={m_trend}")))
        eq_pool = np.concatenate([g[:m_eq] for g in pooled[times[-1]]])
        crit = KS_CRIT_1PCT / math.sqrt(eq_pool.size)
        ks_eq = _ks_exponential(eq_pool, 2.0)
        records.append(ClaimRecord(
            claim_id=f"gap-equilibration-final:lam={cfg.lam:g}:t={times[-1]:g}",
            anchor=("the gaps inside the equilibrated front zone are iid "
                    "Exp(2) in the long-time limit"),
            statistic=ks_eq, tolerance=crit, passed=ks_eq < crit,
            replicas=cfg.replicas, seeds=seeds,
            detail=f"first {m_eq} gaps, pooled N={eq_pool.size}"))
        z1 = np.asarray(z1_tail)
        rel = float(z1.mean() / 0.5 - 1.0)
        records.append(ClaimRecord(
            claim_id=f"leading-gap-mean:lam={cfg.lam:g}",
            anchor="E[Z_1(t)] -> 1/2 as t -> infinity for lambda < 2",
            statistic=rel, tolerance=z1_tolerance,
            passed=abs(rel) <= z1_tolerance,
            replicas=cfg.replicas, seeds=seeds,
            detail=(f"mean={z1.mean():.6f} pooled N={z1.size} over tail "
                    f"snapshots t in [{tail[0]:g}, {tail[-1]:g}]")))
    return VerificationReport(config=cfg, records=records)


def run_domination(cfg: ExperimentConfig, ranks: tuple = (1, 2, 3),
                   z_grid: np.ndarray | None = None,
                   confidence: float = 3.9) -> VerificationReport:
    """Gap-tail monotonicity in time plus the Exp(2)/Exp(lam) envelope.

    For lam <= 2 the tails P(Z_k(t) > z) decrease in t and sit between
    exp(-2z) and exp(-lam z); both orderings reverse for lam > 2.  Checks
    run on empirical tails with a normal-approximation allowance.  Both
    bounds are attained in the t -> infinity limit, so the default
    multiplier is Bonferroni-sized for the ~120 simultaneous comparisons
    (3.9 ~ two-sided 0.01%); the variance floor 1/R keeps the allowance
    alive where the empirical tail hits 0 or 1.
    """
    times = cfg.times if cfg.times else (1.0, 10.0)
    if len(times) < 2:
        raise ValueError("domination needs at least two sampled times")
    z = np.arange(0.1, 2.01, 0.1) if z_grid is None else np.asarray(z_grid, float)
    horizon = times[-1]
    reversed_order = cfg.lam > 2.0
    lo_rate, hi_rate = (2.0, cfg.lam) if reversed_order else (cfg.lam, 2.0)
    # envelope: exp(-hi_rate*z) <= P(Z_k > z) <= exp(-lo_rate*z)
    upper = np.exp(-lo_rate * z)
    lower = np.exp(-hi_rate * z)
    n_rep = cfg.replicas

    def _pq(p):
        return np.maximum(p * (1.0 - p), 1.0 / n_rep)

    samples = {k: [np.empty(n_rep) for _ in times] for k in ranks}
    max_rank = max(ranks)
    for r in range(n_rep):
        init = model.sample_ppp_half_line(cfg.lam, cfg.n, _seed_seq(cfg, r, 0))
        rightmost0 = init.ranked_positions()[-1]
        rec = dynamics.TrajectoryRecorder(sample_times=np.asarray(times),
                                          keep_full_state=True)
        _run_one(cfg, r, horizon, init, recorder=rec, engine="exact")
        if len(rec.times) != len(times):
            raise RuntimeError("snapshot times collided on the step grid; "
                               "decrease dt")
        for i in range(len(times)):
            ranked = rec.full_states[i]
            _guard_reads(horizon, ranked[max_rank], rightmost0)
            for k in ranks:
                samples[k][i][r] = ranked[k] - ranked[k - 1]

    seeds = _seed_label(cfg)
    records = []
    for k in ranks:
        p_lo = np.array([np.mean(samples[k][0] > zz) for zz in z])
        p_hi = np.array([np.mean(samples[k][-1] > zz) for zz in z])
        pool = 0.5 * (p_lo + p_hi)
        eps2 = confidence * np.sqrt(_pq(pool) * (2.0 / n_rep))
        if reversed_order:
            viol = p_lo - p_hi - eps2
            direction = "increase"
        else:
            viol = p_hi - p_lo - eps2
            direction = "decrease"
        records.append(ClaimRecord(
            claim_id=f"gap-tail-monotone:lam={cfg.lam:g}:k={k}",
            anchor=(f"P(Z_k(t) > z) must {direction} in t for every z "
                    f"(stochastic ordering of the gap laws in time)"),
            statistic=float(viol.max()), tolerance=0.0,
            passed=bool(viol.max() <= 0.0),
            replicas=n_rep, seeds=seeds,
            detail=(f"times=({times[0]:g},{times[-1]:g}) "
                    f"worst_z={z[int(np.argmax(viol))]:.2f}")))
        worst = -np.inf
        worst_at = ""
        for i, t in enumerate(times):
            p = np.array([np.mean(samples[k][i] > zz) for zz in z])
            eps1 = confidence * np.sqrt(_pq(p) / n_rep)
            v = np.maximum(lower - p - eps1, p - upper - eps1)
            if v.max() > worst:
                worst = float(v.max())
                worst_at = f"t={t:g} z={z[int(np.argmax(v))]:.2f}"
        records.append(ClaimRecord(
            claim_id=f"gap-tail-envelope:lam={cfg.lam:g}:k={k}",
            anchor=("exp(-2z) <= P(Z_k(t) > z) <= exp(-lam*z) for lam <= 2 "
                    "(reversed for lam > 2): the gap law is sandwiched "
                    "between the two exponential equilibria"),
            statistic=worst, tolerance=0.0, passed=worst <= 0.0,
            replicas=n_rep, seeds=seeds,
            detail=f"worst at {worst_at}"))
    return VerificationReport(config=cfg, records=records)


RUNNERS = {
    "leftmost-scaling": run_leftmost_scaling,
    "density-profile": run_density_profile,
    "particle-count": run_particle_count,
    "quantile-law": run_quantile_law,
    "spacings-equilibrium": run_spacings_equilibrium,
    "domination": run_domination,
}

# frozen acceptance configurations; seed set at call time
_CRITERION = {
    "leftmost-scaling": dict(n=10_000, dt=0.05, b=0.01, replicas=50),
    "density-profile": dict(n=2_000, dt=0.05, b=0.01, replicas=50),
    "particle-count": dict(n=2_000, dt=0.05, b=0.01, replicas=50),
    "quantile-law": dict(n=2_000, dt=0.05, b=0.01, replicas=50),
    "spacings-equilibrium": dict(n=500, dt=0.002, b=1.0, replicas=60,
                                 times=(1.0, 10.0, 100.0)),
    "domination": dict(n=200, dt=0.01, b=1.0, replicas=400,
                       times=(1.0, 10.0)),
}


def criterion_config(tag: str, lam: float, seed: int = 20260814,
                     **overrides) -> ExperimentConfig:
    """The frozen verification configuration for a tag at one lambda."""
    if tag not in _CRITERION:
        raise ValueError(f"unknown experiment tag {tag!r}")
    kw = dict(_CRITERION[tag])
    kw.update(overrides)
    return ExperimentConfig(tag=tag, lam=lam, seed=seed, **kw)


def run_experiment(cfg: ExperimentConfig) -> VerificationReport:
    return RUNNERS[cfg.tag](cfg)
