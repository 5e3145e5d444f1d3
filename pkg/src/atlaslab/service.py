"""HTTP facade over the library: analytic profile, FD solver, simulator,
and the verification experiments.

The CLI talks to this app in-process by default (no socket), so every
user-facing operation flows through one validated interface.  Core
ValueErrors surface as 400; runs invalidated mid-flight (truncation
breach, numerical blow-up) surface as 422 with the diagnostic message.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__, dynamics, experiments, fd, model, stefan
from .errors import InstabilityError, TruncationViolation
from . import schemas as sc

app = FastAPI(title="atlaslab", version=__version__)


@app.exception_handler(ValueError)
async def _bad_request(request: Request, exc: ValueError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(TruncationViolation)
async def _truncated(request: Request, exc: TruncationViolation):
    return JSONResponse(
        status_code=422,
        content={"detail": str(exc), "error": "truncation"})


@app.exception_handler(InstabilityError)
async def _unstable(request: Request, exc: InstabilityError):
    return JSONResponse(
        status_code=422,
        content={"detail": str(exc), "error": "instability"})


@app.get("/health", response_model=sc.HealthResponse)
def health() -> sc.HealthResponse:
    return sc.HealthResponse(status="ok", version=__version__)


@app.post("/stefan", response_model=sc.StefanResponse)
def stefan_tables(req: sc.StefanRequest) -> sc.StefanResponse:
    rows = []
    profiles: dict[str, list[float]] = {}
    xs = np.asarray(req.xs, dtype=float)
    for lam in req.lams:
        sol = stefan.solve_kappa(lam)
        rows.append(sc.StefanRow(
            lam=lam, kappa=sol.kappa, c1=sol.c1, c2=sol.c2,
            front=stefan.y_star(sol, req.t)))
        if xs.size:
            profiles[f"{lam:g}"] = np.asarray(
                stefan.u_star(sol, req.t, xs), dtype=float).tolist()
    return sc.StefanResponse(t=req.t, rows=rows, profiles=profiles)


@app.post("/fd/solve", response_model=sc.FdSolveResponse)
def fd_solve(req: sc.FdSolveRequest) -> sc.FdSolveResponse:
    state, history = fd.fd_solve(
        req.lam, t_end=req.t_end, dxi=req.dxi, L=req.domain_length,
        n_checkpoints=req.n_checkpoints, dt_factor=req.dt_factor,
        t0=req.t0, scheme=req.scheme)
    out = sc.FdSolveResponse(
        lam=req.lam, kappa_boot=state.kappa_boot, y_final=state.y,
        t_final=state.t, front_speed=state.front_speed(),
        gradient_at_front=state.gradient_at_front(),
        excess_mass=state.excess_mass(),
        envelope_excess=state.envelope_excess,
        history_times=history.times.tolist(),
        history_y=history.y.tolist())
    if req.include_profile:
        profile = fd.fd_profile(state)
        centers = 0.5 * (profile.bin_edges[:-1] + profile.bin_edges[1:])
        out.profile_x = centers.tolist()
        out.profile_u = profile.bin_density.tolist()
    return out


@app.post("/simulate", response_model=sc.SimulateResponse)
def simulate(req: sc.SimulateRequest) -> sc.SimulateResponse:
    init_seed = np.random.SeedSequence([req.seed, 0])
    if req.init == "poisson":
        state = model.sample_ppp_half_line(req.lam, req.n, init_seed)
    else:
        rates = req.rates if req.rates else [req.lam]
        state = model.sample_spacings_law(rates, req.n, init_seed)
    drift = model.DriftSpec(gamma=tuple(req.gamma))
    cfg = dynamics.StepConfig(dt=req.dt, engine=req.engine)
    noise = dynamics.NoiseSource(np.random.SeedSequence([req.seed, 1]), req.n)
    recorder = None
    if req.sample_times or req.quantiles:
        recorder = dynamics.TrajectoryRecorder(
            sample_times=np.asarray(req.sample_times or [req.horizon]),
            quantile_fractions=tuple(req.quantiles))
    final, recorder = dynamics.run(state, drift, cfg, req.horizon,
                                   noise, recorder)
    resp = sc.SimulateResponse(
        n=final.n, sim_time=final.sim_time, leftmost=final.leftmost(),
        drift_total=float(final.accumulated_drift.sum()),
        trajectory_times=list(recorder.times) if recorder else [],
        trajectory_leftmost=list(recorder.leftmost) if recorder else [],
        trajectory_quantiles=[q.tolist() for q in recorder.quantiles]
        if recorder else [],
        quantile_fractions=list(req.quantiles))
    if req.include_state:
        resp.positions = final.ranked_positions().tolist()
    return resp


@app.post("/verify", response_model=sc.ReportModel)
def verify(req: sc.VerifyRequest) -> sc.ReportModel:
    cfg = experiments.criterion_config(req.tag, req.lam, seed=req.seed,
                                       **req.overrides())
    report = experiments.run_experiment(cfg)
    return sc.ReportModel(**report.to_dict())


@app.post("/report", response_model=sc.RenderResponse)
def render_report(req: sc.RenderRequest) -> sc.RenderResponse:
    cfg_raw = dict(req.report.config)
    cfg_raw["times"] = tuple(cfg_raw.get("times", ()))
    cfg_raw["x_bins"] = tuple(cfg_raw.get("x_bins", ()))
    report = experiments.VerificationReport(
        config=experiments.ExperimentConfig(**cfg_raw),
        records=[experiments.ClaimRecord(**r.model_dump())
                 for r in req.report.records],
        created=req.report.created)
    path = experiments.emit_report(report, req.fmt, req.out_dir)
    return sc.RenderResponse(path=str(path), content=path.read_text())
