"""Experiment orchestration: configs, reports, truncation monitor, runners.

Criterion-scale runs live in test_acceptance; everything here uses small
replica counts and loose tolerances to exercise structure and invariants.
"""
import json
import math
import os

import numpy as np
import pytest
import scipy.stats

from atlaslab import experiments as ex
from atlaslab import measure, stefan
from atlaslab.errors import TruncationViolation


def cfg_of(tag="leftmost-scaling", **kw):
    base = dict(tag=tag, lam=2.0, n=300, dt=0.05, b=0.1, replicas=3, seed=7)
    base.update(kw)
    return ex.ExperimentConfig(**base)


class TestConfig:
    def test_s_is_inverse_square_of_b(self):
        assert cfg_of(b=0.1).s == pytest.approx(100.0)
        assert cfg_of(b=1.0).s == 1.0

    @pytest.mark.parametrize("bad", [
        dict(tag="unknown"),
        dict(lam=0.0),
        dict(lam=-1.0),
        dict(n=0),
        dict(dt=0.0),
        dict(b=0.0),
        dict(b=1.2),
        dict(replicas=0),
        dict(times=(2.0, 1.0)),
        dict(times=(-1.0, 1.0)),
        dict(x_bins=(1.0, 1.0)),
    ])
    def test_rejects_invalid_fields(self, bad):
        with pytest.raises(ValueError):
            cfg_of(**bad)

    def test_all_tags_constructible(self):
        for tag in ex.TAGS:
            assert cfg_of(tag=tag).tag == tag

    def test_canonical_round_trips(self):
        cfg = cfg_of(times=(1.0, 2.0), x_bins=(0.5, 1.5), out_dir="somewhere")
        again = ex.ExperimentConfig(**cfg.canonical())
        assert again == cfg

    def test_hash_stable_and_field_sensitive(self):
        a, b = cfg_of(), cfg_of()
        assert a.config_hash() == b.config_hash()
        assert cfg_of(seed=8).config_hash() != a.config_hash()
        assert cfg_of(lam=1.0).config_hash() != a.config_hash()
        assert cfg_of(times=(1.0,)).config_hash() != a.config_hash()


def small_report(passed=True, records=2):
    cfg = cfg_of()
    recs = [ex.ClaimRecord(claim_id=f"c{i}", anchor="statement of the limit",
                           statistic=0.01 * i, tolerance=0.05,
                           passed=passed or i == 0, replicas=3, seeds="root=7",
                           detail=f"row {i}")
            for i in range(records)]
    return ex.VerificationReport(config=cfg, records=recs)


class TestReports:
    def test_passed_aggregates(self):
        assert small_report(passed=True).passed()
        assert not small_report(passed=False).passed()
        assert ex.VerificationReport(config=cfg_of()).passed()  # vacuous

    def test_json_round_trip(self):
        rep = small_report()
        back = ex.report_from_json(ex.report_to_json(rep))
        assert back.records == rep.records
        assert back.config == rep.config
        assert back.created == rep.created

    def test_hash_excludes_timestamp(self):
        a, b = small_report(), small_report()
        assert a.created != "" and a.config_hash() == b.config_hash()

    def test_emit_json_csv_markdown(self, tmp_path):
        rep = small_report()
        paths = {fmt: ex.emit_report(rep, fmt, tmp_path)
                 for fmt in ("json", "csv", "markdown")}
        assert paths["json"].suffix == ".json"
        assert paths["csv"].suffix == ".csv"
        assert paths["markdown"].suffix == ".md"
        loaded = json.loads(paths["json"].read_text())
        assert loaded["config_hash"] == rep.config_hash()
        text = paths["csv"].read_text()
        assert text.startswith("# tag=leftmost-scaling")
        assert "claim_id,anchor,statistic" in text
        assert "| c0 |" in paths["markdown"].read_text()

    def test_emit_rejects_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            ex.emit_report(small_report(), "xml", tmp_path)

    def test_csv_and_markdown_bytes_reproducible(self, tmp_path):
        # fresh report objects differ only in the created timestamp
        p1 = ex.emit_report(small_report(), "csv", tmp_path / "a")
        p2 = ex.emit_report(small_report(), "csv", tmp_path / "b")
        assert p1.read_bytes() == p2.read_bytes()
        m1 = ex.emit_report(small_report(), "markdown", tmp_path / "a")
        m2 = ex.emit_report(small_report(), "markdown", tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()

    def test_empty_records_gives_header_only_csv(self, tmp_path):
        rep = ex.VerificationReport(config=cfg_of())
        path = ex.emit_report(rep, "csv", tmp_path)
        lines = [ln for ln in path.read_text().splitlines()
                 if not ln.startswith("#")]
        assert lines == ["claim_id,anchor,statistic,tolerance,passed,"
                         "replicas,seeds,detail"]

    def test_out_dir_precedence(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ATLASLAB_OUT", str(tmp_path / "env"))
        assert ex.resolve_out_dir(None, tmp_path / "arg") == tmp_path / "arg"
        cfg = cfg_of(out_dir=str(tmp_path / "cfg"))
        assert ex.resolve_out_dir(cfg, None) == tmp_path / "cfg"
        assert ex.resolve_out_dir(cfg_of(), None) == tmp_path / "env"
        monkeypatch.delenv("ATLASLAB_OUT")
        assert ex.resolve_out_dir(cfg_of(), None) == ex.Path(".")


class TestHelpers:
    def test_ks_matches_scipy(self):
        rng = np.random.default_rng(5)
        x = rng.exponential(0.5, size=400)
        ours = ex._ks_exponential(x, 2.0)
        ref = scipy.stats.kstest(x, lambda v: 1.0 - np.exp(-2.0 * v)).statistic
        assert ours == pytest.approx(ref, abs=1e-12)

    def test_ks_detects_wrong_rate(self):
        rng = np.random.default_rng(6)
        x = rng.exponential(1.0, size=2000)  # Exp(1) against Exp(2)
        assert ex._ks_exponential(x, 2.0) > 0.15

    def test_reference_measure_matches_flat_profile(self):
        sol = stefan.solve_kappa(2.0)
        ref = ex._reference_measure(sol, b=0.25, r_max=4.0)
        # flat density 2 on x > 0: mass q sits at x = q/2
        expect = (np.arange(ref.atoms.size) + 0.5) * 0.25 / 2.0
        np.testing.assert_allclose(ref.atoms, expect, atol=1e-9)
        assert ref.atoms.size == int(8.0 / 0.25)

    def test_reference_measure_total_mass(self):
        sol = stefan.solve_kappa(1.0)
        ref = ex._reference_measure(sol, b=0.05, r_max=6.0)
        total = stefan.integrated_profile(sol, 1.0, 6.0)
        assert ref.atoms.size * 0.05 == pytest.approx(total, abs=0.05)
        assert np.all(np.diff(ref.atoms) > 0)

    def test_required_n_front_tracking_rule(self):
        kap = abs(stefan.solve_kappa(1.0).kappa)
        want = math.ceil(1.1 * 1.0 * (kap + 10.0) * 100.0)
        assert ex.required_n(1.0, 1e4) == want
        assert ex.required_n(1.0, 4e4) > want

    def test_guard_reads_trips(self):
        with pytest.raises(TruncationViolation, match="buffer"):
            ex._guard_reads(horizon=100.0, max_read=60.0, rightmost0=100.0)
        ex._guard_reads(horizon=100.0, max_read=40.0, rightmost0=100.0)


class TestRunners:
    def test_leftmost_structure_and_determinism(self):
        cfg = cfg_of()
        rep1 = ex.run_leftmost_scaling(cfg, tolerance=0.5)
        rep2 = ex.run_leftmost_scaling(cfg, tolerance=0.5)
        (r1,), (r2,) = rep1.records, rep2.records
        assert r1.statistic == r2.statistic  # bit-exact reruns
        assert r1.claim_id == "leftmost-scaling:lam=2"
        assert "SeedSequence" in r1.seeds
        assert r1.replicas == 3
        other = ex.run_leftmost_scaling(cfg_of(seed=8), tolerance=0.5)
        assert other.records[0].statistic != r1.statistic

    def test_leftmost_undersized_n_trips_monitor(self):
        with pytest.raises(TruncationViolation):
            ex.run_leftmost_scaling(cfg_of(n=50), tolerance=0.5)

    def test_domination_record_layout(self):
        cfg = cfg_of(tag="domination", lam=4.0, n=100, dt=0.02, b=1.0,
                     replicas=30, times=(1.0, 4.0))
        rep = ex.run_domination(cfg)
        ids = [r.claim_id for r in rep.records]
        assert len(ids) == 6  # monotone + envelope per rank
        assert "gap-tail-monotone:lam=4:k=1" in ids
        assert any("increase" in r.anchor for r in rep.records)  # reversed order

    def test_domination_needs_two_times(self):
        cfg = cfg_of(tag="domination", lam=1.0, n=100, dt=0.02, b=1.0,
                     replicas=5, times=(1.0,))
        with pytest.raises(ValueError, match="two sampled times"):
            ex.run_domination(cfg)

    def test_spacings_stationary_layout(self):
        cfg = cfg_of(tag="spacings-equilibrium", lam=2.0, n=200, dt=0.01,
                     b=1.0, replicas=8, times=(1.0, 4.0))
        rep = ex.run_spacings_equilibrium(cfg, m_trend=30)
        assert len(rep.records) == 2
        crit = ex.KS_CRIT_1PCT / math.sqrt(8 * 30)
        assert all(r.tolerance == pytest.approx(crit) for r in rep.records)

    def test_spacings_relaxation_layout(self):
        cfg = cfg_of(tag="spacings-equilibrium", lam=1.0, n=200, dt=0.01,
                     b=1.0, replicas=8, times=(1.0, 4.0, 10.0))
        rep = ex.run_spacings_equilibrium(cfg, m_trend=30, m_eq=4)
        ids = [r.claim_id for r in rep.records]
        assert ids == ["gap-equilibration-trend:lam=1",
                       "gap-equilibration-final:lam=1:t=10",
                       "leading-gap-mean:lam=1"]
        # the pooled-KS trend toward equilibrium shows even at these times
        assert rep.records[0].statistic < 0.05

    def test_quantile_records_and_flat_targets(self):
        cfg = cfg_of(tag="quantile-law", lam=2.0, n=400, dt=0.05, b=0.1,
                     replicas=10, x_bins=(1.0,))
        rep = ex.run_quantile_law(cfg, tolerance=0.5, gap_tolerance=0.5)
        ids = [r.claim_id for r in rep.records]
        assert ids == ["quantile:lam=2:q=1",
                       "local-gap:lam=2:q=1:eps=0.2",
                       "local-gap:lam=2:q=1:eps=0.1"]
        assert "target=0.500000" in rep.records[0].detail

    def test_particle_count_flat_mass(self):
        cfg = cfg_of(tag="particle-count", lam=2.0, n=700, dt=0.05, b=0.1,
                     replicas=20)
        rep = ex.run_particle_count(cfg, tolerance=0.25)
        (rec,) = rep.records
        assert rec.passed  # pooled mass per cell within 25% of 2*width here
        assert "target=[1.0, 1.0, 1.0, 1.0]" in rec.detail

    def test_density_profile_dstar_sequence(self):
        cfg = cfg_of(tag="density-profile", lam=2.0, n=700, dt=0.05, b=0.05,
                     replicas=6)
        rep = ex.run_density_profile(cfg, bin_tolerance=0.3)
        assert [r.claim_id for r in rep.records] == \
            ["density-bins:lam=2:b=0.05", "density-dstar-decay:lam=2"]
        assert "dstar=" in rep.records[1].detail

    def test_dispatch_matches_direct_call(self):
        cfg = cfg_of(tag="domination", lam=1.0, n=80, dt=0.02, b=1.0,
                     replicas=10, times=(0.5, 2.0))
        via_dispatch = ex.run_experiment(cfg)
        direct = ex.run_domination(cfg)
        assert [r.statistic for r in via_dispatch.records] == \
            [r.statistic for r in direct.records]


class TestCriterionConfig:
    def test_frozen_values(self):
        cfg = ex.criterion_config("leftmost-scaling", 2.0)
        assert (cfg.n, cfg.dt, cfg.b, cfg.replicas) == (10_000, 0.05, 0.01, 50)
        assert cfg.seed == 20260814
        spa = ex.criterion_config("spacings-equilibrium", 1.0)
        assert spa.times == (1.0, 10.0, 100.0)
        assert spa.dt == 0.002

    def test_overrides_and_unknown_tag(self):
        cfg = ex.criterion_config("domination", 4.0, replicas=7)
        assert cfg.replicas == 7 and cfg.lam == 4.0
        with pytest.raises(ValueError):
            ex.criterion_config("nope", 1.0)
