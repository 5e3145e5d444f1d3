"""Particle configurations, spacings, drift specifications, initial laws.

Particles carry fixed names 0..n-1; ranks order them left to right.  Exact
position ties rank by name (the stable-sort convention), matching how the
continuum model resolves its measure-zero collisions.  All constructors
here return states whose permutations already satisfy that convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ParticleSystemState:
    """Named positions plus the ranking permutation and drift bookkeeping.

    positions[i] is particle i's coordinate; name_at_rank[k] the name of the
    k-th particle from the left; rank_of its inverse; accumulated_drift[i]
    the total drift particle i has received so far (for the one-drifting-
    particle spec this sums to gamma1 * sim_time across names, exactly).
    """

    positions: np.ndarray
    rank_of: np.ndarray
    name_at_rank: np.ndarray
    accumulated_drift: np.ndarray
    sim_time: float = 0.0

    @property
    def n(self) -> int:
        return self.positions.size

    def ranked_positions(self) -> np.ndarray:
        return self.positions[self.name_at_rank]

    def leftmost(self) -> float:
        return float(self.positions[self.name_at_rank[0]])

    def validate(self) -> None:
        """Raise if the permutation or ordering invariants are broken."""
        n = self.n
        for arr in (self.rank_of, self.name_at_rank):
            if np.sort(arr).tolist() != list(range(n)):
                raise ValueError("rank arrays are not permutations of 0..n-1")
        if not np.array_equal(self.rank_of[self.name_at_rank], np.arange(n)):
            raise ValueError("rank_of and name_at_rank are not mutual inverses")
        ranked = self.ranked_positions()
        if np.any(np.diff(ranked) < 0.0):
            raise ValueError("ranked positions are not nondecreasing")
        ties = np.flatnonzero(np.diff(ranked) == 0.0)
        if np.any(self.name_at_rank[ties] > self.name_at_rank[ties + 1]):
            raise ValueError("ties must rank in name order")
        if np.any(self.accumulated_drift < 0.0):
            raise ValueError("accumulated drift must be nonnegative")

    def copy(self) -> "ParticleSystemState":
        return ParticleSystemState(
            positions=self.positions.copy(),
            rank_of=self.rank_of.copy(),
            name_at_rank=self.name_at_rank.copy(),
            accumulated_drift=self.accumulated_drift.copy(),
            sim_time=self.sim_time,
        )


def state_from_positions(positions, sim_time: float = 0.0,
                         accumulated_drift=None) -> ParticleSystemState:
    """Build a state from named positions; stable argsort gives name-order ties."""
    positions = np.asarray(positions, dtype=float).copy()
    if positions.size < 1:
        raise ValueError("need at least one particle")
    if not np.all(np.isfinite(positions)):
        raise ValueError("positions must be finite")
    name_at_rank = np.argsort(positions, kind="stable").astype(np.int64)
    rank_of = np.empty_like(name_at_rank)
    rank_of[name_at_rank] = np.arange(positions.size)
    drift = (np.zeros(positions.size) if accumulated_drift is None
             else np.asarray(accumulated_drift, dtype=float).copy())
    return ParticleSystemState(positions=positions, rank_of=rank_of,
                               name_at_rank=name_at_rank,
                               accumulated_drift=drift, sim_time=sim_time)


@dataclass(frozen=True)
class SpacingsSequence:
    """Gaps between consecutive ranked particles, all nonnegative."""

    gaps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gaps", np.asarray(self.gaps, dtype=float))
        if np.any(self.gaps < 0.0):
            raise ValueError("spacings cannot be negative")


def spacings_of(state: ParticleSystemState) -> SpacingsSequence:
    return SpacingsSequence(gaps=np.diff(state.ranked_positions()))


def positions_from_spacings(leftmost: float, spacings: SpacingsSequence) -> np.ndarray:
    """Rebuild ranked positions as leftmost + running gap sums.

    Exact for gaps that came off an exactly-representable grid; otherwise
    accurate to a few ulps per accumulated term.
    """
    return leftmost + np.concatenate([[0.0], np.cumsum(spacings.gaps)])


@dataclass(frozen=True)
class DriftSpec:
    """Per-rank drift and diffusion coefficients, tail-padded to any n.

    The one-drifting-particle model is gamma = (g, 0, 0, ...), sigma all 1;
    gamma pads with 0 and sigma with 1 beyond the given entries.
    """

    gamma: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    sigma: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))
        object.__setattr__(self, "sigma", np.atleast_1d(np.asarray(self.sigma, dtype=float)))
        if np.any(self.sigma <= 0.0):
            raise ValueError("diffusion coefficients must be positive")

    @classmethod
    def atlas(cls, gamma: float = 1.0) -> "DriftSpec":
        """Only the leftmost particle drifts; unit diffusion everywhere."""
        return cls(gamma=np.array([gamma]), sigma=np.array([1.0]))

    @classmethod
    def driftless(cls) -> "DriftSpec":
        """No drift at any rank; the whole cloud drifts to -inf eventually."""
        return cls(gamma=np.array([0.0]), sigma=np.array([1.0]))

    def gamma_at(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        m = min(n, self.gamma.size)
        out[:m] = self.gamma[:m]
        return out

    def sigma_at(self, n: int) -> np.ndarray:
        out = np.ones(n)
        m = min(n, self.sigma.size)
        out[:m] = self.sigma[:m]
        return out

    def is_atlas_like(self) -> bool:
        """True when only rank 0 may drift and diffusion is identically 1."""
        return bool(np.all(self.gamma[1:] == 0.0) and np.all(self.sigma == 1.0))


@dataclass(frozen=True)
class InitialLaw:
    """Tagged initial distribution: Poisson cloud or product-exponential gaps.

    kind "poisson" uses intensity lam; kind "spacings" uses the rates
    sequence (tail-extended by its last entry).
    """

    kind: str
    lam: float = 1.0
    rates: tuple = ()

    def __post_init__(self):
        if self.kind not in ("poisson", "spacings"):
            raise ValueError(f"unknown initial law kind {self.kind!r}")
        if self.kind == "poisson" and self.lam <= 0.0:
            raise ValueError("intensity must be positive")
        if self.kind == "spacings" and any(r <= 0.0 for r in self.rates):
            raise ValueError("gap rates must all be positive")

    @classmethod
    def poisson(cls, lam: float) -> "InitialLaw":
        return cls(kind="poisson", lam=lam)

    @classmethod
    def spacings(cls, rates) -> "InitialLaw":
        rates = (rates,) if np.isscalar(rates) else tuple(float(r) for r in rates)
        return cls(kind="spacings", rates=rates)

    def sample(self, n: int, seed) -> ParticleSystemState:
        if self.kind == "poisson":
            return sample_ppp_half_line(self.lam, n, seed)
        return sample_spacings_law(self.rates, n, seed)


def _exponential_gaps(rng: np.random.Generator, rates: np.ndarray) -> np.ndarray:
    # inverse-CDF draw so the stream stays a plain uniform sequence
    u = rng.random(rates.size)
    return -np.log1p(-u) / rates


def sample_ppp_half_line(lam: float, n: int, seed) -> ParticleSystemState:
    """Poisson cloud of intensity lam on the half-line, leftmost pinned at 0.

    Positions are partial sums of i.i.d. Exponential(lam) gaps; this is the
    origin-anchored representation of the half-line Poisson process, so the
    leftmost particle starts exactly at 0.
    """
    if lam <= 0.0:
        raise ValueError(f"intensity must be positive, got {lam}")
    return sample_spacings_law(lam, n, seed)


def resolve_rates(rates, n: int) -> np.ndarray:
    """Expand a scalar or sequence of gap rates to length n-1, padding with the last entry."""
    if np.isscalar(rates):
        out = np.full(max(n - 1, 0), float(rates))
    else:
        given = np.asarray(rates, dtype=float)
        if given.size == 0 and n > 1:
            raise ValueError("empty rate sequence")
        out = np.empty(max(n - 1, 0))
        m = min(n - 1, given.size)
        out[:m] = given[:m]
        out[m:] = given[-1] if given.size else 1.0
    if np.any(out <= 0.0):
        raise ValueError("gap rates must all be positive")
    return out


def sample_spacings_law(rates, n: int, seed) -> ParticleSystemState:
    """Independent Exponential(rates[k]) gaps, leftmost particle at 0.

    Covers the invariant product laws: constant rate 2 is the equilibrium,
    rate lam the Poisson initial condition, and any positive rate sequence
    (for instance 2 - 2k/n, or 2 + k*a) is accepted verbatim.
    """
    if n < 1:
        raise ValueError(f"need at least one particle, got n={n}")
    rate_seq = resolve_rates(rates, n)
    rng = np.random.default_rng(seed)
    gaps = _exponential_gaps(rng, rate_seq) if n > 1 else np.empty(0)
    positions = np.concatenate([[0.0], np.cumsum(gaps)])
    return state_from_positions(positions)


def rho_n_rates(n: int) -> np.ndarray:
    """Gap rates 2 - 2k/n, k = 1..n-1, of the n-particle stationary law."""
    k = np.arange(1, n)
    return 2.0 - 2.0 * k / n


def rho_a_rates(a: float, n: int) -> np.ndarray:
    """Gap rates 2 + k*a, k = 1..n-1; a = 0 recovers the flat equilibrium."""
    k = np.arange(1, n)
    rates = 2.0 + k * a
    if np.any(rates <= 0.0):
        raise ValueError(f"rates 2 + k*a must stay positive; a={a} fails by k={n - 1}")
    return rates


def write_state_csv(state: ParticleSystemState, path) -> None:
    """Columns: name, position."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "position"])
        for name, x in enumerate(state.positions):
            writer.writerow([name, repr(float(x))])


def read_state_csv(path) -> ParticleSystemState:
    import csv

    positions = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            positions.append(float(row["position"]))
    return state_from_positions(np.array(positions))


def state_to_json(state: ParticleSystemState) -> str:
    return json.dumps({
        "sim_time": state.sim_time,
        "positions": state.positions.tolist(),
        "accumulated_drift": state.accumulated_drift.tolist(),
    })


def state_from_json(text: str) -> ParticleSystemState:
    obj = json.loads(text)
    return state_from_positions(np.array(obj["positions"], dtype=float),
                                sim_time=obj.get("sim_time", 0.0),
                                accumulated_drift=obj.get("accumulated_drift"))
