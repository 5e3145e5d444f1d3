"""atlaslab: rank-based Brownian particle lab.

Simulates the Atlas model (only the leftmost particle drifts), evaluates
the closed-form square-root free-boundary density profile it converges to
under diffusive rescaling, cross-checks that profile with an independent
moving-boundary finite-difference solver, and verifies the convergence
claims by seeded Monte Carlo experiments.
"""

__version__ = "0.1.0"
