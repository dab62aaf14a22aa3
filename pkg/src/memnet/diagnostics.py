"""Free-energy evaluation, dissipation integrals, and run monitors.

The internal energy uses the relative (Bregman) form of the logarithmic
entropy, which is nonnegative, vanishes at the reference state, and is the
quantity the scheme dissipates when the boundary data are in thermal
equilibrium; the raw ``c (log(c/ref) - 1)`` value is reported alongside.
Truncated (``k``) and regularized (``alpha``) variants of the entropy
functions are evaluated by closed-form piecewise formulas, never numerical
quadrature; the ``alpha > 0`` family exists for unit tests only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import grid


def _check_nonneg(u, name: str):
    if np.any(np.asarray(u) < 0):
        raise ValueError(f"{name} must be nonnegative")


def _phi(w, k, alpha):
    """Antiderivative of ``1 / (clamp(w) + alpha)``: log below k, linear above."""
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        lo = np.log(w + alpha)
    if k is None:
        return lo
    hi = np.log(k + alpha) + (w - k) / (k + alpha)
    return np.where(w <= k, lo, hi)


def _psi(u, k, alpha):
    """Integral of ``_phi`` from 0 to u."""
    u = np.asarray(u, dtype=float)
    base = xlogy(u + alpha, u + alpha) - u - xlogy(alpha, alpha)
    if k is None:
        return base
    psi_k = xlogy(k + alpha, k + alpha) - k - xlogy(alpha, alpha)
    above = psi_k + np.log(k + alpha) * (u - k) + (u - k) ** 2 / (2 * (k + alpha))
    return np.where(u <= k, base, above)


def entropy_primitive(u, k: float | None = None, alpha: float = 0.0):
    """Truncated entropy density; equals ``u log(u) - u`` for plain inputs."""
    _check_nonneg(u, "u")
    out = _psi(u, k, alpha) - _phi(1.0, k, alpha) * np.asarray(u, dtype=float)
    return out if np.ndim(out) else float(out)


def entropy_prime(u, k: float | None = None, alpha: float = 0.0):
    """Derivative of the entropy density (``log u`` in the plain case)."""
    _check_nonneg(u, "u")
    out = _phi(u, k, alpha) - _phi(1.0, k, alpha)
    return out if np.ndim(out) else float(out)


def entropy_bregman(u, uref, k: float | None = None, alpha: float = 0.0):
    """Relative entropy ``g(u) - g(ref) - g'(ref)(u - ref)``; nonnegative."""
    _check_nonneg(u, "u")
    _check_nonneg(uref, "uref")
    u = np.asarray(u, dtype=float)
    uref = np.asarray(uref, dtype=float)
    out = _psi(u, k, alpha) - _psi(uref, k, alpha) \
        - _phi(uref, k, alpha) * (u - uref)
    return out if np.ndim(out) else float(out)


def sqrt_primitive(u, k: float | None = None, alpha: float = 0.0):
    """Integral of ``1 / sqrt(clamp(w) + alpha)``: ``2 sqrt(u)`` below k."""
    _check_nonneg(u, "u")
    u = np.asarray(u, dtype=float)
    lo = 2.0 * (np.sqrt(u + alpha) - np.sqrt(alpha))
    if k is None:
        return lo if lo.ndim else float(lo)
    hi = 2.0 * (np.sqrt(k + alpha) - np.sqrt(alpha)) + (u - k) / np.sqrt(k + alpha)
    out = np.where(u <= k, lo, hi)
    return out if out.ndim else float(out)


def eval_energy_function(kind: str, k: float | None, alpha: float, *args):
    """Dispatch on ``g`` (entropy), ``G`` (Bregman), or ``h`` (sqrt form)."""
    if kind == "g":
        return entropy_primitive(args[0], k, alpha)
    if kind == "G":
        return entropy_bregman(args[0], args[1], k, alpha)
    if kind == "h":
        return sqrt_primitive(args[0], k, alpha)
    raise ValueError(f"unknown energy function kind {kind!r}")


@dataclass(frozen=True)
class EnergyRefs:
    """Reference fields and stationary potential for the energy evaluation.

    All reference densities are strictly positive cell fields; the vacancy
    reference is the exponential of the negated harmonic bias lift.
    """

    n_ref: np.ndarray
    p_ref: np.ndarray
    D_ref: np.ndarray
    v_stationary: np.ndarray
    vbi_trace: np.ndarray
    k: float | None = None


@dataclass(frozen=True)
class EnergyReport:
    internal: float
    electric: float
    network: float
    raw_internal: float

    @property
    def total(self) -> float:
        return self.internal + self.electric + self.network


def free_energy(mesh: grid.Mesh, state, V, vbar, refs: EnergyRefs,
                lambda2: float, y=None, network_matrix=None) -> EnergyReport:
    """Internal + electric + network free energy of one step.

    ``vbar`` is the boundary potential the field ``V`` was solved with; the
    electric part integrates the squared face gradient of the deviation
    from the stationary potential with each field's own boundary trace.
    """
    area = mesh.cell_area
    internal = 0.0
    raw = 0.0
    for c, ref, name in ((state.n, refs.n_ref, "electron reference"),
                         (state.p, refs.p_ref, "hole reference"),
                         (state.D, refs.D_ref, "vacancy reference")):
        ref = np.asarray(ref, dtype=float)
        if np.any(ref <= 0):
            raise ValueError(f"nonpositive {name} field")
        internal += float(np.sum(entropy_bregman(c, ref, refs.k)) * area)
        raw += float(np.sum(xlogy(c, c) - xlogy(c, ref) - c) * area)

    gv = grid.face_gradient(mesh, V, vbar)
    ga = grid.face_gradient(mesh, refs.v_stationary, refs.vbi_trace)
    electric = 0.5 * lambda2 * grid.face_inner(mesh, gv - ga, gv - ga)

    network = 0.0
    if y is not None and network_matrix is not None:
        y = np.asarray(y, dtype=float)
        network = 0.5 * float(y @ (network_matrix @ y))
    return EnergyReport(internal=internal, electric=electric,
                        network=network, raw_internal=raw)


def network_energy_matrix(sys) -> np.ndarray:
    """Quadratic form of the network energy: decoupling matrix minus the
    embedded terminal displacement block (counted in the electric part)."""
    st = sys.structure
    emb = np.zeros_like(sys.E1)
    emb[: st.m, : st.m] = st.S @ sys_cap(sys) @ st.S.T
    return sys.E1 - emb


def sys_cap(sys) -> np.ndarray:
    """Recover the 2x2 terminal matrix embedded in the network blocks."""
    st = sys.structure
    top = sys.E[: st.m, : st.m] - st.A_C @ np.diag(st.C) @ st.A_C.T
    return st.S.T @ top @ st.S


def dissipation(mesh: grid.Mesh, state, V) -> np.ndarray:
    """Quadratic dissipation integrals of the three species.

    Face-based quadrature over interior faces: density by arithmetic mean,
    gradients by central differences of ``sqrt(c)`` and ``V``. Entries are
    sums of squares, hence nonnegative.
    """
    interior = mesh.interior_faces
    own = mesh.face_owner[interior]
    nbr = mesh.face_neighbor[interior]
    dist = mesh.face_dist[interior]
    w = mesh.face_weight[interior]
    V = np.asarray(V, dtype=float)
    gv = (V[nbr] - V[own]) / dist
    out = np.empty(3)
    for idx, (c, sign) in enumerate(
            ((state.n, -1.0), (state.p, 1.0), (state.D, 1.0))):
        _check_nonneg(c, "density")
        sq = np.sqrt(c)
        gs = (sq[nbr] - sq[own]) / dist
        cbar = 0.5 * (c[own] + c[nbr])
        val = 2.0 * gs + sign * np.sqrt(cbar) * gv
        out[idx] = float(np.sum(w * val * val))
    return out


@dataclass(frozen=True)
class BoundsReport:
    t: float
    threshold: float
    observed_min: float
    observed_max: float
    mu: float
    m0: float

    @property
    def satisfied(self) -> bool:
        return self.observed_min >= self.threshold


class BoundsMonitor:
    """Running check of the exponential lower bound on the densities.

    The decay rate is ``2 (max_density + sup|doping|) / lambda2`` with the
    running maximum observed so far; the floor is the smaller of ``c0`` and
    the initial minimum. Violations are reported, not raised.
    """

    def __init__(self, state0, c0: float, lambda2: float, doping_sup: float):
        if c0 <= 0:
            raise ValueError("c0 must be positive")
        self.c0 = c0
        self.lambda2 = lambda2
        self.doping_sup = float(doping_sup)
        self.m0 = min(c0, state0.min())
        self.max_density = state0.max()

    def check(self, state, t: float) -> BoundsReport:
        self.max_density = max(self.max_density, state.max())
        mu = 2.0 * (self.max_density + self.doping_sup) / self.lambda2
        return BoundsReport(
            t=t,
            threshold=self.m0 * np.exp(-mu * t),
            observed_min=state.min(),
            observed_max=self.max_density,
            mu=mu,
            m0=self.m0,
        )


def bounds_monitor(state, t: float, c0: float, upper_bound_M: float,
                   lambda2: float, A_sup: float,
                   m0: float | None = None) -> BoundsReport:
    """One-shot lower-bound check with an explicit density upper bound."""
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    mu = 2.0 * (upper_bound_M + A_sup) / lambda2
    m0 = c0 if m0 is None else m0
    return BoundsReport(
        t=t,
        threshold=m0 * np.exp(-mu * t),
        observed_min=state.min(),
        observed_max=upper_bound_M,
        mu=mu,
        m0=m0,
    )


@dataclass(frozen=True)
class ConservationReport:
    """Worst-case conservation and balance residuals over a run."""

    max_D_drift: float
    max_D_step_drift: float
    max_n_balance: float
    max_p_balance: float
    max_charge_imbalance: float


def conservation_report(dt: float, masses: np.ndarray,
                        boundary_fluxes: np.ndarray,
                        terminal_currents: np.ndarray,
                        initial_masses) -> ConservationReport:
    """Evaluate conservation identities over recorded steps.

    ``masses`` is (steps, 3) for (n, p, D); ``boundary_fluxes`` is
    (steps, 2) with the net outward div-form face flux of electrons and
    holes for each step; ``terminal_currents`` is (steps, 2).
    """
    masses = np.asarray(masses, dtype=float)
    if masses.shape[0] < 1:
        raise ValueError("need at least one recorded step")
    m0 = np.asarray(initial_masses, dtype=float)
    prev = np.vstack([m0, masses[:-1]])
    deltas = masses - prev

    d_ref = m0[2] if m0[2] != 0 else 1.0
    d_drift = np.abs(masses[:, 2] - m0[2]) / abs(d_ref)
    d_step = np.abs(deltas[:, 2]) / abs(d_ref)

    flux = np.asarray(boundary_fluxes, dtype=float)
    bal_n = np.abs(deltas[:, 0] - dt * flux[:, 0]) / np.maximum(
        1.0, np.abs(masses[:, 0]))
    bal_p = np.abs(deltas[:, 1] - dt * flux[:, 1]) / np.maximum(
        1.0, np.abs(masses[:, 1]))

    i_d = np.asarray(terminal_currents, dtype=float)
    imbalance = np.abs(i_d[:, 0] + i_d[:, 1]) / np.maximum(
        1.0, np.abs(i_d[:, 0]))
    return ConservationReport(
        max_D_drift=float(d_drift.max()),
        max_D_step_drift=float(d_step.max()),
        max_n_balance=float(bal_n.max()),
        max_p_balance=float(bal_p.max()),
        max_charge_imbalance=float(imbalance.max()),
    )
