"""Assembly of the singular solution: ansatz plus corrector, then downward integration.

The profile equation in log variables is

    w_tt - (n-2) w_t + exp(-2t + G_m(w)) = 0,

with w > 0 to the right of its zero crossing t_star and lambda_star =
exp(-2 t_star).  The corrector solve supplies (w, w_t) deep in the tail;
an adaptive Runge-Kutta descent locates the crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .corrector import EtaSolution, EtaSpaceConfig, phi_m1, phi_m, picard_solve
from .numerics import differentiate
from .towers import MAX_EXP_ARG, _h_derivative_chains, g_tower
from .transform import LogProfile


class DescentError(RuntimeError):
    """Downward integration failed to produce a zero crossing."""


@dataclass
class SingularSolution:
    """Constructed singular solution (lambda_star, profile) with its corrector."""

    n: int
    m: int
    t_star: float
    lambda_star: float
    profile: LogProfile
    eta: EtaSolution | None
    handoff_t: float
    monotone: bool

    def u_star(self, r):
        """Boundary-normalized solution u*(r) = w*(t_star - ln r) on (0, 1]."""
        r = np.asarray(r, dtype=float)
        return self.profile.eval_w(self.t_star - np.log(r))

    def eval_w_dense(self, t):
        """w*(t) with the closed-form ansatz evaluated exactly above the handoff.

        Interpolation error then only enters through the corrector, which is
        orders of magnitude smaller than the profile itself; below the
        handoff the densely sampled descent profile is queried instead.
        """
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t).astype(float)
        out = np.empty_like(t)
        hi = (t >= self.handoff_t) & (t <= self.eta.grid[-1]) if self.eta is not None \
            else np.zeros(t.shape, dtype=bool)
        if np.any(hi):
            if not hasattr(self, "_eta_interp"):
                self._eta_interp = PchipInterpolator(self.eta.grid, self.eta.eta,
                                                     extrapolate=False)
            f, _ = ansatz_terms(self.n, self.m, t[hi])
            out[hi] = f + self._eta_interp(t[hi])
        if np.any(~hi):
            out[~hi] = self.profile.eval_w(t[~hi])
        return float(out[0]) if scalar else out


def log_force(n, m, t, w):
    """exp(G_m(w) - 2t) with the exponent formed before exponentiation."""
    expo = g_tower(m, w) - 2.0 * np.asarray(t, dtype=float)
    out = np.where(expo > -745.0, np.exp(np.minimum(expo, MAX_EXP_ARG)), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _zero_eta(n, m, T, t_max):
    grid = np.geomspace(T, t_max, 400)
    z = np.zeros_like(grid)
    return EtaSolution(n=n, m=m, config=EtaSpaceConfig(T=T, t_max=t_max),
                       grid=grid, eta=z, eta_t=z.copy(), iterations=0,
                       final_defect=0.0, defects=[0.0], T=T, t_max=t_max,
                       t_usable=t_max, M=1.0, tail_bound=0.0)


def ansatz_terms(n, m, t):
    """(f, f_t) of the pure ansatz at tower height m.

    m = 0 is the plain-exponential oracle with the exact line
    2t + ln(2(n-2)); m = 1 uses ln(2t + phi); m >= 2 uses H_m(2t + phi)
    with f_t = H'_m(2t + phi)(2 + phi_t).
    """
    t = np.asarray(t, dtype=float)
    if m == 0:
        return 2.0 * t + math.log(2.0 * (n - 2)), np.full_like(t, 2.0)
    if m == 1:
        phi, phi_t, _ = phi_m1(n, t)
        z = 2.0 * t + phi
        return np.log(z), (2.0 + phi_t) / z
    phi, phi_t, _ = phi_m(n, m, t)
    z = 2.0 * t + phi
    H, Hp, _, _ = _h_derivative_chains(m, z)
    return H[m], Hp[m] * (2.0 + phi_t)


def assemble_w(n, m, eta_sol):
    """Profile w = ansatz + corrector on the corrector grid."""
    sel = eta_sol.grid <= eta_sol.t_usable
    t = eta_sol.grid[sel]
    f, f_t = ansatz_terms(n, m, t)
    return LogProfile(t, f + eta_sol.eta[sel], f_t + eta_sol.eta_t[sel])


def integrate_down(profile, n, m, t_floor=-10.0, rtol=1e-12, atol=1e-14,
                   handoff_offset=5.0, sample_step=0.01):
    """Integrate the profile equation downward to the first zero of w.

    Starts at the first profile node past t_min + handoff_offset (interior of
    the corrector's validity range) and returns (t_star, extended profile)
    where the extension carries integrator samples below the handoff and the
    original samples above it.
    """
    t_hand_target = profile.t_min + handoff_offset
    idx = int(np.searchsorted(profile.t, t_hand_target))
    if idx >= len(profile.t):
        raise ValueError("profile too short for the requested handoff")
    t_hand = float(profile.t[idx])
    y0 = [float(profile.w[idx]), float(profile.w_t[idx])]

    def rhs(t, y):
        return [y[1], (n - 2) * y[1] - log_force(n, m, t, y[0])]

    def crossing(t, y):
        return y[0]
    crossing.terminal = True

    sol = solve_ivp(rhs, (t_hand, t_floor), y0, method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=crossing)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise DescentError(
            f"no zero crossing above t = {t_floor}; corrector inconsistent? ({sol.message})")
    t_event = float(sol.t_events[0][0])
    # Brent polish on the dense output around the located event
    span = max(1e-6, 1e-3 * abs(t_hand - t_event))
    lo, hi = t_event - span, t_event + span
    wfun = lambda t: float(sol.sol(t)[0])
    if wfun(lo) * wfun(hi) < 0:
        t_star = brentq(wfun, lo, hi, xtol=1e-13, rtol=8.9e-16)
    else:
        t_star = t_event

    ts = np.arange(t_star, t_hand, sample_step)
    ts[0] = t_star
    states = sol.sol(ts)
    keep = profile.t > t_hand + 1e-12
    t_all = np.concatenate([ts, [t_hand], profile.t[keep]])
    w_all = np.concatenate([states[0], [y0[0]], profile.w[keep]])
    wt_all = np.concatenate([states[1], [y0[1]], profile.w_t[keep]])
    # enforce exact zero at the located crossing
    w_all[0] = 0.0
    extended = LogProfile(t_all, w_all, wt_all)
    return t_star, extended


def build_singular(n, m, cfg=None):
    """Full pipeline: corrector solve, ansatz assembly, downward descent.

    m = 0 selects the plain-exponential oracle nonlinearity, for which the
    ansatz is exact and the corrector vanishes identically.
    """
    if n < 3:
        raise ValueError("dimension must be >= 3")
    if m < 0:
        raise ValueError("tower height must be >= 0")
    cfg = cfg if cfg is not None else EtaSpaceConfig()
    if m == 0:
        T, t_max, _ = cfg.resolved(1)
        eta_sol = _zero_eta(n, 0, T, t_max)
    else:
        eta_sol = picard_solve(n, m, cfg)
    prof = assemble_w(n, m, eta_sol)
    t_star, extended = integrate_down(prof, n, m)
    lam = math.exp(-2.0 * t_star)
    monotone = bool(np.all(extended.w_t[extended.t > t_star + 1e-9] > 0.0))
    return SingularSolution(n=n, m=m, t_star=t_star, lambda_star=lam,
                            profile=extended, eta=eta_sol,
                            handoff_t=prof.t_min + 5.0, monotone=monotone)


def ode_residual(profile, n, m):
    """Max relative defect of the profile equation over the sampled profile.

    w_tt is re-derived from the carried w_t samples by sliding finite
    difference stencils, so the measurement is independent of the equation
    being checked; the defect is normalized pointwise by the largest term.
    """
    t, w, w_t = profile.t, profile.w, profile.w_t
    w_tt = differentiate(t, w_t, order=1, stencil=7)
    force = log_force(n, m, t, w)
    res = w_tt - (n - 2) * w_t + force
    scale = np.maximum.reduce([np.abs(w_tt), (n - 2) * np.abs(w_t),
                               np.abs(force)])
    scale = np.maximum(scale, 1e-300)
    return float(np.max(np.abs(res) / scale))
