"""Corrector construction: the decaying solution of the linearized profile equation.

The singular ansatz needs a correction eta solving

    eta_tt - (n-2) eta_t + 2(n-2) eta + F(t, eta) = 0,  eta = O(1/t^2),

obtained as the fixed point of an integral operator Psi built from the
variation-of-constants kernel of the left-hand side.  For 3 <= n <= 9 the
characteristic roots are (n-2)/2 +/- i sqrt((n-2)(10-n))/2, so the kernel
oscillates; for n >= 10 both roots are real and the kernel is a difference
of decaying exponentials.  Picard iteration from eta = 0 converges because
the weighted Lipschitz constant of F decays at the left endpoint T.

All forcing evaluations keep the nonlinearity in factored form built from
expm1/log1p, never forming exp(-2t + e^w) as a difference of large numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .numerics import atomic_write_text, fmt, panel_nodes, subdivide
from .towers import _h_derivative_chains


class PicardConvergenceError(RuntimeError):
    """Raised when the corrector iteration fails to contract."""


@dataclass(frozen=True)
class PsiKernel:
    """Variation-of-constants kernel data for a given dimension."""

    n: int
    mu: float | None = None            # sqrt((n-2)(10-n)), oscillatory range only
    root_pair: tuple | None = None     # real roots of s^2-(n-2)s+2(n-2), n >= 10

    @classmethod
    def for_dimension(cls, n):
        if n < 3:
            raise ValueError("dimension must be >= 3")
        disc = (n - 2) * (n - 10)
        if n <= 9:
            return cls(n=n, mu=math.sqrt((n - 2) * (10 - n)))
        d = math.sqrt(disc)
        lam_minus = 0.5 * ((n - 2) - d)
        lam_plus = 0.5 * ((n - 2) + d)
        return cls(n=n, root_pair=(lam_minus, lam_plus))

    @property
    def damping(self):
        return 0.5 * (self.n - 2)

    @property
    def freq(self):
        # the roots are (n-2)/2 +/- i mu/2, so the sine runs at half of mu
        return 0.5 * self.mu

    @property
    def tail_constant(self):
        """C with |integral tail| <= C * sup s^2|F| / t_max^2."""
        if self.mu is not None:
            return 1.0 / (self.damping * self.freq)
        return 1.0 / (2.0 * (self.n - 2))


@dataclass
class EtaSpaceConfig:
    """Numerical policy for the weighted-space fixed point solve."""

    T: float | None = None
    t_max: float | None = None
    M: float | None = None
    tol: float = 1e-11
    max_iter: int = 60
    n_nodes: int | None = None

    def resolved(self, m):
        T = self.T if self.T is not None else (30.0 if m <= 1 else 60.0)
        if T < 1.0:
            raise ValueError("T must be >= 1")
        t_max = self.t_max if self.t_max is not None else max(4.0 * T, 200.0)
        if t_max < 4.0 * T:
            raise ValueError("t_max must be >= 4*T")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.M is not None and self.M <= 0:
            raise ValueError("M must be positive")
        n_nodes = self.n_nodes or max(320, int(math.ceil(T * math.log(t_max / T) / 0.16)))
        return T, t_max, n_nodes

    def pad(self, n):
        # buffer past t_max so the truncation boundary layer (decay rate
        # (n-2)/2) sits outside the exposed window
        return 5.0 + 40.0 / (n - 2)


@dataclass
class EtaSolution:
    """Converged corrector on its grid plus convergence metadata.

    The grid extends past t_usable up to t_max so the truncation boundary
    layer of the integral operator stays out of the window handed to
    downstream consumers.
    """

    n: int
    m: int
    config: EtaSpaceConfig
    grid: np.ndarray
    eta: np.ndarray
    eta_t: np.ndarray
    iterations: int
    final_defect: float
    defects: list
    T: float
    t_max: float
    t_usable: float
    M: float
    tail_bound: float
    contraction_ratios: list = field(default_factory=list)

    @property
    def sup_weighted(self):
        return float(np.max(self.grid ** 2 * np.abs(self.eta)))


def phi_m1(n, t):
    """Ansatz shift for the plain exp(e^u) case and its first two derivatives.

    phi(t) = ln((n-2)/t) + ln(1 + ln t / (2t)), valid for t > 1.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 1.0):
        raise ValueError("phi is used for t > 1")
    lnt = np.log(t)
    phi = math.log(n - 2) - lnt + np.log1p(lnt / (2.0 * t))
    phi_t = -1.0 / t + (1.0 - lnt) / (t * (2.0 * t + lnt))
    num = (4.0 * t + 1.0 + lnt) * (2.0 * t + 2.0 * lnt - 1.0) \
        - 2.0 * (t + 1.0) * (2.0 * t + lnt)
    phi_tt = num / (t ** 2 * (2.0 * t + lnt) ** 2)
    if np.isscalar(phi) or phi.ndim == 0:
        return float(phi), float(phi_t), float(phi_tt)
    return phi, phi_t, phi_tt


def phi_m(n, m, t):
    """Ansatz shift ln(2(n-2) H'_m(2t)) for tower height m >= 2, with derivatives.

    Computed through the telescoping sum ln(2(n-2)) - sum_j ln(H_j(2t)) so no
    near-cancelling logs of products appear.
    """
    if m < 2:
        raise ValueError("phi_m is defined for m >= 2; use phi_m1 for m = 1")
    t = np.asarray(t, dtype=float)
    H, Hp, Hpp, _ = _h_derivative_chains(m, 2.0 * t)
    phi = np.full_like(H[0], math.log(2.0 * (n - 2)))
    phi_t = np.zeros_like(H[0])
    phi_tt = np.zeros_like(H[0])
    for j in range(m):
        q = Hp[j] / H[j]
        phi = phi - np.log(H[j])
        phi_t = phi_t - 2.0 * q
        phi_tt = phi_tt + 4.0 * (q * q - Hpp[j] / H[j])
    if phi.ndim == 0:
        return float(phi), float(phi_t), float(phi_tt)
    return phi, phi_t, phi_tt


class _ForcingM1:
    """Forcing F(t, eta) of the corrector equation at tower height 1.

    Precomputes the eta-independent pieces on a fixed set of t values.
    """

    def __init__(self, n, t):
        t = np.asarray(t, dtype=float)
        self.n = n
        self.t = t
        phi, phi_t, phi_tt = phi_m1(n, t)
        lnt = np.log(t)
        self.z = 2.0 * t + phi
        # e^phi in exact product form
        self.ephi = (n - 2) / t * (1.0 + lnt / (2.0 * t))
        f_t = (2.0 + phi_t) / self.z
        f_tt = phi_tt / self.z - f_t * f_t
        self.f_t = f_t
        self.F0 = self.ephi + f_tt - (n - 2) * f_t
        self.F1 = self.ephi * self.z - 2.0 * (n - 2)

    def pieces(self, eta):
        eta = np.asarray(eta, dtype=float)
        em1 = np.expm1(eta)
        F2 = self.ephi * (em1 - eta) * self.z
        X = em1 * self.z
        F3 = self.ephi * (np.expm1(X) - X)
        return self.F0, self.F1 * eta, F2, F3

    def total(self, eta):
        F0, F1eta, F2, F3 = self.pieces(eta)
        return F0 + F1eta + F2 + F3


class _ForcingM:
    """Forcing F(t, eta) for tower heights m >= 2.

    Uses the inverse-function identity G'_m(H_m(z)) = 1/H'_m(z) and the
    telescoped ratio H'_m(2t)/H'_m(z) = exp(sum_j r_j), which remove every
    cancellation-prone difference of tower values.
    """

    def __init__(self, n, m, t):
        t = np.asarray(t, dtype=float)
        self.n = n
        self.m = m
        self.t = t
        phi, phi_t, phi_tt = phi_m(n, m, t)
        self.z = 2.0 * t + phi
        H2t, _, _, _ = _h_derivative_chains(m, 2.0 * t)
        Hz, Hzp, Hzpp, _ = _h_derivative_chains(m, self.z)
        self.Hz = Hz
        self.Q = 1.0 / Hzp[m]
        self.ephi = 2.0 * (n - 2) * (1.0 / np.prod([H2t[j] for j in range(m)], axis=0))
        # expm1(sum r_j) with r_0 = log1p(phi/2t), r_{j} = log1p(r_{j-1}/H_j(2t))
        r = np.log1p(phi / (2.0 * t))
        total = np.array(r, copy=True)
        for j in range(1, m):
            r = np.log1p(r / H2t[j])
            total = total + r
        self.ratio_em1 = np.expm1(total)
        self.F1 = 2.0 * (n - 2) * self.ratio_em1
        self.F0 = (2.0 * (n - 2) * Hzp[m] * self.ratio_em1
                   - (n - 2) * phi_t * Hzp[m]
                   + Hzpp[m] * (2.0 + phi_t) ** 2
                   + Hzp[m] * phi_tt)
        self.Hzp_m = Hzp[m]
        self.phi_t = phi_t

    def _taylor_increment(self, eta):
        """D = G_m(H_m(z) + eta) - z via the level recursion; G_j(H_m(z)) = H_{m-j}(z)."""
        D = np.asarray(eta, dtype=float)
        for j in range(1, self.m + 1):
            D = self.Hz[self.m - j] * np.expm1(D)
        return D

    def rho(self, eta):
        """Quadratic Taylor remainder of G_m around H_m(z)."""
        return self._taylor_increment(eta) - self.Q * np.asarray(eta, dtype=float)

    def pieces(self, eta):
        eta = np.asarray(eta, dtype=float)
        D = self._taylor_increment(eta)
        rho = D - self.Q * eta
        F2 = self.ephi * ((np.expm1(D) - D) + rho)
        return self.F0, self.F1 * eta, F2

    def total(self, eta):
        F0, F1eta, F2 = self.pieces(eta)
        return F0 + F1eta + F2


def make_forcing(n, m, t):
    if m == 1:
        return _ForcingM1(n, t)
    if m >= 2:
        return _ForcingM(n, m, t)
    raise ValueError("forcing requires tower height >= 1")


def forcing_m1(n, t, eta):
    """F(t, eta) = F_0 + F_1 eta + F_2 + F_3 at tower height 1."""
    out = _ForcingM1(n, t).total(eta)
    return float(out) if np.ndim(out) == 0 else out


def forcing_m(n, m, t, eta):
    """F(t, eta) = F_0 + F_1 eta + F_2 at tower height m >= 2."""
    out = _ForcingM(n, m, t).total(eta)
    return float(out) if np.ndim(out) == 0 else out


def rho_remainder(n, m, t, eta):
    """Taylor remainder rho(eta) = G_m(H_m(z)+eta) - z - G'_m(H_m(z)) eta, z = 2t+phi."""
    out = _ForcingM(n, m, t).rho(eta)
    return float(out) if np.ndim(out) == 0 else out


class _QuadPlan:
    """Panelized Gauss rule on a grid with kernel factors anchored at interval left ends."""

    def __init__(self, grid, kernel):
        self.grid = np.asarray(grid, dtype=float)
        a = kernel.damping
        if kernel.mu is not None:
            h_cap = min(1.0, math.pi / (4.0 * kernel.freq), 2.0 / max(a, 0.5))
        else:
            rate = max(kernel.root_pair)
            h_cap = min(1.0, 2.0 / max(rate, 1.0))
        h_cap = min(h_cap, 2.0 / max(kernel.n - 2, 1))
        edges, owner = subdivide(self.grid, h_cap)
        self.owner = owner
        self.nodes, self.weights = panel_nodes(edges)
        self.tau = self.nodes - self.grid[owner][:, None]
        self.n_intervals = len(self.grid) - 1
        self.kernel = kernel
        decay = np.exp(-a * self.tau)
        if kernel.mu is not None:
            b = kernel.freq
            self.K = {
                "sin": decay * np.sin(b * self.tau),
                "cos": decay * np.cos(b * self.tau),
            }
        elif kernel.root_pair[0] == kernel.root_pair[1]:
            lam = kernel.root_pair[0]
            e = np.exp(-lam * self.tau)
            self.K = {"lin": -self.tau * e, "exp": e}
        else:
            lm, lp = kernel.root_pair
            self.K = {"plus": np.exp(-lp * self.tau), "minus": np.exp(-lm * self.tau)}
        self.K["gexp"] = np.exp(-(kernel.n - 2) * self.tau)

    def interval_integrals(self, name, Fq):
        vals = np.sum(self.weights * self.K[name] * Fq, axis=1)
        return np.bincount(self.owner, weights=vals, minlength=self.n_intervals)

    def apply_psi(self, Fq):
        """Psi[eta] on the grid given forcing values Fq at the quadrature nodes."""
        g = self.grid
        h = np.diff(g)
        k = self.kernel
        a = k.damping
        N = len(g)
        out = np.zeros(N)
        if k.mu is not None:
            b = k.freq
            Ps = self.interval_integrals("sin", Fq)
            Pc = self.interval_integrals("cos", Fq)
            Js = np.zeros(N)
            Jc = np.zeros(N)
            eh = np.exp(-a * h)
            ch = np.cos(b * h)
            sh = np.sin(b * h)
            for i in range(N - 2, -1, -1):
                Js[i] = Ps[i] + eh[i] * (ch[i] * Js[i + 1] + sh[i] * Jc[i + 1])
                Jc[i] = Pc[i] + eh[i] * (ch[i] * Jc[i + 1] - sh[i] * Js[i + 1])
            out = -Js / b
        elif k.root_pair[0] == k.root_pair[1]:
            lam = k.root_pair[0]
            Pl = self.interval_integrals("lin", Fq)
            Pe = self.interval_integrals("exp", Fq)
            Jl = np.zeros(N)
            Je = np.zeros(N)
            eh = np.exp(-lam * h)
            for i in range(N - 2, -1, -1):
                Je[i] = Pe[i] + eh[i] * Je[i + 1]
                Jl[i] = Pl[i] + eh[i] * (Jl[i + 1] - h[i] * Je[i + 1])
            out = Jl
        else:
            lm, lp = k.root_pair
            Pp = self.interval_integrals("plus", Fq)
            Pm = self.interval_integrals("minus", Fq)
            Jp = np.zeros(N)
            Jm = np.zeros(N)
            ehp = np.exp(-lp * h)
            ehm = np.exp(-lm * h)
            for i in range(N - 2, -1, -1):
                Jp[i] = Pp[i] + ehp[i] * Jp[i + 1]
                Jm[i] = Pm[i] + ehm[i] * Jm[i + 1]
            out = (Jp - Jm) / (lp - lm)
        return out

    def apply_gkernel(self, Gq):
        """-(integral of e^{(n-2)(t-s)} g(s) ds) on the grid: the eta_t representation."""
        c = self.kernel.n - 2
        Pg = self.interval_integrals("gexp", Gq)
        N = len(self.grid)
        J = np.zeros(N)
        eh = np.exp(-c * np.diff(self.grid))
        for i in range(N - 2, -1, -1):
            J[i] = Pg[i] + eh[i] * J[i + 1]
        return -J


def psi_apply(kernel, forcing, t, t_max, tol=None, tail_scale=None):
    """Evaluate Psi[eta](t) for a forcing map s -> F(s, eta(s)) truncated at t_max.

    `forcing` is any callable accepting an ndarray of s values.  When
    tail_scale (an estimate of sup s^2 |F|) is given, the analytic tail bound
    beyond t_max is computed and checked against tol if provided.
    """
    if t >= t_max:
        raise ValueError("need t < t_max")
    a = kernel.damping
    if kernel.mu is not None:
        h_cap = min(1.0, math.pi / (4.0 * kernel.freq), 2.0 / max(a, 0.5))
    else:
        h_cap = min(1.0, 2.0 / max(max(kernel.root_pair), 1.0))
    n_panels = max(4, int(math.ceil((t_max - t) / h_cap)))
    edges = np.linspace(t, t_max, n_panels + 1)
    nodes, weights = panel_nodes(edges)
    tau = nodes - t
    F = forcing(nodes)
    if kernel.mu is not None:
        b = kernel.freq
        val = -np.sum(weights * np.exp(-a * tau) * np.sin(b * tau) * F) / b
    elif kernel.root_pair[0] == kernel.root_pair[1]:
        lam = kernel.root_pair[0]
        val = np.sum(weights * (-tau) * np.exp(-lam * tau) * F)
    else:
        lm, lp = kernel.root_pair
        val = np.sum(weights * (np.exp(-lp * tau) - np.exp(-lm * tau)) * F) / (lp - lm)
    if tail_scale is not None:
        bound = tail_scale * kernel.tail_constant / t_max ** 2 * math.exp(-a * (t_max - t))
        if tol is not None and bound > tol:
            raise PicardConvergenceError(
                f"truncation tail bound {bound:.3e} exceeds tolerance {tol:.3e}")
    return float(val)


def _solve_on_grid(n, m, T, t_max, n_nodes, M_user, tol, max_iter):
    grid = np.geomspace(T, t_max, n_nodes)
    grid[0], grid[-1] = T, t_max
    kernel = PsiKernel.for_dimension(n)
    plan = _QuadPlan(grid, kernel)
    forcing = make_forcing(n, m, plan.nodes)
    F0_nodes = forcing.total(np.zeros_like(plan.nodes))
    M = M_user if M_user is not None else 2.0 * float(np.max(plan.nodes ** 2 * np.abs(F0_nodes)))
    eta = np.zeros_like(grid)
    defects = []
    ratios = []
    converged = False
    for it in range(1, max_iter + 1):
        if it == 1:
            Fq = F0_nodes
        else:
            eta_q = CubicSpline(grid, eta)(plan.nodes)
            Fq = forcing.total(eta_q)
        eta_new = plan.apply_psi(Fq)
        defect = float(np.max(grid ** 2 * np.abs(eta_new - eta)))
        if defects:
            ratios.append(defect / defects[-1])
        defects.append(defect)
        eta = eta_new
        if defect <= tol:
            converged = True
            break
        if len(ratios) >= 3 and min(ratios[-3:]) >= 0.995:
            break
        if defect > 50.0 * defects[0]:
            break
    if not converged:
        return None, M, defects, ratios, None, None, None
    eta_q = CubicSpline(grid, eta)(plan.nodes)
    Fq = forcing.total(eta_q)
    g_q = -2.0 * (n - 2) * eta_q - Fq
    eta_t = plan.apply_gkernel(g_q)
    sup_f = float(np.max(plan.nodes ** 2 * np.abs(Fq)))
    tail_bound = sup_f * kernel.tail_constant / t_max ** 2
    return eta, M, defects, ratios, grid, eta_t, tail_bound


def picard_solve(n, m, cfg=None):
    """Construct the corrector for dimension n and tower height m >= 1.

    Iterates eta <- Psi[eta] from eta = 0 on a geometric grid over
    [T, t_max]; if the defect sequence stalls, T is doubled (up to four
    times) and the solve restarts, mirroring the requirement that the
    contraction only holds for T large.
    """
    if n < 3:
        raise ValueError("dimension must be >= 3")
    if m < 1:
        raise ValueError("tower height must be >= 1 for the corrector")
    cfg = cfg if cfg is not None else EtaSpaceConfig()
    T, t_usable, n_nodes = cfg.resolved(m)
    pad = cfg.pad(n)
    last_defects = None
    for escalation in range(5):
        t_max = t_usable + pad
        n_solve = max(n_nodes, int(math.ceil(n_nodes * math.log(t_max / T)
                                             / math.log(t_usable / T))))
        eta, M, defects, ratios, grid, eta_t, tail_bound = _solve_on_grid(
            n, m, T, t_max, n_solve, cfg.M, cfg.tol, cfg.max_iter)
        if eta is not None:
            sup_w = float(np.max(grid ** 2 * np.abs(eta)))
            if sup_w > M:
                raise PicardConvergenceError(
                    f"converged iterate left the ball: sup t^2|eta| = {sup_w:.3e} > M = {M:.3e}")
            return EtaSolution(
                n=n, m=m, config=cfg, grid=grid, eta=eta, eta_t=eta_t,
                iterations=len(defects), final_defect=defects[-1], defects=defects,
                T=T, t_max=t_max, t_usable=t_usable, M=M, tail_bound=tail_bound,
                contraction_ratios=ratios)
        last_defects = defects
        T *= 2.0
        t_usable = max(4.0 * T, t_usable)
        n_nodes = max(320, int(math.ceil(T * math.log(t_usable / T) / 0.16)))
    raise PicardConvergenceError(
        f"no contraction after T escalation (n={n}, m={m}); defects={last_defects}")


def eta_derivative(sol, n=None, m=None):
    """Corrector derivative via its first-order integral representation.

    eta_t(t) = -integral_t^tmax e^{(n-2)(t-s)} g(s) ds with
    g = -2(n-2) eta - F(t, eta); matches the truncated fixed point exactly.
    """
    n = n if n is not None else sol.n
    m = m if m is not None else sol.m
    kernel = PsiKernel.for_dimension(n)
    plan = _QuadPlan(sol.grid, kernel)
    forcing = make_forcing(n, m, plan.nodes)
    eta_q = CubicSpline(sol.grid, sol.eta)(plan.nodes)
    g_q = -2.0 * (n - 2) * eta_q - forcing.total(eta_q)
    return plan.apply_gkernel(g_q)


def export_eta(sol, csv_path, meta_path):
    """CSV `t,eta,eta_t` plus a key=value run-metadata record."""
    lines = ["t,eta,eta_t"]
    for t, e, et in zip(sol.grid, sol.eta, sol.eta_t):
        lines.append(f"{fmt(t)},{fmt(e)},{fmt(et)}")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    meta = [
        f"n = {sol.n}",
        f"m = {sol.m}",
        f"T = {fmt(sol.T)}",
        f"t_max = {fmt(sol.t_max)}",
        f"M = {fmt(sol.M)}",
        f"tol = {fmt(sol.config.tol)}",
        f"iterations = {sol.iterations}",
        f"final_defect = {fmt(sol.final_defect)}",
        f"defects = {';'.join(fmt(d) for d in sol.defects)}",
        f"sup_weighted = {fmt(sol.sup_weighted)}",
        f"tail_bound = {fmt(sol.tail_bound)}",
    ]
    atomic_write_text(meta_path, "\n".join(meta) + "\n")
