"""Quantitative checks on stored trajectories.

Turns the structural facts about radial blowup into grid-measurable
statements: the localized-mass propagation bound (commutator estimate), the
tightness radius, Levy concentration functions and the minimal-mass ball at
the blowup point, radial histograms of |u|^2 with their Cauchy-in-time
oscillation, strong exterior convergence with its Duhamel ingredients, and
the quadratic virial envelope.

Limits t -> T^- are replaced by windows over the last resolved snapshots;
"resolved" excludes records whose concentration width has fallen below the
grid scale (see EvolutionControls.resolved_width_cells).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq

from .spectral import (
    Field,
    ModelParams,
    RadialGrid,
    SpectralField,
    coulomb_potential_density,
    homogeneous_half_sq,
    inverse_radial_transform,
    mass,
    radial_transform,
)

__all__ = [
    "Cutoff",
    "CheckRecord",
    "DiagnosticsReport",
    "InsufficientSnapshots",
    "NotTightOnGrid",
    "NegativeWeight",
    "smooth_bump",
    "smooth_exterior",
    "cutoff_bank",
    "localized_mass",
    "localized_mass_series",
    "propagation_bound_check",
    "dilation_decay_check",
    "tightness_check",
    "concentration_function",
    "origin_ball_mass",
    "minimal_concentration_check",
    "blowup_measure",
    "exterior_convergence_check",
    "virial_weight",
    "virial_check",
    "local_sobolev_report",
]


class InsufficientSnapshots(ValueError):
    pass


class NotTightOnGrid(ValueError):
    pass


class NegativeWeight(ArithmeticError):
    pass


@dataclass(frozen=True)
class Cutoff:
    """Radial cutoff 0 <= chi <= 1 with its exact gradient sup-norm."""

    kind: str
    samples: np.ndarray
    grad_inf: float
    radius: float | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.min() < -1e-12 or s.max() > 1.0 + 1e-12:
            raise ValueError("cutoff must take values in [0, 1]")
        object.__setattr__(self, "samples", s)


def smooth_bump(grid: RadialGrid, radius: float, width: float | None = None) -> Cutoff:
    """tanh step: 1 well inside radius, 0 well outside; |chi'| max = 1/(2*width)."""
    w = radius / 4.0 if width is None else width
    chi = 0.5 * (1.0 - np.tanh((grid.r - radius) / w))
    return Cutoff(kind="smooth_bump", samples=chi, grad_inf=1.0 / (2.0 * w), radius=radius)


def smooth_exterior(grid: RadialGrid, radius: float, width: float | None = None) -> Cutoff:
    """Complement of smooth_bump: 0 inside, 1 outside."""
    w = radius / 4.0 if width is None else width
    chi = 0.5 * (1.0 + np.tanh((grid.r - radius) / w))
    return Cutoff(kind="smooth_exterior", samples=chi, grad_inf=1.0 / (2.0 * w), radius=radius)


def cutoff_bank(grid: RadialGrid, radii=(2.0, 4.0, 8.0, 16.0)) -> list[Cutoff]:
    """The fixed bank: one bump and one exterior per radius, shared across runs."""
    bank = []
    for rr in radii:
        bank.append(smooth_bump(grid, rr))
        bank.append(smooth_exterior(grid, rr))
    return bank


@dataclass(frozen=True)
class CheckRecord:
    check: str
    params: dict
    statistic: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        def clean(x):
            return float(x) if np.isfinite(x) else None

        return {"check": self.check, "params": self.params,
                "statistic": clean(self.statistic), "bound": clean(self.bound),
                "pass": self.passed}


@dataclass
class DiagnosticsReport:
    records: list = dc_field(default_factory=list)
    measure_histogram: dict | None = None
    concentration_trace: list = dc_field(default_factory=list)

    def to_json(self) -> dict:
        out = {"checks": [r.to_dict() for r in self.records]}
        if self.measure_histogram is not None:
            out["measure_histogram"] = self.measure_histogram
        if self.concentration_trace:
            out["concentration_trace"] = self.concentration_trace
        return out

    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)


# --- localized mass and propagation ------------------------------------------

def localized_mass(u: Field, chi: Cutoff) -> float:
    g = u.grid
    return float(g.weight * np.sum(chi.samples * np.abs(u.values) ** 2 * g.r**2))


def localized_mass_series(traj, chi: Cutoff) -> tuple[np.ndarray, np.ndarray]:
    ts = np.array([s.t for s in traj.snapshots])
    ms = np.array([localized_mass(s.field, chi) for s in traj.snapshots])
    return ts, ms


def _max_rate(ts: np.ndarray, ms: np.ndarray) -> float:
    dt = np.diff(ts)
    keep = dt > 0
    return float(np.max(np.abs(np.diff(ms)[keep] / dt[keep])))


def propagation_bound_check(traj, chi: Cutoff, c_cal: float) -> CheckRecord:
    """Finite-difference |dM_chi/dt| against the calibrated commutator constant."""
    if len(traj.snapshots) < 3:
        raise InsufficientSnapshots("need at least 3 snapshots for a rate estimate")
    ts, ms = localized_mass_series(traj, chi)
    c_hat = _max_rate(ts, ms) / chi.grad_inf
    return CheckRecord(
        check="propagation_bound",
        params={"kind": chi.kind, "radius": chi.radius, "grad_inf": chi.grad_inf},
        statistic=c_hat, bound=c_cal, passed=bool(c_hat <= c_cal),
    )


def dilation_decay_check(traj, radii=(2.0, 4.0, 8.0, 16.0), factor: float = 2.0) -> CheckRecord:
    """Max flux through shape-dilated bumps chi_R must decay like 1/R.

    Checks that R * max|dM_{chi_R}/dt| stays within `factor` of its geometric
    mean across the dilation family.
    """
    if len(traj.snapshots) < 3:
        raise InsufficientSnapshots("need at least 3 snapshots for a rate estimate")
    q = []
    for rr in radii:
        chi = smooth_bump(traj.grid, rr)
        ts, ms = localized_mass_series(traj, chi)
        q.append(rr * _max_rate(ts, ms))
    q = np.array(q)
    gmean = float(np.exp(np.mean(np.log(q))))
    spread = float(max(q.max() / gmean, gmean / q.min()))
    return CheckRecord(
        check="dilation_decay",
        params={"radii": list(radii), "scaled_rates": [float(x) for x in q]},
        statistic=spread, bound=factor, passed=bool(spread <= factor),
    )


# --- tightness and concentration ---------------------------------------------

def tightness_check(traj, eps: float, t_from: float = 0.0) -> float:
    """Smallest grid radius R with sup over snapshots of the exterior mass <= eps.

    t_from restricts to the suffix window [t_from, T); the radius is
    nonincreasing in t_from on focusing runs.
    """
    g = traj.grid
    r2w = g.weight * g.r**2
    sup_ext = None
    for s in traj.snapshots:
        if s.t < t_from:
            continue
        rho = np.abs(s.field.values) ** 2
        ext = np.cumsum((rho * r2w)[::-1])[::-1]  # mass in r >= r_j
        sup_ext = ext if sup_ext is None else np.maximum(sup_ext, ext)
    if sup_ext is None:
        raise InsufficientSnapshots(f"no snapshots at t >= {t_from}")
    idx = np.nonzero(sup_ext <= eps)[0]
    if len(idx) == 0:
        raise NotTightOnGrid(f"no grid radius confines mass to eps={eps}")
    return float(g.r[idx[0]])


def _ball_mass_profile(u: Field, center: float, radius: float) -> float:
    """Mass of |u|^2 in the ball of given radius centered at distance `center`
    from the origin (on the symmetry axis; radial symmetry makes this general)."""
    g = u.grid
    rho = np.abs(u.values) ** 2
    r = g.r
    if center < 1e-12 * g.r_max:
        sel = r <= radius
        return float(g.weight * np.sum(rho[sel] * r[sel] ** 2))
    # fraction of the sphere of radius r_j inside the ball: cos(theta) cutoff
    cstar = (r**2 + center**2 - radius**2) / (2.0 * r * center)
    mu = 1.0 - np.clip(cstar, -1.0, 1.0)  # in [0, 2]
    return float(2.0 * np.pi * g.dr * np.sum(rho * r**2 * mu))


def origin_ball_mass(u: Field, radius: float) -> float:
    return _ball_mass_profile(u, 0.0, radius)


def concentration_function(u: Field, R: float, coarse: int = 128) -> tuple[float, float]:
    """Levy concentration: maximize the mass of the R-ball over axis centers.

    Coarse scan over [0, r_max], then a refinement pass at grid resolution
    around the best coarse center; ties break toward the origin.
    """
    g = u.grid
    if R >= g.r_max:
        return 0.0, mass(u)
    centers = np.linspace(0.0, g.r_max, coarse)
    vals = np.array([_ball_mass_profile(u, d, R) for d in centers])
    i = int(np.argmax(vals))
    step = centers[1] - centers[0]
    lo = max(0.0, centers[i] - step)
    hi = min(g.r_max, centers[i] + step)
    fine = np.arange(lo, hi + g.dr / 2, g.dr)
    fvals = np.array([_ball_mass_profile(u, d, R) for d in fine])
    j = int(np.argmax(fvals))
    return float(fine[j]), float(fvals[j])


def minimal_concentration_check(traj, gs, mass_fraction: float = 0.9,
                                n_last: int = 5, center_cells: float = 3.0) -> list[CheckRecord]:
    """Mass in the shrinking ball of radius lambda(t) = ||u||_{H^{1/2},hom}^{-1}.

    Only applicable to runs flagged as blowup (StepFloor); the liminf is
    replaced by the min over the last n_last resolved snapshots.
    """
    from .evolution import STEP_FLOOR

    if traj.termination != STEP_FLOOR:
        return [CheckRecord(check="minimal_concentration",
                            params={"applicable": False, "termination": traj.termination},
                            statistic=float("nan"), bound=mass_fraction, passed=True)]
    res = traj.resolved_snapshots()
    if len(res) < n_last:
        raise InsufficientSnapshots(f"need {n_last} resolved snapshots, have {len(res)}")
    window = res[-n_last:]
    fractions = []
    centers = []
    trace = []
    for s in window:
        lam = 1.0 / np.sqrt(homogeneous_half_sq(s.field))
        ball = origin_ball_mass(s.field, lam)
        y, best = concentration_function(s.field, lam)
        fractions.append(ball / gs.critical_mass)
        centers.append(y)
        trace.append({"t": s.t, "lambda": lam, "origin_ball_mass": ball,
                      "best_center": y, "best_value": best})
    stat = float(np.min(fractions))
    rec1 = CheckRecord(check="minimal_concentration",
                       params={"applicable": True, "lambda_rule": "inverse_hom_half_norm",
                               "trace": trace},
                       statistic=stat, bound=mass_fraction, passed=bool(stat >= mass_fraction))
    cmax = float(np.max(np.abs(centers)))
    rec2 = CheckRecord(check="concentration_center",
                       params={"centers": [float(c) for c in centers]},
                       statistic=cmax, bound=center_cells * traj.grid.dr,
                       passed=bool(cmax <= center_cells * traj.grid.dr))
    return [rec1, rec2]


# --- blowup measure -----------------------------------------------------------

def blowup_measure(traj, bins: int, cutoffs: list[Cutoff] | None = None,
                   c_cal: float | None = None, window: int = 5) -> tuple[dict, list[CheckRecord]]:
    """Radial mass histograms over time plus the Cauchy oscillation report.

    The histogram sequence is the grid approximant of the limiting measure of
    |u(t)|^2; for each bank cutoff the oscillation of M_chi over the final
    snapshot window must be controlled by the propagation constant times the
    window length.
    """
    g = traj.grid
    edges = np.linspace(0.0, g.r_max, bins + 1)
    shell = g.weight * g.r**2
    bin_idx = np.minimum((g.r / (g.r_max / bins)).astype(int), bins - 1)
    hists = []
    for s in traj.snapshots:
        rho = np.abs(s.field.values) ** 2
        h = np.zeros(bins)
        np.add.at(h, bin_idx, rho * shell)
        hists.append(h)
    histogram = {
        "bin_edges": [float(e) for e in edges],
        "times": [float(s.t) for s in traj.snapshots],
        "masses": [[float(x) for x in h] for h in hists],
    }
    records = []
    if cutoffs and c_cal is not None:
        tail = traj.snapshots[-window:]
        if len(tail) >= 2:
            span = tail[-1].t - tail[0].t
            for chi in cutoffs:
                ms = [localized_mass(s.field, chi) for s in tail]
                osc = float(np.max(ms) - np.min(ms))
                bound = c_cal * chi.grad_inf * span + 1e-6
                records.append(CheckRecord(
                    check="measure_cauchy",
                    params={"kind": chi.kind, "radius": chi.radius, "window": span},
                    statistic=osc, bound=bound, passed=bool(osc <= bound)))
    return histogram, records


# --- exterior convergence ------------------------------------------------------

def _exterior_l2(u: Field, v: Field, R: float) -> float:
    g = u.grid
    sel = g.r >= R
    d = u.values[sel] - v.values[sel]
    return float(np.sqrt(g.weight * np.sum(np.abs(d) ** 2 * g.r[sel] ** 2)))


def _zeta_exterior(grid: RadialGrid, R: float) -> np.ndarray:
    """Smooth radial cutoff vanishing for r <= R, equal to 1 for r >= 2R."""
    x = np.clip((grid.r - R) / R, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)  # C^1 smoothstep on [R, 2R]


def exterior_convergence_check(traj, R: float, params: ModelParams,
                               k_last: int = 5, final_frac: float = 0.05) -> list[CheckRecord]:
    """Cauchy property of u(t) in L2(r >= R) plus the Duhamel-term bounds.

    Reports: consecutive exterior distances over the last k resolved
    snapshots (must decrease, final below final_frac * sqrt(mass)); the
    commutator source F_R = [zeta_R, sqrt(-Delta+m^2)] u; and the potential
    term against its Newton bounds sup V_u zeta_{R/2} <= 2 mass / R and
    ||V_u u_R||_2 <= 2 mass^2 / R.
    """
    res = traj.resolved_snapshots()
    if len(res) < k_last:
        raise InsufficientSnapshots(f"need {k_last} resolved snapshots, have {len(res)}")
    window = res[-k_last:]
    g = traj.grid
    m0 = traj.initial_mass
    dists = [_exterior_l2(window[i + 1].field, window[i].field, R)
             for i in range(len(window) - 1)]
    decreasing = bool(np.all(np.diff(dists) <= 1e-14))
    final_ok = bool(dists[-1] <= final_frac * np.sqrt(m0))
    rec_cauchy = CheckRecord(
        check="exterior_cauchy",
        params={"R": R, "distances": [float(d) for d in dists]},
        statistic=float(dists[-1]), bound=final_frac * float(np.sqrt(m0)),
        passed=decreasing and final_ok)

    zeta = _zeta_exterior(g, R)
    zeta_half = _zeta_exterior(g, R / 2.0)
    k = g.frequencies
    omega = np.sqrt(k * k + params.mass**2)
    sup_vzeta = 0.0
    sup_vur = 0.0
    sup_fr = 0.0
    for s in window:
        u = s.field
        v = coulomb_potential_density(np.abs(u.values) ** 2, g)
        sup_vzeta = max(sup_vzeta, float(np.max(v * zeta_half)))
        ur = zeta * u.values
        vur = float(np.sqrt(g.weight * np.sum((v * np.abs(ur)) ** 2 * g.r**2)))
        sup_vur = max(sup_vur, vur)
        c = radial_transform(u).coefficients
        au = inverse_radial_transform(SpectralField(g, omega * c)).values
        azu = inverse_radial_transform(
            SpectralField(g, omega * radial_transform(Field(g, ur)).coefficients)).values
        fr = zeta * au - azu
        sup_fr = max(sup_fr, float(np.sqrt(g.weight * np.sum(np.abs(fr) ** 2 * g.r**2))))
    rec_pot = CheckRecord(
        check="newton_potential_sup", params={"R": R},
        statistic=sup_vzeta, bound=2.0 * m0 / R, passed=bool(sup_vzeta <= 2.0 * m0 / R))
    rec_vur = CheckRecord(
        check="duhamel_potential_term", params={"R": R, "commutator_source_l2": sup_fr},
        statistic=sup_vur, bound=2.0 * m0**2 / R, passed=bool(sup_vur <= 2.0 * m0**2 / R))
    return [rec_cauchy, rec_pot, rec_vur]


# --- virial -------------------------------------------------------------------

def _j1_zeros(count: int) -> np.ndarray:
    """First zeros of the spherical Bessel function j1 (roots of tan x = x)."""
    f = lambda x: np.sin(x) - x * np.cos(x)
    return np.array([brentq(f, i * np.pi + 1e-9, (i + 1) * np.pi - 1e-9)
                     for i in range(1, count + 1)])


_VIRIAL_CACHE: dict = {}


def _virial_basis(r_max: float, m: float, coarse_n: int, n_modes: int):
    key = (r_max, m, coarse_n, n_modes)
    if key not in _VIRIAL_CACHE:
        alphas = _j1_zeros(n_modes)
        rc = r_max * (np.arange(1, coarse_n + 1)) / coarse_n
        x = np.outer(alphas / r_max, rc)
        j1 = np.sin(x) / x**2 - np.cos(x) / x
        # ||j1(alpha r/R)||^2_{L2(r^2 dr)} = (R^3/2) j2(alpha)^2 at zeros of j1
        j2_at = (3.0 / alphas**2 - 1.0) * np.sin(alphas) / alphas - 3.0 * np.cos(alphas) / alphas**2
        norms = np.sqrt(r_max**3 / 2.0) * np.abs(j2_at)
        phi = j1 / norms[:, None]  # orthonormal modes in L2(r^2 dr), rows
        w = np.full(coarse_n, r_max / coarse_n)
        w[-1] *= 0.5  # trapezoid end correction at r = r_max
        quad = phi * (w * rc**2)[None, :]
        omegas = np.sqrt((alphas / r_max) ** 2 + m * m)
        _VIRIAL_CACHE[key] = (rc, quad, omegas)
    return _VIRIAL_CACHE[key]


def virial_weight(u: Field, params: ModelParams, coarse_n: int = 768, n_modes: int = 512) -> float:
    """Weighted norm W = sum_j <u, x_j sqrt(-Delta+m^2) x_j u>.

    For radial u the three components x_j u live in the ell = 1 sector, whose
    radial operator is diagonalized by the spherical Bessel modes j1(alpha_i
    r/R); W is assembled from that dense coarse-grid expansion (positive by
    construction).
    """
    g = u.grid
    rc, quad, omegas = _virial_basis(g.r_max, params.mass, coarse_n, n_modes)
    re = np.interp(rc, g.r, u.values.real, left=u.values.real[0], right=0.0)
    im = np.interp(rc, g.r, u.values.imag, left=u.values.imag[0], right=0.0)
    gtil = rc * (re + 1j * im)
    coeff = quad @ gtil
    return float(4.0 * np.pi * np.sum(omegas * np.abs(coeff) ** 2))


def virial_check(traj, params: ModelParams, envelope_slack: float = 0.1,
                 residual_tol: float = 0.05, coarse_n: int = 768,
                 n_modes: int = 512) -> CheckRecord:
    """Quadratic envelope W(t) <= 2 E[u0] t^2 + C1 t + C2 on a blowup run.

    Fits W over the resolved snapshots; the leading coefficient must not
    exceed 2 E[u0] by more than envelope_slack * |2 E[u0]|, and the quadratic
    fit must capture W to residual_tol (relative RMS).
    """
    res = traj.resolved_snapshots()
    if len(res) < 4:
        raise InsufficientSnapshots("need at least 4 resolved snapshots for a quadratic fit")
    ts = np.array([s.t for s in res])
    ws = np.array([virial_weight(s.field, params, coarse_n, n_modes) for s in res])
    wscale = float(np.max(np.abs(ws)))
    if np.any(ws < -1e-10 * wscale):
        raise NegativeWeight("virial weight became negative: discretization failure")
    coeffs = np.polyfit(ts, ws, 2)
    fit = np.polyval(coeffs, ts)
    residual = float(np.sqrt(np.mean((fit - ws) ** 2)) / np.sqrt(np.mean(ws**2)))
    e0 = traj.initial_energy
    bound = 2.0 * e0 + envelope_slack * abs(2.0 * e0)
    passed = bool(coeffs[0] <= bound and residual <= residual_tol)
    return CheckRecord(
        check="virial_envelope",
        params={"leading_coefficient": float(coeffs[0]), "energy": e0,
                "fit_residual": residual, "n_snapshots": len(res)},
        statistic=float(coeffs[0]), bound=float(bound), passed=passed)


def local_sobolev_report(traj, radius: float = 1.0) -> dict:
    """Local Sobolev content of the final snapshot near the origin (reported,
    never asserted: the regularity of the limit at the origin is open)."""
    u = traj.final_field
    g = traj.grid
    chi = smooth_bump(g, radius)
    windowed = Field(g, chi.samples * u.values)
    from .spectral import hs_norm

    return {"radius": radius,
            "l2_local": float(np.sqrt(localized_mass(u, chi))),
            "h_half_local": hs_norm(windowed, 0.5)}
