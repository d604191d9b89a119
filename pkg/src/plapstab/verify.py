"""Numerical verification of the stability identities and inequalities.

Checks, for computed or supplied fields: the deficit/remainder identity,
the stability inequality deficit >= 2^(2-p) (pi_p/diam)^p d(u, E)^p for
Lebesgue and Gaussian measures, the weighted Poincare step with its
centering root, the pointwise Picone identity, and the fundamental-gap
bounds.  Every report carries its margin and a scale-aware quadrature
tolerance tol = 1e-8 * int |grad u|^p dmu.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import cpcore
from .geometry import Field
from .spectral import first_eigenpair, grad_energy, second_eigenvalue

__all__ = [
    "StabilityReport",
    "GapReport",
    "WeightedPoincareReport",
    "PiconeResult",
    "deficit",
    "distance_to_eigenspace",
    "cp_remainder",
    "identity_check",
    "stability_check",
    "stability_battery",
    "centering_root",
    "weighted_poincare_check",
    "picone_check",
    "gap_check",
    "random_zero_trace_field",
    "write_reports_csv",
]

TOL_QUAD_FACTOR = 1e-8
U1_FLOOR_RATIO = 1e-10

_POLYGON_NOTE = (
    "euclidean polygon run: the stability inequality is established for "
    "smooth boundaries, so this probes the conjectured polygonal extension"
)


@dataclass
class StabilityReport:
    p: float
    diameter: float
    lambda1: float
    deficit: float
    distance_p: float
    c_star: float
    constant: float
    rhs: float
    margin: float
    tol_quad: float
    passed: bool
    measure: str
    note: str = ""

    def to_dict(self):
        return {
            "p": self.p,
            "diameter": self.diameter,
            "lambda1": self.lambda1,
            "deficit": self.deficit,
            "distance_p": self.distance_p,
            "c_star": self.c_star,
            "constant": self.constant,
            "rhs": self.rhs,
            "margin": self.margin,
            "tol_quad": self.tol_quad,
            "passed": self.passed,
            "measure": self.measure,
            "note": self.note,
        }


@dataclass
class GapReport:
    p: float
    diameter: float
    lambda1: float
    lambda2: float
    lambda2_is_upper_bound: bool
    C_value: float
    bound: float
    gap: float
    margin: float
    tol_quad: float
    passed: bool
    verdict: str
    measure: str

    def to_dict(self):
        return {
            "p": self.p,
            "diameter": self.diameter,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda2_is_upper_bound": self.lambda2_is_upper_bound,
            "C_value": self.C_value,
            "bound": self.bound,
            "gap": self.gap,
            "margin": self.margin,
            "tol_quad": self.tol_quad,
            "passed": self.passed,
            "verdict": self.verdict,
            "measure": self.measure,
        }


@dataclass
class WeightedPoincareReport:
    p: float
    diameter: float
    t0: float
    lhs: float
    rhs_inf: float
    bound: float
    ratio: float
    margin: float
    passed: bool
    degenerate: bool

    def to_dict(self):
        return {
            "p": self.p,
            "diameter": self.diameter,
            "t0": self.t0,
            "lhs": self.lhs,
            "rhs_inf": self.rhs_inf,
            "bound": self.bound,
            "ratio": self.ratio,
            "margin": self.margin,
            "passed": self.passed,
            "degenerate": self.degenerate,
        }


@dataclass
class PiconeResult:
    max_abs_residual: float
    scale: float
    n_samples: int
    n_skipped: int


def _quad_weights(mesh, measure):
    return mesh.quad_weights * mesh.density_at_quad(measure)


def deficit(p, u, lambda1, measure):
    """int |grad u|^p dmu - lambda1 * int |u|^p dmu."""
    w = _quad_weights(u.mesh, measure)
    return grad_energy(p, u, measure) - lambda1 * float(np.sum(w * np.abs(u.at_quad()) ** p))


def _convex_lp_min(p, W, uq, vq):
    """Minimize F(c) = sum W |uq - c vq|^p over real c.

    Golden-section bracketing followed by safeguarded Newton polish on the
    derivative; returns (F(c*), c*).  F is strictly convex and coercive for
    p > 1, so the bracket [-B, B] below always contains the minimizer.
    """

    def F(c):
        return float(np.sum(W * np.abs(uq - c * vq) ** p))

    nu = float(np.sum(W * np.abs(uq) ** p)) ** (1.0 / p)
    nv = float(np.sum(W * np.abs(vq) ** p)) ** (1.0 / p)
    if nv == 0.0:
        raise ValueError("reference function vanishes identically")
    if p == 2.0:
        c = float(np.sum(W * uq * vq) / np.sum(W * vq * vq))
        return F(c), c

    golden = (np.sqrt(5.0) - 1.0) / 2.0
    bound = 2.0 * nu / nv + 1.0
    a, b = -bound, bound
    c1 = b - golden * (b - a)
    c2 = a + golden * (b - a)
    f1, f2 = F(c1), F(c2)
    for _ in range(60):
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - golden * (b - a)
            f1 = F(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + golden * (b - a)
            f2 = F(c2)
    c = c1 if f1 < f2 else c2

    scale = p * float(np.sum(W * (np.abs(uq) + np.abs(vq)) ** (p - 1.0) * np.abs(vq)))
    scale = max(scale, 1e-300)

    def G(cc):  # F'(cc)
        d = uq - cc * vq
        ad = np.abs(d)
        t = np.zeros_like(ad)
        m = ad > 0.0
        t[m] = ad[m] ** (p - 2.0) * d[m]
        return -p * float(np.sum(W * t * vq))

    if p >= 2.0:
        # polish on the original wide bracket: the golden bracket may sit a
        # noise-width off the stationary point and trap the safeguard
        lo, hi = -bound, bound
        for _ in range(60):
            g = G(c)
            if abs(g) <= 1e-10 * scale:
                break
            if g > 0.0:
                hi = c
            else:
                lo = c
            d = uq - c * vq
            gp = p * (p - 1.0) * float(np.sum(W * np.abs(d) ** (p - 2.0) * vq * vq))
            c_new = 0.5 * (lo + hi)
            if gp > 0.0:
                newton = c - g / gp
                if lo < newton < hi:
                    c_new = newton
            c = c_new
    return F(c), c


def distance_to_eigenspace(p, u, u1, measure):
    """(inf_c int |u - c u1|^p dmu, argmin c)."""
    if p <= 1.0:
        raise ValueError(f"exponent must exceed 1, got {p}")
    W = _quad_weights(u.mesh, measure)
    return _convex_lp_min(p, W, u.at_quad(), u1.at_quad())


def cp_remainder(p, u, u1, measure, full_output=False):
    """int C_p(grad u, u1 grad(u/u1)) dmu with grad(u/u1) by the quotient rule.

    Quadrature points where u1 falls below 1e-10 * max(u1) are excluded;
    their measure fraction is reported and a boundary-layer warning fires
    above 1%.
    """
    mesh = u.mesh
    W = _quad_weights(mesh, measure)
    uq = u.at_quad()
    u1q = u1.at_quad()
    gu = u.gradients()[:, None, :]
    gu1 = u1.gradients()[:, None, :]
    floor = U1_FLOOR_RATIO * float(np.max(u1q))
    if floor <= 0.0:
        raise ValueError("u1 must be positive somewhere")
    mask = u1q > floor
    ratio = np.zeros_like(uq)
    ratio[mask] = uq[mask] / u1q[mask]
    xi = np.broadcast_to(gu, (mesh.n_elements, uq.shape[1], mesh.dim))
    eta = xi - ratio[:, :, None] * gu1
    cvals = cpcore.cp_eval_batch(p, xi, eta)
    total = float(np.sum(W))
    excluded = float(np.sum(W[~mask])) / total if total > 0 else 0.0
    if excluded > 0.01:
        warnings.warn(
            f"cp_remainder: boundary layer excluded {excluded:.2%} of the mass"
        )
    value = float(np.sum(W[mask] * cvals[mask]))
    if full_output:
        return value, excluded
    return value


def identity_check(p, u, u1, lambda1, measure):
    """Relative residual |deficit - remainder| / max(deficit, scale)."""
    d = deficit(p, u, lambda1, measure)
    r = cp_remainder(p, u, u1, measure)
    floor = 1e-6 * max(grad_energy(p, u, measure), 1e-300)
    return abs(d - r) / max(d, floor)


def tol_quad(p, u, measure):
    return TOL_QUAD_FACTOR * max(grad_energy(p, u, measure), 1e-300)


def stability_check(p, domain, mesh, u, measure, eigenpair=None, opts=None, constant_factor=1.0):
    """Full stability report for one zero-trace field.

    constant_factor is a test hook that scales the stability constant;
    leave at 1.0 for real runs.
    """
    if p < 2.0:
        raise ValueError(f"the stability inequality requires p >= 2, got {p}")
    if not u.is_zero_trace:
        raise ValueError("stability check needs a zero-trace field")
    if eigenpair is None:
        eigenpair = first_eigenpair(p, mesh, measure, opts)
        if not eigenpair.converged:
            raise RuntimeError("ground-state solve did not converge")
    d = deficit(p, u, eigenpair.lam, measure)
    dist, c_star = distance_to_eigenspace(p, u, eigenpair.field, measure)
    constant = 2.0 ** (2.0 - p) * (cpcore.pi_p(p) / domain.diameter) ** p * constant_factor
    rhs = constant * dist
    tol = tol_quad(p, u, measure)
    margin = d - rhs
    note = ""
    if domain.kind == "polygon" and measure.kind == "lebesgue":
        note = _POLYGON_NOTE
    return StabilityReport(
        p=float(p),
        diameter=domain.diameter,
        lambda1=eigenpair.lam,
        deficit=d,
        distance_p=dist,
        c_star=c_star,
        constant=constant,
        rhs=rhs,
        margin=margin,
        tol_quad=tol,
        passed=bool(margin >= -tol),
        measure=measure.kind,
        note=note,
    )


def random_zero_trace_field(mesh, rng, smoothing_passes=2):
    """Seeded interior noise with Jacobi smoothing: representative W0 fields.

    Raw uniform noise oscillates at mesh scale and inflates quadrature
    error; two neighbor-averaging passes keep the battery well resolved.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    adj = mesh.node_adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    values = rng.uniform(-1.0, 1.0, mesh.n_nodes)
    values[mesh.boundary_mask] = 0.0
    for _ in range(smoothing_passes):
        values = (values + adj @ values) / (1.0 + deg)
        values[mesh.boundary_mask] = 0.0
    return Field(mesh, values)


def stability_battery(p, domain, mesh, measure, n_fields, seed=0, eigenpair=None, opts=None, constant_factor=1.0):
    """Seeded random-field battery; returns one StabilityReport per field."""
    if eigenpair is None:
        eigenpair = first_eigenpair(p, mesh, measure, opts)
        if not eigenpair.converged:
            raise RuntimeError("ground-state solve did not converge")
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_fields):
        u = random_zero_trace_field(mesh, rng)
        reports.append(
            stability_check(
                p, domain, mesh, u, measure,
                eigenpair=eigenpair, constant_factor=constant_factor,
            )
        )
    return reports


def centering_root(p, f, weight, measure=None):
    """Root t0 of g(t) = int |f - t|^(p-2) (f - t) w, by bisection.

    g is continuous and strictly decreasing with a sign change on
    [min f, max f], so bisection cannot fail.  `weight` is a Field, an
    array shaped like the quadrature grid, or a callable on points.
    """
    mesh = f.mesh
    wq = _weight_values(mesh, weight)
    if np.min(wq) < 0.0 or np.max(wq) <= 0.0:
        raise ValueError("centering weight must be nonnegative with positive mass")
    W = mesh.quad_weights * wq
    if measure is not None:
        W = W * mesh.density_at_quad(measure)
    fq = f.at_quad()

    def g(t):
        d = fq - t
        ad = np.abs(d)
        vals = np.zeros_like(ad)
        m = ad > 0.0
        vals[m] = ad[m] ** (p - 2.0) * d[m]
        return float(np.sum(W * vals))

    lo = float(np.min(f.values))
    hi = float(np.max(f.values))
    if lo == hi:
        return lo
    span = hi - lo
    scale = float(np.sum(W)) * span ** (p - 1.0)
    t = 0.5 * (lo + hi)
    for _ in range(200):
        gt = g(t)
        if abs(gt) <= 1e-10 * scale and (hi - lo) <= 1e-12 * span + 1e-300:
            break
        if gt > 0.0:
            lo = t
        else:
            hi = t
        t = 0.5 * (lo + hi)
    return t


def _weight_values(mesh, weight):
    if isinstance(weight, Field):
        return weight.at_quad()
    if callable(weight):
        flat = mesh.quad_points.reshape(-1, mesh.dim)
        return np.asarray(weight(flat)).reshape(mesh.quad_weights.shape)
    return np.asarray(weight).reshape(mesh.quad_weights.shape)


def _check_log_concave(mesh, weight, seed=0, n_pairs=200, rel_floor=1e-3):
    """Sampled midpoint log-concavity test; raises on substantial violation."""
    can_eval = isinstance(weight, Field) or callable(weight)
    if not can_eval:
        return
    rng = np.random.default_rng(seed)
    nodes = mesh.nodes
    vals_nodes = (
        weight.values if isinstance(weight, Field) else np.asarray(weight(nodes)).ravel()
    )
    vmax = float(np.max(vals_nodes))
    ok_nodes = np.nonzero(vals_nodes > rel_floor * vmax)[0]
    if ok_nodes.size < 2:
        raise ValueError("weight is not positive on enough of the domain")
    tau = max(1e-8, 50.0 * mesh.h**2)
    violations = 0
    tested = 0
    for _ in range(n_pairs):
        i, j = rng.choice(ok_nodes, size=2, replace=False)
        mid = 0.5 * (nodes[i] + nodes[j])
        wm = float(np.asarray(weight(mid[None, :])).ravel()[0])
        if wm <= 0.0:
            violations += 1
            tested += 1
            continue
        lhs = np.log(wm)
        rhs = 0.5 * (np.log(vals_nodes[i]) + np.log(vals_nodes[j]))
        tested += 1
        if lhs < rhs - tau:
            violations += 1
    if tested and violations / tested > 0.01:
        raise ValueError(
            f"weight failed the sampled log-concavity test "
            f"({violations}/{tested} midpoints violated)"
        )


def weighted_poincare_check(p, domain, mesh, f, omega, measure=None):
    """Verify int |grad f|^p w >= (pi_p/diam)^p inf_t int |f - t|^p w.

    The field is first centered by the t0 root so the hypothesis
    int |f-t0|^(p-2)(f-t0) w = 0 of the weighted inequality holds.
    """
    _check_log_concave(mesh, omega)
    wq = _weight_values(mesh, omega)
    if np.min(wq) < 0.0 or np.max(wq) <= 0.0:
        raise ValueError("weight must be nonnegative with positive mass")
    W = mesh.quad_weights * wq
    if measure is not None:
        W = W * mesh.density_at_quad(measure)

    t0 = centering_root(p, f, omega, measure)
    shifted = Field(mesh, f.values - t0)

    g = shifted.gradients()
    gn = np.sqrt(np.sum(g * g, axis=1))
    lhs = float(np.sum(gn**p * np.sum(W, axis=1)))

    rhs_inf, _ = _convex_lp_min(p, W, shifted.at_quad(), np.ones_like(W))
    bound = (cpcore.pi_p(p) / domain.diameter) ** p
    degenerate = rhs_inf <= 1e-300
    ratio = float("nan") if degenerate else lhs / rhs_inf
    margin = lhs - bound * rhs_inf
    tol = TOL_QUAD_FACTOR * max(lhs, 1e-300)
    return WeightedPoincareReport(
        p=float(p),
        diameter=domain.diameter,
        t0=t0,
        lhs=lhs,
        rhs_inf=rhs_inf,
        bound=bound,
        ratio=ratio,
        margin=margin,
        passed=bool(margin >= -tol),
        degenerate=degenerate,
    )


def picone_check(p, u, phi, measure=None, max_samples=None, seed=0, full_output=False):
    """Max pointwise |C_p - R_p| over sampled quadrature points.

    C_p is evaluated through the C_p functional with xi = grad u and
    eta = grad u - (grad phi / phi) u; R_p expands the divergence-form side
    analytically from the P1 data.  Samples where |phi| falls below
    1e-12 * max|phi| are skipped and counted.
    """
    mesh = u.mesh
    uq = u.at_quad().ravel()
    pq = phi.at_quad().ravel()
    q = mesh.quad_weights.shape[1]
    gu = np.repeat(u.gradients(), q, axis=0)
    gp = np.repeat(phi.gradients(), q, axis=0)

    floor = 1e-12 * float(np.max(np.abs(pq)))
    keep = np.abs(pq) >= floor
    n_skipped = int(np.sum(~keep))
    uq, pq, gu, gp = uq[keep], pq[keep], gu[keep], gp[keep]
    if max_samples is not None and uq.size > max_samples:
        idx = np.random.default_rng(seed).choice(uq.size, size=max_samples, replace=False)
        uq, pq, gu, gp = uq[idx], pq[idx], gu[idx], gp[idx]

    a = (uq / pq)[:, None] * gp
    xi = gu
    eta = xi - a
    c_side = cpcore.cp_eval_batch(p, xi, eta)

    gu_n = np.sqrt(np.sum(gu * gu, axis=1))
    gp_n = np.sqrt(np.sum(gp * gp, axis=1))
    dot = np.sum(gu * gp, axis=1)
    au = np.abs(uq)
    ap = np.abs(pq)
    upow = np.zeros_like(uq)
    m = au > 0.0
    upow[m] = au[m] ** (p - 2.0) * uq[m]
    t1 = p * upow * dot / (ap ** (p - 2.0) * pq)
    t2 = (p - 1.0) * au**p * gp_n**2 / ap**p
    gppow = np.zeros_like(gp_n)
    m = gp_n > 0.0
    gppow[m] = gp_n[m] ** (p - 2.0)
    r_side = gu_n**p - gppow * (t1 - t2)

    resid = np.abs(c_side - r_side)
    a_n = np.sqrt(np.sum(a * a, axis=1))
    scale = float(np.max(gu_n**p + a_n**p + 1.0)) if resid.size else 1.0
    max_resid = float(np.max(resid)) if resid.size else 0.0
    if full_output:
        return PiconeResult(
            max_abs_residual=max_resid,
            scale=scale,
            n_samples=int(resid.size),
            n_skipped=n_skipped,
        )
    return max_resid


def gap_check(p, domain, mesh, measure, opts=None, pairs=None, constant_factor=1.0):
    """Fundamental-gap report: lambda2 - lambda1 vs the stability bound.

    For p != 2 the second eigenvalue is only an upper bound, so a passing
    verdict is labeled empirical (the bound is not falsified); a certified
    verdict needs p = 2.
    """
    if pairs is None:
        u1 = first_eigenpair(p, mesh, measure, opts)
        if not u1.converged:
            raise RuntimeError("ground-state solve did not converge")
        u2 = second_eigenvalue(p, mesh, measure, u1, opts)
    else:
        u1, u2 = pairs
    c_value, _ = distance_to_eigenspace(p, u2.field, u1.field, measure)
    bound = 2.0 ** (2.0 - p) * (cpcore.pi_p(p) / domain.diameter) ** p * c_value
    bound *= constant_factor
    gap = u2.lam - u1.lam
    tol = TOL_QUAD_FACTOR * max(abs(u2.lam), 1.0)
    margin = gap - bound
    passed = bool(margin >= -tol)
    if u2.is_upper_bound:
        verdict = "empirical" if passed else "falsified"
    else:
        verdict = "certified" if passed else "failed"
    return GapReport(
        p=float(p),
        diameter=domain.diameter,
        lambda1=u1.lam,
        lambda2=u2.lam,
        lambda2_is_upper_bound=u2.is_upper_bound,
        C_value=c_value,
        bound=bound,
        gap=gap,
        margin=margin,
        tol_quad=tol,
        passed=passed,
        verdict=verdict,
        measure=measure.kind,
    )


_CSV_COLUMNS = ["p", "diam", "lambda1", "lambda2", "deficit", "distance_p", "bound", "margin"]


def write_reports_csv(path, reports):
    """CSV rows (p, diam, lambda1, lambda2, deficit, distance_p, bound, margin)
    for plotting; stability and gap reports mix freely, absent fields stay blank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for rep in reports:
            if isinstance(rep, StabilityReport):
                row = [rep.p, rep.diameter, rep.lambda1, "", rep.deficit,
                       rep.distance_p, rep.rhs, rep.margin]
            elif isinstance(rep, GapReport):
                row = [rep.p, rep.diameter, rep.lambda1, rep.lambda2, "", "",
                       rep.bound, rep.margin]
            else:
                raise TypeError(f"cannot serialize report {type(rep)!r}")
            writer.writerow(row)
