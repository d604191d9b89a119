"""First and second Dirichlet eigenpairs of the (Gaussian) p-Laplacian.

The ground state is computed by minimizing the Rayleigh quotient
int |grad u|^p dmu / int |u|^p dmu over zero-trace P1 fields with a
lagged-diffusivity fixed point: each outer step solves a linear system
whose element weights freeze (|grad u|^2 + eps^2)^((p-2)/2), takes the
p-power mass load of the current iterate, renormalizes, and shrinks eps.
The second eigenvalue uses inverse iteration deflated against the ground
state for p = 2 and a hyperplane-cut two-nodal-domain estimator (a
certified upper bound) otherwise.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, spsolve

from .geometry import Field, submesh

__all__ = [
    "SolverOptions",
    "EigenPair",
    "rayleigh_quotient",
    "lp_norm",
    "grad_energy",
    "first_eigenpair",
    "second_eigenvalue",
    "weighted_stiffness",
    "weighted_mass",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SolverOptions:
    """Knobs for the fixed-point solver; defaults are desk-scale sane."""

    eps_initial: float = 1e-2
    eps_floor: float = 1e-8
    eps_decay: float = 0.5
    max_outer: int = 200
    stagnation_tol: float = 1e-9
    cg_tol: float = 1e-10
    seed: int = 0
    n_directions: int = 32
    n_offsets: int = 64
    sweep_refine_rounds: int = 3

    def __post_init__(self):
        if not (0.0 < self.eps_floor <= self.eps_initial):
            raise ValueError("need 0 < eps_floor <= eps_initial")
        if not (0.0 < self.eps_decay < 1.0):
            raise ValueError("eps schedule must be strictly decreasing")
        if self.stagnation_tol <= 0.0 or self.cg_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.eps_floor < 1e-10:
            raise ValueError("eps floor below 1e-10 makes the inner systems singular")

    def eps(self, k):
        return max(self.eps_floor, self.eps_initial * self.eps_decay**k)


@dataclass
class EigenPair:
    """Eigenvalue with its normalized eigenfunction and solve diagnostics."""

    lam: float
    field: Field
    residual_history: list
    iterations: int
    normalized: bool
    converged: bool
    estimator: str = "ground"
    is_upper_bound: bool = False

    def to_json_dict(self, mesh_file=None):
        return {
            "lambda": float(self.lam),
            "iterations": int(self.iterations),
            "residual_history": [float(r) for r in self.residual_history],
            "normalized": bool(self.normalized),
            "converged": bool(self.converged),
            "estimator": self.estimator,
            "lambda2_is_upper_bound": bool(self.is_upper_bound),
            "nodal_values": {
                "mesh_file": mesh_file,
                "values": [float(v) for v in self.field.values],
            },
        }


def lp_norm(field, p, measure):
    w = field.mesh.quad_weights * field.mesh.density_at_quad(measure)
    return float(np.sum(w * np.abs(field.at_quad()) ** p)) ** (1.0 / p)


def grad_energy(p, field, measure):
    """int |grad u|^p dmeasure (exact per element: P1 gradients are constant)."""
    g = field.gradients()
    gn = np.sqrt(np.sum(g * g, axis=1))
    de = field.mesh.element_density_integrals(measure)
    return float(np.sum(gn**p * de))


def rayleigh_quotient(p, field, measure):
    """int |grad u|^p dmu / int |u|^p dmu."""
    if p <= 1.0:
        raise ValueError(f"exponent must exceed 1, got {p}")
    mesh = field.mesh
    w = mesh.quad_weights * mesh.density_at_quad(measure)
    den = float(np.sum(w * np.abs(field.at_quad()) ** p))
    if den <= 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    return grad_energy(p, field, measure) / den


def weighted_stiffness(mesh, measure, elem_weights=None):
    """Assemble sum_e w_e int_e density grad phi_i . grad phi_j."""
    de = mesh.element_density_integrals(measure)
    w = de if elem_weights is None else de * elem_weights
    data = mesh.grad_gram * w[:, None, None]
    k = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    n = mesh.n_nodes
    return sparse.coo_matrix((data.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def weighted_mass(mesh, measure):
    """Assemble int density phi_i phi_j by element quadrature."""
    wq = mesh.quad_weights * mesh.density_at_quad(measure)
    data = np.einsum("mq,qi,qj->mij", wq, mesh.basis, mesh.basis)
    k = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    n = mesh.n_nodes
    return sparse.coo_matrix((data.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _power_load(mesh, measure, values, p):
    """Load vector b_i = int density |u|^(p-2) u phi_i."""
    uq = mesh.values_at_quad(values)
    # |u|^(p-2) u -> 0 as u -> 0 for every p > 1; guard the p < 2 exponent
    pw = np.zeros_like(uq)
    m = uq != 0.0
    pw[m] = np.abs(uq[m]) ** (p - 2.0) * uq[m]
    s = mesh.quad_weights * mesh.density_at_quad(measure) * pw
    local = np.einsum("mq,qk->mk", s, mesh.basis)
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.elements, local)
    return b


def _solve_interior(A, b, interior, x0=None, tol=1e-10):
    Ai = A[interior][:, interior]
    bi = b[interior]
    diag = Ai.diagonal()
    M = sparse.diags(1.0 / np.where(diag > 0, diag, 1.0))
    x0i = x0[interior] if x0 is not None else None
    scale = float(np.linalg.norm(bi))
    xi, info = cg(Ai, bi, x0=x0i, rtol=tol, atol=tol * scale, M=M)
    if info != 0:
        xi = spsolve(Ai.tocsc(), bi)
    x = np.zeros(A.shape[0])
    x[interior] = xi
    return x


def _distance_to_boundary(mesh):
    """Nodal distance-to-boundary: positive inside, zero on the boundary."""
    nodes = mesh.nodes
    if mesh.dim == 1:
        x = nodes[:, 0]
        bx = x[mesh.boundary_mask]
        return np.minimum.reduce([np.abs(x - b) for b in bx])
    # for convex polygons the distance is the min over boundary-edge lines
    bnodes = np.nonzero(mesh.boundary_mask)[0]
    bset = set(bnodes.tolist())
    edges = {}
    for tri in mesh.elements:
        for i in range(3):
            a, b = tri[i], tri[(i + 1) % 3]
            key = (a, b) if a < b else (b, a)
            edges[key] = edges.get(key, 0) + 1
    d = np.full(mesh.n_nodes, np.inf)
    for (a, b), count in edges.items():
        if count != 1 or a not in bset or b not in bset:
            continue
        pa, pb = nodes[a], nodes[b]
        e = pb - pa
        dn = nodes - pa
        cross = np.abs(e[0] * dn[:, 1] - e[1] * dn[:, 0]) / np.hypot(*e)
        d = np.minimum(d, cross)
    d[mesh.boundary_mask] = 0.0
    return d


def _normalize(mesh, values, p, measure):
    f = Field(mesh, values)
    nrm = lp_norm(f, p, measure)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero field")
    return values / nrm


def _line_search(mesh, u, v, p, measure, r_u):
    """Golden-section fallback along the segment u -> v when the fixed-point
    step fails to decrease the Rayleigh quotient."""

    def ray(theta):
        w = u + theta * (v - u)
        if np.max(np.abs(w)) == 0.0:
            return np.inf
        return rayleigh_quotient(p, Field(mesh, w), measure)

    a, b = 0.0, 1.0
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = ray(c), ray(d)
    for _ in range(40):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = ray(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = ray(d)
    theta = c if fc < fd else d
    best = min(fc, fd)
    if best >= r_u:
        return u, r_u
    return u + theta * (v - u), best


def first_eigenpair(p, mesh, measure, opts=None):
    """Ground state of the Dirichlet (Gaussian) p-Laplacian on the mesh.

    Returns an EigenPair with a monotone non-increasing Rayleigh history;
    non-convergence is reported through EigenPair.converged, not raised.
    """
    if p <= 1.0:
        raise ValueError(f"exponent must exceed 1, got {p}")
    opts = opts or SolverOptions()
    interior = mesh.interior
    if not np.any(interior):
        raise ValueError("mesh has no interior nodes")

    u = _distance_to_boundary(mesh)
    u = _normalize(mesh, u, p, measure)
    r = rayleigh_quotient(p, Field(mesh, u), measure)
    history = [r]
    converged = False
    stagnant = 0
    it = 0
    for it in range(1, opts.max_outer + 1):
        eps = opts.eps(it - 1)
        if p == 2.0:
            # the diffusivity weight is identically 1; no schedule to ramp
            w = None
            at_floor = True
        else:
            g = mesh.gradients(u)
            gn2 = np.sum(g * g, axis=1)
            w = (gn2 + eps * eps) ** (0.5 * (p - 2.0))
            at_floor = eps <= opts.eps_floor * (1.0 + 1e-12)
        A = weighted_stiffness(mesh, measure, w)
        b = _power_load(mesh, measure, u, p)
        v = _solve_interior(A, b, interior, x0=u, tol=opts.cg_tol)
        v = _normalize(mesh, v, p, measure)
        r_new = rayleigh_quotient(p, Field(mesh, v), measure)
        if r_new > r:
            v, r_new = _line_search(mesh, u, v, p, measure, r)
            v = _normalize(mesh, v, p, measure)
        drop = r - r_new
        u, r = v, r_new
        history.append(r)
        if at_floor and abs(drop) <= opts.stagnation_tol * max(1.0, r):
            stagnant += 1
            if stagnant >= 2:
                converged = True
                break
        else:
            stagnant = 0

    if np.sum(u) < 0.0:
        u = -u
    pair = EigenPair(
        lam=r,
        field=Field(mesh, u),
        residual_history=history,
        iterations=it,
        normalized=True,
        converged=converged,
        estimator="ground",
    )
    if not converged:
        warnings.warn(
            f"first_eigenpair did not stagnate within {opts.max_outer} outer "
            f"iterations (last Rayleigh drop {history[-2] - history[-1]:.3e})"
        )
    return pair


def _deflated_second(p, mesh, measure, u1, opts):
    """Inverse iteration in the complement of span(u1), p = 2 only."""
    interior = mesh.interior
    A = weighted_stiffness(mesh, measure)
    M = weighted_mass(mesh, measure)
    Ai = A[interior][:, interior]
    Mi = M[interior][:, interior]
    u1i = u1.values[interior]
    Mu1 = Mi @ u1i
    denom = float(u1i @ Mu1)

    rng = np.random.default_rng(opts.seed)
    v = rng.uniform(-1.0, 1.0, u1i.shape[0])

    def project(x):
        return x - (float(x @ Mu1) / denom) * u1i

    def m_normalize(x):
        return x / np.sqrt(float(x @ (Mi @ x)))

    v = m_normalize(project(v))
    diag = Ai.diagonal()
    precond = sparse.diags(1.0 / np.where(diag > 0, diag, 1.0))
    r_prev = np.inf
    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_outer + 1):
        rhs = Mi @ v
        x, info = cg(Ai, rhs, x0=v, rtol=opts.cg_tol, atol=opts.cg_tol * float(np.linalg.norm(rhs)), M=precond)
        if info != 0:
            x = spsolve(Ai.tocsc(), rhs)
        x = m_normalize(project(x))
        r = float(x @ (Ai @ x))
        history.append(r)
        if abs(r_prev - r) <= opts.stagnation_tol * max(1.0, r):
            v = x
            converged = True
            break
        v, r_prev = x, r
    v = m_normalize(project(v))
    values = np.zeros(mesh.n_nodes)
    values[interior] = v
    values = _normalize(mesh, values, p, measure)
    lam = rayleigh_quotient(p, Field(mesh, values), measure)
    return EigenPair(
        lam=lam,
        field=Field(mesh, values),
        residual_history=history,
        iterations=it,
        normalized=True,
        converged=converged,
        estimator="deflation",
    )


def _cut_sweep_second(p, mesh, measure, opts):
    """Two-nodal-domain upper bound: sweep hyperplane cuts, solve the ground
    state on both induced sub-meshes, and minimize max(lambda+, lambda-).
    The coarse direction x offset sweep is followed by a few refinement
    rounds of the offset around the incumbent cut (the value is piecewise
    constant in the offset, so coarse sweeps alone can straddle the best
    element partition)."""
    if mesh.dim == 1:
        directions = np.array([[1.0]])
    else:
        th = np.linspace(0.0, np.pi, opts.n_directions, endpoint=False)
        directions = np.stack([np.cos(th), np.sin(th)], axis=1)

    centroids = np.mean(mesh.nodes[mesh.elements], axis=1)
    seen = set()
    state = {"best": None, "theta": None, "tau": None, "n_cuts": 0}
    # sub-solves only feed an upper bound, so a looser stagnation tolerance
    # and iteration cap lose nothing: any Rayleigh quotient of an admissible
    # field bounds lambda_1 of its subdomain from above
    sub_opts = SolverOptions(
        eps_initial=opts.eps_initial,
        eps_floor=opts.eps_floor,
        eps_decay=opts.eps_decay,
        max_outer=min(opts.max_outer, 60),
        stagnation_tol=max(opts.stagnation_tol, 1e-8),
        cg_tol=opts.cg_tol,
        seed=opts.seed,
    )

    def process_cut(theta, proj, tau):
        side = proj > tau
        if not side.any() or side.all():
            return
        key = side.tobytes()
        if key in seen:
            return
        seen.add(key)
        halves = []
        for mask in (side, ~side):
            sub, node_map = submesh(mesh, np.nonzero(mask)[0])
            if not np.any(sub.interior):
                return
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pair = first_eigenpair(p, sub, measure, sub_opts)
            halves.append((pair, node_map))
        state["n_cuts"] += 1
        value = max(halves[0][0].lam, halves[1][0].lam)
        if state["best"] is None or value < state["best"][0]:
            glued = np.zeros(mesh.n_nodes)
            for sign, (pair, node_map) in zip((1.0, -1.0), halves):
                glued[node_map] += sign * pair.field.values
            state["best"] = (value, glued)
            state["theta"], state["tau"] = theta, tau

    spacing = None
    for theta in directions:
        proj = centroids @ theta
        lo, hi = proj.min(), proj.max()
        offsets = np.linspace(lo, hi, opts.n_offsets + 2)[1:-1]
        spacing = offsets[1] - offsets[0] if offsets.size > 1 else hi - lo
        for tau in offsets:
            process_cut(theta, proj, tau)
    if state["best"] is not None and spacing is not None:
        theta = state["theta"]
        proj = centroids @ theta
        delta = spacing
        for _ in range(opts.sweep_refine_rounds):
            for tau in np.linspace(state["tau"] - delta, state["tau"] + delta, 17):
                process_cut(theta, proj, tau)
            delta /= 8.0
    if state["best"] is None:
        raise ValueError("cut sweep produced no admissible partition")
    value, glued = state["best"]
    n_cuts = state["n_cuts"]
    glued = _normalize(mesh, glued, p, measure)
    return EigenPair(
        lam=value,
        field=Field(mesh, glued),
        residual_history=[],
        iterations=n_cuts,
        normalized=True,
        converged=True,
        estimator="nodal-cut",
        is_upper_bound=True,
    )


def second_eigenvalue(p, mesh, measure, u1pair, opts=None, method="auto"):
    """Second Dirichlet eigenvalue.

    p = 2 uses deflated inverse iteration and converges to the discrete
    lambda_2.  For p != 2 the hyperplane-cut estimator returns a certified
    upper bound (is_upper_bound is set); the glued sign-changing field is an
    admissible candidate, not an eigenfunction.
    """
    if u1pair is not None and not u1pair.converged:
        raise ValueError("second_eigenvalue needs a converged first eigenpair")
    opts = opts or SolverOptions()
    if method == "auto":
        method = "deflation" if p == 2.0 else "nodal-cut"
    if method == "deflation":
        if p != 2.0:
            raise ValueError("deflation is only valid at p = 2")
        return _deflated_second(p, mesh, measure, u1pair.field, opts)
    if method == "nodal-cut":
        return _cut_sweep_second(p, mesh, measure, opts)
    raise ValueError(f"unknown method {method!r}")
