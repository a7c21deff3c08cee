"""Transfer operators on [0,1]: Ulam discretization and its diagnostics.

The bin-counting (Ulam) matrix discretizes the transfer operator of an
interval map; its leading eigenvector approximates the invariant density.
On top of that sit the statistical-stability experiment for perturbed cusp
families, noise-averaged operators, a computable lower bound for the
operator distance, a discrete quasi-Hoelder seminorm with a contraction
probe, and the inducing-scheme reconstruction of the invariant measure
from first returns to an interval around the cusp.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.ndimage import maximum_filter1d, minimum_filter1d
from scipy.stats import kendalltau

from .cuspmap import (
    AuditReport,
    IntervalMap,
    audit_assumptions,
    make_perturbed_family,
)
from .errors import (
    ConstructionError,
    DomainError,
    ShapeError,
    SpectralError,
    TruncationWarning,
)
from .noise import NoiseLaw


@dataclass(frozen=True)
class Density:
    """Piecewise-constant probability density on n_bins equal bins."""

    values: np.ndarray
    n_bins: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n_bins,):
            raise ShapeError("values must have shape (n_bins,)")
        if np.any(v < -1e-14):
            raise DomainError("density values must be non-negative")
        if abs(float(np.sum(v)) / self.n_bins - 1.0) > 1e-12:
            raise DomainError("density must integrate to 1 within 1e-12")
        object.__setattr__(self, "values", v)

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) / self.n_bins

    def write_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("bin_center,value\n")
            for c, v in zip(self.bin_centers, self.values):
                fh.write("%.17g,%.17g\n" % (c, v))


@dataclass(frozen=True)
class UlamMatrix:
    """Row-stochastic bin-transition matrix P[i,j] ~ Leb(bin_i ∩ T^-1 bin_j)/Leb(bin_i)."""

    matrix: sparse.csr_matrix
    n_bins: int

    def __post_init__(self):
        rs = np.asarray(self.matrix.sum(axis=1)).ravel()
        if np.max(np.abs(rs - 1.0)) > 1e-10:
            raise ShapeError("rows of an Ulam matrix must sum to 1")

    def apply_to_density(self, values: np.ndarray) -> np.ndarray:
        """Push bin values forward by the discretized transfer operator."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_bins,):
            raise ShapeError("value vector length must equal n_bins")
        return self.matrix.T @ values

    def write_csv(self, path) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with Path(path).open("w") as fh:
            fh.write("i,j,p_ij\n")
            for k in order:
                fh.write("%d,%d,%.17g\n" % (coo.row[k], coo.col[k], coo.data[k]))


_N_SUB = 64  # stratified sub-samples per bin; 1/_N_SUB is an exact binary float


def build_ulam(m, n_bins: int) -> UlamMatrix:
    """Ulam matrix by stratified quadrature of the preimage measure.

    Each bin is covered by 64 stratified sub-sample midpoints; membership
    of a sub-sample in T^-1(bin_j) is tested on its forward image, and
    each hit deposits weight 1/64. m may be an IntervalMap or any
    vectorized callable [0,1] -> [0,1]. Jump discontinuities are handled
    correctly because only point images are used.
    """
    if n_bins < 16:
        raise DomainError("n_bins must be at least 16")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    sub = (np.arange(_N_SUB) + 0.5) / (_N_SUB * n_bins)
    xs = (edges[:-1, None] + sub[None, :]).ravel()
    vals = np.asarray(m(xs), dtype=float)
    if np.any(~np.isfinite(vals)) or vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9:
        raise DomainError("map images must stay inside [0, 1]")
    j = np.clip(np.digitize(np.clip(vals, 0.0, 1.0), edges) - 1, 0, n_bins - 1)
    i = np.repeat(np.arange(n_bins), _N_SUB)
    mat = sparse.coo_matrix((np.full(n_bins * _N_SUB, 1.0 / _N_SUB), (i, j)),
                            shape=(n_bins, n_bins)).tocsr()
    mat.sum_duplicates()
    return UlamMatrix(matrix=mat, n_bins=n_bins)


def build_ulam_exact(m: IntervalMap, n_bins: int) -> UlamMatrix:
    """Ulam matrix with exact preimage-measure rows for fold-shaped maps.

    Entry (i, j) is the exact Lebesgue fraction of bin i carried into
    bin j, obtained by inverting the two monotone branches at the bin
    edges. The sampled builder skips image bins whose preimage is
    narrower than its sub-sample spacing; near the cusp cap that zeroes
    the columns of the top bins, which this construction resolves.
    """
    if n_bins < 16:
        raise DomainError("n_bins must be at least 16")
    if not isinstance(m, IntervalMap):
        raise DomainError("exact rows need the branch structure of an "
                          "IntervalMap")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    rows, cols, vals = [], [], []
    for invert, lo_x, hi_x in ((m.inverse_left, 0.0, m.x0),
                               (m.inverse_right, m.x0, 1.0)):
        va, vb = m(lo_x), m(hi_x)
        lo_y, hi_y = min(va, vb), max(va, vb)
        ys = np.clip(edges, lo_y, hi_y)
        us = invert(ys)
        for j in range(n_bins):
            plo, phi = sorted((us[j], us[j + 1]))
            if phi - plo <= 0.0:
                continue
            i = min(max(int(plo * n_bins), 0), n_bins - 1)
            while i * (1.0 / n_bins) < phi and i < n_bins:
                overlap = min(phi, (i + 1) / n_bins) - max(plo, i / n_bins)
                if overlap > 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(overlap * n_bins)
                i += 1
    mat = sparse.coo_matrix((vals, (rows, cols)),
                            shape=(n_bins, n_bins)).tocsr()
    mat.sum_duplicates()
    return UlamMatrix(matrix=mat, n_bins=n_bins)


def stationary_density(p: UlamMatrix, tol: float = 1e-12,
                       max_iter: int = 100_000) -> Density:
    """Leading eigenvector by power iteration from the uniform density."""
    mass = np.full(p.n_bins, 1.0 / p.n_bins)
    pt = p.matrix.T.tocsr()
    for _ in range(max_iter):
        new = pt @ mass
        new /= new.sum()
        if float(np.sum(np.abs(new - mass))) < tol:
            mass = new
            break
        mass = new
    else:
        raise SpectralError(
            f"power iteration did not reach {tol} in {max_iter} iterations")
    mass = np.maximum(mass, 0.0)
    mass /= mass.sum()
    return Density(values=mass * p.n_bins, n_bins=p.n_bins)


def l1_distance(d1, d2) -> float:
    v1 = d1.values if isinstance(d1, Density) else np.asarray(d1, dtype=float)
    v2 = d2.values if isinstance(d2, Density) else np.asarray(d2, dtype=float)
    if v1.shape != v2.shape:
        raise ShapeError("densities must share the bin grid")
    return float(np.sum(np.abs(v1 - v2))) / len(v1)


def birkhoff_histogram(m, n_points: int, n_bins: int, seed: int = 0,
                       n_chains: int = 1024, burn: int = 200) -> Density:
    """Occupation histogram of map orbits as an independent density estimate.

    Runs n_chains parallel orbits from uniform random starts, drops a
    burn-in, and pools n_points samples. Parallel orbits keep the
    per-step work vectorized; the pooled histogram estimates the same
    invariant density as one long orbit.
    """
    rng = np.random.default_rng(seed)
    steps = burn + int(math.ceil(n_points / n_chains))
    x = rng.uniform(0.02, 0.98, size=n_chains)
    counts = np.zeros(n_bins)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    for k in range(steps):
        x = np.asarray(m(x), dtype=float)
        # stay strictly inside (0,1): endpoint fixed points would trap chains
        x = np.clip(x, 1e-12, 1.0 - 1e-12)
        if k >= burn:
            idx = np.clip(np.digitize(x, edges) - 1, 0, n_bins - 1)
            counts += np.bincount(idx, minlength=n_bins)
    mass = counts / counts.sum()
    return Density(values=mass * n_bins, n_bins=n_bins)


@dataclass(frozen=True)
class StabilityEntry:
    eps: float
    distance: float
    audit_passed: bool
    audit: AuditReport


@dataclass(frozen=True)
class StabilityReport:
    """L1 distances of perturbed invariant densities along an eps ladder."""

    entries: tuple[StabilityEntry, ...]
    kendall_tau: float
    monotone: bool
    n_bins: int

    def distances(self) -> np.ndarray:
        return np.array([e.distance for e in self.entries])


def statistical_stability_experiment(base: IntervalMap, eps_ladder,
                                     n_bins: int, mode: str = "full",
                                     tol: float = 1e-12) -> StabilityReport:
    """Invariant-density response of the perturbed family along a ladder.

    For each eps the perturbed map is constructed and audited, its Ulam
    density computed, and the L1 distance to the base density recorded.
    Audit failures flag the entry but do not stop the experiment.
    """
    eps_ladder = [float(e) for e in eps_ladder]
    if any(e < 0 for e in eps_ladder):
        raise DomainError("eps ladder must be non-negative")
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise DomainError("eps ladder must be strictly decreasing")
    rho = stationary_density(build_ulam(base, n_bins), tol=tol)
    entries = []
    for eps in eps_ladder:
        pert = make_perturbed_family(base, eps, mode=mode)
        audit = audit_assumptions(base, pert, eps)
        rho_eps = stationary_density(build_ulam(pert, n_bins), tol=tol)
        entries.append(StabilityEntry(eps=eps,
                                      distance=l1_distance(rho, rho_eps),
                                      audit_passed=audit.all_passed,
                                      audit=audit))
    dist = [e.distance for e in entries]
    tau = kendalltau(eps_ladder, dist).statistic if len(dist) > 2 else float("nan")
    monotone = all(b < a for a, b in zip(dist, dist[1:]))
    return StabilityReport(entries=tuple(entries), kendall_tau=float(tau),
                           monotone=monotone, n_bins=n_bins)


def averaged_transfer_operator(family, law: NoiseLaw, n_bins: int,
                               n_quad: int = 16) -> UlamMatrix:
    """Noise-averaged operator: quadrature mixture of per-amplitude matrices.

    family maps an amplitude eta to an interval map. The mixture weights
    come from the law's quadrature rule, so the result is row-stochastic
    by convexity. Atomic laws are averaged exactly.
    """
    if n_quad < 8:
        raise DomainError("n_quad must be at least 8")
    nodes, weights = law.quadrature(n_quad)
    acc = None
    for eta, w in zip(nodes, weights):
        p = build_ulam(family(float(eta)), n_bins)
        acc = w * p.matrix if acc is None else acc + w * p.matrix
    return UlamMatrix(matrix=acc.tocsr(), n_bins=n_bins)


def quasi_holder_seminorm(d, alpha: float, eps0: float) -> float:
    """Discrete oscillation seminorm over dyadic window radii.

    For each radius the per-bin oscillation is taken over a sliding window
    whose half-width rounds the radius up to whole bins (one bin of slack,
    so the discrete window always contains the continuum ball and the
    sup-norm embedding stays valid). The seminorm is the sup over radii of
    the scaled mean oscillation.
    """
    values = d.values if isinstance(d, Density) else np.asarray(d, dtype=float)
    if not 0.0 < alpha <= 1.0:
        raise DomainError("alpha must lie in (0, 1]")
    if not 0.0 < eps0 <= 0.5:
        raise DomainError("eps0 must lie in (0, 1/2]")
    n = len(values)
    best = 0.0
    radius = eps0
    while radius >= 1.0 / n:
        half = int(math.ceil(radius * n)) + 1
        size = 2 * half + 1
        osc = (maximum_filter1d(values, size, mode="nearest")
               - minimum_filter1d(values, size, mode="nearest"))
        best = max(best, float(np.sum(osc)) / n / radius ** alpha)
        radius *= 0.5
    return best


def quasi_holder_norm(d, alpha: float, eps0: float) -> float:
    """Seminorm plus the L1 norm."""
    values = d.values if isinstance(d, Density) else np.asarray(d, dtype=float)
    return quasi_holder_seminorm(values, alpha, eps0) + float(
        np.sum(np.abs(values))) / len(values)


def build_test_dictionary(n_bins: int, alpha: float = 0.5, eps0: float = 0.125,
                          stationary: Density | None = None) -> np.ndarray:
    """Fixed 20-function dictionary, each normalized to quasi-Hoelder norm 1.

    Entries: constant; the monomials x, x^2, x^3; (1-x), (1-x)^2; x(1-x);
    three Gaussian bumps at 1/4, 1/2, 3/4; six smoothed step functions with
    cut points k/8 (k = 1..6); three hat functions; sqrt(x); and the
    stationary density when supplied (else sqrt(1-x)).
    """
    x = (np.arange(n_bins) + 0.5) / n_bins
    funcs: list[np.ndarray] = [np.ones(n_bins), x, x ** 2, x ** 3,
                               1.0 - x, (1.0 - x) ** 2, x * (1.0 - x)]
    for c in (0.25, 0.5, 0.75):
        funcs.append(np.exp(-((x - c) ** 2) / 0.02))
    width = max(3, int(round(eps0 * n_bins / 4.0)))
    kernel = np.ones(width) / width
    for k in range(1, 7):
        step = (x <= k / 8.0).astype(float)
        pad = width // 2
        ext = np.concatenate([np.repeat(step[0], pad), step,
                              np.repeat(step[-1], width - 1 - pad)])
        funcs.append(np.convolve(ext, kernel, mode="valid"))
    for c in (0.25, 0.5, 0.75):
        funcs.append(np.maximum(0.0, 1.0 - 4.0 * np.abs(x - c)))
    funcs.append(np.sqrt(x))
    funcs.append(stationary.values.copy() if stationary is not None
                 else np.sqrt(1.0 - x))
    out = np.empty((len(funcs), n_bins))
    for i, f in enumerate(funcs):
        out[i] = f / quasi_holder_norm(f, alpha, eps0)
    return out


def operator_distance(p: UlamMatrix, p_eps: UlamMatrix,
                      dictionary: np.ndarray | None = None,
                      alpha: float = 0.5, eps0: float = 0.125) -> float:
    """Dictionary lower bound on the operator distance into L1.

    Reports max_f ||(P - P_eps) f||_1 over the fixed dictionary of
    test functions with quasi-Hoelder norm at most 1, the matrices acting
    on functions of the bin index. The true operator norm takes a sup
    over the whole unit ball, so this is a lower bound. Row-stochasticity
    makes the bound vanish exactly on constants.
    """
    if p.n_bins != p_eps.n_bins:
        raise ShapeError("operators must share the bin grid")
    if dictionary is None:
        dictionary = build_test_dictionary(p.n_bins, alpha=alpha, eps0=eps0)
    diff = (p.matrix - p_eps.matrix).tocsr()
    worst = 0.0
    for f in dictionary:
        img = diff @ f
        worst = max(worst, float(np.sum(np.abs(img))) / p.n_bins)
    return worst


@dataclass(frozen=True)
class ProbeReport:
    """Least-squares contraction estimate over operator iterates."""

    kappa: float
    d_const: float
    contracting: bool
    n_iter: int
    alpha: float
    eps0: float


def lasota_yorke_probe(p: UlamMatrix, alpha: float = 0.5, eps0: float = 0.125,
                       n_iter: int = 12) -> ProbeReport:
    """Fit seminorm(L f) <= kappa seminorm(f) + D ||f||_1 over iterates.

    Report-only diagnostic. The dictionary is iterated through the
    discretized operator and the per-step maximum of the seminorms is
    fitted against its predecessor: the inequality is an envelope bound,
    so the regression tracks the slowest-contracting direction rather
    than the dictionary average. Steps where the envelope has decayed to
    the resolution floor are dropped, and a tiny ridge on D keeps the fit
    determined when seminorm and L1 sequences are collinear (identity-like
    matrices).
    """
    if n_iter < 10:
        raise DomainError("n_iter must be at least 10")
    dictionary = build_test_dictionary(p.n_bins, alpha=alpha, eps0=eps0)
    semis = np.empty((len(dictionary), n_iter + 1))
    l1s = np.empty((len(dictionary), n_iter + 1))
    for fi, f in enumerate(dictionary):
        cur = f.copy()
        for k in range(n_iter + 1):
            semis[fi, k] = quasi_holder_seminorm(cur, alpha, eps0)
            l1s[fi, k] = float(np.sum(np.abs(cur))) / p.n_bins
            if k < n_iter:
                cur = p.apply_to_density(cur)
    top = np.argmax(semis, axis=0)
    env = semis[top, np.arange(n_iter + 1)]
    env_l1 = l1s[top, np.arange(n_iter + 1)]
    keep = env[1:] >= 1e-3 * env[0]
    a = np.column_stack([env[:-1][keep], env_l1[:-1][keep]])
    y = env[1:][keep]
    gram = a.T @ a + np.diag([0.0, 1e-8])
    coef = np.linalg.solve(gram, a.T @ y)
    kappa, d_const = float(coef[0]), float(coef[1])
    return ProbeReport(kappa=kappa, d_const=d_const,
                       contracting=kappa < 1.0 - 1e-3,
                       n_iter=n_iter, alpha=alpha, eps0=eps0)


@dataclass(frozen=True)
class PianigianiReport:
    """First-return reconstruction of the invariant measure around the cusp.

    The interval I straddles the cusp between the two preimages of x0;
    cylinders Z_p collect points whose excursion re-enters I after exactly
    p steps. mu_I is the visit frequency of I (with a chain-based standard
    error), mean_return the Kac mean of the return time under the induced
    measure; their product sits near 1 when the scheme is consistent.
    """

    a_left: np.ndarray
    a_right: np.ndarray
    b_left: np.ndarray
    b_right: np.ndarray
    tau_max: int
    coverage: float
    mu_i: float
    mu_i_se: float
    mean_return: float
    kac_product: float
    density: Density
    scaling_slope: float
    scaling_slope_theory: float
    scaling_r2: float
    truncated: bool


def _inverse_sequences(m: IntervalMap, p_max: int):
    """Boundary sequences of the inducing scheme by inverse-branch iteration.

    Stops early once the cylinder cuts approach the cusp to within float
    resolution; the effective depth is the length of the returned arrays
    minus one.
    """
    a_left = [m.inverse_left(m.x0)]    # marching down to 0
    a_right = [m.inverse_right(m.x0)]  # marching up to 1
    b_left = [a_left[0]]               # cylinder cuts left of the cusp
    b_right = [a_right[0]]             # cylinder cuts right of the cusp
    for p in range(1, p_max + 1):
        nl = m.inverse_left(a_right[p - 1])
        nr = m.inverse_right(a_right[p - 1])
        if (m.x0 - nl) < 1e-13 or (nr - m.x0) < 1e-13:
            break
        a_left.append(m.inverse_left(a_left[-1]))
        a_right.append(m.inverse_right(a_left[p - 1]))
        b_left.append(nl)
        b_right.append(nr)
        if not (0.0 < a_left[-1] < a_right[-1] < 1.0):
            raise ConstructionError("inverse-branch iteration left (0,1)")
    bl = np.array(b_left)
    br = np.array(b_right)
    if np.any(np.diff(bl) <= 0) or np.any(np.diff(br) >= 0):
        raise ConstructionError("cylinder boundaries are not nested")
    return np.array(a_left), np.array(a_right), bl, br


def pianigiani_check(m: IntervalMap, n_orbit: int = 1_000_000,
                     n_bins: int = 512, seed: int = 0, p_max: int = 40,
                     coverage_target: float = 0.995) -> PianigianiReport:
    """Reconstruct the invariant measure from first returns to I.

    Orbit samples inside I are grouped into cylinders by return time; the
    measure of a bin sums the pushforward visits of each cylinder over its
    excursion, weighted by the induced measure and normalized by the Kac
    mean return. The report includes the cusp-approach scaling of the
    cylinder cuts, whose log-slope is fixed by the left endpoint slope and
    cusp exponent.
    """
    a_left, a_right, b_left, b_right = _inverse_sequences(m, p_max)
    p_max = len(b_left) - 1
    i_lo, i_hi = a_left[0], a_right[0]

    rng = np.random.default_rng(seed)
    n_chains = 1024
    burn = 200
    steps = burn + int(math.ceil(n_orbit / n_chains))
    x = rng.uniform(0.02, 0.98, size=n_chains)
    in_i_per_chain = np.zeros(n_chains)
    samples: list[np.ndarray] = []
    for k in range(steps):
        x = np.asarray(m(x), dtype=float)
        x = np.clip(x, 1e-12, 1.0 - 1e-12)
        if k >= burn:
            mask = (x > i_lo) & (x < i_hi)
            in_i_per_chain += mask
            samples.append(x[mask].copy())
    n_total = n_chains * (steps - burn)
    y = np.concatenate(samples)
    n_in = len(y)
    mu_i = n_in / n_total
    mu_i_se = float(np.std(in_i_per_chain / (steps - burn), ddof=1)
                    / math.sqrt(n_chains))

    # Cylinder index = return time: left points sit between consecutive
    # left cuts, right points between consecutive right cuts.
    tau = np.zeros(n_in, dtype=int)
    left = y < m.x0
    tau[left] = np.searchsorted(b_left, y[left])
    tau[~left] = np.searchsorted(-b_right, -y[~left])
    assigned = (tau >= 1) & (tau <= p_max)
    coverage = float(np.mean(assigned)) if n_in else 0.0
    truncated = coverage < coverage_target
    if truncated:
        warnings.warn(
            f"cylinder family up to p={p_max} covers {coverage:.4%} of "
            "first-return mass", TruncationWarning, stacklevel=2)

    counts = np.bincount(tau[assigned], minlength=p_max + 1)[1:]
    mu_induced = counts / assigned.sum()
    mean_return = float(np.sum(np.arange(1, p_max + 1) * mu_induced))
    kac_product = mu_i * mean_return

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    hist = np.zeros(n_bins)
    for p in range(1, p_max + 1):
        pts = y[assigned & (tau == p)]
        if len(pts) == 0:
            continue
        cur = pts.copy()
        for _ in range(p):
            idx = np.clip(np.digitize(cur, edges) - 1, 0, n_bins - 1)
            hist += np.bincount(idx, minlength=n_bins)
            cur = np.clip(np.asarray(m(cur), dtype=float), 1e-12, 1.0 - 1e-12)
    mass = hist / hist.sum()
    density = Density(values=mass * n_bins, n_bins=n_bins)

    keep = (m.x0 - b_left) > 1e-12
    ps = np.arange(len(b_left))[keep]
    logs = np.log(m.x0 - b_left[keep])
    # the scaling law is asymptotic in p: drop the transient when the
    # tail is long enough to support the fit on its own
    start = 8 if np.sum(ps >= 8) >= 10 else 1
    logs = logs[ps >= start]
    ps = ps[ps >= start]
    vx = ps - ps.mean()
    slope = float(np.sum(vx * logs) / np.sum(vx * vx))
    fitted = slope * vx + logs.mean()
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    alpha_l = getattr(m, "alpha_left", None)
    b_l = getattr(m, "b_left", None)
    slope_theory = (-math.log(alpha_l) / b_l
                    if alpha_l is not None and b_l is not None
                    else float("nan"))

    return PianigianiReport(
        a_left=a_left, a_right=a_right, b_left=b_left, b_right=b_right,
        tau_max=p_max, coverage=coverage, mu_i=mu_i, mu_i_se=mu_i_se,
        mean_return=mean_return, kac_product=kac_product, density=density,
        scaling_slope=slope, scaling_slope_theory=slope_theory,
        scaling_r2=r2, truncated=truncated)
