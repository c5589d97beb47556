"""Numeric kernels on four-dimensional Moyal space.

* star product on complex Gaussians and plane waves (closed form), with a
  Gauss-Hermite quadrature oracle for inputs that factor over the two
  planes of the deformation matrix;
* the Mehler kernel, its alpha-integral and the sliced propagator bound;
* the matrix-base quadratic form and its truncated inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import integrate, sparse


class QuadratureError(RuntimeError):
    pass


class DivergenceError(ValueError):
    pass


class SingularMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaParam:
    theta: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def matrix(self) -> np.ndarray:
        t = self.theta
        return np.array([[0, t, 0, 0], [-t, 0, 0, 0], [0, 0, 0, t], [0, 0, -t, 0]], dtype=float)

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


@dataclass(frozen=True)
class OscillatorParams:
    Omega: float = 0.8
    mu2: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        if not 0 < self.Omega <= 1:
            raise ValueError("Omega must lie in (0, 1]")
        if self.mu2 < 0:
            raise ValueError("mu2 must be nonnegative")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def OmegaTilde(self) -> float:
        return self.Omega / (2 * self.theta)


# -- Gaussian class -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianFunction:
    """``amplitude * exp(-(x-c)^T M (x-c) + i p.x)`` on R^4.

    ``M`` is complex symmetric with positive-definite real part, or zero
    (a plane wave). Star products of Gaussians generally have complex M.
    """

    center: np.ndarray
    M: np.ndarray
    p: np.ndarray
    amplitude: complex = 1.0

    def __post_init__(self):
        M = np.asarray(self.M, dtype=complex)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if M.shape != (4, 4) or not np.allclose(M, M.T, atol=1e-12 * (1 + abs(M).max())):
            raise ValueError("quadratic matrix must be a symmetric 4x4 matrix")
        if not self.is_plane_wave:
            if np.linalg.eigvalsh(M.real).min() <= 0:
                raise ValueError("real part of the quadratic matrix must be positive definite")

    @property
    def is_plane_wave(self) -> bool:
        return not np.any(self.M)

    def quadratic(self):
        """``(M, J, k)`` with f(x) = exp(-x M x + J.x + k)."""
        M, c = self.M, self.center
        J = 2 * M @ c + 1j * self.p
        k = np.log(complex(self.amplitude)) - c @ M @ c
        return M, J, k

    @classmethod
    def from_quadratic(cls, M, J, k) -> "GaussianFunction":
        M = (M + M.T) / 2
        if not np.any(M):
            if np.abs(J.real).max() > 1e-12 * (1 + np.abs(J).max()):
                raise ValueError("plane wave with growing exponential")
            return cls(np.zeros(4), np.zeros((4, 4)), J.imag, complex(np.exp(k)))
        c = np.linalg.solve(2 * M.real, J.real)
        p = J.imag - 2 * M.imag @ c
        return cls(c, M, p, complex(np.exp(k + c @ M @ c)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - self.center
        quad = np.einsum("...i,ij,...j->...", d, self.M, d)
        return self.amplitude * np.exp(-quad + 1j * (x @ self.p))


def plane_wave(p, amplitude=1.0) -> GaussianFunction:
    return GaussianFunction(np.zeros(4), np.zeros((4, 4)), np.asarray(p, float), amplitude)


def _sqrt_det(Q) -> complex:
    # continuous branch: every eigenvalue has positive real part
    return complex(np.prod(np.sqrt(np.linalg.eigvals(Q).astype(complex))))


def star_product(f: GaussianFunction, g: GaussianFunction, theta: ThetaParam) -> GaussianFunction:
    """Closed-form Moyal product of two members of the Gaussian/plane-wave class."""
    Th = theta.matrix
    M1, J1, k1 = f.quadratic()
    M2, J2, k2 = g.quadratic()
    if f.is_plane_wave and g.is_plane_wave:
        return GaussianFunction.from_quadratic(np.zeros((4, 4)), J1 + J2,
                                               k1 + k2 + 0.5j * (g.p @ Th @ f.p))
    if f.is_plane_wave:
        s = Th @ f.p / 2
        return GaussianFunction.from_quadratic(M2, J1 + J2 - 2 * M2 @ s, k1 + k2 - s @ M2 @ s + J2 @ s)
    if g.is_plane_wave:
        s = -Th @ g.p / 2
        return GaussianFunction.from_quadratic(M1, J1 + J2 - 2 * M1 @ s, k1 + k2 - s @ M1 @ s + J1 @ s)

    A = theta.inverse
    Q = np.block([[M1, 1j * A], [-1j * A, M2]])
    Qi = np.linalg.inv(Q)
    B = np.vstack([-2 * M1, -2 * M2])
    b0 = np.concatenate([J1, J2])
    M = M1 + M2 - B.T @ Qi @ B / 4
    J = J1 + J2 + B.T @ Qi @ b0 / 2
    k = k1 + k2 + b0 @ Qi @ b0 / 4 - np.log(_sqrt_det(Q)) - 4 * math.log(theta.theta)
    M = (M + M.T) / 2
    assert np.linalg.eigvalsh(M.real).min() > 0, "Gaussian class not closed for these inputs"
    return GaussianFunction.from_quadratic(M, J, k)


# -- quadrature oracle ---------------------------------------------------------------

PLANES = ((0, 1), (2, 3))


def _plane_factors(f: GaussianFunction):
    if f.is_plane_wave or np.abs(f.M.imag).max() > 0:
        raise ValueError("quadrature oracle needs a Gaussian with real quadratic matrix")
    if np.abs(f.M[:2, 2:]).max() > 0:
        raise ValueError("quadrature oracle needs inputs that factor over the two planes")
    return [(f.center[list(P)], f.M.real[np.ix_(P, P)], f.p[list(P)]) for P in PLANES]


def _plane_star(fa, ga, x, theta, n):
    """2D Moyal integral at x with n Gauss-Hermite nodes per dimension.

    After y = y0 + R^-1 t, z = z0 + S^-1 s the integrand is a product of
    one- and two-index factors, so the 4-fold node sum is an einsum.
    """
    tau, w = np.polynomial.hermite.hermgauss(n)
    A = np.linalg.inv(np.array([[0, theta], [-theta, 0]]))
    (cf, Mf, pf), (cg, Mg, pg) = fa, ga
    Ri = np.linalg.inv(np.linalg.cholesky(Mf).T)  # Mf = R^T R
    Si = np.linalg.inv(np.linalg.cholesky(Mg).T)
    y0, z0 = cf - x, cg - x
    B = -2 * Ri.T @ A @ Si
    lt = Ri.T @ pf - 2 * Ri.T @ A @ z0
    ls = Si.T @ pg - 2 * Si.T @ A.T @ y0
    const = (np.exp(1j * (pf @ (x + y0) + pg @ (x + z0)) - 2j * (y0 @ A @ z0))
             / (np.linalg.det(Ri) ** -1 * np.linalg.det(Si) ** -1 * math.pi ** 2 * theta ** 2))
    t0 = w * np.exp(1j * lt[0] * tau)
    t1 = w * np.exp(1j * lt[1] * tau)
    s0 = w * np.exp(1j * ls[0] * tau)
    s1 = w * np.exp(1j * ls[1] * tau)
    E = [[np.exp(1j * B[j, k] * np.outer(tau, tau)) for k in range(2)] for j in range(2)]
    X = (E[0][0].T * t0) @ E[0][1]  # sum over the t0 nodes
    Y = (E[1][0].T * t1) @ E[1][1]  # sum over the t1 nodes
    total = s0 @ (X * Y) @ s1
    return const * total


def star_product_quadrature(f, g, x, theta: ThetaParam, rtol=1e-11, max_nodes=512):
    """Quadrature value of (f*g)(x) and its error estimate.

    Node counts double until two successive values agree to ``rtol``.
    """
    x = np.asarray(x, float)
    total, err = f.amplitude * g.amplitude, 0.0
    for P, fa, ga in zip(PLANES, _plane_factors(f), _plane_factors(g)):
        n, prev = 8, None
        while True:
            val = _plane_star(fa, ga, x[list(P)], theta.theta, n)
            if prev is not None and abs(val - prev) <= rtol * abs(val):
                break
            if 2 * n > max_nodes:
                raise QuadratureError(f"no convergence with {n} nodes (last change {abs(val - prev):.3e})")
            prev, n = val, 2 * n
        err += abs(val - prev) / abs(val)
        total *= val
    return complex(total), err


# -- Mehler kernel ----------------------------------------------------------------------

def mehler_kernel(x, y, alpha: float, params: OscillatorParams) -> float:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x, y = np.asarray(x, float), np.asarray(y, float)
    w = params.OmegaTilde
    u2, v2 = np.sum((x - y) ** 2), np.sum((x + y) ** 2)
    pref = w / (2 * math.pi * math.sinh(alpha)) ** 2
    return pref * math.exp(-w / 4 * (u2 / math.tanh(alpha / 2) + math.tanh(alpha / 2) * v2))


def _alpha_integrand(x, y, params):
    w = params.OmegaTilde
    u2, v2 = float(np.sum((x - y) ** 2)), float(np.sum((x + y) ** 2))

    def f(a):
        if a == 0 or a > 300:  # kernel ~ exp(-2a) far below double precision
            return 0.0
        return (w / (2 * math.pi * math.sinh(a)) ** 2
                * math.exp(-w / 4 * (u2 / math.tanh(a / 2) + math.tanh(a / 2) * v2) - params.mu2 * a))
    return f


def propagator(x, y, params: OscillatorParams, lo=0.0, hi=math.inf, rtol=1e-8) -> float:
    """alpha-integral of the Mehler kernel (times exp(-mu2 alpha)) over [lo, hi]."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if lo == 0 and np.array_equal(x, y):
        raise DivergenceError("alpha-integral diverges at alpha -> 0 for coincident points")
    f = _alpha_integrand(x, y, params)
    val, err = integrate.quad(f, lo, hi, epsabs=0, epsrel=rtol / 10, limit=500)
    if not err <= rtol * abs(val):
        raise QuadratureError(f"propagator quadrature error {err:.3e} exceeds tolerance")
    return val


def mehler_convolution(x, y, alpha, beta, params: OscillatorParams) -> float:
    """Numeric integral of K_alpha(x, z) K_beta(z, y) over z in R^4."""
    w = params.OmegaTilde
    ca, ta = 1 / math.tanh(alpha / 2), math.tanh(alpha / 2)
    cb, tb = 1 / math.tanh(beta / 2), math.tanh(beta / 2)
    val = (w / (2 * math.pi * math.sinh(alpha)) ** 2) * (w / (2 * math.pi * math.sinh(beta)) ** 2)
    for xm, ym in zip(x, y):
        h = lambda z: math.exp(-w / 4 * (ca * (xm - z) ** 2 + ta * (xm + z) ** 2
                                         + cb * (z - ym) ** 2 + tb * (z + ym) ** 2))
        r, err = integrate.quad(h, -math.inf, math.inf, epsabs=0, epsrel=1e-13, limit=200)
        val *= r
    return val


# -- sliced propagator -------------------------------------------------------------------

@dataclass(frozen=True)
class SliceReport:
    i: int
    M: float
    K: float
    k: float
    ok: bool
    worst: tuple = field(default=())


def slice_bound_check(i: int, M: float, params: OscillatorParams, short_power=1, long_power=-1,
                      k_min=0.05, grid=13) -> SliceReport:
    """Check C^i(u, v) <= K M^{2i} exp(-k (M^{a i}|u| + M^{b i}|v|)) on a grid.

    Slice i integrates alpha over [M^-2(i+1), M^-2i]. The grid is laid out
    in scaled units u = a M^-i, v = b M^i with a, b in [0, 6]. ``K`` is twice
    the largest value of C^i / M^{2i} on the grid; ``k`` is the largest rate
    compatible with every grid point. ``a`` and ``b`` (``short_power``,
    ``long_power``) are hooks for testing wrong exponents.
    """
    lo, hi = M ** (-2 * (i + 1)), M ** (-2 * i)
    pts = np.linspace(0, 6, grid)
    vals = {}
    for a, b in product(pts, pts):
        u, v = a * M ** (-i), b * M ** i
        # points along one axis are enough: the kernel depends on |u| and |v|
        x = np.array([(v + u) / 2, 0, 0, 0])
        y = np.array([(v - u) / 2, 0, 0, 0])
        vals[(u, v)] = integrate.quad(_alpha_integrand(x, y, params), lo, hi, epsrel=1e-10)[0]
    scale = M ** (2 * i)
    K = 2 * max(vals.values()) / scale
    k, worst = math.inf, ()
    for (u, v), c in vals.items():
        e = M ** (short_power * i) * abs(u) + M ** (long_power * i) * abs(v)
        if e == 0:
            continue
        rate = math.log(K * scale / c) / e if c > 0 else math.inf
        if rate < k:
            k, worst = rate, (u, v)
    return SliceReport(i, M, K, k, k >= k_min, worst)


# -- matrix base --------------------------------------------------------------------------

def _pairs(cutoff):
    return list(product(range(cutoff), repeat=4))  # (m1, m2, n1, n2)


def matrix_base_form(cutoff: int, params: OscillatorParams) -> tuple[sparse.csr_matrix, list]:
    """Quadratic form G over double indices (m, n), m, n in N^2.

    Row (m, n) and column (k, l) hold G_{mn,kl}. Returns the sparse matrix
    and the index list (m1, m2, n1, n2) giving the row/column order.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    th, Om, mu2 = params.theta, params.Omega, params.mu2
    idx = _pairs(cutoff)
    pos = {p: k for k, p in enumerate(idx)}
    rows, cols, data = [], [], []
    diag = 2 * (1 + Om ** 2) / th
    off = 2 * (1 - Om ** 2) / th
    for (m1, m2, n1, n2), r in pos.items():
        # diagonal term couples phi_mn with phi_nm
        rows.append(r)
        cols.append(pos[(n1, n2, m1, m2)])
        data.append(mu2 + diag * (m1 + m2 + n1 + n2))
        for plane in (0, 1):
            m = [m1, m2]
            n = [n1, n2]
            # k = n + e, l = m + e in the chosen plane, k = n, l = m in the other
            for step in (1, -1):
                kk, ll = list(n), list(m)
                kk[plane] += step
                ll[plane] += step
                if min(kk[plane], ll[plane]) < 0 or max(kk[plane], ll[plane]) >= cutoff:
                    continue
                w = math.sqrt(kk[plane] * ll[plane]) if step == 1 else math.sqrt(m[plane] * n[plane])
                if w == 0 or off == 0:
                    continue
                rows.append(r)
                cols.append(pos[(kk[0], kk[1], ll[0], ll[1])])
                data.append(-off * w)
    G = sparse.csr_matrix((data, (rows, cols)), shape=(len(idx), len(idx)))
    return G, idx


def hermitian_form(G, idx) -> sparse.csr_matrix:
    """G with columns relabelled (k, l) -> (l, k): the form on Hermitian fields."""
    pos = {p: k for k, p in enumerate(idx)}
    perm = [pos[(p[2], p[3], p[0], p[1])] for p in idx]
    return G[:, perm].tocsr()


@dataclass(frozen=True)
class TruncatedPropagator:
    """Blockwise inverse: ``blocks[alpha] = (rows, cols, inverse)``."""

    blocks: dict
    index: list
    residual: float
    condition: float

    def entry(self, m, n, k, l) -> float:
        """C_{mn,kl}: the (m, n), (k, l) entry of the inverse matrix."""
        alpha = (k[0] - l[0], k[1] - l[1])
        rows, cols, inv = self.blocks[alpha]
        pos = {p: i for i, p in enumerate(self.index)}
        r, c = pos[(*m, *n)], pos[(*k, *l)]
        if r not in cols or c not in rows:
            return 0.0
        return float(inv[cols.index(r), rows.index(c)])


def truncated_propagator(cutoff: int, params: OscillatorParams) -> TruncatedPropagator:
    """Inverse of the truncated matrix-base form, computed per index sector.

    G only couples (m, n) to (k, l) with l - k = m - n in both planes, so the
    inverse is assembled from small dense blocks.
    """
    G, idx = matrix_base_form(cutoff, params)
    G = G.tocsr()
    sectors: dict = {}
    for k, (m1, m2, n1, n2) in enumerate(idx):
        sectors.setdefault((m1 - n1, m2 - n2), []).append(k)
    blocks = {}
    resid, cond = 0.0, 1.0
    for alpha, rows in sorted(sectors.items()):
        cols = sectors[(-alpha[0], -alpha[1])]
        blk = G[rows][:, cols].toarray()
        c = np.linalg.cond(blk)
        if not np.isfinite(c) or c > 1e14:
            raise SingularMatrixError(f"matrix-base form singular in sector {alpha} (condition {c:.3e})")
        inv = np.linalg.inv(blk)
        blocks[alpha] = (rows, cols, inv)
        resid = max(resid, float(np.linalg.norm(blk @ inv - np.eye(len(rows)), 2)))
        cond = max(cond, float(c))
    return TruncatedPropagator(blocks, idx, resid, cond)


def full_residual(G, prop: TruncatedPropagator) -> float:
    """Max-entry norm of G.C - Id with C assembled sparsely from the blocks."""
    r, c, d = [], [], []
    for rows, cols, inv in prop.blocks.values():
        rr, cc = np.meshgrid(cols, rows, indexing="ij")
        r.append(rr.ravel())
        c.append(cc.ravel())
        d.append(inv.ravel())
    C = sparse.csr_matrix((np.concatenate(d), (np.concatenate(r), np.concatenate(c))), shape=G.shape)
    R = (G @ C - sparse.identity(G.shape[0])).tocoo()
    return float(abs(R.data).max()) if R.nnz else 0.0
