"""Moyal star product, Mehler kernel and the matrix base.

Run: python demos/05_moyal.py
"""

import numpy as np

from ncphi4.moyal import (GaussianFunction, OscillatorParams, ThetaParam, full_residual, matrix_base_form,
                          mehler_convolution, mehler_kernel, propagator, star_product, star_product_quadrature,
                          truncated_propagator)

rng = np.random.default_rng(1)
th = ThetaParam(1.0)


def gaussian():
    a = rng.normal(size=(2, 2))
    M = np.zeros((4, 4))
    M[:2, :2] = M[2:, 2:] = 0.5 * a @ a.T + 0.5 * np.eye(2)
    return GaussianFunction(0.5 * rng.normal(size=4), M, rng.normal(size=4), 1.0)


# %% Star products of Gaussians are Gaussians; the closed form matches direct quadrature
f, g, h = gaussian(), gaussian(), gaussian()
x = 0.3 * rng.normal(size=4)
q, err = star_product_quadrature(f, g, x, th)
print(f"(f*g)(x) closed form {star_product(f, g, th)(x):.12f}")
print(f"(f*g)(x) quadrature  {q:.12f}")
print("f*g - g*f at x:", abs(star_product(f, g, th)(x) - star_product(g, f, th)(x)))
a = star_product(star_product(f, g, th), h, th)(x)
b = star_product(f, star_product(g, h, th), th)(x)
print("associativity defect:", abs(a - b) / abs(b))

# %% Small theta: the star product tends to the pointwise product, linearly in theta
for t in (1e-2, 1e-3, 1e-4):
    print(f"theta={t:g}: |f*g - fg| = {abs(star_product(f, g, ThetaParam(t))(x) - f(x) * g(x)):.3e}")

# %% Mehler kernel: semigroup in the Schwinger parameter, and the propagator
P = OscillatorParams()
y = rng.normal(size=4)
print("\nsemigroup ratio:", mehler_convolution(x, y, 0.4, 0.7, P) / mehler_kernel(x, y, 1.1, P) * P.OmegaTilde)
for d in (0.5, 1.0, 2.0):
    print(f"C(0, {d} e1) = {propagator(np.zeros(4), d * np.eye(4)[0], P):.10f}")

# %% Matrix base: truncated inverse and its stability as the cutoff grows
G, _ = matrix_base_form(12, P)
C12, C24 = truncated_propagator(12, P), truncated_propagator(24, P)
print("\n||G C - 1|| at cutoff 12:", full_residual(G, C12))
q = ((1, 0), (0, 0), (0, 0), (1, 0))
print("C entry at cutoff 12 vs 24:", C12.entry(*q), C24.entry(*q))
