"""Hermite-Biehler functions and reproducing kernels from a Hamiltonian.

For H = I/2 on [0, 2] the de Branges function is exp(-i lambda); a smooth
random H still gives |E(z)| > |E(conj z)| above the axis and a positive
kernel Gram matrix.
"""
import numpy as np

from canonsys import SpaceGrid, constant_hamiltonian, hamiltonian_from_function
from canonsys.frequency import DeBrangesFunction, debranges_E, hb_check, kernel_gram

H = constant_hamiltonian(np.eye(2) / 2, SpaceGrid.from_step(2.0, 1 / 800))
lam = np.linspace(-10, 10, 401)
print("max |E - exp(-i lambda)| =", np.abs(debranges_E(H, 2.0, lam) - np.exp(-1j * lam)).max())


def H_func(x):
    a = 1 + 0.3 * np.sin(2 * x)
    b = 0.2 * np.cos(x)
    return np.stack([np.stack([a, b], -1), np.stack([b, 0.8 + 0 * x], -1)], -2)


E = DeBrangesFunction.from_hamiltonian(hamiltonian_from_function(H_func, SpaceGrid.from_step(1.5, 1 / 200)))
hb = hb_check(E)
print(f"HB margins on the standard grid: min {hb.min_margin:.3f}, passed {hb.passed}")

rng = np.random.default_rng(0)
pts = rng.uniform(-3, 3, 6) + 1j * rng.uniform(0.2, 2, 6)
g = kernel_gram(E, pts)
print("Gram eigenvalues:", np.round(np.linalg.eigvalsh(g.gram), 4))
