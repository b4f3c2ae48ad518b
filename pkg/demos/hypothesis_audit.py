# Auditing the six structural hypotheses behind the collapse bounds.
#
# Every quantitative estimate in the library assumes a decomposed model
# whose vertical part commutes with the base algebra, whose conditional
# expectation is compatible with the grading, and so on.  The audit samples
# random self-adjoint elements and reports the worst violation per
# hypothesis.  A model built with a deliberate defect fails exactly the
# hypothesis the defect breaks, nothing else.

import numpy as np

from collapselab.builders import build_crossed_product_model
from collapselab.core import HermitianOperator, SpectralTripleModel
from collapselab.estimates import (bump_function, comparison_check,
                                   fourier_projection_check,
                                   hypothesis_audit, tunnel_bounds)

# Smallest even base: two points, Dirac sigma_x, grading sigma_z.
sx = np.array([[0, 1], [1, 0]], dtype=complex)
sz = np.diag([1.0, -1.0]).astype(complex)
base = SpectralTripleModel(
    hilbert_dim=2,
    algebra_basis=(np.eye(2, dtype=complex), sz),
    dirac=HermitianOperator(2, sx),
    label="spin-base",
    grading=sz)

honest = build_crossed_product_model(base, d=1, cutoff=2)
broken = build_crossed_product_model(base, d=1, cutoff=2,
                                     vertical_defect=0.25)

for tag, dec in (("honest", honest), ("broken", broken)):
    report = hypothesis_audit(dec, samples=300, seed=11)
    print(f"{tag} model, {report.samples} samples:")
    for v in report.verdicts:
        mark = "ok  " if v.passed else "FAIL"
        print(f"  {mark} {v.name:<42s} worst margin {v.worst_margin:.3e}")
    print()

# The kernel-projection estimate: vectors close to the vertical kernel have
# small projection defect, controlled by 4*sqrt(2*eps/delta) times a graph
# norm.  Random vectors clear the bound with room to spare.
rng = np.random.default_rng(3)
delta = honest.vertical_gap
dim = honest.total.hilbert_dim
print("projection estimate on random vectors (delta = vertical gap):")
for eps in (delta / 4, delta / 64, delta / 1024):
    xi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    chk = fourier_projection_check(honest.d_v, delta, eps, xi)
    print(f"  eps = delta/{delta/eps:>5.0f}: lhs {chk.lhs:8.4f} "
          f"<= rhs {chk.rhs:10.4f}  ({'pass' if chk.passed else 'fail'})")
print()

# The window function behind that estimate has a closed-form derivative
# norm, checked here against adaptive quadrature.
b = bump_function(delta, delta / 25)
print(f"bump window: support radius {b.support_radius}, "
      f"|f'|_L2 closed form {b.l2_deriv_norm:.10f}, "
      f"quadrature {b.l2_deriv_norm_quadrature():.10f}")
print()

# Dropping Dirac directions can only shrink a commutator norm by sqrt(|F|).
from collapselab.builders import make_clifford

cliff = make_clifford(2)
rng = np.random.default_rng(5)
h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
a = np.kron(h + h.conj().T, np.eye(cliff.spin_dim))
comps = [np.kron(np.diag(rng.standard_normal(4)).astype(complex),
                 np.eye(cliff.spin_dim)) for _ in range(3)]
big = [np.kron(np.eye(4, dtype=complex), g) for g in cliff.gammas]
from collapselab.builders import CliffordSet
lifted = CliffordSet(count=3, spin_dim=4 * cliff.spin_dim,
                     gammas=tuple(big))
print("direction-subset comparison, random 3-direction model:")
for F in ((0,), (1, 2), (0, 1, 2)):
    chk = comparison_check(lifted, comps, a, F)
    print(f"  F = {F}: lhs {chk.lhs:8.4f} <= sqrt(|F|)*full {chk.rhs:8.4f}")
print()

# Tunnel constants shrink along the collapse; this is the bound curve the
# sweeps print.
print("tunnel constants at delta = k = m = 1:")
for eps in (1.0, 2.0 ** -4, 2.0 ** -8, 2.0 ** -12):
    t = tunnel_bounds(eps, 1.0, 1.0, 1.0)
    print(f"  eps = 2^{np.log2(eps):>3.0f}: alpha {t.alpha:.5f}, "
          f"K_eps {t.k_eps:.5f}, M_eps {t.m_eps:.5f}")
