"""Reverse-mode autodiff engine: a worked gradient and the finite-difference audit.

The package trains its networks with a small tape-based tensor library.
This script differentiates a hand-written expression, checks one gradient
against the analytic answer, then runs the library's own finite-difference
audit over every kernel plus a tiny end-to-end denoiser.
"""

import numpy as np

from tsdiff import nn
from tsdiff.gradcheck import run_all, tolerances

# gradient of mean(gelu(x @ w)) w.r.t. w: tape result vs a numeric probe
rng = np.random.default_rng(0)
x = nn.Tensor(rng.standard_normal((4, 3)))
w = nn.Tensor(rng.standard_normal((3, 2)), requires_grad=True)
loss = nn.tmean(nn.gelu(nn.matmul(x, w)))
loss.backward()
print(f"loss = {loss.item():.6f}")
print(f"dloss/dw via tape:\n{w.grad}")

# one-sided numeric probe of a single entry
h = 1e-6
w_plus = w.data.copy()
w_plus[0, 0] += h
numeric = (nn.tmean(nn.gelu(nn.matmul(x, nn.Tensor(w_plus)))).item()
           - loss.item()) / h
print(f"numeric probe of dloss/dw[0,0]: {numeric:.6f} "
      f"(tape says {w.grad[0, 0]:.6f})")

# The full audit: central differences against every backward rule.
rel_tol, _ = tolerances(np.float64)
print(f"\nfinite-difference audit at float64, relative tolerance {rel_tol:g}:")
results = run_all(np.float64)
for r in results:
    status = "ok" if r.passed(rel_tol) else "FAIL"
    print(f"  {r.name:<22} max rel err {r.max_rel_err:.2e}  {status}")
worst = max(results, key=lambda r: r.max_rel_err)
print(f"worst case: {worst.name} at {worst.max_rel_err:.2e}")
