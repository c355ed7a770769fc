"""Residuals from the parity space and mode signatures.

Each mode gets a residual generator that is zero on its own noise-free
behavior. Running every generator on every mode's behavior gives the
mirror signatures; modes with equal signatures cannot be told apart.
"""

import numpy as np

from interdp import build_residual_bank, data_path, load_model
from interdp.parity import eval_residuals, observability_matrix

model = load_model(data_path("two_nominal_model.json"))
bank = build_residual_bank(model)

for mode in bank.mode_order:
    gen = bank.generators[mode]
    dyn = model.mode[mode].dynamics
    err = np.max(np.abs(gen.W @ observability_matrix(dyn, gen.s)))
    print(f"{mode:6s} window s={gen.s}  relations={gen.n_residuals}  max|W O|={err:.1e}")

print()
print("signatures (row = observed mode, blocks = generators in mode order):")
for mode in bank.mode_order:
    bits = "".join("1" if b else "0" for b in bank.signatures[mode])
    print(f"  {mode:6s} {bits}")

print()
print("groups of indistinguishable modes:")
for g in bank.groups:
    print(f"  {g.id}: {', '.join(g.modes)}")

# the generator of q01 on a window taken from q01 itself
Y, U = bank.canonical_trajectory("q01")
gen = bank.generators["q01"]
w = gen.s + 1
print()
print("q01 residual on its own data:", eval_residuals(gen, Y[-w:], U[-w:]))
print("qf1 residual on q01 data:   ", eval_residuals(bank.generators["qf1"], Y[-w:], U[-w:]))
