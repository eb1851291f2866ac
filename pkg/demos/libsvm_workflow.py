"""End-to-end workflow on a LIBSVM text file, mirroring the command line.

Writes a small sample file, loads it, reports the critical regularization
weight, solves with the reference solver and with the screened stochastic
solver, and shows the equivalent CLI invocations.
"""

import os

import numpy as np

import gapsgd as G
from gapsgd.harness import SyntheticParams, build_spec, generate_synthetic, load_libsvm
from gapsgd.solvers import _spectral_bound

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)
path = os.path.join(OUT, "sample.libsvm")

# export a synthetic classification instance in LIBSVM format (1-based indices)
data = generate_synthetic(SyntheticParams(n=120, d=80, sparsity=0.3, noise=0.02,
                                          seed=11, support_size=6, model="logistic"))
with open(path, "w") as fh:
    a = data.A
    for i in range(data.n):
        cols = a.indices[a.indptr[i]:a.indptr[i + 1]]
        vals = a.data[a.indptr[i]:a.indptr[i + 1]]
        feats = " ".join(f"{c + 1}:{v:.6g}" for c, v in zip(cols, vals))
        label = "+1" if data.y[i] == 1.0 else "-1"
        fh.write(f"{label} {feats}\n".rstrip() + "\n")
print(f"wrote {path}")

loaded = load_libsvm(path, binarize_labels=True)
print(f"loaded: n={loaded.n} d={loaded.d} positives={int(loaded.y.sum())}")

spec = build_spec(loaded, model="logistic", lambda_ratio=0.5, q=10)
print(f"lambda_max={G.lambda_max(spec):.6g}, solving at lambda_max/2 = {spec.lam:.6g}")

oracle = G.reference_solve(spec, tol=1e-10)
print(f"oracle: objective={oracle.objective:.6g} support={oracle.support.tolist()}")

eta = 1.0 / (4.0 * _spectral_bound(spec))
rep = G.adsgd_solve(spec, G.SolverConfig(seed=1, eta=eta, gap_tol=1e-6,
                                         max_outer=300))
print(f"adsgd:  converged={rep.converged} outer={rep.outer_iters} "
      f"gap={rep.gap:.2e} nnz={int(np.count_nonzero(rep.x_final))}")

print("\nequivalent CLI calls:")
print(f"  gapsgd lambda-max --data {path} --model logistic")
print(f"  gapsgd oracle --data {path} --model logistic --lambda-ratio 0.5")
print(f"  gapsgd solve --data {path} --model logistic --solver adsgd "
      f"--lambda-ratio 0.5 --gap-tol 1e-6 --out trace.csv")
print(f"  gapsgd bench {os.path.join(os.path.dirname(__file__), 'example_plan.txt')}")
