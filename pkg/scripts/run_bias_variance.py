"""Bias-variance split of E_gen^2 over pairs of training sets."""

import numpy as np

from _common import parse, run

args = parse("bias-variance", "bias_variance.csv")
cfg, table = run("bias-variance", args)
print(f"{'N':>6} {'E_gen^2':>10} {'E_bias^2':>10} {'E_var':>10} {'|resid|':>10}")
for n in cfg.samples:
    vals = [np.mean(table.values(k, str(n))) for k in ("e_gen_sq_mean", "e_bias_sq", "e_var")]
    resid = np.max(np.abs(table.values("residual", str(n))))
    print(f"{n:>6} " + " ".join(f"{v:10.4f}" for v in vals) + f" {resid:10.1e}")
