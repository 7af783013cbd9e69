"""Relative error of PFD, sample W2 and plug-in KL against closed forms, M = 128..4096."""

import numpy as np

from _common import parse, run

args = parse("sample-efficiency", "sample_efficiency.csv")
cfg, table = run("sample-efficiency", args)
print(f"{'M':>6} {'PFD':>10} {'W2':>10} {'KL':>10}   (median relative error)")
for m in cfg.samples:
    med = [np.median(table.values(k, str(m))) for k in ("pfd_rel_err", "w2_rel_err", "kl_rel_err")]
    print(f"{m:>6} " + " ".join(f"{v:10.3e}" for v in med))
