"""E_gen, E_mem and M-distance of a student built from N teacher draws."""

import numpy as np

from _common import parse, run

args = parse("mtog-sweep", "mtog_sweep.csv", builder=True)
cfg, table = run("mtog-sweep", args, builder=args.builder)
print(f"{'N':>6} {'E_gen':>10} {'E_mem':>10} {'M-dist':>10}   (median over trials, builder={args.builder})")
for n in cfg.samples:
    med = [np.median(table.values(k, str(n))) for k in ("e_gen", "e_mem", "m_distance")]
    print(f"{n:>6} " + " ".join(f"{v:10.4f}" for v in med))
