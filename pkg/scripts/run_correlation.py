"""PFD vs sample W2 over random 5-component GMM pairs; prints Pearson r."""

from _common import parse, run

args = parse("correlation", "correlation.csv")
cfg, table = run("correlation", args)
print(f"Pearson r over {len(table.values('pfd'))} trials: {table.values('pearson_r')[0]:.4f}")
