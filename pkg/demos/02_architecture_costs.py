"""
Architecture cost comparison
============================

Builds the four detector variants and prints the numbers the compression
story rests on: the shuffle backbone plus the two-level neck cuts the
parameter count by almost 5x against the dense-block baseline.

  s+p  shuffle backbone + two-level neck (the compressed model)
  s    shuffle backbone + full three-level neck
  p    dense-block backbone + two-level neck
  base-csp  dense-block backbone + full neck (cost baseline)
"""

from yofflenet import analyze, build_yofflenet

reports = {v: analyze(build_yofflenet(v)) for v in ("s+p", "s", "p", "base-csp")}

print(f"{'variant':<10} {'params':>12} {'MACs@416':>16} {'fp16 file':>12} {'heads':>6}")
for variant, rep in reports.items():
    heads = sum(1 for lc in rep.layers if lc.kind == "detect")
    print(f"{variant:<10} {rep.total_params:>12,} {rep.total_macs:>16,} "
          f"{rep.weight_file_bytes['f16'] / 1e6:>9.2f} MB {heads:>6}")

base = reports["base-csp"].total_params
spp = reports["s+p"].total_params
print(f"\ncompression ratio base-csp/s+p: {base / spp:.2f}x")

# Where the savings come from: the five most expensive layers per model.
for variant in ("base-csp", "s+p"):
    rows = sorted(reports[variant].layers, key=lambda lc: -lc.params)[:5]
    print(f"\nheaviest layers in {variant}:")
    for lc in rows:
        print(f"  {lc.id:<10} {lc.kind:<16} {lc.params:>10,} params")
