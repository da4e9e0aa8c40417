"""
Weight files
============

Seeded random weights for a graph, serialized as an ordered binary
container (docs/weight_format.md) with a CRC32 trailer. Half precision
is a storage format: 2 bytes per scalar on disk, float32 in memory.
"""

import tempfile
from pathlib import Path

import numpy as np

from yofflenet import analyze, build_yofflenet, init_random, load, save

graph = build_yofflenet("s+p")
report = analyze(graph)
store = init_random(graph, seed=7, dtype="f16")

print("entries:", len(store))
print("scalars:", store.total_scalars(), "== analyzer params:", report.total_params)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "sp_f16.yofw"
    save(store, path)
    size = path.stat().st_size
    print(f"file size {size:,} B = {size / 1e6:.2f} MB "
          f"(predicted {report.weight_file_bytes['f16']:,} B)")

    back = load(path)  # verifies the checksum on the way in
    same = all(
        np.array_equal(store.get(n).data, back.get(n).data) for n in store.names()
    )
    print("reload bit-identical:", same)

    # flip one payload byte and the loader refuses the file
    blob = bytearray(path.read_bytes())
    blob[100] ^= 0x01
    path.write_bytes(bytes(blob))
    try:
        load(path)
    except Exception as exc:
        print("tampered file rejected:", type(exc).__name__, "-", exc)
