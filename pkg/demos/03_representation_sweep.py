"""
How many dimensions does an emotion embedding need?
===================================================

Sweep the projection size on the shipped benchmark corpus with every
other knob held fixed, seed included. The move from 2 to 3 dimensions
buys a large jump; past 3 the gains flatten out. Takes about half a
minute: five full training runs on 2000 samples.
"""

from pathlib import Path

from cake.benchmark import BENCHMARK_KS, benchmark_synth_config, benchmark_train_config
from cake.data import synth_generate
from cake.trainer import sweep_csv, sweep_representation_size

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

train_b, test_b = synth_generate(benchmark_synth_config())
tcfg = benchmark_train_config(variant="cake", k=3)

rows = sweep_representation_size(train_b, test_b, tcfg, BENCHMARK_KS, log=None)
csv = sweep_csv(rows)
print(csv, end="")
(OUT / "sweep.csv").write_text(csv)

f1 = {row.k: row.f1_weighted for row in rows}
print(f"\n3d over 2d: {f1[3] - f1[2]:+.4f}")
print(f"4d over 3d: {f1[4] - f1[3]:+.4f}")
print(f"6d over 4d: {f1[6] - f1[4]:+.4f}")
