"""
Train a compact emotion embedding over frozen features
======================================================

A 2-d linear projection of 16-d features, one softmax head per domain,
trained with the class/dataset-weighted cross entropy. The best-scoring
parameters survive to the checkpoint; loading it back reproduces the
evaluation bit for bit.
"""

from pathlib import Path

from cake.data import SynthConfig, synth_generate
from cake.model import ModelConfig, load_checkpoint, predict, save_checkpoint
from cake.trainer import TrainConfig, evaluate_domains, history_csv, train

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

scfg = SynthConfig(
    n_domains=2,
    seed=23,
    dim=16,
    noise_sigma=0.45,
    train_counts=[150, 100],
    test_counts=[60, 40],
    domain_names=["labA", "labB"],
)
train_b, test_b = synth_generate(scfg)

tcfg = TrainConfig(
    model=ModelConfig(variant="cake", k=2, dim=16, n_domains=2,
                      dropout_rate=0.1, seed=7),
    seed=7,
    batch_size=16,
    max_epochs=12,
    eval_every=2,
    lr=5e-3,
)
result = train(train_b, test_b, tcfg, log=print)
print(f"best epoch {result.best_epoch}: weighted macro f1 {result.best_f1:.4f}")

scores = evaluate_domains(result.params, result.cfg, test_b)
for j, meta in enumerate(test_b.domains):
    print(f"  {meta.name}: macro f1 {scores.f1[j]:.4f}, accuracy {scores.acc[j]:.4f}")

ckpt = OUT / "compact.cakeckpt"
save_checkpoint(str(ckpt), result.cfg, result.params)
(OUT / "compact_history.csv").write_text(history_csv(result.history, 2))
print(f"wrote {ckpt}")

cfg2, params2, _ = load_checkpoint(str(ckpt))
rescored = evaluate_domains(params2, cfg2, test_b)
print("reloaded checkpoint scores identically:", rescored.f1_weighted == scores.f1_weighted)

# single-record inference goes through the same path
rec = test_b.records[0]
print(f"record {rec.id}: true class {rec.label}, "
      f"predicted {predict(params2, cfg2, rec, rec.domain_id)}")
