"""
Emotion maps: decision regions of the embedding space
=====================================================

Paint every cell of a grid over the embedding space with the class its
coordinate predicts. A 2-d projection maps onto a plane; the normalized
3-d variant lives on the unit sphere, so its map is a theta-phi grid.
Per-class F1 labels are overlaid at each region's centroid.
"""

from pathlib import Path

from cake.data import SynthConfig, bundle_arrays, synth_generate
from cake.model import ModelConfig, embed_many
from cake.trainer import TrainConfig, train
from cake.vizmap import emit_map_image, plan_grid, render_emotion_map, scatter_av

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

scfg = SynthConfig(
    n_domains=2,
    seed=67,
    dim=12,
    noise_sigma=0.4,
    train_counts=[160, 120],
    test_counts=[70, 50],
)
train_b, test_b = synth_generate(scfg)


def fit(variant, k):
    tcfg = TrainConfig(
        model=ModelConfig(variant=variant, k=k, dim=12, n_domains=2,
                          dropout_rate=0.1, seed=5),
        seed=5,
        batch_size=16,
        max_epochs=15,
        eval_every=3,
        lr=5e-3,
    )
    result = train(train_b, test_b, tcfg)
    print(f"{variant} k={k}: weighted macro f1 {result.best_f1:.4f}")
    return result


# plane map of the 2-d projection, grid ranges fit to the observed cloud
flat = fit("cake", 2)
arrays = bundle_arrays(train_b)
cloud = embed_many(flat.params, flat.cfg, arrays.x)
grid = plan_grid(flat.cfg, cloud, resolution=160)
emap = render_emotion_map(flat.params, flat.cfg, grid, 0, test_bundle=test_b)
emit_map_image(emap, str(OUT / "plane_map.ppm"), format="raster")
emit_map_image(emap, str(OUT / "plane_map.svg"), format="vector")
print(f"plane map: {grid.shape[0]}x{grid.shape[1]} cells, "
      f"x {grid.x_min:+.2f}..{grid.x_max:+.2f}, y {grid.y_min:+.2f}..{grid.y_max:+.2f}")

# the normalized 3-d variant is mapped on the sphere instead
sphere = fit("cake_norm", 3)
sgrid = plan_grid(sphere.cfg, resolution=120)
semap = render_emotion_map(sphere.params, sphere.cfg, sgrid, 0, test_bundle=test_b)
emit_map_image(semap, str(OUT / "sphere_map.ppm"), format="raster")
print(f"sphere map: {sgrid.shape[0]} theta x {sgrid.shape[1]} phi cells")

# where the raw arousal-valence annotations sit
scatter_av(test_b, str(OUT / "av_scatter.svg"))
print("wrote plane_map.ppm, plane_map.svg, sphere_map.ppm, av_scatter.svg")
