"""End-to-end miniature: generate data, train briefly, translate, score.

A few hundred iterations is nowhere near convergence, but it is enough to
watch the reconstruction loss fall and the translated-vs-baseline Frechet
distance move. The acceptance suite runs the full 2,000-iteration version.
"""

from pathlib import Path

import numpy as np

from domainswap.config import RunConfig
from domainswap.data import default_domain_specs, generate_dataset, save_image, load_image
from domainswap.fid import FeatureExtractor, evaluate_translation
from domainswap.tensor import Tensor, no_grad
from domainswap.training import load_checkpoint, run_training

root = Path("demo-output/minirun")
for spec in default_domain_specs(size=16, count=60, seed=7):
    generate_dataset(spec, root / "data")
print("dataset ready")

cfg = RunConfig(data_root=str(root / "data"), out_dir=str(root / "out"),
                iters=300, checkpoint_every=300, seed=0)
final = run_training(cfg)
log = (root / "out" / "train.log").read_text().splitlines()


def image_recon(line):
    fields = dict(part.split("=") for part in line.split())
    return float(fields["image_1"]) + float(fields["image_2"])


print(f"trained {cfg.iters} iterations")
print(f"  image reconstruction, first 30 steps: {np.median([image_recon(l) for l in log[:30]]):.3f}")
print(f"  image reconstruction, last 30 steps:  {np.median([image_recon(l) for l in log[-30:]]):.3f}")

model = load_checkpoint(final).model
src = sorted((root / "data" / "a").glob("*.png"))[0]
x = load_image(src)
grid = [x.data]
with no_grad():
    for j in range(3):
        style = model.draw_style(np.random.default_rng((0, j)))
        out = model.translate(Tensor(x.data[None]), style, source_domain=1)
        grid.append(out.data[0])
save_image(np.concatenate(grid, axis=2), root / "translation_grid.png")
print(f"wrote {root / 'translation_grid.png'} (input | 3 style draws)")

report = evaluate_translation(model, root / "data" / "a", root / "data" / "b",
                              n_styles=1, seed=0, extractor=FeatureExtractor())
for line in report.lines():
    print(" ", line)
print("(absolute values use the fixed random extractor; only the comparison matters)")
