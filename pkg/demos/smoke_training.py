"""Short adversarial training run on procedural faces.

Run: python demos/smoke_training.py [--steps 50]
"""

import argparse

from morphlab import GeneratorConfig
from morphlab.training import gan_smoke_train, procedural_faces

ap = argparse.ArgumentParser()
ap.add_argument("--steps", type=int, default=50)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

faces = procedural_faces(64, 16, seed=args.seed)
result = gan_smoke_train(GeneratorConfig.small(16), faces, steps=args.steps, seed=args.seed)

print("step  d_loss   g_loss   D(real)  D(fake)")
for step in range(0, args.steps, max(1, args.steps // 10)):
    print(f"{step:4d}  " + "  ".join(f"{v:7.3f}" for v in result.trace[step]))
print(f"final D(real) {result.final_real:.3f}, D(fake) {result.final_fake:.3f}")
