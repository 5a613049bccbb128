"""Vulnerability and detection metrics on a simulated score table.

Run: python demos/metrics_report.py
"""

import numpy as np

from morphlab import metrics
from morphlab.metrics import DemorphTrial, MorphTrial, format_percent

rng = np.random.default_rng(5)

# Genuine, impostor and morph comparison scores from overlapping normals.
non_mated = rng.normal(0.2, 0.1, 2000)
tau = metrics.fmr_threshold(non_mated, 0.01)
print(f"threshold at FMR 1%       {tau:.4f}")

trials = [MorphTrial(f"m{i}", *rng.normal(0.45, 0.12, 2)) for i in range(200)]
print(f"MMPMR                     {format_percent(metrics.mmpmr(trials, tau))}")

restorations = [DemorphTrial(f"t{i}", rng.normal(0.5, 0.15), rng.normal(0.25, 0.15))
                for i in range(200)]
print(f"demorphing accuracy       "
      f"{format_percent(metrics.demorph_accuracy(restorations, tau))}")

attack = rng.normal(0.7, 0.15, 300)
bonafide = rng.normal(0.35, 0.15, 300)
report = metrics.detection_report(attack, bonafide, 0.5)
for name in ("apcer", "bpcer", "acer", "accuracy", "d_eer"):
    print(f"{name:<25} {format_percent(getattr(report, name))}")
print(f"D-EER threshold           {report.d_eer_threshold:.4f}")

# Exact rates are available as fractions.
print(f"APCER as a fraction       {metrics.apcer(attack, 0.5, exact=True)}")
