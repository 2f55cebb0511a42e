"""Find a planted copy relation next to an unrelated bystander series.

``x2`` copies ``x1`` one step later; ``x3`` is white noise. Each target gets
its own noisy-input predictor, and the learned noise levels turn into the
strength matrix ``W[j, i]``. Fake series (permuted copies of real inputs)
give the null level used for thresholding.

Run with ``python3 demos/copy_edge.py``; it takes a few seconds.
"""
import numpy as np

from mpir import report
from mpir.discovery import RunConfig, infer_matrix, significance_threshold
from mpir.synth import TimeSeriesBundle

rng = np.random.default_rng(0)
x = rng.standard_normal((2003, 3))
x[1:, 1] = x[:-1, 0] + 0.1 * x[1:, 1]
bundle = TimeSeriesBundle([x[:, :, None]], ["x1", "x2", "x3"])

# a short, fast schedule; the library default is 30000 epochs at lr 1e-4
config = RunConfig(epochs=400, warmup=40, learning_rate=1e-2)
W = significance_threshold(infer_matrix(bundle, config), config.alpha)

print("raw strengths in nats, rows are sources (fake series at the bottom):")
print(report.format_matrix(W.raw, W.input_names, W.target_names))
print(f"\nthreshold at the {1 - config.alpha:.0%} fake quantile: {W.threshold:.3f}")
off = W.thresholded * (1 - np.eye(3))
print("\nsurviving off-diagonal entries:")
for j, i in zip(*np.nonzero(off)):
    print(f"  {W.input_names[j]} -> {W.target_names[i]}: {off[j, i]:.3f} nats")
