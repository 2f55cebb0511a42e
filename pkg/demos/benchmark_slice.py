"""A small slice of the synthetic benchmark.

Samples N=5 ground-truth graphs, generates rollouts from each, scores every
method against the true indicator with AUC-PR and AUC-ROC, and prints the
aggregate table. The training budget here is far below the library default,
so the MPIR numbers are a rough preview; expect around ten minutes.
"""
from mpir import report
from mpir.cli_io import benchmark_body
from mpir.discovery import RunConfig
from mpir.evaluation import BenchmarkConfig, run_benchmark

config = BenchmarkConfig(mpir=RunConfig(epochs=1500, learning_rate=1e-3), random_count=1000)
methods = ["mpir", "linear_granger", "kernel_granger", "mutual_information", "elastic_net", "gaussian_random"]
result = run_benchmark(methods, [5], [0, 30, 60], config)
print(report.benchmark_table(benchmark_body(result)))
