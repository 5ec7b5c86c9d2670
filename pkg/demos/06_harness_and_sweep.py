"""The experiment harness: declarative configs, deterministic reports,
and noise-rate sweeps.

A single JSON-style config describes dataset, noise, method, and training;
`run_experiment` executes the pipeline and emits a report that is
byte-for-byte reproducible given the same seed (wall time aside).
"""

import json

from noisylab.harness import (report_json, run_experiment, strip_wall_time,
                              sweep, sweep_summary_csv, write_report)

config = {
    "seed": 7,
    "dataset": {"kind": "blobs", "k": 3, "n_per_class": 200, "d": 2,
                "separation": 8.0},
    "test_fraction": 0.25,
    "noise": {"kind": "symmetric", "rho": 0.3},
    "method": {"loss": {"kind": "forward", "transition": "true"}},
    "train": {"epochs": 20, "batch_size": 32, "learning_rate": 0.1},
}

report = run_experiment(config)
fm = report["final_metrics"]
print("forward-corrected CE at rho=0.3:")
print(f"  accuracy {fm['accuracy']:.4f}  macro-F1 {fm['macro_f1']:.4f}  "
      f"ECE {fm['ece']:.4f}")

# Determinism: the same config reproduces the same report bytes.
again = run_experiment(config)
same = (report_json(strip_wall_time(report))
        == report_json(strip_wall_time(again)))
print(f"re-run byte-identical (wall time excluded): {same}")

write_report(report, "/tmp/noisylab_demo_report.json")
print("wrote /tmp/noisylab_demo_report.json (+ per-epoch CSV)")

# -- noise-rate sweep --------------------------------------------------------
template = {
    "seed": 101,
    "dataset": {"kind": "blobs", "k": 3, "n_per_class": 200, "d": 2,
                "separation": 8.0},
    "test_fraction": 0.25,
    "train": {"epochs": 30, "batch_size": 32, "learning_rate": 0.1},
}
rhos = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
reports, summary, r2 = sweep(template, rhos)
print("\nbaseline CE test error vs symmetric noise rate:")
for row in summary:
    print(f"  rho {row['rho']:.1f}: error {row['test_error']:.4f}")
print(f"quadratic fit R^2 = {r2:.3f} "
      "(test error grows smoothly with the noise rate)")
print("\nsweep summary CSV:")
print(sweep_summary_csv(summary))
