"""One-off pilot run that fixes the detection thresholds used in acceptance.

Uses a seed distinct from the acceptance seed and writes the raw numbers to
``src/ucadoa/data/pilot_calibration.json``.  Re-running overwrites the file.
"""

import json
import pathlib
import sys

import numpy as np

from ucadoa.experiments import (
    coherent_scenario,
    reference_awgn_scenario,
    reference_toeplitz_scenario,
    run_trial,
)

PILOT_SEED = 1
THRESHOLDS_DEG = (0.5, 1.0, 2.0, 3.0, 5.0)
OUT = pathlib.Path(__file__).resolve().parents[1] / "src/ucadoa/data/pilot_calibration.json"


def pilot(scn):
    rows = [run_trial(scn, t) for t in range(scn.n_trials)]
    out = {}
    for k, name in enumerate(scn.estimators):
        res = [r[k] for r in rows]
        worst = np.array([max(r.errors_gc_deg) for r in res])
        out[name] = {
            "failures": sum(1 for r in res if r.failure),
            "all_detected_rate_by_threshold": {
                f"{t:g}": float(np.mean(worst <= t)) for t in THRESHOLDS_DEG
            },
            "worst_source_error_deg_quantiles": {
                q: (float(np.quantile(worst, float(q))) if np.isfinite(worst).all() else None)
                for q in ("0.5", "0.9")
            },
        }
    return out


def main():
    runs = {
        "awgn_snr10_k100": reference_awgn_scenario(seed=PILOT_SEED, estimators=("mpm", "pm", "music")),
        "toeplitz_snr10_k100": reference_toeplitz_scenario(seed=PILOT_SEED),
        "coherent_pair_snr10_k100": coherent_scenario(seed=PILOT_SEED),
    }
    doc = {
        "detection_threshold_deg": 2.0,
        "min_all_detected_rate": 0.9,
        "coherent_min_miss_rate": 0.9,
        "pilot_seed": PILOT_SEED,
        "pilot_trials": 50,
        "pilot": {name: pilot(scn) for name, scn in runs.items()},
    }
    OUT.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    json.dump(doc["pilot"], sys.stdout, indent=2)


if __name__ == "__main__":
    main()
