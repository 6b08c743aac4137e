"""
Default hyper-parameters, manifest schema, and synthetic dataset presets.
"""

RUN_DEFAULTS = {
    "xi": 1.0,
    "eta": 0.05,
    "max_iter": 100,
    "conv_rel_tol": 1e-3,
    "conv_patience": 3,
    "literal_eq9": False,
    "balance": True,
    "shuffle_rows": False,
    "dup_threshold": 1e-6,
    "workers": 1,
}

# merge_radius defaults to this factor times sqrt(d) (normalized units)
MERGE_RADIUS_FACTOR = 0.01

PARTICIPATION_DEFAULTS = {
    "low": 0.2,
    "high": 1.0,
    "resample_empty": True,
}

MANIFEST_DEFAULTS = {
    "trials": 1,
    "seed": 0,
    "output_dir": "afcl_runs",
}

SYNTH_DEFAULTS = {
    "stddev": 0.5,
    "separation": 4.0,
    "seed": 0,
}

# Allowed keys per manifest section; anything else is rejected
MANIFEST_SCHEMA = {
    "": {"trials", "seed", "output_dir", "dataset", "partitioning", "run"},
    "dataset": {"path", "has_header", "label_col", "preset", "synth"},
    "dataset.synth": {"blobs", "n", "d", "stddev", "separation", "seed"},
    "partitioning": {"clients", "seed"},
    "run": set(RUN_DEFAULTS) | {"k0", "k_star", "merge_radius", "participation"},
    "run.participation": {"probs", "low", "high", "resample_empty"},
}

SYNTH_PRESETS = {
    "sd1": {
        "name": "Synthetic Dataset 1 analogue",
        "blobs": 4,
        "n": 2300,
        "d": 2,
    },
    "sd2": {
        "name": "Synthetic Dataset 2 analogue",
        "blobs": 5,
        "n": 2900,
        "d": 2,
    },
}
