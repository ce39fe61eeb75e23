"""Ready-made run configurations for the two desk-scale experiments.

Both are plain dicts in the CLI's config schema; scripts/ dumps them to
JSON and drives the commands. Coefficient decade offsets declare coarse
expected orders of magnitude (a units choice for the generator output),
not the exact values being identified.
"""

from __future__ import annotations

# single-DOF oscillator with cubic stiffness: m=0.05 kg, free decay from
# xd(0)=5 m/s for identification, 3 and 8 m/s for validation, 1 s at 10 kHz
DUFFING_TRUTH = {"b": 0.5, "b_nl": 4000.0, "k": 300.0, "k_nl": 3e8}


def duffing_config(max_epochs: int = 1000, seed: int = 42,
                   approach_three_stride: int = 1) -> dict:
    return {
        "seed": seed,
        "model": {
            "kind": "duffing",
            "masses_kg": [0.05],
            "coefficients": [
                {"name": "b", "unit": "N*s/m", "encoding": "sci", "scale_decades": 0},
                {"name": "b_nl", "unit": "N*s/m^3", "encoding": "sci", "scale_decades": 3},
                {"name": "k", "unit": "N/m", "encoding": "sci", "scale_decades": 2},
                {"name": "k_nl", "unit": "N/m^3", "encoding": "sci", "scale_decades": 8},
            ],
        },
        "simulate": {
            "truth": dict(DUFFING_TRUTH),
            "sample_rate_hz": 10000.0,
            "duration_s": 1.0,
            "datasets": [
                {"label": "train_v5", "initial_state": [0.0, 5.0]},
                {"label": "val_v3", "initial_state": [0.0, 3.0]},
                {"label": "val_v8", "initial_state": [0.0, 8.0]},
            ],
        },
        "datasets": {
            "training": "train_v5",
            "validation": ["val_v3", "val_v8"],
        },
        "train": {
            "max_epochs": max_epochs,
            "batch_size": 300,
            "learning_rate": 1e-4,
            "latent_dim": 16,
            "gamma": 1.0,
            "seed": seed,
        },
        "select": {
            "approaches": ["one", "two", "three"],
            "n_samples": 1000,
            "from_epoch": 400,
            "stride": approach_three_stride,
        },
        "sindy": {
            "library": ["q0", "q0^3", "v0", "q0^2*v0"],
            "threshold": 0.1,
        },
    }


# two coupled 1.37 kg oscillators, power-law coupling alpha*(x-y)|x-y|^beta,
# impulse hammer hits on the second mass; 8 s at 2048 Hz decimated to 256 Hz
TWODOF_TRUTH = {
    "b1": 3.8405,
    "b2": 0.78563,
    "k1": 19273.0,
    "k2": 1947.6,
    "alpha": 2.7641e7,
    "beta": 2.0012,
}


def twodof_config(max_epochs: int = 6000, seed: int = 42,
                  approach_three_stride: int = 8) -> dict:
    def impulse(label, amplitude):
        return {
            "label": label,
            "initial_state": [0.0, 0.0, 0.0, 0.0],
            "force": {
                "kind": "half_sine",
                "amplitude_n": amplitude,
                "duration_s": 0.006,
                "dof": 1,
            },
        }

    return {
        "seed": seed,
        "model": {
            "kind": "coupled_power_law",
            "masses_kg": [1.37, 1.37],
            "coefficients": [
                {"name": "b1", "unit": "N*s/m", "encoding": "direct"},
                {"name": "b2", "unit": "N*s/m", "encoding": "direct"},
                {"name": "k1", "unit": "N/m", "encoding": "sci", "scale_decades": 4},
                {"name": "k2", "unit": "N/m", "encoding": "sci", "scale_decades": 3},
                {"name": "alpha", "unit": "N/m^(beta+1)", "encoding": "sci", "scale_decades": 7},
                {"name": "beta", "unit": "", "encoding": "direct"},
            ],
        },
        "simulate": {
            "truth": dict(TWODOF_TRUTH),
            "sample_rate_hz": 2048.0,
            "duration_s": 8.0,
            "datasets": [
                impulse("impact_530", 530.0),
                impulse("impact_37", 37.0),
                impulse("impact_899", 899.0),
            ],
        },
        "datasets": {
            "training": "impact_530",
            "validation": ["impact_37", "impact_899"],
        },
        "preprocess": {
            "target_rate_hz": 256.0,
            "start_at_s": 0.05,
        },
        "train": {
            "max_epochs": max_epochs,
            "batch_size": 300,
            "learning_rate": 1e-4,
            "latent_dim": 16,
            "gamma": 1.0,
            "seed": seed,
        },
        "select": {
            "approaches": ["one", "two", "three"],
            "n_samples": 1000,
            "from_epoch": 3000,
            "stride": approach_three_stride,
        },
        "sindy": {
            "library": ["q0", "q1", "v0", "v1", "(q0-q1)^3"],
            "threshold": 0.1,
        },
    }
