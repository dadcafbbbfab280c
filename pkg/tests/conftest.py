import pytest
import yaml


def small_experiment_doc(**training_overrides):
    training = {
        "learning_rate": 0.05,
        "steps": 40,
        "k": 3,
        "mining_mode": "moderate_plus_hard_negative",
        "seed": 1,
        "record_every": 20,
        "val_anchors": 8,
    }
    training.update(training_overrides)
    return {
        "dataset": {
            "synthetic": {
                "num_identities": 9,
                "samples_per_view": 3,
                "input_dim": 8,
                "manifold_curvature": 3.0,
                "intra_class_spread": 0.4,
                "view_offset_magnitude": 0.3,
                "seed": 7,
            },
            "split_fractions": [0.6, 0.2, 0.2],
            "split_seed": 2,
        },
        "embedder": {
            "num_branches": 2,
            "overlap_fraction": 0.0,
            "branch_hidden_dims": [5],
            "joint_hidden_dim": 8,
            "output_dim": 6,
            "seed": 3,
        },
        "training": training,
        "evaluation": {"gallery_draws": 4, "ranks": [1, 2], "seed": 5},
        "ablation": {"seeds": 2, "lambdas": []},
    }


@pytest.fixture
def small_config_path(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(small_experiment_doc()))
    return path
