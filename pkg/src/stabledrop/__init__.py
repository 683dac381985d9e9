"""Stable placement toolkit: statics, expert planning, pose diffusion."""

from .bench import (EvalReport, eval_robustness, eval_time, eval_validity,
                    run_benchmark)
from .cloud import Observation, featurize, local_context
from .geom import gram_schmidt_6d, identity_pose, pose_of, rot6_of, rotation_of
from .guide import (GuidanceConfig, sample_placements, stability_grad,
                    stability_loss)
from .planner import (PlacementOutcome, generate_dataset, load_dataset,
                      sample_expert_placement, validate_placement)
from .render import render_field_svg
from .scenes import (SCENE_NAMES, build_scene, default_object, load_scene,
                     save_scene)
from .score import (Checkpoint, TrainConfig, load_checkpoint, save_checkpoint,
                    train)
from .statics import (detect_contacts, equilibrium_feasible, robustness,
                      robustness_field)

__version__ = "0.1.0"
