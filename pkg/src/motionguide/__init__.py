"""Training-free motion factorization engine.

Pipeline: compositional prompt -> motion graph -> per-frame box layout
-> guidance masks over spatio-temporal token pairs -> gradient-based or
score-bias attention modulation.
"""

from .attention import (AttentionContext, DIT_DEFAULTS, GuidanceConfig,
                        LatentState, ToyBackend, UNET_DEFAULTS, attention_map,
                        dit_biased_attention, guidance_schedule, run_toy_denoise,
                        unet_guidance_step, unet_loss, unet_loss_gradient)
from .features import (FeatureVolume, SyntheticSceneSpec, default_signatures,
                       load_volume, save_volume, synthesize_features)
from .graph import (InstanceNode, KinematicHint, MotionCategory, MotionGraph,
                    RelationEdge, RelationKind, validate_graph)
from .guidance import (GuidanceBundle, build_guidance, build_motionless_mask,
                       build_nonrigid_mask, build_rigid_mask, build_shape_template,
                       box_deformation, deformation_penalty, displacement_penalty,
                       perceptual_deformation, segment_foreground,
                       select_reference_frame, warp_template)
from .layout import (BoundaryDisplacement, BoundingBox, KinematicsState,
                     SceneLayout, Track, derive_boundary_displacements,
                     estimate_kinematics, place_initial_boxes, plan_layout,
                     step_motionless, step_nonrigid, step_rigid)
from .lexicon import Lexicon, default_lexicon, load_lexicon
from .masks import BlockSparseMask, TokenGrid, compose_masks
from .parser import classify_motion, parse_prompt
from .planner import PlannerEndpointConfig, request_graph, request_layout

__version__ = "0.1.0"
