"""Dexterous-grasp toolkit: human-to-robot grasp retargeting, joint-dynamics
system identification, gravity compensation, and grasp evaluation.

Set FUNGRASP_BACKEND=numpy to run the pure-numpy kernels instead of the
numba JIT ones; FUNGRASP_THREADS caps internal workers.
"""

from .backend import ACTIVE as active_backend
from .transforms import Pose6D
from .hand_model import (
    MANO_JOINT_NAMES,
    DescriptionError,
    Link,
    RobotHandModel,
    forward_kinematics,
    link_directions,
    parse_robot_description,
    position_jacobian,
    serialize_robot_description,
)
from .grasps import (
    HumanGrasp,
    RobotGrasp,
    human_grasp_from_json,
    human_grasp_to_json,
    robot_grasp_from_json,
    robot_grasp_to_json,
)
from .geometry import (
    MeshError,
    ObjError,
    TablePlane,
    TriMeshObject,
    derive_contacts,
    load_obj,
    nearest_point,
    parse_obj,
    save_obj,
    sdf_gradient,
    signed_distance,
    table_distance,
)
from .retarget import (
    RetargetConfig,
    RetargetResult,
    RetargetWeights,
    initialize_grasp,
    loss_col,
    loss_fc,
    loss_joints,
    loss_pen,
    loss_pos,
    optimize_grasp,
    write_loss_csv,
)
from .dynamics import (
    ActuatorParams,
    JointTrajectory,
    ParamRange,
    RandomizationConfig,
    SimConfig,
    TrajectoryFormatError,
    gravity_torques,
    initial_state,
    load_trajectory,
    randomization_config_from_json,
    rollout,
    sample_randomization,
    save_trajectory,
    step,
    trajectory_from_jsonl,
    trajectory_to_jsonl,
)
from .sysid import (
    CmaesConfig,
    SysidResult,
    cmaes_minimize,
    identify,
    multisine_commands,
    sim_real_loss,
    sysid_result_to_json,
    write_generation_csv,
)
from .rewards import (
    FeatureVector,
    RewardWeights,
    SimState,
    contact_weight,
    extract_features,
    feature_layout,
    loss_action_imitation,
    loss_contact_reconstruction,
    metric_contact_ratio,
    metric_simd,
    metric_success,
    reward_contact,
    reward_pose,
    reward_position,
    reward_safety,
    total_reward,
)

__version__ = "0.1.0"
