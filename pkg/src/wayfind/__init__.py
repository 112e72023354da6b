"""Decision-point prediction for indoor wayfinding.

Models a multi-story building as a graph of decision points, maps positional
trajectories onto decision sequences, featurizes them into lagged
classification samples, and trains and evaluates classifiers over them,
with a synthetic trajectory generator for end-to-end validation.
"""

__version__ = "0.1.0"

from .dataset import (
    Dataset,
    LabelEncoder,
    PersonProfile,
    PROFILE_FIELDS,
    Sample,
    SplitConfig,
    build_dataset,
    dataset_hash,
    fit_label_encoder,
    fit_profile_encoders,
    make_lagged_samples,
    split,
    split_indices,
    strip_profiles,
)
from .mapping import (
    ControlPointPair,
    DecisionSequence,
    FloorTransform,
    MappingConfig,
    MappingError,
    Trajectory,
    assign_level,
    estimate_floor_transforms,
    estimate_transform,
    extract_decision_sequence,
    infer_z_ranges,
    map_point,
    snap_to_node,
)
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    accuracy,
    balanced_accuracy,
    confusion_matrix,
    evaluate,
    evaluate_model,
    group_eval,
    per_class_recall,
    per_node_report,
)
from .models import (
    ForestParams,
    LogisticModel,
    MLRConfig,
    RandomForestModel,
    feature_importance_fscore,
    mcfadden_pseudo_r2,
    mlr_predict,
    mlr_train,
    rf_predict,
    rf_train,
    top_nodes,
)
from .network import (
    IndoorNetwork,
    Link,
    LinkKind,
    NetworkError,
    Node,
    NodeKind,
    build_network,
    describe,
    hop_distances,
    neighbors,
    serialize,
    shortest_path,
    validate_numbering,
)
from .experiments import (
    ExperimentReport,
    SweepSpec,
    compare_baselines,
    per_task_models,
    profile_ablation,
    render_report,
    sweep,
    usage_stats,
)
from .synthetic import (
    AgentPolicy,
    BuildingSpec,
    SynthConfig,
    TaskSpec,
    build_building,
    default_policies,
    default_tasks,
    default_virtual_transforms,
    generate_profiles,
    generate_sequences,
    make_control_points,
    sequences_to_trajectories,
)

__all__ = [name for name in dir() if not name.startswith("_")]
