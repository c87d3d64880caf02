"""shotpose: embedding, clustering, and evaluation of soccer shot pose sequences."""

from .analysis import (
    ClusterModel, PcaModel, TsneEmbedding, flatten_sequence, kmeans_fit,
    pca_fit, pca_transform, tsne_embed, unflatten_sequence,
)
from .dataset import (
    BoundingBox, Dataset, Pose2D, Pose3D, ShotClip, load_dataset,
    load_shot_clip, save_dataset, save_shot_clip, select_shooter_pose,
    validate_dataset,
)
from .joints import BUILTIN_JOINT_MAPS, JointMap, get_joint_map, load_joint_map
from .kinematics import (
    NormalizedSequence, ShotStats, ankle_travel, compare_clusters, denormalize,
    knee_angle, normalize, shooting_foot, shot_stats,
)
from .metrics import (
    ClipScores, DetectionSet, HotaResult, ScoredBox, TrackSet, TrackletScore,
    detection_pr_ap, hota, iou, pdj, pdj_auc, pdj_by_group, pdj_curve,
    selection_metrics,
)
from .model import (
    AutoencoderConfig, EncoderState, LatentVector, PoseAutoencoder,
    SkeletonAdjacency, build_adjacency, decode, embed_dataset, encode,
    encode_states, load_checkpoint, reconstruct, save_checkpoint, train,
)
from .synthetic import STYLE_COMPACT, STYLE_WIDE, generate_dataset, motion_sequence

__version__ = "0.1.0"
