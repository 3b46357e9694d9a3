"""chartlab: channel charting from CSI dissimilarity metrics.

Datasets of multi-array CSI snapshots are compared with classical and
learned dissimilarity metrics, optionally geodesic-lifted over a k-NN
graph, embedded into 2-D charts (MDS, Sammon, t-SNE, Isomap, or neural
charting functions), and scored against ground-truth positions.
"""

from .dataset import (CsiDatapoint, CsiDataset, TapWindow, compute_features,
                      feature_matrix, from_time_domain, to_time_domain)
from .dissimilarity import (DissimilarityMatrix, FuseConfig, calibrate_gamma,
                            fuse_matrices, pairwise_matrix)
from .embed import ChannelChart, EmbedConfig, isomap, mds, sammon, tsne
from .errors import (CalibrationError, ChartLabError, DataError,
                     GraphDisconnectedError, NumericalError)
from .evaluation import (EvalReport, continuity_trustworthiness, error_cdf,
                         evaluate_chart, evaluate_matrix, kruskal_stress,
                         optimal_affine_mae, rajski_distance)
from .geodesic import KnnGraph, build_knn_graph, geodesic_matrix, lift
from .nn import (MlpModel, predict_chart, select_triplets,
                 train_dissimilarity_model, train_siamese, train_triplet)
from .synth import (SceneSpec, TrajectorySpec, default_scene,
                    default_trajectory, generate_trajectory, synthesize_csi)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
