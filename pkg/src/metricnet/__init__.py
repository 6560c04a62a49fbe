"""Metric-learning embeddings: contrastive, triplet, N-pair and constellation
losses with analytic gradients, batch builders, an MLP embedder and the
embedding-quality evaluation protocol."""

from .batching import (
    ConstellationBatch,
    NPairBatch,
    TripletIndexSet,
    build_constellation_batch,
    build_npair_batch,
    mine_triplets,
    sample_balanced_batch,
)
from .data import LabeledDataset, augment_grid, load_csv, save_csv, stratified_kfold, synth_gaussian_clusters
from .evaluation import EvalReport, classification_scores, davies_bouldin, knn_classify, pca_project_2d, silhouette
from .harness import ExperimentConfig, RunReport, run_experiment
from .losses import LossHyper, LossResult, constellation_loss, contrastive_loss, finite_diff_grad, npair_loss, triplet_loss
from .model import AdamState, MlpEmbedder, forward_batch, init_embedder, train_step
from .numerics import gram_matrix, l2_normalize_rows, log1p_sum_exp, pairwise_sq_dists
from .rng import make_rng

__version__ = "0.1.0"
