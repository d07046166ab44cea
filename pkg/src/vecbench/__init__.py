"""Benchmarking harness for approximate nearest neighbor search.

Reference index families, an exact ground-truth oracle, synthetic
in-distribution and out-of-distribution workload generators, and the
measurement machinery (recall/QPS Pareto frontiers, relative-contrast
difficulty splits, Mahalanobis/PCA distribution diagnostics).
"""

from .clustering import Centroids, kmeans
from .core import (
    BitMatrix,
    BitVector,
    Measure,
    dissimilarity,
    normalize,
    normalize_rows,
    pack_bits,
    pairwise_dissimilarity,
    unpack_bits,
)
from .datasets import (
    Dataset,
    binarize_dataset,
    generate_id_gaussian,
    generate_ood_mips,
    generate_ood_shifted,
    read_dataset,
    read_ground_truth,
    split_queries,
    write_dataset,
    write_ground_truth,
)
from .indexes import FAMILIES, SearchResult, VectorIndex, build_index, load_index
from .metrics import (
    ContrastProfile,
    MahalanobisModel,
    ParetoPoint,
    contrast_profile,
    difficulty_split,
    mahalanobis_fit,
    mahalanobis_score,
    operating_point,
    pareto_frontier,
    pca_project,
    qps,
    recall,
    relative_contrast,
)
from .oracle import GroundTruth, build_ground_truth, exact_knn
from .quantization import (
    ADCTable,
    PQCodebook,
    adc_scores,
    adc_table,
    binarize,
    pq_encode,
    pq_reconstruct,
    pq_train,
    scalar_quantize,
)
from .runner import (
    BenchmarkRecord,
    GridConfig,
    RunSpec,
    expand_grid,
    ood_gap,
    read_records,
    relative_throughput,
    run_benchmark,
    write_records,
)

__version__ = "0.1.0"
