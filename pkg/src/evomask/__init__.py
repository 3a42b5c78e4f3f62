"""Evolved hierarchical masking for masked image modeling."""
from ._kernel import BACKEND
from .analytics import mask_purity, mask_stats, mean_attention_distance, partition_map
from .attention import (
    AttentionBatch,
    PatchGrid,
    SimilarityMatrix,
    aggregate,
    load_attention,
    oracle_attention,
    save_attention,
)
from .hierarchy import (
    HierarchyTree,
    TreeNode,
    build_tree,
    build_tree_reference,
    build_trees,
    frontier_cut,
    load_tree,
    pair_similarity_recursive,
    save_tree,
    tree_height,
)
from .maskgen import (
    Mask,
    MaskSchedule,
    block_mask,
    generate_mask,
    grid_mask,
    load_mask,
    mask_depth,
    random_mask,
    save_mask,
)
from .simharness import Scene, SimConfig, make_scene, run_simulation

__version__ = "0.1.0"
