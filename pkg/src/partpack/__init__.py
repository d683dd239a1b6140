"""partpack: split a solid tetrahedral mesh into box-like parts and pack the
parts into a minimum-volume axis-aligned container."""

from .geometry import (
    ConvexHull,
    DegenerateInput,
    OrientedBox,
    RigidTransform,
    approximate_mbb,
    axis_align,
    convex_hull,
    sample_rotations,
    tet_volume,
)
from .packer import (
    NoPlacement,
    OutOfBounds,
    Overflow,
    PackerConfig,
    PackingResult,
    Placement,
    VoxelGrid,
    classify_free_voxels,
    init_container,
    pack,
    place_part,
    placement_cost,
    rasterize,
    shrink_holes,
    underlying_free_volume,
)
from .pipeline import (
    SplitPackConfig,
    SplitPackOutcome,
    TargetUnreachable,
    assembly_plan,
    heightfield_check,
    plane_refine,
    select_split_node,
    split_and_pack,
)
from .segmentation import (
    DegenerateBox,
    LeafSplit,
    SegmentationTree,
    aboxiness,
    boxiness,
    build_hierarchy,
    cut_tree,
)
from .tetmesh import (
    DegenerateTet,
    DualGraph,
    ParseError,
    PartRef,
    TetMesh,
    build_dual_graph,
    load_tetmesh,
    mesh_volume,
    part_boundary_surface,
)

__version__ = "0.1.0"
