"""Random-box benchmark: generate axis-aligned boxes (5 tets each), lay them
out on a compact lattice, and pack them to measure achievable efficiency."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .packer import PackerConfig, PackingResult, pack, substream_seed
from .synthetic import box_mesh
from .tetmesh import TetMesh


@dataclass(frozen=True)
class RandomBoxSpec:
    """Box population for one benchmark run; edge lengths are uniform in
    [min_edge, max_edge] as fractions of the container scale."""

    count: int = 50
    min_edge: float = 0.1
    max_edge: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not (0.0 < self.min_edge <= self.max_edge):
            raise ValueError("need 0 < min_edge <= max_edge")


def generate_box_meshes(spec: RandomBoxSpec) -> list[TetMesh]:
    """Boxes with random edges, arranged on a cubic lattice so the assembly's
    bounding box is a compact cube (the initial container)."""
    rng = np.random.Generator(np.random.PCG64(substream_seed(spec.seed, "boxes")))
    edges = rng.uniform(spec.min_edge, spec.max_edge, size=(spec.count, 3))
    k = max(1, math.ceil(spec.count ** (1.0 / 3.0)))
    cell = spec.max_edge
    meshes = []
    for i in range(spec.count):
        origin = (cell * (i % k), cell * ((i // k) % k), cell * (i // (k * k)))
        meshes.append(box_mesh(edges[i], origin))
    return meshes


def run_box_benchmark(spec: RandomBoxSpec,
                      config: PackerConfig | None = None) -> dict:
    """Pack one generated box population; returns the result plus timing."""
    config = config or PackerConfig()
    config = replace(config, seed=spec.seed)
    meshes = generate_box_meshes(spec)
    t0 = time.perf_counter()
    result: PackingResult = pack(meshes, config)
    elapsed = time.perf_counter() - t0
    return {
        "spec": {"count": spec.count, "min_edge": spec.min_edge,
                 "max_edge": spec.max_edge, "seed": spec.seed},
        "order": config.insertion_order,
        "efficiency": float(result.efficiency),
        "box_extents": [float(v) for v in result.box_extents],
        "elapsed_s": elapsed,
        "result": result,
    }


def run_box_benchmark_series(base_spec: RandomBoxSpec, runs: int,
                             config: PackerConfig | None = None) -> list[dict]:
    """Repeated runs with per-run derived seeds (seed, seed+1, ...)."""
    out = []
    for i in range(runs):
        spec = replace(base_spec, seed=base_spec.seed + i)
        out.append(run_box_benchmark(spec, config))
    return out
