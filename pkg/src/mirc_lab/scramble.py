"""Constrained block-wise temporal scrambling.

A clip is cut into n contiguous blocks of near-equal length and the blocks
are reordered, preserving frame order inside each block so local motion
survives while the global temporal structure is destroyed.  A reordering is
valid only if (i) the first block moves, (ii) the last block lands in a
middle position (neither first nor last), and (iii) no two originally
adjacent blocks stay adjacent, in either order.

Sampling enumerates the full valid set and draws uniformly from it with a
seeded PCG64 generator, so a (clip, seed, n) triple always produces the same
plan and the sampler's support is exactly the valid set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

from . import rng


class TooShortClipError(ValueError):
    pass


class NoValidPermutationError(ValueError):
    pass


class ScrambleIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class ScramblePlan:
    """Block layout and block order for one scrambled clip.

    block_bounds are (start, end) frame index pairs, end-exclusive, covering
    the whole clip.  permutation holds 1-based original block indices in
    output order.
    """

    n_blocks: int
    block_bounds: tuple[tuple[int, int], ...]
    permutation: tuple[int, ...]
    seed: int

    @property
    def frame_count(self) -> int:
        return self.block_bounds[-1][1]

    def to_dict(self) -> dict:
        return {
            "n_blocks": self.n_blocks,
            "block_bounds": [list(b) for b in self.block_bounds],
            "permutation": list(self.permutation),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScramblePlan":
        return cls(
            n_blocks=d["n_blocks"],
            block_bounds=tuple((a, b) for a, b in d["block_bounds"]),
            permutation=tuple(d["permutation"]),
            seed=d["seed"],
        )


def partition_blocks(frame_count: int, n: int) -> tuple[tuple[int, int], ...]:
    """Split 0..frame_count-1 into n contiguous blocks, sizes within 1.

    The remainder goes to the earliest blocks: frame_count mod n leading
    blocks get the extra frame.
    """
    if n < 2:
        raise ValueError(f"need at least 2 blocks, got {n}")
    if frame_count < n:
        raise TooShortClipError(f"{frame_count} frames cannot fill {n} blocks")
    base, extra = divmod(frame_count, n)
    bounds = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        bounds.append((start, start + size))
        start += size
    return tuple(bounds)


def is_valid_permutation(perm: tuple[int, ...] | list[int], n: int) -> bool:
    """Check the three scrambling constraints on a 1-based block order."""
    if sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"perm must be a bijection on 1..{n}, got {perm}")
    if perm[0] == 1:
        return False
    pos_last = perm.index(n) if isinstance(perm, list) else list(perm).index(n)
    if pos_last == 0 or pos_last == n - 1:
        return False
    for a, b in zip(perm, perm[1:]):
        if abs(a - b) == 1:
            return False
    return True


@lru_cache(maxsize=None)
def valid_permutations(n: int) -> tuple[tuple[int, ...], ...]:
    """All valid block orders for n blocks, in lexicographic order."""
    return tuple(
        p for p in itertools.permutations(range(1, n + 1)) if is_valid_permutation(p, n)
    )


def sample_scramble(frame_count: int, seed: int, n: int = 5) -> ScramblePlan:
    """Draw one uniformly random valid plan for a clip of frame_count frames."""
    bounds = partition_blocks(frame_count, n)
    valid = valid_permutations(n)
    if not valid:
        raise NoValidPermutationError(f"no block order satisfies the constraints for n={n}")
    gen = rng.generator(seed)
    perm = valid[int(gen.integers(len(valid)))]
    return ScramblePlan(n_blocks=n, block_bounds=bounds, permutation=perm, seed=seed)


def materialize(frame_count: int, plan: ScramblePlan) -> list[int]:
    """Frame indices of the scrambled clip, in playback order."""
    if plan.frame_count != frame_count:
        raise ScrambleIntegrityError(
            f"plan covers {plan.frame_count} frames, clip has {frame_count}"
        )
    order: list[int] = []
    for block_idx in plan.permutation:
        start, end = plan.block_bounds[block_idx - 1]
        order.extend(range(start, end))
    return order


def attach_scrambled_variant(tree, node_id: str, frame_count: int, seed: int, n: int = 5):
    """Add a scrambled child of an intact node to its reduction tree.

    The new node shares the source rect, sits at the source level, and is
    marked as a spatiotemporal sub-MIRC up front (the convention covers
    scrambled MIRC variants whether or not they stay recognisable).
    Returns (node, plan).
    """
    from .reduction import MircRole, QuadrantNode, node_id_for

    source = tree.nodes[node_id]
    if source.is_scrambled:
        raise ScrambleIntegrityError(f"{node_id} is already a scrambled variant")
    plan = sample_scramble(frame_count, seed, n)
    node = QuadrantNode(
        node_id=node_id_for(tree.clip_id, source.level, source.corner_path, scramble_seed=seed),
        clip_id=tree.clip_id,
        level=source.level,
        corner_path=source.corner_path,
        rect=source.rect,
        parent_id=source.node_id,
        mirc_role=MircRole.SPATIOTEMPORAL_SUB_MIRC,
        scramble_seed=seed,
        scramble_permutation=plan.permutation,
        source_id=source.node_id,
    )
    tree.add(node)
    return node, plan
