"""Binary partitions of the unit cube.

Every region produced by midpoint cuts is a dyadic rectangle, so it is
stored exactly as integer (level, offset) pairs.  This script builds a few
partitions, prints their canonical text form, counts all partitions of a
given size and intersects two partitions.
"""

from sievepart import BinaryPartition, DyadicRegion, common_refinement, enumerate_partitions, split_region
from sievepart.geometry import partition_count_bound

# %% cutting the unit square
square = DyadicRegion.unit(2)
left, right = split_region(square, 0)
print("halves of the square:", left.to_text(), right.to_text())
print("their volumes:", left.volume, right.volume)

part = BinaryPartition.trivial(2).refine(0, 0)
part = part.refine(1, 1)
print("\na three-leaf partition, one leaf per line:")
print(part.to_text())

# %% how many partitions are there?
for p in (1, 2, 3):
    counts = [len(enumerate_partitions(p, size)) for size in range(1, 5)]
    bounds = [partition_count_bound(p, size) for size in range(1, 5)]
    print(f"p={p}: sizes 1..4 -> {counts}  (bound p^I I! = {bounds})")

# %% intersecting two partitions
vertical = BinaryPartition.trivial(2).refine(0, 0)
horizontal = BinaryPartition.trivial(2).refine(0, 1)
print("\noverlaps of vertical and horizontal halves (i, j, volume):")
for i, j, vol in common_refinement(vertical, horizontal):
    print(f"  {i} {j} {vol}")
