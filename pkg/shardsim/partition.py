"""
Inter-tensor sharding of optimizer states.

Whole tensors (not slices) are distributed over the k ranks of an
optimizer-state subgroup so that each updated tensor can be broadcast
from a single owner.
"""
from dataclasses import dataclass
import heapq


@dataclass(frozen=True)
class TensorPartition:
    assignment: tuple
    shard_sizes: tuple

    def shards(self):
        """ Tensor indices of each shard, in tensor order. """
        out=[[] for i in range(len(self.shard_sizes))]
        for tensor,shard in enumerate(self.assignment):
            out[shard].append(tensor)
        return out

    def max_shard(self):
        return max(self.shard_sizes)

    def owner(self,tensor):
        return self.assignment[tensor]


def partition_tensors_greedy(tensor_sizes,k):
    """
    Longest-processing-time greedy partition of tensors into k shards.

    Tensors are taken in descending size (ties by index) and each goes to the
    currently smallest shard, ties broken by the lower shard index. The
    largest shard is within (4/3 - 1/(3k)) of the optimum.

    Parameters:
    -----------
    tensor_sizes:   positive tensor sizes (bytes or element counts)
    k:              number of shards, k >= 1
    """
    if not isinstance(k,int) or k<1:
        raise ValueError('Shard count must be a positive integer, got %r' %(k,))
    for i,size in enumerate(tensor_sizes):
        if not size>0:
            raise ValueError('Tensor sizes must be positive, tensor %i has %r' %(i,size))
    order=sorted(range(len(tensor_sizes)),key=lambda i:(-tensor_sizes[i],i))
    heap=[(0,shard) for shard in range(k)]
    assignment=[None]*len(tensor_sizes)
    sizes=[0]*k
    for i in order:
        load,shard=heapq.heappop(heap)
        assignment[i]=shard
        sizes[shard]=load+tensor_sizes[i]
        heapq.heappush(heap,(sizes[shard],shard))
    return TensorPartition(tuple(assignment),tuple(sizes))
