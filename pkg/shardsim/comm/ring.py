"""
Analytic alpha-beta ring model and synthetic profiles built from it.
"""
from dataclasses import dataclass
import numpy as np
from shardsim.comm.baseclass import CommModel, CollectiveKind, KINDS
from shardsim.comm.profile import BandwidthProfile
from shardsim.mesh import DeviceMesh

AG=CollectiveKind.ALLGATHER
RS=CollectiveKind.REDUCESCATTER
AR=CollectiveKind.ALLREDUCE
BC=CollectiveKind.BROADCAST


@dataclass(frozen=True)
class AlphaBetaParams:
    alpha: float
    link_bandwidth: float

    def __post_init__(self):
        if not self.alpha>=0:
            raise ValueError('AlphaBetaParams.alpha must be >= 0, got %r' %self.alpha)
        if not self.link_bandwidth>0:
            raise ValueError('AlphaBetaParams.link_bandwidth must be > 0, got %r' %self.link_bandwidth)

    def scaled(self,factor):
        """ Same latency, link bandwidth times factor. """
        return AlphaBetaParams(self.alpha,self.link_bandwidth*factor)


def ring_time(kind,size,p,ab):
    """
    Time of a ring collective.

    AllGather, ReduceScatter, Broadcast: (p-1)(alpha + v/(w p))
    AllReduce:                           2(p-1)(alpha + v/(w p))

    size and p may be numpy arrays.
    """
    kind=CollectiveKind.parse(kind)
    step=(p-1)*(ab.alpha+size/(ab.link_bandwidth*p))
    if kind==AR:
        return 2*step
    return step


class RingModel(CommModel):
    """ Communication model evaluating the ring formulas directly.

    ab_intra is used for single-node meshes, ab_inter otherwise. With
    gpus_per_node given, a multi-node mesh with p0 GPUs per node gets the
    fraction p0/gpus_per_node of the node's inter-node bandwidth.
    """
    def __init__(self,ab_intra,ab_inter,gpus_per_node=None):
        CommModel.__init__(self)
        self.ab_intra=ab_intra
        self.ab_inter=ab_inter
        self.gpus_per_node=gpus_per_node

    def params(self,mesh):
        if mesh.nodes==1:
            return self.ab_intra
        if self.gpus_per_node is None:
            return self.ab_inter
        return self.ab_inter.scaled(mesh.per_node/self.gpus_per_node)

    def get_time(self,kind,size,mesh):
        if size<0:
            raise ValueError('Message size must be >= 0, got %r' %size)
        if size==0 or mesh.size()==1:
            return 0.0
        return float(ring_time(kind,size,mesh.size(),self.params(mesh)))

    def get_bandwidth(self,kind,size,mesh):
        return size/self.get_time(kind,size,mesh)

    def greetings(self):
        return 'Ring model: intra alpha=%g s w=%g B/s, inter alpha=%g s w=%g B/s' \
               %(self.ab_intra.alpha,self.ab_intra.link_bandwidth,self.ab_inter.alpha,self.ab_inter.link_bandwidth)


def _ring_entries(model,meshes,sizes,kinds):
    entries={}
    for mesh in meshes:
        mesh=DeviceMesh.parse(mesh)
        if mesh.size()==1:
            continue
        ab=model.params(mesh)
        for kind in kinds:
            bws=sizes/ring_time(kind,sizes,mesh.size(),ab)
            entries[(kind,mesh)]=np.column_stack((sizes,bws))
    return entries


def _check_sizes(meshes,sizes):
    sizes=np.unique(np.asarray(sizes,dtype=float))
    if len(sizes)==0 or len(meshes)==0:
        raise ValueError('synthetic profile needs at least one mesh and one size')
    if np.any(sizes<=0):
        raise ValueError('Profiled sizes must be positive')
    return sizes


def synthetic_profile(ab_intra,ab_inter,meshes,sizes,kinds=None,gpus_per_node=None):
    """
    Bandwidth profile generated from the ring model.

    Parameters:
    -----------
    ab_intra:       AlphaBetaParams for meshes inside one node
    ab_inter:       AlphaBetaParams for meshes spanning nodes
    meshes:         meshes to profile (single-GPU meshes are skipped, they
                    never communicate)
    sizes:          message sizes in bytes
    kinds:          collectives to profile (default: all four)
    gpus_per_node:  if given, multi-node meshes share the node's inter-node
                    bandwidth (see RingModel)
    """
    sizes=_check_sizes(meshes,sizes)
    kinds=KINDS if kinds is None else [CollectiveKind.parse(k) for k in kinds]
    model=RingModel(ab_intra,ab_inter,gpus_per_node)
    return BandwidthProfile(_ring_entries(model,meshes,sizes,kinds))


def algorithm_time(kind,size,p,ab):
    """
    Time of a collective run the way NCCL picks its algorithms.

    The bandwidth term is the ring's (p-1)/p v/w (twice for AllReduce); the
    latency term depends on the algorithm:

    AllGather, ReduceScatter (ring):    (p-1) alpha
    AllReduce (tree):                   2 ceil(log2 p) alpha
    Broadcast (pipelined tree):         ceil(log2 p) alpha

    size and p may be numpy arrays.
    """
    kind=CollectiveKind.parse(kind)
    p=np.asarray(p)
    steps=np.ceil(np.log2(p))
    transfer=(p-1)*size/(ab.link_bandwidth*p)
    if kind==AR:
        return 2*steps*ab.alpha+2*transfer
    if kind==BC:
        return steps*ab.alpha+transfer
    return (p-1)*ab.alpha+transfer


# Calibration of the shipped profile. Link bandwidths are the unidirectional
# halves of 600 GB/s per GPU (intra-node) and 400 GB/s per node (inter-node);
# one latency per link class.
CALIBRATION={'intra_bandwidth':300e9,
             'inter_bandwidth':200e9,
             'intra_latency':5e-6,
             'inter_latency':5e-6,
             'min_log2_size':10,
             'max_log2_size':36,
             'points_per_octave':4}


def calibration_sizes(calibration=CALIBRATION):
    n=calibration['points_per_octave']
    k=np.arange(calibration['min_log2_size']*n,calibration['max_log2_size']*n+1)
    return np.round(2.0**(k/n))


def calibrated_profile(cluster,calibration=CALIBRATION):
    """
    Synthetic profile of every mesh a x b (a <= R, b <= N) of the cluster.

    Times follow algorithm_time. Effective bandwidth falls with the number of
    participants and is lower across nodes than inside a node; meshes using
    only part of each node get their share of the node's network bandwidth.
    """
    R,N=cluster.gpus_per_node,cluster.node_count
    meshes=[DeviceMesh(a,b) for b in range(1,N+1) for a in range(1,R+1)]
    sizes=_check_sizes(meshes,calibration_sizes(calibration))
    model=RingModel(AlphaBetaParams(calibration['intra_latency'],calibration['intra_bandwidth']),
                    AlphaBetaParams(calibration['inter_latency'],calibration['inter_bandwidth']),
                    gpus_per_node=R)
    entries={}
    for mesh in meshes:
        if mesh.size()==1:
            continue
        ab=model.params(mesh)
        for kind in KINDS:
            entries[(kind,mesh)]=np.column_stack((sizes,sizes/algorithm_time(kind,sizes,mesh.size(),ab)))
    return BandwidthProfile(entries)
