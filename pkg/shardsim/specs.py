"""
Model and cluster specifications.
"""
from dataclasses import dataclass, replace, asdict
from shardsim.mesh import DeviceMesh
from shardsim.placement import Topology


def _positive_int(owner,name,value):
    if not isinstance(value,int) or isinstance(value,bool) or value<1:
        raise ValueError('%s.%s must be a positive integer, got %r' %(owner,name,value))


@dataclass(frozen=True)
class ModelSpec:
    """ Size and shape of the trained model.

    module_params is the per-layer template: parameter counts of the K
    modules of one transformer layer, in forward order. Parameters not in
    the layers (embedding, head) make up the rest of total_params.
    """
    total_params: int
    layer_count: int
    module_params: tuple
    hidden: int
    seq_len: int
    micro_batch: int=1
    micro_batch_count: int=1
    vocab: int=32000
    bytes_per_param: int=2
    bytes_per_grad: int=2
    bytes_per_os_per_param: int=12
    name: str=None

    def __post_init__(self):
        object.__setattr__(self,'module_params',tuple(self.module_params))
        for f in ('total_params','layer_count','hidden','seq_len','micro_batch','micro_batch_count',
                  'vocab','bytes_per_param','bytes_per_grad','bytes_per_os_per_param'):
            _positive_int('ModelSpec',f,getattr(self,f))
        if len(self.module_params)==0:
            raise ValueError('ModelSpec.module_params must list at least one module')
        for i,n in enumerate(self.module_params):
            _positive_int('ModelSpec','module_params[%i]' %i,n)
        if self.layer_params()>self.total_params:
            raise ValueError('ModelSpec: layer_count*sum(module_params)=%i exceeds total_params=%i'
                             %(self.layer_params(),self.total_params))

    @property
    def modules_per_layer(self):
        return len(self.module_params)

    def layer_params(self):
        """ Parameters inside the transformer layers, L*sum(Phi_i). """
        return self.layer_count*sum(self.module_params)

    def remainder_params(self):
        """ Parameters outside the layers (embedding, head). """
        return self.total_params-self.layer_params()

    def tokens_per_step(self):
        return self.micro_batch_count*self.micro_batch*self.seq_len

    def tensor_params(self):
        """ Parameter count of every tensor in forward order.

        The remainder (embedding/head) is one extra tensor placed first.
        """
        sizes=[]
        if self.remainder_params()>0:
            sizes.append(self.remainder_params())
        for l in range(self.layer_count):
            sizes.extend(self.module_params)
        return sizes

    def replace(self,**kwargs):
        return replace(self,**kwargs)

    def to_dict(self):
        d=asdict(self)
        d['module_params']=list(self.module_params)
        if d['name'] is None:
            del d['name']
        return d


# hidden, ffn, layers, total params
_LLAMA={'7b':(4096,11008,32,7000000000),
        '13b':(5120,13824,40,13000000000),
        '30b':(6656,17920,60,32500000000)}


def llama_model(size,**overrides):
    """
    LLaMA-style model specification.

    Parameters:
    -----------
    size:       '7B', '13B' or '30B'
    overrides:  any ModelSpec field (e.g. micro_batch_count=4)

    Modules of a layer are the q, k, v, o projections followed by the gate,
    up and down projections of the MLP. Sequence length 4096, one sequence
    per micro-batch.
    """
    key=size.lower().replace('llama-','').replace('llama','')
    if key not in _LLAMA:
        raise KeyError('Unknown LLaMA size %r; choose from %s' %(size,', '.join(sorted(_LLAMA))))
    H,F,L,total=_LLAMA[key]
    kwargs=dict(total_params=total,layer_count=L,module_params=(H*H,)*4+(H*F,)*3,
                hidden=H,seq_len=4096,micro_batch=1,micro_batch_count=1,vocab=32000,
                name='llama-%s' %key)
    kwargs.update(overrides)
    return ModelSpec(**kwargs)


@dataclass(frozen=True)
class ClusterSpec:
    """ GPU cluster: R GPUs per node, N nodes, per-GPU memory.

    dp_mesh defaults to the full cluster R x N.
    """
    gpus_per_node: int
    node_count: int
    gpu_memory_capacity: float=80e9
    dp_mesh: DeviceMesh=None
    topology: Topology=None

    def __post_init__(self):
        _positive_int('ClusterSpec','gpus_per_node',self.gpus_per_node)
        _positive_int('ClusterSpec','node_count',self.node_count)
        if not self.gpu_memory_capacity>0:
            raise ValueError('ClusterSpec.gpu_memory_capacity must be > 0, got %r' %self.gpu_memory_capacity)
        if self.dp_mesh is None:
            object.__setattr__(self,'dp_mesh',DeviceMesh(self.gpus_per_node,self.node_count))
        dp=self.dp_mesh
        if dp.per_node>self.gpus_per_node or dp.nodes>self.node_count:
            raise ValueError('ClusterSpec.dp_mesh %s does not fit in %ix%i GPUs'
                             %(dp,self.gpus_per_node,self.node_count))
        if self.topology is None:
            object.__setattr__(self,'topology',Topology(1,self.node_count))
        if self.topology.leaf_count*self.topology.nodes_per_leaf<self.node_count:
            raise ValueError('ClusterSpec.topology holds %i nodes, cluster has %i'
                             %(self.topology.leaf_count*self.topology.nodes_per_leaf,self.node_count))

    def gpu_count(self):
        return self.dp_mesh.size()

    def replace(self,**kwargs):
        return replace(self,**kwargs)

    def with_nodes(self,node_count):
        """ The same cluster on node_count nodes: the data-parallel mesh spans them all, leaves keep their size. """
        t=self.topology
        if t.leaf_count==1:
            topology=Topology(1,max(node_count,t.nodes_per_leaf),t.inter_leaf_penalty)
        else:
            topology=Topology(-(-node_count//t.nodes_per_leaf),t.nodes_per_leaf,t.inter_leaf_penalty)
        return replace(self,node_count=node_count,dp_mesh=DeviceMesh(self.dp_mesh.per_node,node_count),topology=topology)

    def to_dict(self):
        return {'gpus_per_node':self.gpus_per_node,
                'node_count':self.node_count,
                'gpu_memory_capacity':self.gpu_memory_capacity,
                'dp_mesh':self.dp_mesh.to_list(),
                'topology':self.topology.to_dict()}
