"""
Placement of node groups on a leaf-spine topology.

Nodes hang off leaf switches, nodes_per_leaf nodes per leaf, node n on
leaf n // nodes_per_leaf. A collective whose node group touches more than one
leaf crosses the spine and is charged inter_leaf_penalty times its time.
"""
from dataclasses import dataclass
from shardsim.comm.baseclass import CommModel


@dataclass(frozen=True)
class Topology:
    leaf_count: int
    nodes_per_leaf: int
    inter_leaf_penalty: float=1.0

    def __post_init__(self):
        for name in ('leaf_count','nodes_per_leaf'):
            value=getattr(self,name)
            if not isinstance(value,int) or isinstance(value,bool) or value<1:
                raise ValueError('Topology.%s must be a positive integer, got %r' %(name,value))
        if not self.inter_leaf_penalty>=1.0:
            raise ValueError('Topology.inter_leaf_penalty must be >= 1, got %r' %self.inter_leaf_penalty)

    def leaf(self,node):
        return node//self.nodes_per_leaf

    def to_dict(self):
        return {'leaf_count':self.leaf_count,
                'nodes_per_leaf':self.nodes_per_leaf,
                'inter_leaf_penalty':self.inter_leaf_penalty}


@dataclass(frozen=True)
class GroupAssignment:
    group_of: tuple
    leaf_of: tuple
    group_size: int
    cross_leaf_groups: int

    def groups(self):
        """ Node lists of the groups, in group order. """
        out=[[] for i in range(max(self.group_of)+1)] if self.group_of else []
        for node,g in enumerate(self.group_of):
            out[g].append(node)
        return out

    def to_dict(self):
        return {'group_size':self.group_size,
                'groups':self.groups(),
                'leaf_of':list(self.leaf_of),
                'cross_leaf_groups':self.cross_leaf_groups}


def count_cross_leaf_groups(groups,topology):
    """ Number of groups whose nodes sit under more than one leaf. """
    return sum(1 for group in groups if len(set(topology.leaf(n) for n in group))>1)


def assignment_from_groups(topology,groups):
    """ GroupAssignment for explicitly given equal-size groups. """
    node_count=sum(len(g) for g in groups)
    sizes=set(len(g) for g in groups)
    if len(sizes)!=1:
        raise ValueError('Groups must have equal size, got sizes %s' %sorted(sizes))
    group_of=[None]*node_count
    for i,group in enumerate(groups):
        for n in group:
            if not 0<=n<node_count or group_of[n] is not None:
                raise ValueError('Node %r assigned twice or out of range' %n)
            group_of[n]=i
    return GroupAssignment(tuple(group_of),tuple(topology.leaf(n) for n in range(node_count)),
                           sizes.pop(),count_cross_leaf_groups(groups,topology))


def pack_groups(topology,node_count,group_size):
    """
    Leaf-first packing of nodes 0..node_count-1 into groups of group_size.

    Each leaf is first filled with as many whole groups as fit; the leftover
    nodes of all leaves are then packed contiguously. When group_size divides
    nodes_per_leaf this is plain contiguous packing and no group spans leaves.
    """
    if group_size>node_count:
        raise ValueError('Group size %i exceeds the %i participating nodes' %(group_size,node_count))
    if node_count%group_size!=0:
        raise ValueError('Group size %i does not divide %i nodes' %(group_size,node_count))
    F=topology.nodes_per_leaf
    groups=[]
    leftover=[]
    for first in range(0,node_count,F):
        nodes=list(range(first,min(first+F,node_count)))
        whole=len(nodes)//group_size*group_size
        groups.extend(nodes[i:i+group_size] for i in range(0,whole,group_size))
        leftover.extend(nodes[whole:])
    groups.extend(leftover[i:i+group_size] for i in range(0,len(leftover),group_size))
    return groups


def assign_nodes(topology,cluster,plan):
    """
    Group the participating nodes for the multi-node meshes of a plan.

    The group size is the largest node-axis factor s1 > 1 among s_p, s_g and
    s_os (1 if the plan keeps every state inside a node).

    Parameters:
    -----------
    topology:   Topology
    cluster:    ClusterSpec (its dp_mesh.nodes nodes participate)
    plan:       ShardingPlan
    """
    s1=max(plan.p.nodes,plan.g.nodes,plan.os.nodes)
    groups=pack_groups(topology,cluster.dp_mesh.nodes,s1)
    return assignment_from_groups(topology,groups)


def assign_nodes_interleaved(topology,node_count,group_size):
    """ Round-robin baseline: node n joins group n mod (node_count/group_size). """
    if group_size>node_count or node_count%group_size!=0:
        raise ValueError('Group size %i does not divide %i nodes' %(group_size,node_count))
    ngroups=node_count//group_size
    groups=[list(range(g,node_count,ngroups)) for g in range(ngroups)]
    return assignment_from_groups(topology,groups)


def spans_leaves(topology,assignment,mesh):
    """ Does any node group of the mesh cross leaves?

    The nodes are laid out in group order and cut into consecutive pieces of
    mesh.nodes nodes; those pieces are the mesh's node groups.
    """
    m=mesh.nodes
    if m==1:
        return False
    order=[n for group in assignment.groups() for n in sorted(group,key=lambda n:(topology.leaf(n),n))]
    for i in range(0,len(order),m):
        if len(set(topology.leaf(n) for n in order[i:i+m]))>1:
            return True
    return False


def placed_collective_time(topology,assignment,profile,kind,size,mesh):
    """ collective_time with the inter-leaf penalty applied to spanning meshes. """
    t=profile.get_time(kind,size,mesh)
    if spans_leaves(topology,assignment,mesh):
        return t*topology.inter_leaf_penalty
    return t


class Placement:
    """ Topology together with a node assignment, usable by the cost model. """
    def __init__(self,topology,assignment):
        self.topology=topology
        self.assignment=assignment
        self._spans={}

    def spans(self,mesh):
        if mesh not in self._spans:
            self._spans[mesh]=spans_leaves(self.topology,self.assignment,mesh)
        return self._spans[mesh]

    def get_time(self,profile,kind,size,mesh):
        t=profile.get_time(kind,size,mesh)
        if self.topology.inter_leaf_penalty==1.0:
            return t
        return t*self.topology.inter_leaf_penalty if self.spans(mesh) else t

    @classmethod
    def for_plan(cls,cluster,plan):
        return cls(cluster.topology,assign_nodes(cluster.topology,cluster,plan))


class PlacedCommModel(CommModel):
    """ Communication model charging the inter-leaf penalty on spanning meshes. """
    def __init__(self,comm,placement):
        CommModel.__init__(self)
        self.comm=comm
        self.placement=placement

    def get_time(self,kind,size,mesh):
        return self.placement.get_time(self.comm,kind,size,mesh)

    def get_bandwidth(self,kind,size,mesh):
        t=self.get_time(kind,size,mesh)
        return self.comm.get_bandwidth(kind,size,mesh) if t==0.0 else size/t

    def greetings(self):
        return '%s; inter-leaf penalty %g' %(self.comm.greetings(),self.placement.topology.inter_leaf_penalty)


def placed_model(comm,cluster,plan):
    """ comm itself when the topology has no penalty, else a PlacedCommModel for plan. """
    if cluster.topology.inter_leaf_penalty==1.0:
        return comm
    return PlacedCommModel(comm,Placement.for_plan(cluster,plan))
