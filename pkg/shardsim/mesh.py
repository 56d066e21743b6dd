"""
Device meshes, sharding plans and the dependency-rule validator.

A mesh p0 x p1 means p0 GPUs per node on each of p1 nodes. A plan gives
one mesh for each of the three model states: parameters (p), gradients (g)
and optimizer states (os).
"""
from dataclasses import dataclass
import warnings
from box.mix import ceil_div


@dataclass(frozen=True)
class DeviceMesh:
    per_node: int
    nodes: int

    def __post_init__(self):
        for name in ('per_node','nodes'):
            value=getattr(self,name)
            if not isinstance(value,int) or isinstance(value,bool) or value<1:
                raise ValueError('DeviceMesh.%s must be a positive integer, got %r' %(name,value))

    def size(self):
        return self.per_node*self.nodes

    def is_intra_node(self):
        return self.nodes==1

    def ratio(self,other):
        """ Sub-mesh self/other, axis by axis.

        Non-divisible axes are rounded up, so the result is the smallest mesh
        that covers the quotient.
        """
        if self.per_node%other.per_node!=0 or self.nodes%other.nodes!=0:
            warnings.warn('Mesh %s is not a multiple of %s; rounding the ratio up' %(self,other))
        return DeviceMesh(max(1,ceil_div(self.per_node,other.per_node)),
                          max(1,ceil_div(self.nodes,other.nodes)))

    def key(self):
        return (self.per_node,self.nodes)

    def to_list(self):
        return [self.per_node,self.nodes]

    def __str__(self):
        return '%ix%i' %(self.per_node,self.nodes)

    @classmethod
    def parse(cls,value):
        """ Mesh from 'AxB', [A,B] or {'per_node':A,'nodes':B}. """
        if isinstance(value,DeviceMesh):
            return value
        if isinstance(value,str):
            parts=value.lower().replace(' ','').split('x')
            if len(parts)!=2:
                raise ValueError('Mesh string must look like "8x1", got %r' %value)
            return cls(int(parts[0]),int(parts[1]))
        if isinstance(value,dict):
            return cls(value['per_node'],value['nodes'])
        if isinstance(value,(list,tuple)) and len(value)==2:
            return cls(value[0],value[1])
        raise ValueError('Cannot interpret %r as a device mesh' %(value,))


ONE=DeviceMesh(1,1)


@dataclass(frozen=True)
class ShardingPlan:
    """ Sharding factors of parameters, gradients and optimizer states.

    secondary is the ZeRO++ secondary parameter mesh (backward AllGather
    source); it is metadata and not part of the searched space.
    """
    p: DeviceMesh
    g: DeviceMesh
    os: DeviceMesh
    secondary: DeviceMesh=None

    def key(self):
        return self.p.key()+self.g.key()+self.os.key()

    def to_dict(self):
        d={'p':self.p.to_list(),'g':self.g.to_list(),'os':self.os.to_list()}
        if self.secondary is not None:
            d['secondary']=self.secondary.to_list()
        return d

    def __str__(self):
        s='p=%s,g=%s,os=%s' %(self.p,self.g,self.os)
        if self.secondary is not None:
            s+=',secondary=%s' %self.secondary
        return s

    @classmethod
    def from_dict(cls,d):
        secondary=d.get('secondary')
        return cls(DeviceMesh.parse(d['p']),DeviceMesh.parse(d['g']),DeviceMesh.parse(d['os']),
                   None if secondary is None else DeviceMesh.parse(secondary))

    @classmethod
    def from_tuple(cls,t):
        return cls(DeviceMesh(t[0],t[1]),DeviceMesh(t[2],t[3]),DeviceMesh(t[4],t[5]))


class ValidationResult:
    def __init__(self,violations):
        self.violations=list(violations)

    @property
    def ok(self):
        return len(self.violations)==0

    def __bool__(self):
        return self.ok

    def constraints(self):
        """ Names of the failing constraints. """
        return [name for name,msg in self.violations]

    def __str__(self):
        if self.ok:
            return 'ok'
        return '; '.join('%s: %s' %v for v in self.violations)


def _violations(t,R,N,dp0,dp1,secondary=None):
    """ Yield (constraint, message) for each violated rule.

    t = (p0,p1,g0,g1,os0,os1). Works on plain integers so that the raw-grid
    oracle can call it without building plan objects.
    """
    p0,p1,g0,g1,os0,os1=t
    for axis,chain in ((0,((R,'R'),(dp0,'s_dp0'),(os0,'s_os0'),(g0,'s_g0'),(p0,'s_p0'),(1,'1'))),
                       (1,((N,'N'),(dp1,'s_dp1'),(os1,'s_os1'),(g1,'s_g1'),(p1,'s_p1'),(1,'1')))):
        for (a,na),(b,nb) in zip(chain[:-1],chain[1:]):
            if a<b:
                yield ('chain%i' %axis,'%s=%i < %s=%i' %(na,a,nb,b))
    for name,x0,x1 in (('p',p0,p1),('g',g0,g1),('os',os0,os1)):
        if x0<1 or dp0%x0!=0:
            yield ('divides0','s_%s0=%i does not divide s_dp0=%i' %(name,x0,dp0))
        if x1<1 or dp1%x1!=0:
            yield ('divides1','s_%s1=%i does not divide s_dp1=%i' %(name,x1,dp1))
    for name,x0,x1 in (('p',p0,p1),('g',g0,g1),('os',os0,os1)):
        if x1>1 and x0!=dp0:
            yield ('full_node','s_%s1=%i > 1 requires s_%s0=s_dp0=%i, got %i' %(name,x1,name,dp0,x0))
    if (g0,g1)!=(p0,p1) and (g0,g1)!=(os0,os1):
        yield ('g_choice','s_g=%ix%i must equal s_p=%ix%i or s_os=%ix%i' %(g0,g1,p0,p1,os0,os1))
    if secondary is not None:
        s0,s1=secondary.per_node,secondary.nodes
        if s0>p0 or s1>p1:
            yield ('secondary','secondary mesh %ix%i exceeds s_p=%ix%i' %(s0,s1,p0,p1))
        if dp0%s0!=0 or dp1%s1!=0:
            yield ('secondary','secondary mesh %ix%i does not divide s_dp=%ix%i' %(s0,s1,dp0,dp1))
        if s1>1 and s0!=dp0:
            yield ('secondary','secondary mesh %ix%i spans nodes without full nodes' %(s0,s1))


def validate_plan(plan,cluster):
    """
    Check the dependency rule of a sharding plan on a cluster.

    Parameters:
    -----------
    plan:       ShardingPlan
    cluster:    ClusterSpec

    Returns a ValidationResult listing every violated constraint.
    """
    dp=cluster.dp_mesh
    return ValidationResult(_violations(plan.key(),cluster.gpus_per_node,cluster.node_count,
                                        dp.per_node,dp.nodes,plan.secondary))


def tuple_is_valid(t,cluster):
    """ Short-circuit validity test of a raw (p0,p1,g0,g1,os0,os1) tuple. """
    dp=cluster.dp_mesh
    for v in _violations(t,cluster.gpus_per_node,cluster.node_count,dp.per_node,dp.nodes):
        return False
    return True
