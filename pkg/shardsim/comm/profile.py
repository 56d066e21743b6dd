"""
Measured effective-bandwidth profile w(o, v, p0 x p1).
"""
import numpy as np
from shardsim.comm.baseclass import CommModel, CollectiveKind, MissingProfileError, KINDS
from shardsim.mesh import DeviceMesh


def _frozen(a):
    a=np.array(a,dtype=float)
    a.setflags(write=False)
    return a


class BandwidthProfile(CommModel):
    """
    Effective bandwidth table with interpolation.

    Parameters:
    -----------
    entries:    {(kind, mesh): [(size, bandwidth), ...]}; points are sorted
                by size here, sizes must be unique and bandwidths positive.

    Between profiled sizes the bandwidth is interpolated linearly in
    log2(size); outside the profiled range it is clamped to the endpoint.
    A (kind, mesh) without series falls back to a profiled mesh of the same
    size (the one with fewest nodes).
    """
    def __init__(self,entries):
        CommModel.__init__(self)
        self.series={}
        for (kind,mesh),points in entries.items():
            kind=CollectiveKind.parse(kind)
            mesh=DeviceMesh.parse(mesh)
            points=np.asarray(points,dtype=float).reshape(-1,2)
            if len(points)==0:
                raise ValueError('Empty bandwidth series for (%s, %s)' %(kind.value,mesh))
            points=points[np.argsort(points[:,0],kind='stable')]
            sizes=points[:,0]
            bws=points[:,1]
            if np.any(np.diff(sizes)<=0):
                raise ValueError('Duplicate sizes in bandwidth series for (%s, %s)' %(kind.value,mesh))
            if np.any(sizes<=0) or not np.all(np.isfinite(sizes)):
                raise ValueError('Sizes must be positive in series (%s, %s)' %(kind.value,mesh))
            if np.any(bws<=0) or not np.all(np.isfinite(bws)):
                raise ValueError('Bandwidths must be positive in series (%s, %s)' %(kind.value,mesh))
            if (kind,mesh) in self.series:
                raise ValueError('Series (%s, %s) given twice' %(kind.value,mesh))
            self.series[(kind,mesh)]=(_frozen(sizes),_frozen(np.log2(sizes)),_frozen(bws))
        self._resolved={}

    def keys(self):
        """ Profiled (kind, mesh) pairs in canonical order. """
        return sorted(self.series,key=lambda km:(KINDS.index(km[0]),km[1].key()))

    def meshes(self):
        return sorted(set(mesh for kind,mesh in self.series),key=DeviceMesh.key)

    def get_series(self,kind,mesh):
        """ (sizes, bandwidths) arrays of the series used for (kind, mesh). """
        sizes,logs,bws=self._resolve(CollectiveKind.parse(kind),mesh)
        return sizes,bws

    def _resolve(self,kind,mesh):
        key=(kind,mesh)
        if key in self.series:
            return self.series[key]
        if key not in self._resolved:
            same=[m for k,m in self.series if k==kind and m.size()==mesh.size()]
            if len(same)==0:
                raise MissingProfileError(kind,mesh)
            fallback=min(same,key=lambda m:(m.nodes,m.per_node))
            self._resolved[key]=self.series[(kind,fallback)]
        return self._resolved[key]

    def get_bandwidth(self,kind,size,mesh):
        sizes,logs,bws=self._resolve(CollectiveKind.parse(kind),mesh)
        if size<=sizes[0]:
            return float(bws[0])
        if size>=sizes[-1]:
            return float(bws[-1])
        i=int(np.searchsorted(sizes,size))
        if sizes[i]==size:
            return float(bws[i])
        return float(np.interp(np.log2(size),logs,bws))

    def merge(self,other):
        """ New profile holding the series of both; overlapping keys are an error. """
        entries=self.to_entries()
        for key,points in other.to_entries().items():
            if key in entries:
                raise ValueError('Series (%s, %s) present in both profiles' %(key[0].value,key[1]))
            entries[key]=points
        return BandwidthProfile(entries)

    def to_entries(self):
        return {key:list(zip(self.series[key][0].tolist(),self.series[key][2].tolist()))
                for key in self.keys()}

    def greetings(self):
        return 'Bandwidth profile: %i series over %i meshes' %(len(self.series),len(self.meshes()))


def effective_bandwidth(profile,kind,size,mesh):
    """ Effective bandwidth (bytes/s) of collective kind on size bytes over mesh. """
    return profile.get_bandwidth(CollectiveKind.parse(kind),size,mesh)


def collective_time(profile,kind,size,mesh):
    """ t(o,v,p0 x p1) = v / w(o,v,p0 x p1); zero for empty messages or one participant. """
    return profile.get_time(CollectiveKind.parse(kind),size,mesh)
