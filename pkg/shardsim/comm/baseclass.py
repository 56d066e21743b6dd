"""
Communication model base class.
"""
from enum import Enum


class CollectiveKind(Enum):
    ALLGATHER='allgather'
    REDUCESCATTER='reducescatter'
    ALLREDUCE='allreduce'
    BROADCAST='broadcast'

    @property
    def short(self):
        return _SHORT[self]

    @classmethod
    def parse(cls,value):
        """ Kind from its name ('allreduce') or short name ('AR'). """
        if isinstance(value,cls):
            return value
        v=str(value).strip().lower().replace('_','').replace('-','')
        for kind in cls:
            if v==kind.value or v==_SHORT[kind].lower():
                return kind
        raise ValueError('Unknown collective %r' %(value,))


_SHORT={CollectiveKind.ALLGATHER:'AG',
        CollectiveKind.REDUCESCATTER:'RS',
        CollectiveKind.ALLREDUCE:'AR',
        CollectiveKind.BROADCAST:'BC'}

KINDS=tuple(CollectiveKind)


class MissingProfileError(KeyError):
    def __init__(self,kind,mesh):
        KeyError.__init__(self,(kind,mesh))
        self.kind=kind
        self.mesh=mesh

    def __str__(self):
        return 'No bandwidth series for (%s, %s) and no profiled mesh of size %i' \
               %(self.kind.value,self.mesh,self.mesh.size())


class CommModel:
    def __init__(self):
        pass

    def get_bandwidth(self,kind,size,mesh):
        """
        Return the effective bandwidth (bytes/s) of collective kind on
        size bytes over mesh.
        """
        raise NotImplementedError()

    def get_time(self,kind,size,mesh):
        """
        Return the time (s) of collective kind on size bytes over mesh.

        Nothing is communicated for an empty message or a single participant.
        """
        if size<0:
            raise ValueError('Message size must be >= 0, got %r' %size)
        if size==0 or mesh.size()==1:
            return 0.0
        return size/self.get_bandwidth(kind,size,mesh)

    def greetings(self):
        raise NotImplementedError()
