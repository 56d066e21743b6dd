"""
Bandwidth measurements in CSV, one row per (collective, size, mesh):

    op,size_bytes,gpus_per_node,nodes,bus_bw_bytes_per_s
    allreduce,1048576,8,1,5.0e10
"""
import csv
from shardsim.comm.baseclass import CollectiveKind
from shardsim.comm.profile import BandwidthProfile
from shardsim.mesh import DeviceMesh
from shardsim.io import ConfigError

HEADER=['op','size_bytes','gpus_per_node','nodes','bus_bw_bytes_per_s']


def _positive(where,name,text,kind):
    try:
        value=kind(text)
    except ValueError:
        raise ConfigError(where,'%s is not a number: %r' %(name,text))
    if not value>0:
        raise ConfigError(where,'%s must be positive, got %r' %(name,text))
    return value


def read_measurements(fileobj,name='<csv>'):
    """
    Parse measurement rows into {(kind, mesh): [(size, bandwidth), ...]}.

    Malformed rows and duplicate (op, size, mesh) keys raise ConfigError
    naming 'file:line'.
    """
    reader=csv.reader(fileobj)
    try:
        header=[h.strip() for h in next(reader)]
    except StopIteration:
        raise ConfigError('%s:1' %name,'empty file, expected header %s' %','.join(HEADER))
    if header!=HEADER:
        raise ConfigError('%s:1' %name,'expected header %s, got %s' %(','.join(HEADER),','.join(header)))
    entries={}
    seen=set()
    for row in reader:
        where='%s:%i' %(name,reader.line_num)
        if len(row)==0 or all(c.strip()=='' for c in row):
            continue
        if len(row)!=len(HEADER):
            raise ConfigError(where,'expected %i fields, got %i' %(len(HEADER),len(row)))
        op,size,per_node,nodes,bw=[c.strip() for c in row]
        try:
            kind=CollectiveKind.parse(op)
        except ValueError as error:
            raise ConfigError(where,str(error))
        size=_positive(where,'size_bytes',size,float)
        mesh=DeviceMesh(_positive(where,'gpus_per_node',per_node,int),_positive(where,'nodes',nodes,int))
        bw=_positive(where,'bus_bw_bytes_per_s',bw,float)
        key=(kind,size,mesh)
        if key in seen:
            raise ConfigError(where,'duplicate measurement for (%s, %g, %s)' %(kind.value,size,mesh))
        seen.add(key)
        entries.setdefault((kind,mesh),[]).append((size,bw))
    if len(entries)==0:
        raise ConfigError(name,'no measurements')
    return entries


def read_profile_from_csv(filename):
    with open(filename,newline='') as f:
        return BandwidthProfile(read_measurements(f,filename))
