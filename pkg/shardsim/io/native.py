"""
Canonical JSON form of a bandwidth profile:

    {"allreduce/8x1": [[size, bandwidth], ...], ...}

Keys are "op/per_node x nodes", series sorted by size. Writing a profile
that was read from this format reproduces the file byte by byte.
"""
import json
from shardsim.comm.baseclass import CollectiveKind
from shardsim.comm.profile import BandwidthProfile
from shardsim.mesh import DeviceMesh
from shardsim.io import ConfigError


def number(x):
    """ Integral floats as ints, for compact and stable JSON. """
    x=float(x)
    if x.is_integer() and abs(x)<2**53:
        return int(x)
    return x


def profile_to_dict(profile):
    return {'%s/%s' %(kind.value,mesh):[[number(s),number(w)] for s,w in points]
            for (kind,mesh),points in profile.to_entries().items()}


def profile_from_dict(d,name='<profile>'):
    if not isinstance(d,dict):
        raise ConfigError(name,'profile must be a JSON object')
    entries={}
    for key,points in d.items():
        try:
            op,mesh=key.split('/')
            entries[(CollectiveKind.parse(op),DeviceMesh.parse(mesh))]=[(float(s),float(w)) for s,w in points]
        except (ValueError,TypeError) as error:
            raise ConfigError('%s:%s' %(name,key),'bad series (%s)' %error)
    try:
        return BandwidthProfile(entries)
    except ValueError as error:
        raise ConfigError(name,str(error))


def dumps_profile(profile):
    return json.dumps(profile_to_dict(profile),indent=1,sort_keys=True)+'\n'


def read_profile_from_json(filename):
    try:
        with open(filename) as f:
            d=json.load(f)
    except json.JSONDecodeError as error:
        raise ConfigError(filename,'invalid JSON (%s)' %error)
    return profile_from_dict(d,filename)


def write_profile_to_json(filename,profile):
    with open(filename,'w') as f:
        f.write(dumps_profile(profile))
