"""
Named sharding strategies.

Each preset is a function of the cluster's data-parallel mesh returning the
(p, g, os) meshes and, for ZeRO++, the secondary parameter mesh.
"""
from shardsim.mesh import DeviceMesh, ShardingPlan, validate_plan


class InfeasiblePresetError(RuntimeError):
    def __init__(self,name,plan,cluster,violations):
        self.name=name
        self.plan=plan
        self.violations=violations
        RuntimeError.__init__(self,'Preset %s (%s) is infeasible on %ix%i GPUs (data-parallel mesh %s): %s'
                              %(name,plan,cluster.gpus_per_node,cluster.node_count,cluster.dp_mesh,violations))


# name: (p, g, os, secondary); 'dp' stands for the data-parallel mesh
_PRESETS=[('ZeRO-1',     (None,     None,     'dp',      None)),
          ('ZeRO-3',     ('dp',     'dp',     'dp',      None)),
          ('MiCS',       ((8,1),    (8,1),    (8,1),     None)),
          ('MiCS-30B',   ((8,2),    (8,2),    (8,2),     None)),
          ('ZeRO++',     ('dp',     'dp',     'dp',      (8,1))),
          ('AMSP-7B',    (None,     None,     (8,1),     None)),
          ('AMSP-13B',   ((4,1),    (4,1),    (8,1),     None)),
          ('AMSP-30B',   ((8,1),    (8,1),    (8,4),     None))]

PRESET_NAMES=[name for name,rows in _PRESETS]

# framework each preset runs on; the planner's plans run on AMSP
_FRAMEWORK={'ZeRO-1':'deepspeed','ZeRO-3':'deepspeed','MiCS':'deepspeed','MiCS-30B':'deepspeed',
            'ZeRO++':'deepspeed','AMSP-7B':'amsp','AMSP-13B':'amsp','AMSP-30B':'amsp'}


def _normalize(name):
    return name.strip().lower().replace('++','pp').replace('-','').replace('_','').replace(' ','')


_ALIASES={_normalize(name):name for name in PRESET_NAMES}
_ALIASES.update({'zeroplusplus':'ZeRO++','amsp':'AMSP-7B','mics7b':'MiCS','mics13b':'MiCS'})


def preset_name(name):
    """ Canonical preset name for name or one of its aliases (case-insensitive). """
    key=_normalize(str(name))
    if key not in _ALIASES:
        raise KeyError('Unknown preset %r; choose from %s' %(name,', '.join(PRESET_NAMES)))
    return _ALIASES[key]


def preset_framework(name):
    """ 'deepspeed' or 'amsp'; names that are not presets (e.g. 'planner') run on AMSP. """
    try:
        return _FRAMEWORK[preset_name(name)]
    except KeyError:
        return 'amsp'


def preset_plan(name,cluster):
    """ The preset's plan on cluster, without feasibility checks. """
    rows=dict(_PRESETS)[preset_name(name)]
    meshes=[]
    for row in rows[:3]:
        if row is None:
            meshes.append(DeviceMesh(1,1))
        elif row=='dp':
            meshes.append(cluster.dp_mesh)
        else:
            meshes.append(DeviceMesh(*row))
    secondary=None if rows[3] is None else DeviceMesh(*rows[3])
    return ShardingPlan(meshes[0],meshes[1],meshes[2],secondary)


def preset(name,cluster):
    """
    Instantiate a named sharding strategy on a cluster.

    Parameters:
    -----------
    name:       ZeRO-1, ZeRO-3, MiCS, MiCS-30B, ZeRO++, AMSP-7B, AMSP-13B or
                AMSP-30B (case-insensitive; aliases like 'zero3', 'zeropp')
    cluster:    ClusterSpec

    Raises KeyError for unknown names and InfeasiblePresetError when the
    preset's meshes do not fit the cluster.
    """
    canonical=preset_name(name)
    plan=preset_plan(canonical,cluster)
    result=validate_plan(plan,cluster)
    if not result.ok:
        raise InfeasiblePresetError(canonical,plan,cluster,str(result))
    return plan
