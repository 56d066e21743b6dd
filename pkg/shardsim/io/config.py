"""
Run configuration (JSON).

    {
     "model":        {"name": "llama-7b", "micro_batch_count": 4}  or all ModelSpec fields,
     "cluster":      {"gpus_per_node": 8, "node_count": 128, "gpu_memory_capacity": 8e10,
                      "dp_mesh": [8, 128],
                      "topology": {"leaf_count": 4, "nodes_per_leaf": 32, "inter_leaf_penalty": 1.0}},
     "profile_path": null,            (null: built-in calibrated profile)
     "cost":         {... CostConfig fields ...},
     "sim":          {... SimConfig fields ...},
     "solver":       {"all_candidates": false, "oracle_guard": 1000000},
     "plan":         {"p": [1, 1], "g": [1, 1], "os": [8, 1]}  or a preset name, or null
    }

Only "model" and "cluster" are required; unknown keys are rejected.
config_schema() gives the accepted keys and defaults as a JSON Schema.
"""
import json
import os
from dataclasses import dataclass, fields
from shardsim.specs import ModelSpec, ClusterSpec, llama_model
from shardsim.placement import Topology
from shardsim.mesh import DeviceMesh, ShardingPlan
from shardsim.cost import CostConfig, cost_defaults
from shardsim.overlap import SimConfig, sim_defaults
from shardsim.presets import preset_name
from shardsim.io import ConfigError

solver_defaults={'all_candidates':False,
                 'oracle_guard':10**6}

_TOP=('model','cluster','profile_path','cost','sim','solver','plan')
_MODEL=tuple(f.name for f in fields(ModelSpec))
_MODEL_REQUIRED=('total_params','layer_count','module_params','hidden','seq_len')
_MODEL_INTS=('total_params','layer_count','hidden','seq_len','micro_batch','micro_batch_count','vocab',
             'bytes_per_param','bytes_per_grad','bytes_per_os_per_param')
_CLUSTER=('gpus_per_node','node_count','gpu_memory_capacity','dp_mesh','topology')
_TOPOLOGY=('leaf_count','nodes_per_leaf','inter_leaf_penalty')


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    cluster: ClusterSpec
    profile_path: str=None
    cost: CostConfig=None
    sim: SimConfig=None
    solver: dict=None
    plan: object=None
    base_dir: str='.'

    def resolved_profile_path(self):
        if self.profile_path is None:
            return None
        return os.path.join(self.base_dir,self.profile_path)

    def to_dict(self):
        """ Resolved configuration; reading it back gives the same RunConfig. """
        if isinstance(self.plan,ShardingPlan):
            plan=self.plan.to_dict()
        else:
            plan=self.plan
        return {'model':self.model.to_dict(),
                'cluster':self.cluster.to_dict(),
                'profile_path':self.profile_path,
                'cost':self.cost.to_dict(),
                'sim':self.sim.to_dict(),
                'solver':dict(self.solver),
                'plan':plan}


def _check_keys(d,allowed,path):
    if not isinstance(d,dict):
        raise ConfigError(path or '(top level)','expected an object, got %s' %type(d).__name__)
    for key in d:
        if key not in allowed:
            raise ConfigError('%s.%s' %(path,key) if path else key,'unknown key')


def _integer(value,path):
    if isinstance(value,float) and value.is_integer():
        return int(value)
    if isinstance(value,bool) or not isinstance(value,int):
        raise ConfigError(path,'expected an integer, got %r' %(value,))
    return value


def _model(d):
    _check_keys(d,_MODEL,'model')
    d=dict(d)
    for key in _MODEL_INTS:
        if key in d:
            d[key]=_integer(d[key],'model.%s' %key)
    if 'module_params' in d:
        if not isinstance(d['module_params'],list):
            raise ConfigError('model.module_params','expected a list of integers')
        d['module_params']=tuple(_integer(x,'model.module_params[%i]' %i) for i,x in enumerate(d['module_params']))
    try:
        if all(key in d for key in _MODEL_REQUIRED):
            return ModelSpec(**d)
        if 'name' not in d:
            missing=[key for key in _MODEL_REQUIRED if key not in d]
            raise ConfigError('model.%s' %missing[0],'missing (give all fields or a model name)')
        name=d.pop('name')
        return llama_model(name,**d)
    except KeyError as error:
        raise ConfigError('model.name',error.args[0])
    except (ValueError,TypeError) as error:
        if isinstance(error,ConfigError):
            raise
        raise ConfigError('model',str(error))


def _mesh(value,path):
    try:
        return DeviceMesh.parse(value)
    except (ValueError,KeyError,TypeError) as error:
        raise ConfigError(path,str(error))


def _cluster(d):
    _check_keys(d,_CLUSTER,'cluster')
    for key in ('gpus_per_node','node_count'):
        if key not in d:
            raise ConfigError('cluster.%s' %key,'missing')
    kwargs={'gpus_per_node':_integer(d['gpus_per_node'],'cluster.gpus_per_node'),
            'node_count':_integer(d['node_count'],'cluster.node_count')}
    if 'gpu_memory_capacity' in d:
        kwargs['gpu_memory_capacity']=d['gpu_memory_capacity']
    if d.get('dp_mesh') is not None:
        kwargs['dp_mesh']=_mesh(d['dp_mesh'],'cluster.dp_mesh')
    if d.get('topology') is not None:
        t=d['topology']
        _check_keys(t,_TOPOLOGY,'cluster.topology')
        try:
            kwargs['topology']=Topology(_integer(t.get('leaf_count'),'cluster.topology.leaf_count'),
                                        _integer(t.get('nodes_per_leaf'),'cluster.topology.nodes_per_leaf'),
                                        t.get('inter_leaf_penalty',1.0))
        except ValueError as error:
            if isinstance(error,ConfigError):
                raise
            raise ConfigError('cluster.topology',str(error))
    try:
        return ClusterSpec(**kwargs)
    except (ValueError,TypeError) as error:
        raise ConfigError('cluster',str(error))


def _settings(cls,defaults,d,path):
    d={} if d is None else d
    _check_keys(d,defaults,path)
    try:
        return cls.from_dict(d)
    except (ValueError,TypeError) as error:
        raise ConfigError(path,str(error))


def _plan(value):
    if value is None:
        return None
    if isinstance(value,str):
        try:
            return preset_name(value)
        except KeyError as error:
            raise ConfigError('plan',error.args[0])
    _check_keys(value,('p','g','os','secondary'),'plan')
    for key in ('p','g','os'):
        if key not in value:
            raise ConfigError('plan.%s' %key,'missing')
    return ShardingPlan(*[_mesh(value[key],'plan.%s' %key) for key in ('p','g','os')],
                        secondary=None if value.get('secondary') is None else _mesh(value['secondary'],'plan.secondary'))


def config_from_dict(d,base_dir='.'):
    """ RunConfig from a decoded JSON object; ConfigError names the offending key path. """
    _check_keys(d,_TOP,'')
    for key in ('model','cluster'):
        if key not in d:
            raise ConfigError(key,'missing')
    solver=dict(solver_defaults)
    s=d.get('solver') or {}
    _check_keys(s,solver_defaults,'solver')
    solver.update(s)
    if not isinstance(solver['all_candidates'],bool):
        raise ConfigError('solver.all_candidates','expected true or false')
    solver['oracle_guard']=_integer(solver['oracle_guard'],'solver.oracle_guard')
    if solver['oracle_guard']<1:
        raise ConfigError('solver.oracle_guard','must be >= 1')
    profile_path=d.get('profile_path')
    if profile_path is not None and not isinstance(profile_path,str):
        raise ConfigError('profile_path','expected a path or null')
    return RunConfig(_model(d['model']),_cluster(d['cluster']),profile_path,
                     _settings(CostConfig,cost_defaults,d.get('cost'),'cost'),
                     _settings(SimConfig,sim_defaults,d.get('sim'),'sim'),
                     solver,_plan(d.get('plan')),base_dir)


def _object(keys,defaults=None,required=()):
    d={'type':'object',
       'additionalProperties':False,
       'properties':{}}
    for key in keys:
        d['properties'][key]={}
        if defaults is not None:
            value=defaults[key]
            d['properties'][key]['default']=list(value) if isinstance(value,tuple) else value
    if required:
        d['required']=list(required)
    return d


def config_schema():
    """
    JSON Schema of a run configuration, built from the tables config_from_dict
    validates against (param/config.schema.json is a copy).
    """
    cluster=_object(_CLUSTER,required=('gpus_per_node','node_count'))
    cluster['properties']['topology']=_object(_TOPOLOGY,required=('leaf_count','nodes_per_leaf'))
    schema=_object(_TOP,required=('model','cluster'))
    schema['properties'].update({'model':_object(_MODEL),
                                 'cluster':cluster,
                                 'profile_path':{'type':['string','null']},
                                 'cost':_object(cost_defaults,cost_defaults),
                                 'sim':_object(sim_defaults,sim_defaults),
                                 'solver':_object(solver_defaults,solver_defaults),
                                 'plan':{'type':['object','string','null']}})
    schema['$schema']='http://json-schema.org/draft-07/schema#'
    schema['title']='shardsim run configuration'
    return schema


def read_config(filename):
    """ Read a RunConfig from a JSON file. """
    try:
        with open(filename) as f:
            d=json.load(f)
    except OSError as error:
        raise ConfigError(filename,'cannot read (%s)' %error.strerror)
    except json.JSONDecodeError as error:
        raise ConfigError('%s:%i' %(filename,error.lineno),'invalid JSON (%s)' %error.msg)
    try:
        return config_from_dict(d,os.path.dirname(os.path.abspath(filename)))
    except ConfigError as error:
        raise ConfigError('%s: %s' %(filename,error.path),error.message)
