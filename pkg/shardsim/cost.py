"""
Closed-form communication time and memory of a sharding plan.

Message sizes are full message sizes in bytes (e.g. the whole gathered
module for an AllGather), and times come from a communication model
(a BandwidthProfile, a RingModel or a placement-aware wrapper).
"""
import math
from dataclasses import dataclass, asdict
from shardsim.comm.baseclass import CollectiveKind
from shardsim.placement import placed_model

AG=CollectiveKind.ALLGATHER
RS=CollectiveKind.REDUCESCATTER
AR=CollectiveKind.ALLREDUCE
BC=CollectiveKind.BROADCAST

cost_defaults={'bucket_size':2**27,                  # U, bytes per AllReduce bucket
               'activation_mode':'none',             # 'none' or 'full' (full recompute)
               'activation_coefficients':(34,2),     # bytes per (layer,token,hidden): no recompute, full recompute
               'tmp_buffers':2,                      # in-flight buckets
               'exact_buckets':False,                # cost the last bucket at its true size
               'flops_per_param_token':6,
               'attention_flops_coefficient':12}

_MODE_ALIASES={'none':'none','full':'full','full-recompute':'full','full_recompute':'full'}


@dataclass(frozen=True)
class CostConfig:
    bucket_size: float=cost_defaults['bucket_size']
    activation_mode: str=cost_defaults['activation_mode']
    activation_coefficients: tuple=cost_defaults['activation_coefficients']
    tmp_buffers: int=cost_defaults['tmp_buffers']
    exact_buckets: bool=cost_defaults['exact_buckets']
    flops_per_param_token: float=cost_defaults['flops_per_param_token']
    attention_flops_coefficient: float=cost_defaults['attention_flops_coefficient']

    def __post_init__(self):
        if not self.bucket_size>0:
            raise ValueError('CostConfig.bucket_size must be > 0, got %r' %self.bucket_size)
        mode=_MODE_ALIASES.get(str(self.activation_mode).lower())
        if mode is None:
            raise ValueError('CostConfig.activation_mode must be one of none, full; got %r' %self.activation_mode)
        object.__setattr__(self,'activation_mode',mode)
        coefficients=tuple(self.activation_coefficients)
        if len(coefficients)!=2 or min(coefficients)<0:
            raise ValueError('CostConfig.activation_coefficients must be two numbers >= 0, got %r' %(coefficients,))
        object.__setattr__(self,'activation_coefficients',coefficients)
        if not self.tmp_buffers>=0:
            raise ValueError('CostConfig.tmp_buffers must be >= 0, got %r' %self.tmp_buffers)
        if self.flops_per_param_token<0 or self.attention_flops_coefficient<0:
            raise ValueError('CostConfig FLOPs coefficients must be >= 0')

    @classmethod
    def from_dict(cls,d=None):
        """ Defaults updated with d; unknown keys are an error. """
        settings=dict(cost_defaults)
        for key in (d or {}):
            if key not in cost_defaults:
                raise KeyError('Unknown cost setting %r' %key)
        settings.update(d or {})
        return cls(**settings)

    def to_dict(self):
        d=asdict(self)
        d['activation_coefficients']=list(self.activation_coefficients)
        return d


@dataclass(frozen=True)
class TimeBreakdown:
    t_p: float
    t_g: float
    t_os_allreduce: float
    t_os_broadcast: float
    total: float

    @classmethod
    def from_terms(cls,t_p,t_g,t_os_allreduce,t_os_broadcast):
        return cls(t_p,t_g,t_os_allreduce,t_os_broadcast,t_p+t_g+t_os_allreduce+t_os_broadcast)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MemoryBreakdown:
    d_params: float
    d_grads: float
    d_os: float
    d_modelstate: float
    d_activation: float
    d_tmp: float
    d_total: float

    def to_dict(self):
        return asdict(self)


def _config(cfg):
    return CostConfig() if cfg is None else cfg


def bucket_times(comm,total,bucket_size,mesh,exact=False):
    """
    Durations of the AllReduce buckets needed for total bytes over mesh.

    ceil(total/U) buckets, each costed at size U; with exact=True the last
    bucket is costed at its residual size instead. No buckets when the mesh
    has one participant.
    """
    if total<=0 or mesh.size()==1:
        return []
    n=math.ceil(total/bucket_size)
    if not exact:
        return [comm.get_time(AR,bucket_size,mesh)]*n
    full=int(total//bucket_size)
    times=[comm.get_time(AR,bucket_size,mesh)]*full
    rest=total-full*bucket_size
    if rest>0:
        times.append(comm.get_time(AR,rest,mesh))
    return times


def time_params_sharding(model,plan,profile):
    """
    T_p: forward and backward AllGather plus ReduceScatter of every layer module.

    T_p = M L sum_i (t(AG,v_i,s_p) + t(AG,v_i,s_bwd) + t(RS,v_i,s_p)),
    v_i = bytes_per_param*Phi_i. The backward AllGather uses the secondary
    mesh when the plan has one (ZeRO++), otherwise s_p.
    """
    if plan.p.size()==1:
        return 0.0
    bwd_mesh=plan.p if plan.secondary is None else plan.secondary
    per_layer=0.0
    for n in model.module_params:
        v=model.bytes_per_param*n
        per_layer+=profile.get_time(AG,v,plan.p)+profile.get_time(AG,v,bwd_mesh)+profile.get_time(RS,v,plan.p)
    return model.micro_batch_count*model.layer_count*per_layer


def time_os_allreduce(model,cluster,plan,profile,cfg=None):
    """ T_os0: final-micro-batch gradient AllReduce over (s_dp/s_p), in buckets. """
    cfg=_config(cfg)
    mesh=cluster.dp_mesh.ratio(plan.p)
    total=model.bytes_per_grad*model.total_params/plan.p.size()
    return sum(bucket_times(profile,total,cfg.bucket_size,mesh,cfg.exact_buckets))


def time_os_broadcast(model,plan,profile):
    """ T_os1: s_os/s_p broadcasts of bytes_per_param*Phi/s_os over (s_os/s_p). """
    mesh=plan.os.ratio(plan.p)
    if mesh.size()==1:
        return 0.0
    v=model.bytes_per_param*model.total_params/plan.os.size()
    return mesh.size()*profile.get_time(BC,v,mesh)


def time_grads_sharding(model,plan,profile,cfg=None):
    """ T_g: bucketed AllReduce over (s_g/s_p) after each of the first M-1 micro-batches. """
    cfg=_config(cfg)
    mesh=plan.g.ratio(plan.p)
    if model.micro_batch_count==1 or mesh.size()==1:
        return 0.0
    total=model.bytes_per_grad*model.total_params/plan.p.size()
    return (model.micro_batch_count-1)*sum(bucket_times(profile,total,cfg.bucket_size,mesh,cfg.exact_buckets))


def total_comm_time(model,cluster,plan,profile,cfg=None):
    """ TimeBreakdown with T_comm = T_p + T_g + T_os0 + T_os1. """
    return TimeBreakdown.from_terms(time_params_sharding(model,plan,profile),
                                    time_grads_sharding(model,plan,profile,cfg),
                                    time_os_allreduce(model,cluster,plan,profile,cfg),
                                    time_os_broadcast(model,plan,profile))


def activation_memory(model,cfg=None):
    """ Activation bytes per GPU: c1 L B S H, or c2 B S H L under full recompute. """
    cfg=_config(cfg)
    c1,c2=cfg.activation_coefficients
    c=c2 if cfg.activation_mode=='full' else c1
    return c*model.layer_count*model.micro_batch*model.seq_len*model.hidden


def memory_breakdown(model,plan,cfg=None):
    """
    Per-GPU memory of a plan.

    d_params  = bytes_per_param Phi/s_p (+ bytes_per_param Phi/s_secondary for ZeRO++)
    d_grads   = bytes_per_grad Phi/s_g
    d_os      = bytes_per_os_per_param Phi/s_os
    d_tmp     = tmp_buffers U + bytes_per_param max Phi_i (one module in flight)
    """
    cfg=_config(cfg)
    phi=model.total_params
    d_params=model.bytes_per_param*phi/plan.p.size()
    if plan.secondary is not None:
        d_params+=model.bytes_per_param*phi/plan.secondary.size()
    d_grads=model.bytes_per_grad*phi/plan.g.size()
    d_os=model.bytes_per_os_per_param*phi/plan.os.size()
    d_modelstate=d_params+d_grads+d_os
    d_activation=activation_memory(model,cfg)
    d_tmp=cfg.tmp_buffers*cfg.bucket_size+model.bytes_per_param*max(model.module_params)
    return MemoryBreakdown(d_params,d_grads,d_os,d_modelstate,d_activation,d_tmp,
                           d_modelstate+d_activation+d_tmp)


def flops_per_step(model,cfg=None):
    """ Model FLOPs of one step of one rank: M B S (6 Phi + 12 L H S). """
    cfg=_config(cfg)
    per_token=cfg.flops_per_param_token*model.total_params \
              +cfg.attention_flops_coefficient*model.layer_count*model.hidden*model.seq_len
    return model.micro_batch_count*model.micro_batch*model.seq_len*per_token


def mfu(model,step_time,peak_flops_per_gpu,gpu_count=1,cfg=None):
    """ Model FLOPs utilization flops_per_step/(step_time peak gpu_count). """
    if not step_time>0:
        raise ValueError('Step time must be > 0, got %r' %step_time)
    return flops_per_step(model,cfg)/(step_time*peak_flops_per_gpu*gpu_count)


def tokens_per_gpu_second(model,step_time):
    """ TGS of one rank. """
    if not step_time>0:
        raise ValueError('Step time must be > 0, got %r' %step_time)
    return model.tokens_per_step()/step_time


class CostModel:
    """
    Time and memory evaluation of plans against one communication model.

    Parameters:
    -----------
    profile:    communication model (BandwidthProfile, RingModel, ...)
    cfg:        CostConfig (None: defaults)

    When the cluster's topology has an inter-leaf penalty, collectives are
    timed under the plan's node assignment.
    """
    def __init__(self,profile,cfg=None):
        self.profile=profile
        self.cfg=_config(cfg)

    def comm_for(self,cluster,plan):
        return placed_model(self.profile,cluster,plan)

    def time(self,model,cluster,plan):
        return total_comm_time(model,cluster,plan,self.comm_for(cluster,plan),self.cfg)

    def memory(self,model,plan):
        return memory_breakdown(model,plan,self.cfg)

    def evaluate(self,model,cluster,plan):
        return self.time(model,cluster,plan),self.memory(model,plan)
