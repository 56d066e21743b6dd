"""
Compute/communication overlap of one training step on one rank.

The step is built as a graph of compute and communication events placed on
streams: stream 0 computes, stream 1 runs AllGather/ReduceScatter and
stream 2 runs AllReduce/Broadcast (with comm_streams=1 all communication
shares stream 1). Streams are in-order: an event also waits for the event
issued before it on the same stream.

Overlap tiers, each adding to the previous one:
    none:         every event waits for the previous one (no overlap)
    ag_rs:        AllGather prefetch, ReduceScatter off the critical path
    ag_rs_ar:     gradient buckets are AllReduced while backward continues
    ag_rs_ar_bc:  updated parameters are broadcast during the forward pass

With blocking_reduce_scatter the input gradient of a module also waits for
the module's ReduceScatter.
"""
from dataclasses import dataclass, asdict
from time import asctime
from box.timing import Timer
from box.mix import human_readable_seconds
from shardsim.comm.baseclass import CollectiveKind
from shardsim.cost import CostConfig, bucket_times, flops_per_step, mfu, tokens_per_gpu_second
from shardsim.partition import partition_tensors_greedy
from shardsim.placement import placed_model
from shardsim.timeline import simulate_step, bubble_report
from shardsim.output import Output
from shardsim.version import shardsim_version

AG=CollectiveKind.ALLGATHER
RS=CollectiveKind.REDUCESCATTER
BC=CollectiveKind.BROADCAST

TIERS=('none','ag_rs','ag_rs_ar','ag_rs_ar_bc')
COMPUTE=0

sim_defaults={'overlap_tier':'ag_rs_ar_bc',
              'recompute':False,
              'comm_streams':2,
              'compute_time_source':'flops',    # 'flops' or 'measured'
              'module_times':None,              # measured [fwd, bwd] seconds per module of a layer
              'peak_flops':312e12,              # per GPU, BF16
              'efficiency':0.6,
              'optimizer_time':0.0,
              'blocking_reduce_scatter':False}  # input gradients wait for the ReduceScatter before them

FRAMEWORKS=('amsp','deepspeed')


@dataclass(frozen=True)
class SimConfig:
    overlap_tier: str=sim_defaults['overlap_tier']
    recompute: bool=sim_defaults['recompute']
    comm_streams: int=sim_defaults['comm_streams']
    compute_time_source: str=sim_defaults['compute_time_source']
    module_times: tuple=sim_defaults['module_times']
    peak_flops: float=sim_defaults['peak_flops']
    efficiency: float=sim_defaults['efficiency']
    optimizer_time: float=sim_defaults['optimizer_time']
    blocking_reduce_scatter: bool=sim_defaults['blocking_reduce_scatter']

    def __post_init__(self):
        if self.overlap_tier not in TIERS:
            raise ValueError('SimConfig.overlap_tier must be one of %s, got %r' %(', '.join(TIERS),self.overlap_tier))
        if self.comm_streams not in (1,2):
            raise ValueError('SimConfig.comm_streams must be 1 or 2, got %r' %(self.comm_streams,))
        if self.compute_time_source not in ('flops','measured'):
            raise ValueError('SimConfig.compute_time_source must be flops or measured, got %r' %self.compute_time_source)
        if self.module_times is not None:
            times=tuple((float(f),float(b)) for f,b in self.module_times)
            if any(not (f>0 and b>0) for f,b in times):
                raise ValueError('SimConfig.module_times must be positive')
            object.__setattr__(self,'module_times',times)
        if self.compute_time_source=='measured' and self.module_times is None:
            raise ValueError('SimConfig: measured compute times need module_times')
        if not self.peak_flops>0 or not 0<self.efficiency<=1:
            raise ValueError('SimConfig: peak_flops must be > 0 and efficiency in (0,1]')
        if not self.optimizer_time>=0:
            raise ValueError('SimConfig.optimizer_time must be >= 0, got %r' %self.optimizer_time)
        if not isinstance(self.blocking_reduce_scatter,bool):
            raise ValueError('SimConfig.blocking_reduce_scatter must be true or false, got %r' %(self.blocking_reduce_scatter,))

    @classmethod
    def from_dict(cls,d=None):
        settings=dict(sim_defaults)
        for key in (d or {}):
            if key not in sim_defaults:
                raise KeyError('Unknown simulation setting %r' %key)
        settings.update(d or {})
        return cls(**settings)

    def replace(self,**kwargs):
        d=asdict(self)
        d.update(kwargs)
        return SimConfig(**d)

    def to_dict(self):
        d=asdict(self)
        if self.module_times is not None:
            d['module_times']=[list(t) for t in self.module_times]
        return d


def framework_config(sim,framework):
    """
    Simulation settings of a plan run by framework.

    DeepSpeed blocks the backward pass on each ReduceScatter and does not
    overlap the parameter Broadcast with the forward pass.
    """
    if framework=='amsp':
        return sim
    if framework=='deepspeed':
        tier=TIERS[min(TIERS.index(sim.overlap_tier),TIERS.index('ag_rs_ar'))]
        return sim.replace(overlap_tier=tier,blocking_reduce_scatter=True)
    raise ValueError('Unknown framework %r; choose from %s' %(framework,', '.join(FRAMEWORKS)))


@dataclass(frozen=True)
class Event:
    id: int
    kind: str
    layer: int
    module: int
    duration: float
    depends_on: tuple
    stream: int
    micro_batch: int=None
    index: int=None

    def name(self):
        if self.kind=='allreduce_bucket':
            return 'allreduce_bucket %i mb%i' %(self.index,self.micro_batch)
        if self.kind=='broadcast_shard':
            return 'broadcast_shard %i' %self.index
        if self.kind=='optimizer_step':
            return 'optimizer_step'
        if self.module is None:
            return '%s L%i mb%i' %(self.kind,self.layer,self.micro_batch)
        return '%s L%i.%i mb%i' %(self.kind,self.layer,self.module,self.micro_batch)


class EventGraph:
    def __init__(self,events,stream_names=None,tier=None):
        self.events=tuple(events)
        self.stream_names=dict(stream_names or {})
        self.tier=tier

    def __len__(self):
        return len(self.events)

    def count(self,kind):
        return sum(1 for ev in self.events if ev.kind==kind)

    def total_duration(self):
        return sum(ev.duration for ev in self.events)

    def compute_duration(self):
        return sum(ev.duration for ev in self.events if ev.stream==COMPUTE)

    def stream_durations(self):
        out={}
        for ev in self.events:
            out[ev.stream]=out.get(ev.stream,0.0)+ev.duration
        return out


class _Builder:
    """ Collects events; each one waits for its stream predecessor (and, serially, for everything). """
    def __init__(self,serial):
        self.serial=serial
        self.events=[]
        self.last={}

    def add(self,kind,stream,duration,deps=(),layer=None,module=None,micro_batch=None,index=None):
        deps=set(d for d in deps if d is not None)
        if stream in self.last:
            deps.add(self.last[stream])
        if self.serial and self.events:
            deps.add(self.events[-1].id)
        ev=Event(len(self.events),kind,layer,module,duration,tuple(sorted(deps)),stream,micro_batch,index)
        self.events.append(ev)
        self.last[stream]=ev.id
        return ev.id


def compute_times(model,sim,cost_cfg=None):
    """
    Forward and backward seconds of each module of a layer.

    From FLOPs: the forward pass of a micro-batch is one third of the step's
    model FLOPs per micro-batch, split over the modules in proportion to their
    parameters; backward is twice forward.
    """
    if sim.compute_time_source=='measured':
        if len(sim.module_times)!=model.modules_per_layer:
            raise ValueError('module_times lists %i modules, the model has %i per layer'
                             %(len(sim.module_times),model.modules_per_layer))
        return [f for f,b in sim.module_times],[b for f,b in sim.module_times]
    fwd_flops=flops_per_step(model,cost_cfg)/model.micro_batch_count/3.0
    rate=sim.peak_flops*sim.efficiency
    layer_params=model.layer_params()
    fwd=[fwd_flops*n/layer_params/rate for n in model.module_params]
    return fwd,[2*f for f in fwd]


def _bucket_span(start,end,bucket_size,count):
    """ Indices of the buckets holding bytes (start, end]. """
    def index(x,up):
        q=x/bucket_size
        if abs(q-round(q))<1e-9:
            q=float(round(q))
        i=int(-(-q//1))-1 if up else int(q//1)
        return min(max(i,0),count-1)
    return index(start,False),index(end,True)


class _Buckets:
    """ Gradient AllReduce buckets of one micro-batch, filled in backward order. """
    def __init__(self,builder,stream,durations,bucket_size,micro_batch,immediate):
        self.b=builder
        self.stream=stream
        self.durations=durations
        self.U=bucket_size
        self.mb=micro_batch
        self.immediate=immediate
        self.members=[[] for d in durations]
        self.cum=0.0
        self.emitted=0
        self.ids=[]

    def add(self,event,nbytes):
        if len(self.durations)==0 or nbytes<=0:
            return
        first,last=_bucket_span(self.cum,self.cum+nbytes,self.U,len(self.durations))
        self.cum+=nbytes
        for i in range(first,last+1):
            self.members[i].append(event)
        if self.immediate:
            full=min(int(self.cum/self.U*(1+1e-12)),len(self.durations)-1)
            self.emit(full)

    def emit(self,upto,extra=()):
        while self.emitted<upto:
            i=self.emitted
            self.ids.append(self.b.add('allreduce_bucket',self.stream,self.durations[i],
                                       list(self.members[i])+list(extra),micro_batch=self.mb,index=i))
            self.emitted+=1

    def finish(self,extra=()):
        self.emit(len(self.durations),extra)
        return self.ids


def build_schedule(model,cluster,plan,profile,cfg=None,cost_cfg=None):
    """
    Event graph of one training step.

    Parameters:
    -----------
    model:      ModelSpec
    cluster:    ClusterSpec
    plan:       ShardingPlan (validated)
    profile:    communication model
    cfg:        SimConfig (None: defaults)
    cost_cfg:   CostConfig for bucket size and FLOPs constants (None: defaults)

    Communication durations come from the same calls as the cost model, so
    at tier 'none' the step takes total compute plus T_comm.
    """
    sim=SimConfig() if cfg is None else cfg
    cost_cfg=CostConfig() if cost_cfg is None else cost_cfg
    comm=placed_model(profile,cluster,plan)
    tier=TIERS.index(sim.overlap_tier)
    prefetch=tier>=1
    b=_Builder(serial=(tier==0))
    s_agrs=1
    s_arbc=2 if sim.comm_streams==2 else 1
    if sim.comm_streams==2:
        stream_names={COMPUTE:'compute',1:'allgather/reducescatter',2:'allreduce/broadcast'}
    else:
        stream_names={COMPUTE:'compute',1:'communication'}

    L,K=model.layer_count,model.modules_per_layer
    n=L*K
    M=model.micro_batch_count
    fwd,bwd=compute_times(model,sim,cost_cfg)
    sharded=plan.p.size()>1
    bwd_mesh=plan.p if plan.secondary is None else plan.secondary
    v=[model.bytes_per_param*x for x in model.module_params]
    ag_fwd=[comm.get_time(AG,x,plan.p) for x in v]
    ag_bwd=[comm.get_time(AG,x,bwd_mesh) for x in v]
    rs=[comm.get_time(RS,x,plan.p) for x in v]
    grad_bytes=[model.bytes_per_grad*x/plan.p.size() for x in model.module_params]
    rest_bytes=model.bytes_per_grad*model.remainder_params()/plan.p.size()
    grad_total=model.bytes_per_grad*model.total_params/plan.p.size()
    U=cost_cfg.bucket_size
    g_buckets=bucket_times(comm,grad_total,U,plan.g.ratio(plan.p),cost_cfg.exact_buckets)
    dp_buckets=bucket_times(comm,grad_total,U,cluster.dp_mesh.ratio(plan.p),cost_cfg.exact_buckets)

    # broadcasts of the previous step's updated shards, in order of first use
    bc_mesh=plan.os.ratio(plan.p)
    bc_ids=[]
    module_bc=[[] for m in range(n)]
    if bc_mesh.size()>1:
        k=bc_mesh.size()
        t_bc=comm.get_time(BC,model.bytes_per_param*model.total_params/plan.os.size(),bc_mesh)
        offset=1 if model.remainder_params()>0 else 0
        partition=partition_tensors_greedy(model.tensor_params(),k)
        first_use=[n]*k
        users=[[] for m in range(n)]
        for t,shard in enumerate(partition.assignment):
            m=max(t-offset,0)
            users[m].append(shard)
            first_use[shard]=min(first_use[shard],m)
        bc_of={}
        for shard in sorted(range(k),key=lambda s:(first_use[s],s)):
            bc_of[shard]=b.add('broadcast_shard',s_arbc,t_bc,index=shard)
            bc_ids.append(bc_of[shard])
        for m in range(n):
            module_bc[m]=[bc_of[s] for s in users[m]]

    def bc_deps(m,first):
        if len(bc_ids)==0:
            return []
        if tier>=3:
            return module_bc[m]
        return [bc_ids[-1]] if first else []

    last_compute=None
    gate=[]
    rs_ids=[]
    ar_ids=[]
    for mb in range(M):
        # forward
        ag={}
        def gather(layer,dep):
            for j in range(K):
                m=layer*K+j
                ag[m]=b.add('allgather',s_agrs,ag_fwd[j],[dep]+(bc_deps(m,m==0) if mb==0 else []),layer,j,mb)
        for l in range(L):
            if sharded and prefetch:
                if l==0:
                    gather(0,last_compute)
                if l+1<L:
                    gather(l+1,last_compute)
            for j in range(K):
                m=l*K+j
                if sharded and not prefetch:
                    ag[m]=b.add('allgather',s_agrs,ag_fwd[j],bc_deps(m,m==0) if mb==0 else [],l,j,mb)
                deps=[ag.get(m)]+(bc_deps(m,m==0) if mb==0 else [])
                if m==0:
                    deps+=gate
                last_compute=b.add('fwd_compute',COMPUTE,fwd[j],deps,l,j,mb)

        # backward
        if mb<M-1:
            durations=g_buckets
        else:
            durations=dp_buckets
        buckets=_Buckets(b,s_arbc,durations,U,mb,immediate=(tier!=1))

        def grads_of(m,event):
            j=m%K
            if sharded:
                r=b.add('reduce_scatter',s_agrs,rs[j],[event],m//K,j,mb)
                rs_ids.append(r)
                buckets.add(r,grad_bytes[j])
                return r if sim.blocking_reduce_scatter else None
            buckets.add(event,grad_bytes[j])
            return None

        if not sim.recompute:
            order=list(range(n))[::-1]
            bag={}
            def gather_bwd(m,dep):
                bag[m]=b.add('allgather',s_agrs,ag_bwd[m%K],[dep],m//K,m%K,mb)
            if sharded and prefetch:
                gather_bwd(order[0],last_compute)
            for i,m in enumerate(order):
                if sharded:
                    if not prefetch:
                        gather_bwd(m,None)
                    elif i+1<n:
                        gather_bwd(order[i+1],last_compute)
                gw=b.add('bwd_grad_weight',COMPUTE,bwd[m%K]/2,[bag.get(m)],m//K,m%K,mb)
                wait=grads_of(m,gw)
                last_compute=b.add('bwd_grad_input',COMPUTE,bwd[m%K]/2,[wait],m//K,m%K,mb)
        else:
            rag={}
            def gather_layer(layer,dep):
                for j in range(K):
                    rag[layer*K+j]=b.add('allgather',s_agrs,ag_bwd[j],[dep],layer,j,mb)
            for l in reversed(range(L)):
                if sharded:
                    if not prefetch:
                        gather_layer(l,None)
                    else:
                        if l==L-1:
                            gather_layer(l,last_compute)
                        if l>0:
                            gather_layer(l-1,last_compute)
                last_compute=b.add('recompute_fwd',COMPUTE,sum(fwd),[rag.get(l*K+j) for j in range(K)],l,None,mb)
                for j in reversed(range(K)):
                    m=l*K+j
                    gw=b.add('bwd_grad_weight',COMPUTE,bwd[j]/2,[],l,j,mb)
                    wait=grads_of(m,gw)
                    last_compute=b.add('bwd_grad_input',COMPUTE,bwd[j]/2,[wait],l,j,mb)
        buckets.add(last_compute,rest_bytes)
        if tier==1:
            ids=buckets.finish(extra=[last_compute])
            gate=list(ids)
        else:
            ids=buckets.finish()
        ar_ids.extend(ids)

    b.add('optimizer_step',COMPUTE,sim.optimizer_time,rs_ids+ar_ids+[last_compute],index=None)
    return EventGraph(b.events,stream_names,sim.overlap_tier)


def step_summary(timeline,graph,model,sim,cost_cfg=None):
    """ Step time, compute and communication totals, bubbles, MFU and TGS of a simulated step. """
    bubbles=bubble_report(timeline)
    t=timeline.step_time
    compute=graph.compute_duration()
    streams=graph.stream_durations()
    summary={'step_time':t,
             'compute_time':compute,
             'comm_time':sum(d for s,d in streams.items() if s!=COMPUTE),
             'compute_bubble':bubbles[COMPUTE]['idle'] if COMPUTE in bubbles else 0.0,
             'overlap_tier':sim.overlap_tier,
             'recompute':sim.recompute,
             'events':len(graph),
             'streams':{str(s):bubbles[s] for s in sorted(bubbles)},
             'mfu':mfu(model,t,sim.peak_flops,1,cost_cfg) if t>0 else 0.0,
             'tgs':tokens_per_gpu_second(model,t) if t>0 else 0.0}
    return summary


class OverlapSimulator(Output):
    def __init__(self,profile,cfg=None,cost_cfg=None,txt='-',verbose=False):
        """
        Simulator of one training step on a representative rank.

        Parameters:
        -----------
        profile:    communication model (BandwidthProfile, RingModel, ...)
        cfg:        SimConfig (None: defaults)
        cost_cfg:   CostConfig (None: defaults)
        txt:        text output; None: stdout, '-': discard, or file name/stream
        verbose:    print timing summary after each run
        """
        Output.__init__(self)
        self.set_text(txt)
        self.profile=profile
        self.cfg=SimConfig() if cfg is None else cfg
        self.cost_cfg=CostConfig() if cost_cfg is None else cost_cfg
        self.verbose=verbose
        self.timer=Timer('simulator',txt=self.get_output(),enabled=verbose)

    def greetings(self,sim=None):
        sim=self.cfg if sim is None else sim
        return 'shardsim overlap simulator ver. %s, tier %s, %i communication stream(s)%s; %s' \
               %(shardsim_version,sim.overlap_tier,sim.comm_streams,
                 ', recompute' if sim.recompute else '',asctime())

    def run(self,model,cluster,plan,tier=None):
        """ (graph, timeline, summary) of one step; tier overrides the configured one. """
        sim=self.cfg if tier is None else self.cfg.replace(overlap_tier=tier)
        print(self.greetings(sim), file=self.txt)
        print('Plan: %s' %plan, file=self.txt)
        self.timer.start('build')
        graph=build_schedule(model,cluster,plan,self.profile,sim,self.cost_cfg)
        self.timer.stop('build')
        self.timer.start('schedule')
        timeline=simulate_step(graph)
        self.timer.stop('schedule')
        summary=step_summary(timeline,graph,model,sim,self.cost_cfg)
        print('%i events, step time %s, compute %s, compute bubbles %s, MFU %.3f' %(len(graph),
              human_readable_seconds(summary['step_time']),human_readable_seconds(summary['compute_time']),
              human_readable_seconds(summary['compute_bubble']),summary['mfu']), file=self.txt)
        if summary['compute_bubble']>0.5*summary['step_time']:
            self.add_note('Compute stream idle for more than half of the step')
        if self.verbose:
            self.timer.summary()
        self.print_notes()
        self.flush()
        return graph,timeline,summary

    def sweep_tiers(self,model,cluster,plan):
        """ Summaries of the step at every overlap tier. """
        return {tier:self.run(model,cluster,plan,tier)[2] for tier in TIERS}
