"""
Search of the sharding space.

The planner enumerates every plan allowed by the dependency rule, evaluates
communication time and memory for each, and picks the fastest plan that
fits in GPU memory.
"""
from dataclasses import dataclass
from itertools import product
from time import asctime
from box.timing import Timer
from box.mix import divisors, human_readable_bytes, human_readable_seconds
from shardsim.mesh import DeviceMesh, ShardingPlan, tuple_is_valid
from shardsim.cost import CostModel
from shardsim.presets import PRESET_NAMES, preset, preset_plan, InfeasiblePresetError
from shardsim.output import Output
from shardsim.version import shardsim_version

ORACLE_GUARD=10**6


class InfeasiblePlanError(RuntimeError):
    """ No candidate fits in GPU memory. """
    def __init__(self,report,capacity):
        self.report=report
        self.minimal=report.minimal
        self.capacity=capacity
        RuntimeError.__init__(self,'No sharding plan fits in %s per GPU; smallest is %s with d_total=%.6g bytes'
                              %(human_readable_bytes(capacity),self.minimal.plan,self.minimal.memory.d_total))


class GridGuardError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlanResult:
    plan: ShardingPlan
    time: object
    memory: object
    feasible: bool
    rank: int=None
    name: str=None
    violations: str=None

    def sort_key(self):
        t=float('inf') if self.time is None else self.time.total
        return (t,self.memory.d_total,self.plan.key())

    def to_dict(self):
        d={'plan':self.plan.to_dict(),
           'time':None if self.time is None else self.time.to_dict(),
           'memory':self.memory.to_dict(),
           'feasible':self.feasible,
           'rank':self.rank}
        if self.name is not None:
            d['name']=self.name
        if self.violations is not None:
            d['violations']=self.violations
        return d


@dataclass(frozen=True)
class SearchReport:
    best: PlanResult
    candidates_evaluated: int
    candidates_filtered: int
    all_results: tuple=None
    minimal: PlanResult=None

    def to_dict(self,all_candidates=False):
        d={'best':None if self.best is None else self.best.to_dict(),
           'candidates_evaluated':self.candidates_evaluated,
           'candidates_filtered':self.candidates_filtered}
        if all_candidates and self.all_results is not None:
            d['all_results']=[r.to_dict() for r in self.all_results]
        return d


@dataclass(frozen=True)
class SweepPoint:
    node_count: int
    model: object
    cluster: object
    results: tuple

    def to_dict(self):
        return {'node_count':self.node_count,
                'gpus':self.cluster.gpu_count(),
                'micro_batch_count':self.model.micro_batch_count,
                'comparison':[r.to_dict() for r in self.results]}


def raw_grid_size(cluster):
    """ Number of (p0,p1,g0,g1,os0,os1) tuples with axes in [1..R] x [1..N]. """
    return (cluster.gpus_per_node*cluster.node_count)**3


def state_meshes(cluster):
    """ Meshes a single model state may use: a x 1 with a | s_dp0, or s_dp0 x b with b | s_dp1. """
    dp=cluster.dp_mesh
    meshes=[DeviceMesh(a,1) for a in divisors(dp.per_node)]
    meshes+=[DeviceMesh(dp.per_node,b) for b in divisors(dp.nodes) if b>1]
    return meshes


def enumerate_candidates(cluster):
    """
    All plans satisfying the dependency rule, in lexicographic order of
    (s_p0,s_p1,s_g0,s_g1,s_os0,s_os1).

    Meshes are drawn from the divisor chains of s_dp; os must cover p on
    both axes and g is either p or os, which is the whole ordering rule.
    """
    meshes=state_meshes(cluster)
    plans=[]
    for p in meshes:
        for os in meshes:
            if os.per_node<p.per_node or os.nodes<p.nodes:
                continue
            for g in sorted(set([p,os]),key=DeviceMesh.key):
                plans.append(ShardingPlan(p,g,os))
    plans.sort(key=ShardingPlan.key)
    return plans


def _rank(results):
    """ Feasible results first, each group by (time, d_total, plan order). """
    ordered=sorted(results,key=lambda r:(not r.feasible,)+r.sort_key())
    return [PlanResult(r.plan,r.time,r.memory,r.feasible,i,r.name,r.violations) for i,r in enumerate(ordered)]


class Planner(Output):
    def __init__(self,profile,cfg=None,txt='-',verbose=False,oracle_guard=ORACLE_GUARD):
        """
        Sharding planner.

        Parameters:
        -----------
        profile:    communication model (BandwidthProfile, RingModel, ...)
        cfg:        CostConfig (None: defaults)
        txt:        text output; None: stdout, '-': discard, or file name/stream
        verbose:    print timing summary at the end of each search
        oracle_guard: largest raw grid brute_force_oracle agrees to scan
        """
        Output.__init__(self)
        self.set_text(txt)
        self.verbose=verbose
        self.cost=CostModel(profile,cfg)
        self.oracle_guard=oracle_guard
        self.timer=Timer('planner',txt=self.get_output(),enabled=verbose)

    def greetings(self,model,cluster):
        print('shardsim planner ver. %s' %shardsim_version, file=self.txt)
        print('Date: %s' %asctime(), file=self.txt)
        print('Model: %s, Phi=%.4g, L=%i, K=%i, M=%i' %(model.name or 'custom',model.total_params,
              model.layer_count,model.modules_per_layer,model.micro_batch_count), file=self.txt)
        print('Cluster: %ix%i GPUs, data-parallel mesh %s, %s per GPU' %(cluster.gpus_per_node,cluster.node_count,
              cluster.dp_mesh,human_readable_bytes(cluster.gpu_memory_capacity)), file=self.txt)
        print(self.cost.profile.greetings(), file=self.txt)

    def evaluate(self,model,cluster,plan,name=None):
        """ PlanResult of a single (valid) plan. """
        time,memory=self.cost.evaluate(model,cluster,plan)
        return PlanResult(plan,time,memory,memory.d_total<=cluster.gpu_memory_capacity,name=name)

    def _search(self,model,cluster,plans,filtered):
        self.timer.start('evaluate')
        results=_rank([self.evaluate(model,cluster,plan) for plan in plans])
        self.timer.stop('evaluate')
        minimal=min(results,key=lambda r:(r.memory.d_total,r.plan.key()))
        best=results[0] if results[0].feasible else None
        return SearchReport(best,len(results),filtered,tuple(results),minimal)

    def _finish(self,report,cluster):
        if report.best is None:
            print('No feasible plan; smallest memory %s with %s' %(report.minimal.plan,
                  human_readable_bytes(report.minimal.memory.d_total)), file=self.txt)
        else:
            print('Evaluated %i candidates (%i filtered out)' %(report.candidates_evaluated,report.candidates_filtered), file=self.txt)
            print('Best plan: %s, T_comm=%s, memory %s' %(report.best.plan,human_readable_seconds(report.best.time.total),
                  human_readable_bytes(report.best.memory.d_total)), file=self.txt)
        if self.verbose:
            self.timer.summary()
        self.print_notes()
        self.flush()
        if report.best is None:
            raise InfeasiblePlanError(report,cluster.gpu_memory_capacity)
        return report

    def solve(self,model,cluster):
        """
        Communication-minimal plan that fits in GPU memory.

        Ties in T_comm are broken by smaller d_total, then by plan order.
        Raises InfeasiblePlanError (carrying the full report) when nothing fits.
        """
        self.greetings(model,cluster)
        self.timer.start('enumerate')
        plans=enumerate_candidates(cluster)
        self.timer.stop('enumerate')
        report=self._search(model,cluster,plans,raw_grid_size(cluster)-len(plans))
        return self._finish(report,cluster)

    def brute_force_oracle(self,model,cluster,guard=None):
        """
        Same minimization as solve over the unfiltered grid of six factors,
        keeping the tuples that pass the dependency rule.

        Raises GridGuardError when the grid exceeds guard (default: the
        planner's oracle_guard).
        """
        guard=self.oracle_guard if guard is None else guard
        size=raw_grid_size(cluster)
        if size>guard:
            raise GridGuardError('Raw grid of %i tuples exceeds the oracle guard %i' %(size,guard))
        R,N=cluster.gpus_per_node,cluster.node_count
        axis=list(product(range(1,R+1),range(1,N+1)))
        self.timer.start('enumerate')
        plans=[ShardingPlan.from_tuple(p+g+os) for p,g,os in product(axis,axis,axis)
               if tuple_is_valid(p+g+os,cluster)]
        self.timer.stop('enumerate')
        report=self._search(model,cluster,plans,size-len(plans))
        return self._finish(report,cluster)

    def compare_presets(self,model,cluster,include_best=True):
        """
        Evaluate every named preset (and the planner's best plan).

        Presets that do not fit the cluster are kept with feasible=False and
        no time. The list is sorted by T_comm, unevaluated entries last.
        """
        results=[]
        for name in PRESET_NAMES:
            try:
                plan=preset(name,cluster)
            except InfeasiblePresetError as error:
                plan=error.plan
                results.append(PlanResult(plan,None,self.cost.memory(model,plan),False,name=name,
                                          violations=error.violations))
                self.add_note('Preset %s does not fit the cluster' %name)
                continue
            results.append(self.evaluate(model,cluster,plan,name=name))
        if include_best:
            try:
                report=self.solve(model,cluster)
                best=report.best
                results.append(PlanResult(best.plan,best.time,best.memory,True,name='planner'))
            except InfeasiblePlanError:
                self.add_note('Planner found no feasible plan')
        ordered=sorted(results,key=lambda r:(r.time is None,)+r.sort_key()+(r.name,))
        out=[PlanResult(r.plan,r.time,r.memory,r.feasible,i,r.name,r.violations) for i,r in enumerate(ordered)]
        for r in out:
            t='-' if r.time is None else human_readable_seconds(r.time.total)
            print('%-10s %-30s T_comm=%-12s memory=%-10s %s' %(r.name,r.plan,t,human_readable_bytes(r.memory.d_total),
                  'ok' if r.feasible else 'infeasible'), file=self.txt)
        self.print_notes()
        self.flush()
        return out

    def sweep_nodes(self,model,cluster,node_counts,global_batch_tokens=None):
        """
        compare_presets on the cluster grown or shrunk to each node count.

        With global_batch_tokens the global batch stays fixed: each point runs
        M = max(1, tokens // (B S R N)) micro-batches per step. Returns a
        SweepPoint per node count, in the order given.
        """
        points=[]
        for N in node_counts:
            c=cluster.with_nodes(N)
            m=model
            if global_batch_tokens is not None:
                per_step=model.micro_batch*model.seq_len*c.gpu_count()
                m=model.replace(micro_batch_count=max(1,int(global_batch_tokens//per_step)))
            print('Sweep point: %i nodes, M=%i' %(N,m.micro_batch_count), file=self.txt)
            points.append(SweepPoint(N,m,c,tuple(self.compare_presets(m,c))))
        return points


def solve(model,cluster,profile,cfg=None):
    return Planner(profile,cfg).solve(model,cluster)


def brute_force_oracle(model,cluster,profile,cfg=None,guard=ORACLE_GUARD):
    return Planner(profile,cfg,oracle_guard=guard).brute_force_oracle(model,cluster)


def compare_presets(model,cluster,profile,cfg=None):
    return Planner(profile,cfg).compare_presets(model,cluster)


def sweep_nodes(model,cluster,profile,node_counts,cfg=None,global_batch_tokens=None):
    return Planner(profile,cfg).sweep_nodes(model,cluster,node_counts,global_batch_tokens)
