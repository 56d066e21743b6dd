import random
from io import StringIO
from itertools import product
from shardsim.comm import calibrated_profile, synthetic_profile, AlphaBetaParams
from shardsim.cost import CostConfig
from shardsim.mesh import DeviceMesh, ShardingPlan, validate_plan, tuple_is_valid, ONE
from shardsim.planner import Planner, enumerate_candidates, raw_grid_size, solve, brute_force_oracle
from shardsim.planner import compare_presets, sweep_nodes, InfeasiblePlanError, GridGuardError
from shardsim.io.config import read_config
from shardsim.placement import Topology
from shardsim.specs import ClusterSpec, llama_model
from shardsim.test.misc import run_tests, all_meshes, small_model, default_configs

MESH8=DeviceMesh(8,1)


def raw_valid_set(cluster):
    R,N=cluster.gpus_per_node,cluster.node_count
    axis=list(product(range(1,R+1),range(1,N+1)))
    return set(p+g+os for p,g,os in product(axis,axis,axis) if tuple_is_valid(p+g+os,cluster))


def oracle_profiles(R,N):
    """ Two profiles with different intra/inter trade-offs. """
    cluster=ClusterSpec(R,N)
    meshes=all_meshes(R,N)
    sizes=[2.0**k for k in range(10,37,2)]
    second=synthetic_profile(AlphaBetaParams(2e-5,100e9),AlphaBetaParams(1e-6,80e9),meshes,sizes,gpus_per_node=None)
    return calibrated_profile(cluster),second


def test_small_candidates():
    assert [p.key() for p in enumerate_candidates(ClusterSpec(1,1))]==[(1,1,1,1,1,1)]
    keys=[p.key() for p in enumerate_candidates(ClusterSpec(2,1))]
    assert keys==[(1,1,1,1,1,1),(1,1,1,1,2,1),(1,1,2,1,2,1),(2,1,2,1,2,1)]
    assert keys==sorted(keys)


def test_filter_soundness():
    for R in range(1,9):
        for N in range(1,9):
            cluster=ClusterSpec(R,N)
            keys=[p.key() for p in enumerate_candidates(cluster)]
            assert len(keys)==len(set(keys))
            assert set(keys)==raw_valid_set(cluster)


def test_oracle_equivalence():
    for R in range(1,9):
        for N in range(1,9):
            model=small_model(L=2,K=2,module=3000000,remainder=1000000,M=2)
            # capacity excluding the replicated plans whenever the cluster allows sharding
            cluster=ClusterSpec(R,N,gpu_memory_capacity=1.5e8)
            for profile in oracle_profiles(R,N):
                cfg=CostConfig(bucket_size=2**20)
                try:
                    a=solve(model,cluster,profile,cfg)
                except InfeasiblePlanError as error:
                    try:
                        brute_force_oracle(model,cluster,profile,cfg)
                    except InfeasiblePlanError as error2:
                        assert error.minimal.plan==error2.minimal.plan
                        continue
                    raise RuntimeError('solve infeasible, oracle feasible on %ix%i' %(R,N))
                b=brute_force_oracle(model,cluster,profile,cfg)
                assert a.best.plan==b.best.plan
                assert a.best.time.total==b.best.time.total
                assert a.candidates_evaluated==b.candidates_evaluated
                assert validate_plan(a.best.plan,cluster).ok


def test_oracle_guard():
    cluster=ClusterSpec(8,16)
    assert raw_grid_size(cluster)>10**6
    try:
        brute_force_oracle(small_model(),cluster,calibrated_profile(ClusterSpec(8,2)))
    except GridGuardError:
        pass
    else:
        raise RuntimeError('oracle guard not applied')
    # the guard is a planner setting
    cluster=ClusterSpec(2,2)
    planner=Planner(calibrated_profile(cluster),oracle_guard=63)
    assert raw_grid_size(cluster)==64
    try:
        planner.brute_force_oracle(small_model(),cluster)
    except GridGuardError:
        pass
    else:
        raise RuntimeError('planner oracle_guard not applied')
    assert planner.brute_force_oracle(small_model(),cluster,guard=64).best.plan==planner.solve(small_model(),cluster).best.plan


def test_best_plan_7b():
    cluster=ClusterSpec(8,128,gpu_memory_capacity=80e9)
    profile=calibrated_profile(cluster)
    model=llama_model('7B',micro_batch=2,micro_batch_count=2)
    report=solve(model,cluster,profile)
    assert report.best.plan==ShardingPlan(ONE,ONE,MESH8)
    assert report.best.feasible and report.best.memory.d_total<=80e9
    # determinism
    again=solve(model,cluster,profile)
    assert again.to_dict(True)==report.to_dict(True)

    # nothing but the replica when memory is plentiful
    roomy=ClusterSpec(8,128,gpu_memory_capacity=1e15)
    report=solve(llama_model('7B'),roomy,profile)
    assert report.best.plan==ShardingPlan(ONE,ONE,ONE)

    # one micro-batch: sharding gradients costs nothing, so g follows os on memory
    report=solve(llama_model('7B'),cluster,profile)
    best=report.best.plan
    assert best.p==ONE and best.g==best.os and best.os.nodes==1
    replica=Planner(profile).evaluate(llama_model('7B'),cluster,ShardingPlan(ONE,ONE,best.os))
    assert replica.time.total==report.best.time.total


def test_shipped_7b_config():
    """ LLaMA-7B, B=1, M=2 on 8x128 GPUs with 64 GB: optimizer states inside the node, nothing else sharded. """
    config=read_config(default_configs['llama7b'])
    profile=calibrated_profile(config.cluster)
    report=solve(config.model,config.cluster,profile)
    assert report.best.plan==ShardingPlan(ONE,ONE,MESH8)
    assert report.best.plan.key()==(1,1,1,1,8,1)
    # os on four GPUs would be faster but does not fit
    planner=Planner(profile)
    quarter=planner.evaluate(config.model,config.cluster,ShardingPlan(ONE,ONE,DeviceMesh(4,1)))
    assert not quarter.feasible and quarter.time.total<report.best.time.total

    results=compare_presets(config.model,config.cluster,profile)
    time={r.name:r.time.total for r in results if r.time is not None}
    assert time['planner']==time['AMSP-7B']<time['ZeRO-1']<time['MiCS']<time['ZeRO-3']
    assert min(time,key=lambda name:(time[name],name!='AMSP-7B'))=='AMSP-7B'


def test_capacity_forces_sharding():
    cfg=CostConfig(activation_coefficients=(0,2))
    model=llama_model('7B')
    cluster=ClusterSpec(8,2,gpu_memory_capacity=40e9)
    profile=calibrated_profile(cluster)
    report=solve(model,cluster,profile,cfg)
    assert report.best.plan.os.size()>1
    assert report.best.memory.d_total<=40e9
    replica=Planner(profile,cfg).evaluate(model,cluster,ShardingPlan(ONE,ONE,ONE))
    assert not replica.feasible
    oracle=brute_force_oracle(model,cluster,profile,cfg)
    assert oracle.best.plan==report.best.plan


def test_infeasible():
    cluster=ClusterSpec(2,2,gpu_memory_capacity=1.0)
    profile=calibrated_profile(cluster)
    try:
        solve(small_model(),cluster,profile)
    except InfeasiblePlanError as error:
        assert error.capacity==1.0
        assert error.minimal.plan==ShardingPlan(cluster.dp_mesh,cluster.dp_mesh,cluster.dp_mesh)
        assert error.report.best is None
        assert 'd_total' in str(error)
    else:
        raise RuntimeError('infeasible cluster solved')


def test_compare_presets():
    cluster=ClusterSpec(8,128)
    profile=calibrated_profile(cluster)
    results=compare_presets(llama_model('7B'),cluster,profile)
    time={r.name:r.time.total for r in results if r.time is not None}
    assert time['AMSP-7B']<time['ZeRO-1']<time['MiCS']<time['ZeRO-3']
    assert time['planner']<=time['AMSP-7B']
    totals=[r.time.total for r in results if r.time is not None]
    assert totals==sorted(totals)
    assert [r.rank for r in results]==list(range(len(results)))

    single=ClusterSpec(8,1)
    results=compare_presets(llama_model('7B'),single,calibrated_profile(single))
    by_name={r.name:r for r in results}
    assert by_name['AMSP-7B'].time.total==by_name['ZeRO-1'].time.total
    # presets that need more than one node
    assert by_name['MiCS-30B'].feasible is False and by_name['MiCS-30B'].time is None
    assert by_name['AMSP-30B'].violations is not None
    assert results[-1].time is None

    # one GPU: nothing to communicate
    lone=ClusterSpec(1,1)
    results=compare_presets(llama_model('7B'),lone,calibrated_profile(lone))
    timed=[r for r in results if r.time is not None]
    assert len(timed)>1 and all(r.time.total==0.0 for r in timed)
    assert any(r.time is None and not r.feasible for r in results)


def test_sweep_nodes():
    model=llama_model('7B')
    cluster=ClusterSpec(8,1)
    profile=calibrated_profile(ClusterSpec(8,16))
    nodes=[1,2,4,8,16]
    points=sweep_nodes(model,cluster,profile,nodes,global_batch_tokens=2**22)
    assert [p.node_count for p in points]==nodes
    assert [p.cluster.gpu_count() for p in points]==[8*n for n in nodes]
    # 4M tokens of 4096 per sequence
    assert [p.model.micro_batch_count for p in points]==[128,64,32,16,8]
    assert points[0].to_dict()['gpus']==8

    memory={}
    for p in points:
        for r in p.results:
            memory.setdefault(r.name,[]).append(r.memory.d_total)
    for name in ('ZeRO-1','ZeRO-3','ZeRO++'):
        m=memory[name]
        assert all(b<a for a,b in zip(m,m[1:])), (name,m)
    for name in ('MiCS','AMSP-7B','AMSP-13B'):
        assert len(set(memory[name]))==1
    # the planner's choice fits at every size
    for p in points:
        best=[r for r in p.results if r.name=='planner'][0]
        assert best.memory.d_total<=p.cluster.gpu_memory_capacity

    # without a global batch the micro-batch count stays
    points=sweep_nodes(model,cluster,profile,[2,4])
    assert [p.model.micro_batch_count for p in points]==[1,1]

    # leaves keep their size when the cluster grows
    grown=ClusterSpec(8,4,topology=Topology(2,2)).with_nodes(8)
    assert (grown.topology.leaf_count,grown.topology.nodes_per_leaf)==(4,2)
    assert grown.dp_mesh==DeviceMesh(8,8)


def test_verbose_output():
    txt=StringIO()
    cluster=ClusterSpec(2,2)
    planner=Planner(calibrated_profile(cluster),txt=txt,verbose=True)
    planner.solve(small_model(),cluster)
    text=txt.getvalue()
    assert 'Best plan' in text and 'Timing (planner)' in text
    assert set(planner.timer.get_timings())=={'enumerate','evaluate'}


def test_random_tuples():
    """ Tuples left out of the candidate list are invalid, and no candidate beats the best plan. """
    rng=random.Random(2)
    cluster=ClusterSpec(4,4,gpu_memory_capacity=4.5e8)
    profile=calibrated_profile(cluster)
    model=small_model(L=2,K=3,module=2000000,M=2)
    planner=Planner(profile)
    best=planner.solve(model,cluster).best
    keys=set(p.key() for p in enumerate_candidates(cluster))
    assert best.plan.key() in keys
    for i in range(500):
        t=tuple(rng.randint(1,4) for j in range(6))
        plan=ShardingPlan.from_tuple(t)
        ok=validate_plan(plan,cluster).ok
        assert ok==tuple_is_valid(t,cluster)
        if t not in keys:
            assert not ok
            continue
        r=planner.evaluate(model,cluster,plan)
        assert not (r.feasible and r.time.total<best.time.total)


if __name__=='__main__':
    run_tests(globals())
