import json
import os
import shutil
import tempfile
from shardsim.cli import main, EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE
from shardsim.io import read_profile
from shardsim.io.native import dumps_profile
from shardsim.test.misc import run_tests, default_configs, default_profiles, golden_outputs


class Run:
    """ Scratch directory holding variants of the tiny configuration. """
    def __enter__(self):
        self.path=tempfile.mkdtemp(prefix='shardsim-cli-')
        with open(default_configs['tiny']) as f:
            self.tiny=json.load(f)
        self.tiny['profile_path']=os.path.abspath(default_profiles['tiny'])
        return self

    def __exit__(self,*args):
        shutil.rmtree(self.path)

    def file(self,name):
        return os.path.join(self.path,name)

    def config(self,name,**changes):
        """ Tiny configuration with top-level sections replaced or updated. """
        d=json.loads(json.dumps(self.tiny))
        for key,value in changes.items():
            if isinstance(value,dict) and isinstance(d.get(key),dict):
                d[key].update(value)
            else:
                d[key]=value
        path=self.file(name)
        with open(path,'w') as f:
            json.dump(d,f)
        return path

    def main(self,*argv):
        """ Exit code and the decoded report of one command. """
        out=self.file('report.json')
        if os.path.exists(out):
            os.remove(out)
        code=main(list(argv)+['--out',out])
        report=None
        if os.path.exists(out):
            with open(out) as f:
                report=json.load(f)
        return code,report


def read(path):
    with open(path) as f:
        return f.read()


def test_plan():
    with Run() as run:
        config=run.config('tiny.json')
        code,report=run.main('plan','--config',config)
        assert code==EXIT_OK
        assert report['tool']=='shardsim' and report['command']=='plan'
        best=report['search']['best']
        assert best['feasible'] and best['rank']==0
        assert 'all_results' not in report['search']
        assert report['assignment'] is not None

        code,report=run.main('plan','--config',config,'--all-candidates')
        results=report['search']['all_results']
        assert len(results)==report['search']['candidates_evaluated']
        assert [r['rank'] for r in results]==list(range(len(results)))


def test_determinism():
    with Run() as run:
        config=run.config('tiny.json')
        texts=[]
        for name in ('a.json','b.json'):
            assert main(['plan','--config',config,'--all-candidates','--out',run.file(name)])==EXIT_OK
            texts.append(read(run.file(name)))
        assert texts[0]==texts[1]


def test_exit_codes():
    with Run() as run:
        config=run.config('small.json',cluster={'gpu_memory_capacity':1})
        code,report=run.main('plan','--config',config)
        assert code==EXIT_INFEASIBLE
        assert report['search']['best'] is None
        assert report['infeasible']['capacity']==1
        assert 'd_total' in report['infeasible']['message']

        path=run.file('broken.json')
        with open(path,'w') as f:
            f.write('{"model": ')
        assert run.main('plan','--config',path)[0]==EXIT_ERROR

        config=run.config('badplan.json',plan={'p':[4,2],'g':[4,1],'os':[4,1]})
        code,report=run.main('simulate','--config',config)
        assert code==EXIT_ERROR and report is None

        config=run.config('noprofile.json',profile_path=run.file('missing.csv'))
        assert run.main('plan','--config',config)[0]==EXIT_ERROR
        config=run.config('tiny.json')
        assert run.main('simulate','--config',config,'--preset','zero4')[0]==EXIT_ERROR

        # usage errors are not mistaken for an infeasible plan
        for argv in (['plan'],['solve'],['compare','--config',config,'--nodes','0,2'],
                     ['compare','--config',config,'--nodes','two'],['simulate','--config',config,'--overlap','all']):
            try:
                main(argv)
            except SystemExit as error:
                assert error.code==EXIT_ERROR, (argv,error.code)
            else:
                raise RuntimeError('%s accepted' %argv)


def test_plan_verify():
    with Run() as run:
        code,report=run.main('plan','--config',run.config('tiny.json'),'--verify')
        assert code==EXIT_OK
        assert report['oracle']['agrees']
        assert report['oracle']['best']['plan']==report['search']['best']['plan']
        assert report['oracle']['candidates_evaluated']==report['search']['candidates_evaluated']
        # the raw grid of 4x2 GPUs holds 512 tuples
        config=run.config('guarded.json',solver={'oracle_guard':511})
        code,report=run.main('plan','--config',config,'--verify')
        assert code==EXIT_ERROR and report is None
        code,report=run.main('plan','--config',config)
        assert code==EXIT_OK and 'oracle' not in report


def test_simulate():
    with Run() as run:
        config=run.config('tiny.json')
        trace=run.file('trace.json')
        code,report=run.main('simulate','--config',config,'--preset','zero3','--trace',trace)
        assert code==EXIT_OK
        assert report['plan']=={'p':[4,2],'g':[4,2],'os':[4,2]}
        sim=report['simulation']
        assert sim['step_time']>0 and sim['overlap_tier']=='ag_rs_ar_bc'
        events=json.loads(read(trace))
        assert len(events)==sim['events']
        assert all(e['ph']=='X' and e['pid']==1 for e in events)

        # the configured plan
        code,report=run.main('simulate','--config',config)
        assert report['plan']=={'p':[4,1],'g':[4,1],'os':[4,2]}
        full=report['simulation']['step_time']
        code,report=run.main('simulate','--config',config,'--overlap','none')
        assert report['simulation']['overlap_tier']=='none'
        assert report['simulation']['step_time']>=full
        assert report['simulation']['compute_bubble']>0

        # no plan: the planner's choice
        code,report=run.main('simulate','--config',run.config('free.json',plan=None))
        assert code==EXIT_OK
        code,planned=run.main('plan','--config',run.file('free.json'))
        assert report['plan']==planned['search']['best']['plan']


def test_simulate_topology():
    with Run() as run:
        code,report=run.main('simulate','--config',default_configs['llama13b'])
        assert code==EXIT_OK
        assert report['plan']=={'p':[8,4],'g':[8,4],'os':[8,4]}
        assert report['assignment']['cross_leaf_groups']==1
        assert report['simulation']['recompute']


def test_compare():
    with Run() as run:
        code,report=run.main('compare','--config',run.config('tiny.json'))
        assert code==EXIT_OK
        rows=report['comparison']
        names=[r['name'] for r in rows]
        assert 'planner' in names and 'ZeRO-3' in names
        timed=[r['simulation']['step_time'] for r in rows if r['simulation'] is not None]
        assert timed==sorted(timed)
        seen_untimed=False
        for r in rows:
            if r['simulation'] is None:
                seen_untimed=True
                assert r['time'] is None
            else:
                assert not seen_untimed


def test_compare_7b():
    """ LLaMA-7B on 8x128 GPUs: an AMSP plan is fastest and AMSP-7B beats every DeepSpeed preset. """
    with Run() as run:
        code,report=run.main('compare','--config',default_configs['llama7b'])
        assert code==EXIT_OK
        rows=report['comparison']
        step={r['name']:r['simulation']['step_time'] for r in rows if r['simulation'] is not None}
        framework={r['name']:r['framework'] for r in rows}
        assert rows[0]['framework']=='amsp'
        assert framework['planner']=='amsp' and framework['ZeRO-1']=='deepspeed'
        deepspeed=[name for name in step if framework[name]=='deepspeed']
        assert set(deepspeed)=={'ZeRO-1','ZeRO-3','MiCS','MiCS-30B','ZeRO++'}
        assert all(step['AMSP-7B']<step[name] for name in deepspeed)
        assert step['planner']==step['AMSP-7B']
        planner=[r for r in rows if r['name']=='planner'][0]
        assert planner['plan']=={'p':[1,1],'g':[1,1],'os':[8,1]}
        times=[r['simulation']['step_time'] for r in rows if r['simulation'] is not None]
        assert times==sorted(times)


def test_compare_nodes():
    with Run() as run:
        config=run.config('sweep.json',profile_path=None)
        code,report=run.main('compare','--config',config,'--nodes','1,2,4','--global-batch-tokens','16384')
        assert code==EXIT_OK and 'comparison' not in report
        sweep=report['sweep']
        assert [p['node_count'] for p in sweep]==[1,2,4]
        assert [p['gpus'] for p in sweep]==[4,8,16]
        # 16384 tokens of 512 per micro-batch
        assert [p['micro_batch_count'] for p in sweep]==[8,4,2]
        zero3=[[r for r in p['comparison'] if r['name']=='ZeRO-3'][0] for p in sweep]
        totals=[r['memory']['d_total'] for r in zero3]
        assert totals[0]>totals[1]>totals[2]
        assert all(r['simulation'] is not None for r in zero3)


def test_golden_files():
    with Run() as run:
        trace=run.file('trace.json')
        code,report=run.main('simulate','--config',default_configs['golden'],'--trace',trace)
        assert code==EXIT_OK
        assert read(trace)==read(golden_outputs['trace'])
        assert abs(report['simulation']['step_time']-0.025390625)<1e-12
        out=run.file('plan.json')
        assert main(['plan','--config',default_configs['golden'],'--out',out])==EXIT_OK
        assert read(out)==read(golden_outputs['plan'])


def test_import_profile():
    with Run() as run:
        out=run.file('profile.json')
        assert main(['import-profile',default_profiles['tiny'],'--out',out])==EXIT_OK
        assert read(out)==dumps_profile(read_profile(default_profiles['tiny']))
        code,report=run.main('plan','--config',run.config('tiny.json'),'--profile',out)
        assert code==EXIT_OK
        code,again=run.main('plan','--config',run.config('tiny.json'))
        assert report['search']==again['search']

        bad=run.file('bad.csv')
        with open(bad,'w') as f:
            f.write('op,size_bytes,gpus_per_node,nodes,bus_bw_bytes_per_s\nallgather,1,2,1,-5\n')
        assert main(['import-profile',bad,'--out',run.file('bad.json')])==EXIT_ERROR


if __name__=='__main__':
    run_tests(globals())
