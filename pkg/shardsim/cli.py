"""
Command line interface.

    shardsim plan     --config run.json [--profile p.json] [--out r.json] [--all-candidates] [--verify] [--pretty]
    shardsim simulate --config run.json [--preset zero3] [--overlap ag_rs] [--trace t.json]
    shardsim compare  --config run.json [--nodes 1,2,4] [--global-batch-tokens 4194304]
    shardsim import-profile measurements.csv --out profile.json

Exit codes: 0 success, 1 usage/configuration/profile/plan error, 2 no feasible plan.
"""
import argparse
import sys
from shardsim.version import shardsim_version
from shardsim.comm.baseclass import MissingProfileError
from shardsim.comm.ring import calibrated_profile
from shardsim.mesh import validate_plan, ShardingPlan
from shardsim.presets import preset, preset_framework, InfeasiblePresetError
from shardsim.planner import Planner, InfeasiblePlanError, GridGuardError
from shardsim.overlap import OverlapSimulator, TIERS, framework_config
from shardsim.io import ConfigError, read_profile, write_profile
from shardsim.io.config import read_config
from shardsim.io.report import base_report, assignment_report, write_report, write_pretty
from shardsim.io.trace import export_trace

EXIT_OK=0
EXIT_ERROR=1
EXIT_INFEASIBLE=2


def load_profile(config,path=None):
    """ Profile from --profile, the config's profile_path, or the calibrated one. """
    path=path or config.resolved_profile_path()
    if path is None:
        return calibrated_profile(config.cluster)
    return read_profile(path)


def _text(args):
    return sys.stderr if args.verbose else '-'


def _emit(report,args):
    write_report(report,args.out if args.out else sys.stdout)
    if args.pretty:
        write_pretty(report,sys.stderr)


def cmd_plan(args):
    config=read_config(args.config)
    profile=load_profile(config,args.profile)
    planner=Planner(profile,config.cost,txt=_text(args),verbose=args.verbose,
                    oracle_guard=config.solver['oracle_guard'])
    all_candidates=args.all_candidates or config.solver['all_candidates']
    report=base_report('plan',config)
    try:
        search=planner.solve(config.model,config.cluster)
    except InfeasiblePlanError as error:
        report['search']=error.report.to_dict(all_candidates)
        report['infeasible']={'message':str(error),
                              'minimal':error.minimal.to_dict(),
                              'capacity':error.capacity}
        _emit(report,args)
        return EXIT_INFEASIBLE
    report['search']=search.to_dict(all_candidates)
    report['assignment']=assignment_report(config.cluster,search.best.plan)
    if args.verify:
        oracle=planner.brute_force_oracle(config.model,config.cluster)
        report['oracle']={'best':oracle.best.to_dict(),
                          'candidates_evaluated':oracle.candidates_evaluated,
                          'agrees':oracle.best.plan==search.best.plan}
    _emit(report,args)
    return EXIT_OK


def _simulation_plan(config,args,profile,txt):
    if args.preset is not None:
        return preset(args.preset,config.cluster)
    if isinstance(config.plan,str):
        return preset(config.plan,config.cluster)
    if isinstance(config.plan,ShardingPlan):
        result=validate_plan(config.plan,config.cluster)
        if not result.ok:
            raise ConfigError('plan','invalid sharding plan: %s' %result)
        return config.plan
    return Planner(profile,config.cost,txt=txt).solve(config.model,config.cluster).best.plan


def cmd_simulate(args):
    config=read_config(args.config)
    profile=load_profile(config,args.profile)
    sim=config.sim if args.overlap is None else config.sim.replace(overlap_tier=args.overlap)
    plan=_simulation_plan(config,args,profile,_text(args))
    simulator=OverlapSimulator(profile,sim,config.cost,txt=_text(args),verbose=args.verbose)
    graph,timeline,summary=simulator.run(config.model,config.cluster,plan)
    if args.trace:
        export_trace(timeline,args.trace)
    report=base_report('simulate',config)
    report['plan']=plan.to_dict()
    report['simulation']=summary
    report['time']=simulator_time(simulator,config,plan)
    report['assignment']=assignment_report(config.cluster,plan)
    _emit(report,args)
    return EXIT_OK


def simulator_time(simulator,config,plan):
    planner=Planner(simulator.profile,config.cost)
    result=planner.evaluate(config.model,config.cluster,plan)
    return {'comm':result.time.to_dict(),'memory':result.memory.to_dict(),'feasible':result.feasible}


def compare_rows(results,profile,config,model,cluster,txt='-'):
    """ Report rows of compare_presets results, each simulated the way its framework runs it, ordered by step time. """
    simulators={}
    rows=[]
    for r in results:
        row=r.to_dict()
        row['framework']=preset_framework(r.name)
        row['simulation']=None
        if r.time is not None:
            framework=row['framework']
            if framework not in simulators:
                simulators[framework]=OverlapSimulator(profile,framework_config(config.sim,framework),config.cost,txt=txt)
            summary=simulators[framework].run(model,cluster,r.plan)[2]
            row['simulation']={k:summary[k] for k in ('step_time','compute_time','comm_time','compute_bubble','mfu','tgs')}
        rows.append(row)
    rows.sort(key=lambda row:(row['simulation'] is None,
                              row['simulation']['step_time'] if row['simulation'] else 0.0,
                              row['rank']))
    return rows


def cmd_compare(args):
    config=read_config(args.config)
    report=base_report('compare',config)
    if args.nodes is None:
        profile=load_profile(config,args.profile)
        planner=Planner(profile,config.cost,txt=_text(args),verbose=args.verbose)
        results=planner.compare_presets(config.model,config.cluster)
        report['comparison']=compare_rows(results,profile,config,config.model,config.cluster,_text(args))
        _emit(report,args)
        return EXIT_OK

    largest=config.cluster.with_nodes(max(args.nodes))
    path=args.profile or config.resolved_profile_path()
    profile=calibrated_profile(largest) if path is None else read_profile(path)
    planner=Planner(profile,config.cost,txt=_text(args),verbose=args.verbose)
    sweep=[]
    for point in planner.sweep_nodes(config.model,config.cluster,args.nodes,args.global_batch_tokens):
        d=point.to_dict()
        d['comparison']=compare_rows(point.results,profile,config,point.model,point.cluster,_text(args))
        sweep.append(d)
    report['sweep']=sweep
    _emit(report,args)
    return EXIT_OK


def cmd_import_profile(args):
    profile=read_profile(args.csv,format='csv')
    write_profile(args.out,profile)
    print('Wrote %s (%s)' %(args.out,profile.greetings()), file=sys.stderr)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """ Usage errors exit with EXIT_ERROR. """
    def error(self,message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR,'%s: error: %s\n' %(self.prog,message))


def _node_list(text):
    try:
        nodes=[int(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated node counts, got %r' %text)
    if not nodes or min(nodes)<1:
        raise argparse.ArgumentTypeError('node counts must be positive integers, got %r' %text)
    return nodes


def _positive(text):
    try:
        value=int(text)
    except ValueError:
        raise argparse.ArgumentTypeError('expected a positive integer, got %r' %text)
    if value<1:
        raise argparse.ArgumentTypeError('expected a positive integer, got %r' %text)
    return value


def build_parser():
    parser=_Parser(prog='shardsim',
                   description='Sharding planner and overlap simulator for ZeRO-style training.')
    parser.add_argument('--version',action='version',version='shardsim %s' %shardsim_version)
    sub=parser.add_subparsers(dest='command')
    sub.required=True

    def common(p):
        p.add_argument('--config',required=True,help='run configuration (JSON)')
        p.add_argument('--profile',default=None,help='bandwidth profile (.json or .csv), overrides profile_path')
        p.add_argument('--out',default=None,help='write the JSON report here instead of stdout')
        p.add_argument('--pretty',action='store_true',help='also print a human-readable summary to stderr')
        p.add_argument('-v','--verbose',action='store_true',help='progress and timing to stderr')

    p=sub.add_parser('plan',help='find the communication-minimal sharding plan')
    common(p)
    p.add_argument('--all-candidates',action='store_true',help='include every ranked candidate in the report')
    p.add_argument('--verify',action='store_true',
                   help='check the plan against a brute-force search (raw grid limited by solver.oracle_guard)')
    p.set_defaults(func=cmd_plan)

    p=sub.add_parser('simulate',help='simulate one training step of a plan')
    common(p)
    p.add_argument('--preset',default=None,help='simulate a named preset (e.g. zero3, amsp-7b)')
    p.add_argument('--overlap',default=None,choices=TIERS,help='overlap tier')
    p.add_argument('--trace',default=None,help='write a Trace Event Format file')
    p.set_defaults(func=cmd_simulate)

    p=sub.add_parser('compare',help='compare the named presets and the planner')
    common(p)
    p.add_argument('--nodes',default=None,type=_node_list,help='sweep over node counts, e.g. 1,2,4,8')
    p.add_argument('--global-batch-tokens',default=None,type=_positive,
                   help='with --nodes: keep the global batch fixed by adjusting the micro-batch count')
    p.set_defaults(func=cmd_compare)

    p=sub.add_parser('import-profile',help='convert CSV measurements to a canonical JSON profile')
    p.add_argument('csv',help='measurements (op,size_bytes,gpus_per_node,nodes,bus_bw_bytes_per_s)')
    p.add_argument('--out',required=True,help='canonical JSON profile to write')
    p.set_defaults(func=cmd_import_profile)
    return parser


def main(argv=None):
    args=build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasiblePlanError as error:
        print('error: %s' %error, file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError,MissingProfileError,InfeasiblePresetError,GridGuardError) as error:
        print('error: %s' %error, file=sys.stderr)
        return EXIT_ERROR
    except KeyError as error:
        print('error: %s' %error.args[0], file=sys.stderr)
        return EXIT_ERROR
    except (ValueError,OSError) as error:
        print('error: %s' %error, file=sys.stderr)
        return EXIT_ERROR


if __name__=='__main__':
    sys.exit(main())
