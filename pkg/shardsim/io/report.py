"""
JSON reports and their human-readable form.

Reports hold SI units only (bytes, seconds); key order is sorted so that a
report is the same bytes for the same inputs.
"""
import json
from box.mix import table, human_readable_bytes, human_readable_seconds
from shardsim.placement import assign_nodes
from shardsim.version import shardsim_version


def base_report(command,config):
    return {'tool':'shardsim',
            'version':shardsim_version,
            'command':command,
            'config':config.to_dict()}


def assignment_report(cluster,plan):
    """ Node groups of the plan on the cluster topology, or None if the grouping is impossible. """
    try:
        return assign_nodes(cluster.topology,cluster,plan).to_dict()
    except ValueError:
        return None


def dumps_report(report):
    return json.dumps(report,indent=1,sort_keys=True)+'\n'


def write_report(report,out):
    """ Write report to a file name or an open stream. """
    text=dumps_report(report)
    if isinstance(out,str):
        with open(out,'w') as f:
            f.write(text)
    else:
        out.write(text)
        out.flush()


def _plan_text(plan):
    s='p=%ix%i g=%ix%i os=%ix%i' %(tuple(plan['p'])+tuple(plan['g'])+tuple(plan['os']))
    if 'secondary' in plan:
        s+=' sec=%ix%i' %tuple(plan['secondary'])
    return s


def _result_row(r,name=None):
    t='-' if r['time'] is None else human_readable_seconds(r['time']['total'])
    return [name or r.get('name') or '',_plan_text(r['plan']),t,
            human_readable_bytes(r['memory']['d_total']),'yes' if r['feasible'] else 'no']


def write_pretty(report,txt):
    """ Tables of a report for reading on a terminal. """
    print('shardsim %s: %s' %(report['version'],report['command']), file=txt)
    if 'search' in report:
        search=report['search']
        print('Candidates evaluated %i, filtered %i' %(search['candidates_evaluated'],search['candidates_filtered']), file=txt)
        rows=[]
        if search['best'] is not None:
            rows.append(_result_row(search['best'],'best'))
        for r in search.get('all_results',[]):
            rows.append(_result_row(r,'#%i' %r['rank']))
        if rows:
            table(rows,['','plan','T_comm','memory','fits'],txt)
        best=search['best']
        if best is not None:
            t=best['time']
            print('T_p %s  T_g %s  T_os0 %s  T_os1 %s' %tuple(human_readable_seconds(t[k]) for k in
                  ('t_p','t_g','t_os_allreduce','t_os_broadcast')), file=txt)
    if 'infeasible' in report:
        print('No feasible plan: %s' %report['infeasible']['message'], file=txt)
    if 'comparison' in report:
        rows=[]
        for r in report['comparison']:
            row=_result_row(r)
            sim=r.get('simulation')
            row+=['-','-'] if sim is None else [human_readable_seconds(sim['step_time']),'%.3f' %sim['mfu']]
            rows.append(row)
        table(rows,['preset','plan','T_comm','memory','fits','step','MFU'],txt)
    if 'simulation' in report:
        sim=report['simulation']
        print('Plan %s, tier %s' %(_plan_text(report['plan']),sim['overlap_tier']), file=txt)
        rows=[[k,human_readable_seconds(sim[k])] for k in ('step_time','compute_time','comm_time','compute_bubble')]
        rows+=[['MFU','%.4f' %sim['mfu']],['TGS','%.1f' %sim['tgs']]]
        table(rows,['quantity','value'],txt)
