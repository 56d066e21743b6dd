"""
Trace Event Format output (chrome://tracing, Perfetto).
"""
import json
from shardsim.io.native import number


def _us(seconds):
    return number(round(seconds*1e6,3))


def trace_events(timeline):
    """ Complete ('X') events of a timeline, ordered by (start, stream, id), times in microseconds. """
    out=[]
    for s in sorted(timeline.scheduled,key=lambda s:(s.start,s.event.stream,s.event.id)):
        out.append({'name':s.event.name(),
                    'ph':'X',
                    'ts':_us(s.start),
                    'dur':_us(s.end-s.start),
                    'pid':1,
                    'tid':s.event.stream})
    return out


def dumps_trace(timeline):
    events=trace_events(timeline)
    if len(events)==0:
        return '[]\n'
    return '[\n'+',\n'.join(json.dumps(e,sort_keys=True) for e in events)+'\n]\n'


def export_trace(timeline,path):
    """ Write the timeline as a JSON array of complete events. """
    with open(path,'w') as f:
        f.write(dumps_trace(timeline))
