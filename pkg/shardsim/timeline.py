"""
Discrete-event simulation of an event graph on streams, and the resulting timeline.
"""
from dataclasses import dataclass
import simpy


class ScheduleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScheduledEvent:
    event: object
    start: float
    end: float


class Timeline:
    """
    Scheduled events of one step.

    Parameters:
    -----------
    scheduled:      ScheduledEvent's in scheduling order
    stream_names:   {stream id: name}
    """
    def __init__(self,scheduled,stream_names=None):
        self.scheduled=tuple(scheduled)
        self.stream_names=dict(stream_names or {})
        self.step_time=max([s.end for s in self.scheduled],default=0.0)

    def streams(self):
        ids=set(self.stream_names)|set(s.event.stream for s in self.scheduled)
        return sorted(ids)

    def stream_events(self,stream):
        """ Events of one stream ordered by start time. """
        return sorted((s for s in self.scheduled if s.event.stream==stream),key=lambda s:(s.start,s.event.id))

    def busy(self,stream):
        return sum(s.end-s.start for s in self.stream_events(stream))

    def idle(self,stream):
        return self.step_time-self.busy(stream)

    def idle_intervals(self,stream):
        """ Gaps of a stream within [0, step_time]. """
        intervals=[]
        t=0.0
        for s in self.stream_events(stream):
            if s.start>t:
                intervals.append((t,s.start))
            t=max(t,s.end)
        if self.step_time>t:
            intervals.append((t,self.step_time))
        return intervals

    def get(self,event_id):
        for s in self.scheduled:
            if s.event.id==event_id:
                return s
        raise KeyError('No event with id %r' %(event_id,))

    def plot(self,filename=None):
        """ Gantt chart of the streams (shown, or saved to filename). """
        import pylab as pl
        colors={'fwd_compute':'tab:blue','recompute_fwd':'tab:cyan','bwd_grad_weight':'tab:green',
                'bwd_grad_input':'tab:olive','allgather':'tab:orange','reduce_scatter':'tab:red',
                'allreduce_bucket':'tab:purple','broadcast_shard':'tab:brown','optimizer_step':'k'}
        streams=self.streams()
        fig=pl.figure(figsize=(12,1+0.6*len(streams)))
        ax=fig.add_subplot(111)
        for row,stream in enumerate(streams):
            for s in self.stream_events(stream):
                ax.barh(row,(s.end-s.start)*1e3,left=s.start*1e3,height=0.6,
                        color=colors.get(s.event.kind,'gray'),edgecolor='none')
        ax.set_yticks(range(len(streams)))
        ax.set_yticklabels([self.stream_names.get(s,str(s)) for s in streams])
        ax.set_xlabel('time (ms)')
        ax.set_xlim(0,self.step_time*1e3)
        if filename is None:
            pl.show()
        else:
            pl.savefig(filename)
            pl.close(fig)


def simulate_step(graph):
    """
    Run an event graph on its streams as a discrete-event simulation.

    Every stream is a simpy resource of capacity one and every event a
    process: it waits until all its dependencies have ended, then holds
    its stream for its duration. Requests queued on a busy stream are
    served by ready time, then event id.

    Raises ScheduleError for unknown dependencies and cycles.
    """
    events={}
    for ev in graph.events:
        if ev.id in events:
            raise ScheduleError('Event id %r used twice' %(ev.id,))
        if ev.duration<0:
            raise ScheduleError('Event %r has negative duration %r' %(ev.id,ev.duration))
        events[ev.id]=ev
    for ev in events.values():
        for d in ev.depends_on:
            if d not in events:
                raise ScheduleError('Event %r depends on unknown event %r' %(ev.id,d))

    env=simpy.Environment()
    streams={s:simpy.PriorityResource(env,capacity=1) for s in sorted(set(ev.stream for ev in events.values()))}
    ended={i:env.event() for i in events}
    scheduled=[]

    def run(ev):
        deps=sorted(set(ev.depends_on))
        if deps:
            yield simpy.AllOf(env,[ended[d] for d in deps])
        with streams[ev.stream].request(priority=(env.now,ev.id)) as req:
            yield req
            start=env.now
            yield env.timeout(ev.duration)
        scheduled.append(ScheduledEvent(ev,start,env.now))
        ended[ev.id].succeed()

    for i in sorted(events):
        env.process(run(events[i]))
    env.run()
    if len(scheduled)<len(events):
        stuck=sorted(i for i in events if not ended[i].triggered)
        raise ScheduleError('Dependency cycle among events %s' %stuck[:10])
    return Timeline(scheduled,getattr(graph,'stream_names',None))


def bubble_report(timeline):
    """
    Busy time, idle time and idle intervals of every stream.

    Returns {stream: {'name','busy','idle','intervals'}}; the compute
    stream's idle time is its bubble total.
    """
    report={}
    for stream in timeline.streams():
        report[stream]={'name':timeline.stream_names.get(stream,str(stream)),
                        'busy':timeline.busy(stream),
                        'idle':timeline.idle(stream),
                        'intervals':[list(iv) for iv in timeline.idle_intervals(stream)]}
    return report
