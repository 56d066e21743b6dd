from time import perf_counter, asctime
import sys
from box.mix import human_readable_seconds


class Timer:
    """ Wall-clock time spent in the named phases of a long-lived object.

    tm=Timer('planner',txt=txt)
    tm.start('enumerate')
    ...
    tm.stop('enumerate')
    tm.summary()

    Phases may run one inside another but a phase cannot be started twice.
    """
    def __init__(self,label,txt=None,enabled=True):
        """
        Parameters:
        -----------
        label:      name of the owner (e.g. 'planner')
        txt:        output stream for summary (None: stdout)
        enabled:    if False, start/stop/summary do nothing
        """
        self.label=label
        self.txt=sys.stdout if txt is None else txt
        self.enabled=enabled
        self.first=perf_counter()
        self.elapsed={}
        self.calls={}
        self.running={}

    def start(self,phase):
        if not self.enabled: return
        if phase in self.running:
            raise AssertionError('Timer %s: phase %s already running' %(self.label,phase))
        self.running[phase]=perf_counter()
        self.elapsed.setdefault(phase,0.0)
        self.calls.setdefault(phase,0)

    def stop(self,phase):
        if not self.enabled: return
        if phase not in self.running:
            raise AssertionError('Timer %s: phase %s is not running' %(self.label,phase))
        self.elapsed[phase]+=perf_counter()-self.running.pop(phase)
        self.calls[phase]+=1

    def get_timings(self):
        """ {phase: seconds} of the stopped phases. """
        return dict(self.elapsed)

    def summary(self):
        if not self.enabled: return
        total=perf_counter()-self.first
        print('\nTiming (%s):' %self.label, file=self.txt)
        print('%-20s %12s %9s %8s' %('phase','time','calls','%tot'), file=self.txt)
        print('-'*52, file=self.txt)
        for phase in self.elapsed:
            dt=self.elapsed[phase]
            print('%-20s %12.3f %9i %7.1f%%' %(phase,dt,self.calls[phase],dt/total*100 if total>0 else 100.0), file=self.txt)
        print('-'*52, file=self.txt)
        print('total time %12.3f seconds (%s)' %(total,human_readable_seconds(total)), file=self.txt)
        print(asctime(), file=self.txt)
        self.txt.flush()
