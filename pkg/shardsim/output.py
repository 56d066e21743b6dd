import os
import sys


class Output:
    """ Text output for long-lived objects (planner, simulator).

    The stream is set with set_text:
        * None: standard output
        * '-': throw output to trash (/null)
        * filename: append to the file
        * an open stream: write to it as is
    """
    def __init__(self):
        self.txt=None
        self._owned=False
        self.notes=[]

    def __del__(self):
        txt=getattr(self,'txt',None)
        if txt is not None and not txt.closed:
            self.close_output()

    def set_text(self,txt):
        """ Set the stream for text output. """
        self._owned=False
        if txt is None:
            self.txt=sys.stdout
        elif txt=='-':
            self.txt=open(os.devnull,'w')
            self._owned=True
        elif isinstance(txt,str):
            self.txt=open(txt,'a')
            self._owned=True
        else:
            self.txt=txt

    def close_output(self):
        self.txt.flush()
        if self._owned:
            self.txt.close()

    def get_output(self):
        return self.txt

    def flush(self):
        self.txt.flush()

    def add_note(self,note):
        """ Add warning (etc) note to be printed at the end of the run. """
        if note not in self.notes:
            self.notes.append(note)

    def print_notes(self):
        if len(self.notes)>0:
            print('Notes and warnings:', file=self.txt)
            for note in self.notes:
                print('  '+note, file=self.txt)
        self.notes=[]
