'''
    A module containing miscellaneous utility functions.
'''
import numpy as np


def divisors(n):
    """ Return the sorted list of positive divisors of n. """
    n=int(n)
    if n<1:
        raise ValueError('divisors defined only for positive integers, got %i' %n)
    small=[d for d in range(1,int(np.sqrt(n))+1) if n%d==0]
    large=[n//d for d in small if d*d!=n]
    return small+large[::-1]


def ceil_div(a,b):
    """ Integer ceiling of a/b for positive b. """
    return -(-a//b)


def human_readable_bytes(nbytes):
    """ Bytes in decimal units, e.g. 38.5 GB. """
    x=float(nbytes)
    for unit in ['B','kB','MB','GB','TB']:
        if abs(x)<1000.0 or unit=='TB':
            return '%.4g %s' %(x,unit)
        x/=1000.0


def human_readable_seconds(seconds):
    """ Seconds in a convenient unit, e.g. 12.5 ms. """
    x=float(seconds)
    if x==0.0:
        return '0 s'
    for unit,scale in [('s',1.0),('ms',1e-3),('us',1e-6)]:
        if abs(x)>=scale:
            return '%.4g %s' %(x/scale,unit)
    return '%.4g ns' %(x/1e-9)


def table(rows,header,txt):
    """ Print rows (lists of strings) as left-aligned columns. """
    widths=[len(h) for h in header]
    for row in rows:
        widths=[max(w,len(c)) for w,c in zip(widths,row)]
    fmt='  '.join('%%-%is' %w for w in widths)
    print(fmt %tuple(header), file=txt)
    print('-'*(sum(widths)+2*(len(widths)-1)), file=txt)
    for row in rows:
        print(fmt %tuple(row), file=txt)
