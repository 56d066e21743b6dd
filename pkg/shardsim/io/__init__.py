"""
Input/output module. Contains functions to read and write bandwidth
profiles, run configurations, reports and trace files.
"""


class ConfigError(ValueError):
    """ Invalid input; the message starts with the offending path. """
    def __init__(self,path,message):
        self.path=path
        self.message=message
        ValueError.__init__(self,'%s: %s' %(path,message))


def read_profile(filename, format=None):
    """
    Read a bandwidth profile.

    Parameters:
    -----------
    filename:  file to read from
    format:    'csv' (measurements) or 'json' (canonical); by default
               guessed from the extension
    """
    if format is None:
        format = filetype(filename)

    if format == 'csv':
        from shardsim.io.nccl import read_profile_from_csv
        return read_profile_from_csv(filename)

    if format == 'json':
        from shardsim.io.native import read_profile_from_json
        return read_profile_from_json(filename)

    raise ConfigError(filename,'file format "%s" not recognized' %format)


def write_profile(filename, profile, format=None):
    """ Write a bandwidth profile in canonical JSON (the only output format). """
    if format is None:
        format = filetype(filename)

    if format == 'json':
        from shardsim.io.native import write_profile_to_json
        return write_profile_to_json(filename, profile)

    raise ConfigError(filename,'cannot write profiles in format "%s"' %format)


def filetype(filename):
    if filename.lower().endswith('.csv'):
        return 'csv'

    if filename.lower().endswith('.json'):
        return 'json'

    return 'unknown'
