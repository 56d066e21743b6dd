from __future__ import print_function

import os

from setuptools import setup

data_files = []
# data files & folders (folders nest only two levels down)
dirs = ['param']
for dir in dirs:
   for item in os.listdir(dir):
       fullitem = os.path.join(dir,item)
       if os.path.isfile(fullitem):
           data_files.append((dir,[fullitem]))
       elif os.path.isdir(fullitem):
           for item2 in os.listdir(fullitem):
               fullitem2 = os.path.join(fullitem,item2)
               if os.path.isfile(fullitem2):
                   data_files.append((fullitem,[fullitem2]))

version = {}
exec(open('./shardsim/version.py').read(), version)

s=setup(
    name         = "shardsim",
    description  = "Sharding planner and compute/communication overlap simulator for ZeRO-style training",
    version      = version['shardsim_version'],
    packages     = [
        "box",
        "shardsim",
        "shardsim.comm",
        "shardsim.io",
        "shardsim.test"
        ],
    install_requires = ["numpy", "simpy"],
    extras_require   = {"plot": ["matplotlib"]},
    entry_points     = {"console_scripts": ["shardsim = shardsim.cli:main"]},
    data_files = data_files
    )
