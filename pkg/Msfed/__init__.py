from .Core import MsfedErrors, MsfedUtility, Topology, DataGen, Model, Participation, Engine, Latency, Theory, RunConfig
from .Utils import local_tools, main_arguments, MsfedConstants
