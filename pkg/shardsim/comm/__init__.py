"""
Communication models: measured bandwidth profiles and the analytic ring model.
"""
from shardsim.comm.baseclass import CommModel, CollectiveKind, MissingProfileError, KINDS
from shardsim.comm.profile import BandwidthProfile, effective_bandwidth, collective_time
from shardsim.comm.ring import AlphaBetaParams, RingModel, ring_time, algorithm_time
from shardsim.comm.ring import synthetic_profile, calibrated_profile, calibration_sizes, CALIBRATION
