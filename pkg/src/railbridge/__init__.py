"""Two-stage metro disruption recovery toolkit.

Stage 1 reschedules a metro timetable around a spatio-temporal disruption
(cancellation and short-turning), assigns passengers to the surviving
services and measures time-varying accumulation per station.  Stage 2
converts terminal-station accumulation into response-vehicle demand and
routes vehicle fleets through a signalized road network with a
system-optimal dynamic traffic assignment LP over the cell transmission
model.
"""

__version__ = "0.1.0"
