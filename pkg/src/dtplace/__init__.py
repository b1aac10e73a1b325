"""Digital-twin placement over heterogeneous edge/cloud server pools.

The package simulates devices streaming state updates to digital twins (DTs)
hosted on edge or cloud servers, scores placement decisions with a joint
latency/energy cost, solves small instances exactly, and trains a
self-labeling ensemble of decision networks that places twins without any
labeled data.
"""

__version__ = "0.1.0"
