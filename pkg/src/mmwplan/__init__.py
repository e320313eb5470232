"""Coverage planning for mmWave networks: gNB placement on rooftops and
passive reflector placement for the remaining outage area."""

__version__ = "0.1.0"
