"""QMA: Q-learning based multiple access for contention periods, with
IEEE 802.15.4 CSMA/CA baselines and a deterministic discrete-event harness."""

__version__ = "0.1.0"
