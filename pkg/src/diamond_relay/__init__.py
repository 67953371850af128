"""Rate bounds and achievable schemes for two-relay diamond networks with
oblivious relays and finite-capacity fronthaul links."""

__version__ = "0.1.0"
